#include "pplx/tasks.hpp"

namespace pplx {

BitString::BitString(std::vector<int> bits) : bits_(std::move(bits)) {
    for (int b : bits_) {
        if (b != 0 && b != 1) {
            throw std::invalid_argument("BitString: symbol " + std::to_string(b) + " is not a bit");
        }
    }
}

BitString BitString::parse(std::string_view s) {
    std::vector<int> bits;
    bits.reserve(s.size());
    for (char c : s) {
        if (c != '0' && c != '1') {
            throw std::invalid_argument(std::string("BitString::parse: bad character '") + c + "'");
        }
        bits.push_back(c - '0');
    }
    return BitString(std::move(bits));
}

std::string BitString::str() const {
    std::string s;
    s.reserve(bits_.size());
    for (int b : bits_) s.push_back(static_cast<char>('0' + b));
    return s;
}

BitString make_alpha(size_t n, std::string_view pattern) {
    if (n == 0) throw std::invalid_argument("make_alpha: length must be positive");
    if (pattern.empty()) throw std::invalid_argument("make_alpha: empty pattern");
    std::vector<int> bits(n);
    for (size_t i = 0; i < n; ++i) {
        const char c = pattern[i % pattern.size()];
        if (c != '0' && c != '1') {
            throw std::invalid_argument(std::string("make_alpha: bad pattern character '") + c + "'");
        }
        bits[i] = c - '0';
    }
    return BitString(std::move(bits));
}

BitString make_beta(const BitString& alpha, size_t flip_pos) {
    if (flip_pos >= alpha.size()) {
        throw std::out_of_range("make_beta: flip position " + std::to_string(flip_pos) + " out of length " +
                                std::to_string(alpha.size()));
    }
    std::vector<int> bits = alpha.bits();
    bits[flip_pos] ^= 1;
    return BitString(std::move(bits));
}

Scalar hamming_rel(const BitString& x, const BitString& y) {
    if (x.size() != y.size()) {
        throw std::invalid_argument("hamming_rel: lengths " + std::to_string(x.size()) + " vs " +
                                    std::to_string(y.size()));
    }
    size_t diff = 0;
    for (size_t i = 0; i < x.size(); ++i) diff += static_cast<size_t>(x[i] != y[i]);
    return static_cast<Scalar>(diff) / static_cast<Scalar>(x.size());
}

int parity_oracle(const BitString& bits) {
    int p = 0;
    for (size_t i = 0; i < bits.size(); ++i) p ^= bits[i];
    return p;
}

BitString running_parity(const BitString& bits) {
    std::vector<int> out(bits.size());
    int p = 0;
    for (size_t i = 0; i < bits.size(); ++i) {
        p ^= bits[i];
        out[i] = p;
    }
    return BitString(std::move(out));
}

std::vector<BitString> sample_bitstrings(size_t min_len, size_t max_len, size_t count, Rng& rng) {
    if (count == 0) throw std::invalid_argument("sample_bitstrings: count must be positive");
    if (min_len == 0 || min_len > max_len) {
        throw std::invalid_argument("sample_bitstrings: bad length range [" + std::to_string(min_len) + "," +
                                    std::to_string(max_len) + "]");
    }
    std::vector<BitString> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        const size_t len = min_len + static_cast<size_t>(rng.below(max_len - min_len + 1));
        std::vector<int> bits(len);
        for (size_t k = 0; k < len; ++k) bits[k] = rng.bit();
        out.emplace_back(std::move(bits));
    }
    return out;
}

std::vector<ParityInstance> sample_parity_dataset(size_t min_len, size_t max_len, size_t count, Rng& rng) {
    std::vector<BitString> raw = sample_bitstrings(min_len, max_len, count, rng);
    std::vector<ParityInstance> out;
    out.reserve(raw.size());
    for (BitString& b : raw) {
        ParityInstance inst;
        inst.targets = running_parity(b);
        inst.bits = std::move(b);
        out.push_back(std::move(inst));
    }
    return out;
}

} // namespace pplx
