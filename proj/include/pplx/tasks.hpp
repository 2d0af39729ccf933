#pragma once

#include "pplx/common.hpp"

#include <string>
#include <string_view>

namespace pplx {

// Sequence over the alphabet {0,1}. Kept as a checked type so a stray stop
// symbol or vocab index can never leak into a task definition.
class BitString {
public:
    BitString() = default;
    explicit BitString(std::vector<int> bits);
    static BitString parse(std::string_view s); // e.g. "0101"

    size_t size() const { return bits_.size(); }
    bool empty() const { return bits_.empty(); }
    int operator[](size_t i) const { return bits_[i]; }
    const std::vector<int>& bits() const { return bits_; }
    std::string str() const;

    bool operator==(const BitString&) const = default;

private:
    std::vector<int> bits_;
};

struct ParityInstance {
    BitString bits;
    BitString targets; // running parity, same length
};

// alpha_N: `pattern` tiled to length N (default all zeros)
BitString make_alpha(size_t n, std::string_view pattern = "0");

// beta: alpha with exactly one bit flipped
BitString make_beta(const BitString& alpha, size_t flip_pos);

// (# differing positions) / N
Scalar hamming_rel(const BitString& x, const BitString& y);

// XOR of all bits; empty string -> 0
int parity_oracle(const BitString& bits);

// position k holds XOR of bits[0..k]
BitString running_parity(const BitString& bits);

// uniform random bits, lengths uniform over [min_len, max_len]
std::vector<BitString> sample_bitstrings(size_t min_len, size_t max_len, size_t count, Rng& rng);
std::vector<ParityInstance> sample_parity_dataset(size_t min_len, size_t max_len, size_t count, Rng& rng);

} // namespace pplx
