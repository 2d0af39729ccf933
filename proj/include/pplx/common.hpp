#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pplx {

// All arithmetic is 64-bit; log-probabilities near 0 and 1 are the whole
// point of the measurements and would not survive float32.
using Scalar = double;
using Index = Eigen::Index;

// Tensors are stored flat in row-major order; Mat is the 2-D view type.
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

inline std::string shape_str(const std::vector<Index>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic RNG. mt19937_64 is fully specified by the standard; the
// distributions are hand-written because std::*_distribution is
// implementation-defined and would break bitwise reproducibility claims.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // [0, 1), 53-bit resolution
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // standard normal via Box-Muller; two raw draws per sample, no cached spare
    double normal() {
        const double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // uniform integer in [0, n), rejection sampling (no modulo bias)
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    int bit() { return static_cast<int>(gen_() >> 63); }

    // independent stream derived from this seed and a stream tag
    static Rng fork(std::uint64_t seed, std::uint64_t stream) {
        return Rng(splitmix64(seed ^ splitmix64(stream)));
    }

private:
    std::mt19937_64 gen_;
};

inline constexpr const char* kToolVersion = "0.1.0";

} // namespace pplx
