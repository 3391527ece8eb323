#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sg {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Error taxonomy shared by the library and the CLI; the CLI maps kinds to exit codes.
class Error : public std::runtime_error {
public:
    enum class Kind { config, data, numerical, io };

    Error(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
    Kind kind;
};

[[noreturn]] inline void fail_config(const std::string& msg) { throw Error(Error::Kind::config, msg); }
[[noreturn]] inline void fail_data(const std::string& msg) { throw Error(Error::Kind::data, msg); }
[[noreturn]] inline void fail_numerical(const std::string& msg) { throw Error(Error::Kind::numerical, msg); }
[[noreturn]] inline void fail_io(const std::string& msg) { throw Error(Error::Kind::io, msg); }

/// splitmix64 finalizer; used to derive independent seed streams.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(mix64(a) ^ b); }
inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c) { return mix64(mix64(a, b) ^ c); }

// Stream tags. Every consumer of randomness derives its own engine from
// (seed, tag, ...) so adding a consumer never shifts another one's stream.
enum : uint64_t {
    kStreamInit = 0x11,
    kStreamHead = 0x22,
    kStreamShuffle = 0x33,
    kStreamTaskPick = 0x44,
    kStreamWorld = 0x55,
    kStreamTeacher = 0x66,
    kStreamSample = 0x77,
    kStreamShift = 0x88,
    kStreamFisher = 0x99,
    kStreamRegion = 0xaa,
};

/// Deterministic RNG. mt19937_64 is fully specified by the standard; the
/// distributions below are hand-rolled because std::normal_distribution is
/// implementation-defined and would break cross-platform reproducibility.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; second value cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // (0, 1] to keep log finite
        double u1 = static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Uniform integer in [0, n), unbiased via rejection.
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) fail_config("uniform_int: n must be positive");
        uint64_t t = (~n + 1) % n;  // 2^64 mod n
        uint64_t x;
        do {
            x = eng_();
        } while (x < t);
        return x % n;
    }

    /// Fisher-Yates permutation of [0, n).
    std::vector<size_t> permutation(size_t n) {
        std::vector<size_t> p(n);
        for (size_t i = 0; i < n; ++i) p[i] = i;
        for (size_t i = n; i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

    /// Sample m distinct indices from [0, n), ascending.
    std::vector<uint64_t> sample_without_replacement(uint64_t n, uint64_t m);

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline std::vector<uint64_t> Rng::sample_without_replacement(uint64_t n, uint64_t m) {
    if (m > n) fail_config("sample_without_replacement: m > n");
    // Floyd's algorithm; set kept sorted at the end.
    std::vector<uint64_t> out;
    out.reserve(m);
    std::vector<uint64_t> chosen;
    for (uint64_t j = n - m; j < n; ++j) {
        uint64_t t = uniform_int(j + 1);
        bool dup = false;
        for (uint64_t c : chosen)
            if (c == t) {
                dup = true;
                break;
            }
        chosen.push_back(dup ? j : t);
    }
    out = chosen;
    std::sort(out.begin(), out.end());
    return out;
}

inline Rng derive_rng(uint64_t seed, uint64_t tag) { return Rng(mix64(seed, tag)); }
inline Rng derive_rng(uint64_t seed, uint64_t tag, uint64_t sub) { return Rng(mix64(seed, tag, sub)); }

}  // namespace sg
