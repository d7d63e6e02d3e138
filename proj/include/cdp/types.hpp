#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cdp {

using Index = Eigen::Index;

template <typename Scalar>
using VecX = Eigen::Vector<Scalar, Eigen::Dynamic>;
template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vecf = VecX<float>;
using Vecd = VecX<double>;
using Matf = MatX<float>;
using Matd = MatX<double>;
using RowMatf = RowMatX<float>;
using RowMatd = RowMatX<double>;

// ── Error taxonomy ───────────────────────────────────────────

struct invalid_input : std::runtime_error {
    explicit invalid_input(const std::string& msg) : std::runtime_error(msg) {}
};
struct invalid_embedding : std::runtime_error {
    explicit invalid_embedding(const std::string& msg) : std::runtime_error(msg) {}
};
struct invalid_combination : std::runtime_error {
    explicit invalid_combination(const std::string& msg) : std::runtime_error(msg) {}
};
struct undefined_margin : std::runtime_error {
    explicit undefined_margin(const std::string& msg) : std::runtime_error(msg) {}
};
struct build_error : std::runtime_error {
    explicit build_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct load_error : std::runtime_error {
    explicit load_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct generation_error : std::runtime_error {
    explicit generation_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct caption_unavailable : std::runtime_error {
    explicit caption_unavailable(const std::string& msg) : std::runtime_error(msg) {}
};
struct train_error : std::runtime_error {
    explicit train_error(const std::string& msg) : std::runtime_error(msg) {}
};

// ── Seeded randomness ────────────────────────────────────────
//
// All stochastic components draw from Rng. The distributions are
// hand-rolled on top of std::mt19937_64 because the standard library's
// distribution objects are implementation-defined; this keeps sequences
// identical across compilers.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n). Rejection-free modulo is fine at these scales.
    std::uint64_t below(std::uint64_t n) { return engine_() % n; }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Derives an independent named sub-seed from a global seed, so that e.g.
/// generation, init and batching streams can be varied independently.
inline std::uint64_t sub_seed(std::uint64_t global_seed, std::string_view stream) {
    // FNV-1a over the stream name, then one splitmix64 round to decorrelate.
    std::uint64_t h = 14695981039346656037ull;
    for (char c : stream) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    std::uint64_t z = global_seed ^ h;
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace cdp
