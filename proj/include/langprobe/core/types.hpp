#ifndef LANGPROBE_CORE_TYPES_HPP
#define LANGPROBE_CORE_TYPES_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

/**
 * @file types.hpp
 *
 * @brief Shared aliases, the error type and the random engine used throughout the library.
 */

namespace langprobe {

/**
 * Dense row-major matrix. Rows index tokens (or points), columns index features,
 * so a sequence of `n` embeddings is an `n x d` matrix.
 * Vectors that belong to a parameter set (biases, layer-norm gains) are stored as `1 x d`.
 */
template<typename Scalar_>
using Matrix = Eigen::Matrix<Scalar_, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template<typename Scalar_>
using RowVector = Eigen::Matrix<Scalar_, 1, Eigen::Dynamic>;

/**
 * All randomness flows through explicitly seeded engines of this type.
 */
using Rng = std::mt19937_64;

/**
 * Error raised by every operation in the library.
 * `stage` is empty for library errors; the pipeline fills it with the stage that failed.
 */
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& message, std::string stage = "") :
        std::runtime_error(stage.empty() ? message : "[" + stage + "] " + message), my_stage(std::move(stage)) {}

    const std::string& stage() const { return my_stage; }

private:
    std::string my_stage;
};

/**
 * Derive an independent seed for a sub-task from a parent seed and a stream index (splitmix64 finaliser).
 */
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/**
 * Uniform double in [0, 1) from the top 53 bits of the engine output.
 * Used where the exact sequence matters (dropout masks, sampling) so results do not depend
 * on the standard library's distribution implementations.
 */
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/**
 * Uniform integer in [0, n).
 */
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
}

/**
 * Standard normal deviate (Box-Muller, one value per call).
 */
inline double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0) {
        u1 = uniform01(rng);
    }
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/**
 * Fisher-Yates shuffle driven by `uniform_index`, so permutations are identical across standard libraries.
 */
template<typename Container_>
void shuffle(Container_& values, Rng& rng) {
    for (std::size_t i = values.size(); i > 1; --i) {
        std::size_t j = uniform_index(rng, i);
        std::swap(values[i - 1], values[j]);
    }
}

/**
 * 64-bit FNV-1a, used for checkpoint fingerprints and manifest ids.
 */
inline std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t hash = 0xcbf29ce484222325ULL) {
    const auto* ptr = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        hash ^= ptr[i];
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

inline std::string to_hex(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xF];
        value >>= 4;
    }
    return out;
}

}

#endif
