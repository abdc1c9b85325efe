#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "ditpaint/tensor.hpp"

namespace ditpaint {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seeded random stream. The integer sequence is std::mt19937_64 (fully
/// specified by the C++ standard) seeded with a splitmix64 mix of
/// (seed, stream_id); normals come from Box-Muller over 53-bit uniforms.
/// Identical (seed, stream_id) therefore reproduces identical draws.
class RngStream {
public:
    explicit RngStream(uint64_t seed, uint64_t stream_id = 0)
        : seed_(seed), stream_id_(stream_id),
          gen_(splitmix64(splitmix64(seed) ^ splitmix64(stream_id + 0x5851f42d4c957f2dULL))) {}

    uint64_t seed() const { return seed_; }
    uint64_t stream_id() const { return stream_id_; }

    /// Derive an independent stream from the same base seed. Parallel work
    /// takes children with distinct ids instead of sharing one stream.
    RngStream child(uint64_t id) const {
        return RngStream(seed_, splitmix64(stream_id_ ^ splitmix64(id + 1)));
    }

    uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Integer in [0, n).
    uint64_t uniform_index(uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
        return gen_() % n;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so the log is finite.
        const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    uint64_t seed_;
    uint64_t stream_id_;
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// i.i.d. standard normal tensor, deterministic per (seed, stream_id).
template <typename T>
Tensor<T> sample_gaussian(RngStream& rng, const std::vector<size_t>& shape) {
    if (shape.empty()) throw std::invalid_argument("sample_gaussian: shape must be non-empty");
    for (size_t d : shape)
        if (d == 0) throw std::invalid_argument("sample_gaussian: zero dimension in " + shape_str(shape));
    Tensor<T> out(shape);
    for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(rng.normal());
    return out;
}

}  // namespace ditpaint
