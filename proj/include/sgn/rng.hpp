#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "sgn/types.hpp"

namespace sgn {

// Mixes a base seed with a stream index so per-iteration sketches and
// per-layer initializations draw from disjoint streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// mt19937_64 with hand-rolled uniform/normal draws. std::normal_distribution
// is implementation-defined, which would break run reproducibility across
// standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() {  // [0, 1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {  // Box-Muller, cached spare
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return mag * std::cos(2.0 * M_PI * u2);
    }

    Matrix gaussian_matrix(Index rows, Index cols) {
        Matrix m(rows, cols);
        for (Index j = 0; j < cols; ++j)
            for (Index i = 0; i < rows; ++i) m(i, j) = normal();
        return m;
    }

    Vector gaussian_vector(Index n) {
        Vector v(n);
        for (Index i = 0; i < n; ++i) v(i) = normal();
        return v;
    }

    std::uint64_t next_raw() { return engine_(); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace sgn
