#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

#include "sgn/rng.hpp"
#include "sgn/types.hpp"

namespace sgn {

enum class SketchMode { one_pass, two_pass };

struct SketchConfig {
    Index rank = 75;
    Index oversketch = 10;
    SketchMode mode = SketchMode::one_pass;
    double tolerance = 1e-14;
    std::uint64_t seed = 0;
    Index rank_cap = 0;  // 0 means "no cap beyond the operator dimension"

    void validate() const {
        if (rank < 1) throw std::invalid_argument("SketchConfig: rank must be >= 1");
        if (oversketch < 0) throw std::invalid_argument("SketchConfig: oversketch must be >= 0");
        if (tolerance <= 0.0) throw std::invalid_argument("SketchConfig: tolerance must be > 0");
    }
};

// Truncated approximate eigendecomposition of a PSD operator. Retains every
// Ritz pair whose value clears the tolerance; negative curvature is clipped
// away with the sub-tolerance values.
struct SketchedEig {
    Matrix basis;     // p x k, orthonormal columns
    Vector eigvals;   // k, nonincreasing, all > tolerance
    Index effective_rank = 0;
    double sufficiency = std::numeric_limits<double>::quiet_NaN();

    bool empty() const { return effective_rank == 0; }
};

using PsdMatvec = std::function<Matrix(const Eigen::Ref<const Matrix>&)>;

// Randomized eigendecomposition from matvec access only. two_pass draws
// Y = M Omega, orthonormalizes, and Rayleigh-Ritzes Q^T M Q; one_pass
// reconstructs the small matrix from the sketch itself by solving
// (Q^T Y) = B (Q^T Omega).
inline SketchedEig randomized_eig(const PsdMatvec& matvec, Index dim, const SketchConfig& cfg) {
    cfg.validate();
    const Index probes = cfg.rank + cfg.oversketch;
    if (probes > dim)
        throw std::invalid_argument("randomized_eig: rank + oversketch exceeds dimension");

    Rng rng(cfg.seed);
    const Matrix omega = rng.gaussian_matrix(dim, probes);
    const Matrix y = matvec(omega);
    if (!y.allFinite()) throw std::runtime_error("randomized_eig: matvec returned non-finite values");

    SketchedEig result;
    if (y.norm() == 0.0) return result;  // zero operator

    Eigen::HouseholderQR<Matrix> qr(y);
    const Matrix q = qr.householderQ() * Matrix::Identity(dim, probes);

    Matrix small;
    if (cfg.mode == SketchMode::two_pass) {
        const Matrix mq = matvec(q);
        if (!mq.allFinite())
            throw std::runtime_error("randomized_eig: matvec returned non-finite values");
        small.noalias() = q.transpose() * mq;
    } else {
        const Matrix c = q.transpose() * omega;  // probes x probes
        const Matrix dmat = q.transpose() * y;
        // Solve B C = D in the least-squares sense, then symmetrize.
        small = c.transpose().completeOrthogonalDecomposition().solve(dmat.transpose()).transpose();
    }
    small = 0.5 * (small + small.transpose());

    Eigen::SelfAdjointEigenSolver<Matrix> es(small);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("randomized_eig: small eigenproblem failed");

    Index kept = 0;
    for (Index i = 0; i < probes; ++i)
        if (es.eigenvalues()(i) > cfg.tolerance) ++kept;
    if (kept == 0) return result;

    result.eigvals.resize(kept);
    result.basis.resize(dim, kept);
    for (Index i = 0; i < kept; ++i) {
        const Index src = probes - 1 - i;  // solver sorts ascending
        result.eigvals(i) = es.eigenvalues()(src);
        result.basis.col(i).noalias() = q * es.eigenvectors().col(src);
    }
    result.effective_rank = kept;
    return result;
}

// Preconditioned step U diag(1/lambda) U^T grad; empty decomposition signals
// the caller to fall back to the raw gradient.
inline std::optional<Vector> precondition(const SketchedEig& eig, const Vector& grad) {
    if (eig.empty()) return std::nullopt;
    const Vector proj = eig.basis.transpose() * grad;
    return eig.basis * proj.cwiseQuotient(eig.eigvals);
}

// Sufficiency S_k: energy of the rank-limited step over the energy of the
// best step the sketch can represent. numerator_rank is the rank actually
// used for the update; the denominator runs over every retained Ritz pair
// (the oversampled tail stands in for the unavailable full spectrum).
inline double sufficiency(const SketchedEig& eig, const Vector& grad, Index numerator_rank) {
    if (eig.empty()) throw std::domain_error("sufficiency: decomposition retained no spectrum");
    const Vector proj = eig.basis.transpose() * grad;
    const Vector energy = proj.array().square() / eig.eigvals.array();
    const Index k = std::min<Index>(numerator_rank, eig.effective_rank);
    const double num = energy.head(k).sum();
    const double den = energy.sum();
    if (den == 0.0) return 0.0;  // gradient carries no energy in the sketch
    return num / den;
}

// Rank schedule for the next iteration: grow to the estimated rank plus
// oversampling, but once sufficiency reaches one the rank may not rise
// above its previous value. Always at least 1, never above the cap.
inline Index gated_rank_update(Index prev_rank, Index estimated_rank, Index oversketch,
                               double suff, Index cap) {
    if (prev_rank < 1 || estimated_rank < 0)
        throw std::invalid_argument("gated_rank_update: counts must be positive");
    Index candidate = estimated_rank + oversketch;
    if (suff >= 1.0) candidate = std::min(candidate, prev_rank);
    if (cap > 0) candidate = std::min(candidate, cap);
    return std::max<Index>(candidate, 1);
}

}  // namespace sgn
