#pragma once

#include <stdexcept>

#include <Eigen/Dense>

#include "sgn/types.hpp"

namespace sgn {

// Relative singular-value cutoff used when inverting spectra.
inline constexpr double kDefaultSvTol = 1e-12;

struct SvdResult {
    Matrix u;                 // orthonormal columns
    Vector singular_values;   // nonincreasing, nonnegative
    Matrix v;                 // orthonormal columns
};

inline SvdResult svd(const Matrix& m) {
    if (!all_finite(m)) throw std::invalid_argument("svd: input has non-finite entries");
    Eigen::JacobiSVD<Matrix> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("svd: decomposition failed to converge");
    return SvdResult{solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

inline Index numerical_rank(const Vector& singular_values, double tol = kDefaultSvTol) {
    if (singular_values.size() == 0) return 0;
    const double cutoff = tol * singular_values(0);
    Index r = 0;
    for (Index i = 0; i < singular_values.size(); ++i)
        if (singular_values(i) > cutoff) ++r;
    return r;
}

// Moore-Penrose pseudoinverse; singular values at or below tol * sigma_max
// are treated as zero.
inline Matrix pinv(const Matrix& m, double tol = kDefaultSvTol) {
    if (tol < 0.0) throw std::invalid_argument("pinv: tol must be nonnegative");
    const SvdResult d = svd(m);
    const Index r = numerical_rank(d.singular_values, tol);
    if (r == 0) return Matrix::Zero(m.cols(), m.rows());
    Vector inv = Vector::Zero(d.singular_values.size());
    for (Index i = 0; i < r; ++i) inv(i) = 1.0 / d.singular_values(i);
    return d.v * inv.asDiagonal() * d.u.transpose();
}

// Orthogonal projector onto the column space of m: M M^+ = sum_i u_i u_i^T
// over singular vectors with nonzero singular value.
inline Matrix orthogonal_projector(const Matrix& m, double tol = kDefaultSvTol) {
    const SvdResult d = svd(m);
    const Index r = numerical_rank(d.singular_values, tol);
    const Matrix ur = d.u.leftCols(r);
    return ur * ur.transpose();
}

namespace detail {

inline void spd_sqrt_pair(const Matrix& w, Matrix& w_half, Matrix& w_half_inv) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(w);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("weighted_projector: eigendecomposition failed");
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw std::domain_error("weighted_projector: weight matrix is not positive definite");
    const Vector sqr = es.eigenvalues().array().sqrt();
    w_half = es.eigenvectors() * sqr.asDiagonal() * es.eigenvectors().transpose();
    w_half_inv = es.eigenvectors() * sqr.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Projection onto Im(J) that is self-adjoint in the W inner product,
// realized as W^{-1/2} (A A^+) W^{1/2} with A = W^{1/2} J. Dense equivalent
// of J (J^T W J)^+ J^T W.
inline Matrix weighted_projector(const Matrix& j, const Matrix& w, double tol = kDefaultSvTol) {
    if (w.rows() != w.cols() || w.rows() != j.rows())
        throw std::invalid_argument("weighted_projector: W must be square and match rows(J)");
    Matrix w_half, w_half_inv;
    detail::spd_sqrt_pair(w, w_half, w_half_inv);
    const Matrix a = w_half * j;
    return w_half_inv * orthogonal_projector(a, tol) * w_half;
}

}  // namespace sgn
