#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "sgn/types.hpp"

namespace sgn {

enum class LossKind { q_power, log_cosh, cross_entropy, hinge };

// A loss family bundling everything the function-space analysis needs:
// per-sample value, gradient and Hessian block in output space, the
// mismatch map and its Jacobian. Outputs and targets are d x k with one
// row per sample; mismatch/gradient vectors are stacked sample-major.
struct LossSpec {
    LossKind kind = LossKind::q_power;
    int q = 2;  // q_power exponent, even and >= 2

    static LossSpec q_power(int q) {
        if (q < 2 || q % 2 != 0)
            throw std::invalid_argument("LossSpec: q must be an even integer >= 2");
        return LossSpec{LossKind::q_power, q};
    }
    static LossSpec squared() { return q_power(2); }
    static LossSpec log_cosh() { return LossSpec{LossKind::log_cosh, 2}; }
    static LossSpec cross_entropy() { return LossSpec{LossKind::cross_entropy, 2}; }
    static LossSpec hinge() { return LossSpec{LossKind::hinge, 2}; }

    bool has_curvature() const { return kind != LossKind::hinge; }

    std::string name() const {
        switch (kind) {
            case LossKind::q_power: return "q_power_" + std::to_string(q);
            case LossKind::log_cosh: return "log_cosh";
            case LossKind::cross_entropy: return "cross_entropy";
            case LossKind::hinge: return "hinge";
        }
        return "unknown";
    }
};

namespace detail {

inline void check_shapes(const Matrix& outputs, const Matrix& targets) {
    if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols())
        throw std::invalid_argument("loss: outputs/targets shape mismatch");
    if (outputs.rows() < 1) throw std::invalid_argument("loss: empty batch");
}

inline double stable_log_cosh(double r) {
    // log cosh r = |r| + log1p(exp(-2|r|)) - log 2
    const double a = std::abs(r);
    return a + std::log1p(std::exp(-2.0 * a)) - M_LN2;
}

inline double log_sum_exp(const Eigen::Ref<const Vector>& f) {
    const double m = f.maxCoeff();
    return m + std::log((f.array() - m).exp().sum());
}

inline Vector softmax_row(const Eigen::Ref<const Vector>& f) {
    const double lse = log_sum_exp(f);
    return (f.array() - lse).exp();
}

}  // namespace detail

// Mean loss over the batch (empirical risk).
inline double loss_value(const LossSpec& spec, const Matrix& outputs, const Matrix& targets) {
    detail::check_shapes(outputs, targets);
    const Index d = outputs.rows();
    double total = 0.0;
    switch (spec.kind) {
        case LossKind::q_power: {
            const Matrix r = outputs - targets;
            total = r.array().pow(spec.q).sum() / static_cast<double>(spec.q);
            break;
        }
        case LossKind::log_cosh: {
            const Matrix r = outputs - targets;
            for (Index i = 0; i < r.size(); ++i) total += detail::stable_log_cosh(r(i));
            break;
        }
        case LossKind::cross_entropy: {
            for (Index i = 0; i < d; ++i) {
                const double lse = detail::log_sum_exp(outputs.row(i).transpose());
                total += lse - outputs.row(i).dot(targets.row(i));
            }
            break;
        }
        case LossKind::hinge: {
            for (Index i = 0; i < d; ++i)
                total += std::max(0.0, 1.0 - targets(i, 0) * outputs(i, 0));
            break;
        }
    }
    return total / static_cast<double>(d);
}

// Stacked function-space gradient (1/d) [grad_f l_1; ...; grad_f l_d],
// sample-major. The 1/d factor is carried here.
inline Vector func_grad(const LossSpec& spec, const Matrix& outputs, const Matrix& targets) {
    detail::check_shapes(outputs, targets);
    const Index d = outputs.rows();
    const Index k = outputs.cols();
    Vector g(d * k);
    const double inv_d = 1.0 / static_cast<double>(d);
    switch (spec.kind) {
        case LossKind::q_power: {
            const Matrix r = outputs - targets;
            for (Index i = 0; i < d; ++i)
                for (Index j = 0; j < k; ++j)
                    g(i * k + j) = inv_d * std::pow(r(i, j), spec.q - 1);
            break;
        }
        case LossKind::log_cosh: {
            const Matrix r = outputs - targets;
            for (Index i = 0; i < d; ++i)
                for (Index j = 0; j < k; ++j) g(i * k + j) = inv_d * std::tanh(r(i, j));
            break;
        }
        case LossKind::cross_entropy: {
            for (Index i = 0; i < d; ++i) {
                const Vector p = detail::softmax_row(outputs.row(i).transpose());
                g.segment(i * k, k) = inv_d * (p - targets.row(i).transpose());
            }
            break;
        }
        case LossKind::hinge: {
            // Subgradient convention: the active branch is taken at r = 0.
            for (Index i = 0; i < d; ++i) {
                const double r = 1.0 - targets(i, 0) * outputs(i, 0);
                g(i) = (r >= 0.0) ? -inv_d * targets(i, 0) : 0.0;
            }
            break;
        }
    }
    return g;
}

// Per-sample output-space gradient grad_f l_i, without the 1/d factor.
inline Vector func_grad_row(const LossSpec& spec, const Eigen::Ref<const Vector>& output_row,
                            const Eigen::Ref<const Vector>& target_row) {
    const Index k = output_row.size();
    Vector g(k);
    switch (spec.kind) {
        case LossKind::q_power:
            for (Index j = 0; j < k; ++j)
                g(j) = std::pow(output_row(j) - target_row(j), spec.q - 1);
            return g;
        case LossKind::log_cosh:
            for (Index j = 0; j < k; ++j) g(j) = std::tanh(output_row(j) - target_row(j));
            return g;
        case LossKind::cross_entropy:
            return detail::softmax_row(output_row) - target_row;
        case LossKind::hinge: {
            const double r = 1.0 - target_row(0) * output_row(0);
            g(0) = (r >= 0.0) ? -target_row(0) : 0.0;
            return g;
        }
    }
    throw std::logic_error("func_grad_row: unreachable");
}

// Per-sample k x k function-space Hessian block, without the 1/d factor.
inline Matrix func_hess_block(const LossSpec& spec, const Eigen::Ref<const Vector>& output_row,
                              const Eigen::Ref<const Vector>& target_row) {
    const Index k = output_row.size();
    switch (spec.kind) {
        case LossKind::q_power: {
            Matrix h = Matrix::Zero(k, k);
            for (Index j = 0; j < k; ++j) {
                const double r = output_row(j) - target_row(j);
                h(j, j) = (spec.q - 1) * std::pow(r, spec.q - 2);
            }
            return h;
        }
        case LossKind::log_cosh: {
            Matrix h = Matrix::Zero(k, k);
            for (Index j = 0; j < k; ++j) {
                const double c = std::cosh(output_row(j) - target_row(j));
                h(j, j) = 1.0 / (c * c);
            }
            return h;
        }
        case LossKind::cross_entropy: {
            const Vector p = detail::softmax_row(output_row);
            Matrix h = Matrix(p.asDiagonal());
            h.noalias() -= p * p.transpose();
            return h;
        }
        case LossKind::hinge:
            throw std::domain_error("func_hess_block: hinge has no curvature (H_l = 0 a.e.)");
    }
    throw std::logic_error("func_hess_block: unreachable");
}

// Mismatch r = psi(f, y): residual for power/log-cosh losses, softmax(f) - y
// for cross-entropy, margin violation 1 - y f for hinge.
inline Vector mismatch(const LossSpec& spec, const Matrix& outputs, const Matrix& targets) {
    detail::check_shapes(outputs, targets);
    const Index d = outputs.rows();
    const Index k = outputs.cols();
    Vector r(d * k);
    switch (spec.kind) {
        case LossKind::q_power:
        case LossKind::log_cosh: {
            const Matrix diff = outputs - targets;
            for (Index i = 0; i < d; ++i)
                r.segment(i * k, k) = diff.row(i).transpose();
            break;
        }
        case LossKind::cross_entropy: {
            for (Index i = 0; i < d; ++i) {
                const Vector p = detail::softmax_row(outputs.row(i).transpose());
                r.segment(i * k, k) = p - targets.row(i).transpose();
            }
            break;
        }
        case LossKind::hinge: {
            for (Index i = 0; i < d; ++i) r(i) = 1.0 - targets(i, 0) * outputs(i, 0);
            break;
        }
    }
    return r;
}

// Per-sample Jacobian of the mismatch map w.r.t. the model output.
// Identity for power/log-cosh, the Fisher block for cross-entropy, -y for
// hinge.
inline Matrix mismatch_jacobian_block(const LossSpec& spec, const Eigen::Ref<const Vector>& output_row,
                                      const Eigen::Ref<const Vector>& target_row) {
    const Index k = output_row.size();
    switch (spec.kind) {
        case LossKind::q_power:
        case LossKind::log_cosh:
            return Matrix::Identity(k, k);
        case LossKind::cross_entropy: {
            const Vector p = detail::softmax_row(output_row);
            Matrix f = Matrix(p.asDiagonal());
            f.noalias() -= p * p.transpose();
            return f;
        }
        case LossKind::hinge: {
            Matrix j(1, 1);
            j(0, 0) = -target_row(0);
            return j;
        }
    }
    throw std::logic_error("mismatch_jacobian_block: unreachable");
}

// Per-sample gradient of the loss written as a function of the mismatch,
// grad_r lhat(r). Composes with mismatch_jacobian_block to reconstruct the
// raw output-space gradient.
inline Vector mismatch_loss_grad(const LossSpec& spec, const Eigen::Ref<const Vector>& output_row,
                                 const Eigen::Ref<const Vector>& target_row) {
    const Index k = output_row.size();
    Vector g(k);
    switch (spec.kind) {
        case LossKind::q_power:
            for (Index j = 0; j < k; ++j)
                g(j) = std::pow(output_row(j) - target_row(j), spec.q - 1);
            return g;
        case LossKind::log_cosh:
            for (Index j = 0; j < k; ++j) g(j) = std::tanh(output_row(j) - target_row(j));
            return g;
        case LossKind::cross_entropy: {
            const Vector p = detail::softmax_row(output_row);
            for (Index j = 0; j < k; ++j)
                g(j) = (target_row(j) > 0.5) ? -target_row(j) / p(j) : 0.0;
            return g;
        }
        case LossKind::hinge: {
            const double r = 1.0 - target_row(0) * output_row(0);
            g(0) = (r >= 0.0) ? 1.0 : 0.0;
            return g;
        }
    }
    throw std::logic_error("mismatch_loss_grad: unreachable");
}

}  // namespace sgn
