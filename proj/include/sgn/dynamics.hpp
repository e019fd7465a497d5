#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "sgn/losses.hpp"
#include "sgn/optimizers.hpp"
#include "sgn/types.hpp"

namespace sgn {

// Which idealized mismatch ODE to evaluate. gd_reference is the gradient
// flow with the Jacobian Gram matrix replaced by the identity; it coincides
// with the G_J dynamics whenever the mismatch map is linear.
enum class MismatchFlow { g_j, ggn, gd_reference };

namespace detail {

inline double q_power_gj_component(double r0, int q, double tau) {
    if (q == 2) return r0 * std::exp(-tau);
    const double base = 1.0 + (q - 2) * std::pow(r0, q - 2) * tau;
    return r0 * std::pow(base, -1.0 / (q - 2));
}

}  // namespace detail

// Closed-form mismatch evolution r(tau) for the supported (loss, flow)
// pairs. Componentwise in the stacked mismatch vector.
inline Vector closed_form_mismatch(const LossSpec& loss, MismatchFlow flow, const Vector& r0,
                                   double tau) {
    if (tau < 0.0) throw std::invalid_argument("closed_form_mismatch: tau must be >= 0");
    Vector r(r0.size());
    switch (loss.kind) {
        case LossKind::q_power: {
            if (flow == MismatchFlow::ggn) {
                r = r0 * std::exp(-tau / (loss.q - 1));
            } else {  // g_j and gd_reference share -r^{q-1}
                for (Index i = 0; i < r0.size(); ++i)
                    r(i) = detail::q_power_gj_component(r0(i), loss.q, tau);
            }
            return r;
        }
        case LossKind::log_cosh: {
            if (flow == MismatchFlow::ggn) {
                for (Index i = 0; i < r0.size(); ++i)
                    r(i) = std::atanh(std::tanh(r0(i)) * std::exp(-tau));
            } else {
                for (Index i = 0; i < r0.size(); ++i)
                    r(i) = std::asinh(std::sinh(r0(i)) * std::exp(-tau));
            }
            return r;
        }
        case LossKind::hinge: {
            if (flow == MismatchFlow::ggn)
                throw std::invalid_argument(
                    "closed_form_mismatch: hinge has no GGN mismatch flow (H_l = 0 a.e.)");
            for (Index i = 0; i < r0.size(); ++i)
                r(i) = (r0(i) >= 0.0) ? std::max(r0(i) - tau, 0.0) : r0(i);
            return r;
        }
        case LossKind::cross_entropy: {
            if (flow == MismatchFlow::ggn) return Vector(r0 * std::exp(-tau));
            throw std::invalid_argument(
                "closed_form_mismatch: cross-entropy under G_J has no closed form; integrate");
        }
    }
    throw std::logic_error("closed_form_mismatch: unreachable");
}

// Cross-entropy G_J mismatch flow dr/dtau = -F(r) r with F = diag(p) - pp^T
// and p = r + y, integrated per sample with classical RK4. Row layout
// matches the loss module (one sample per row).
inline Matrix integrate_cross_entropy_gj(const Matrix& r0, const Matrix& onehot, double tau,
                                         double step) {
    if (step <= 0.0) throw std::invalid_argument("integrate_cross_entropy_gj: step must be > 0");
    if (r0.rows() != onehot.rows() || r0.cols() != onehot.cols())
        throw std::invalid_argument("integrate_cross_entropy_gj: shape mismatch");
    for (Index i = 0; i < r0.rows(); ++i) {
        const double rowsum = (r0.row(i) + onehot.row(i)).sum();
        if (std::abs(rowsum - 1.0) > 1e-9 || ((r0.row(i) + onehot.row(i)).array() < -1e-12).any())
            throw std::domain_error("integrate_cross_entropy_gj: r0 + y must lie on the simplex");
    }

    auto rhs = [&](const Matrix& r) {
        Matrix out(r.rows(), r.cols());
        for (Index i = 0; i < r.rows(); ++i) {
            const Vector p = r.row(i).transpose() + onehot.row(i).transpose();
            const Vector ri = r.row(i).transpose();
            const Vector fr = p.cwiseProduct(ri) - p * p.dot(ri);
            out.row(i) = -fr.transpose();
        }
        return out;
    };

    Matrix r = r0;
    double t = 0.0;
    while (t < tau - 1e-15) {
        const double h = std::min(step, tau - t);
        const Matrix k1 = rhs(r);
        const Matrix k2 = rhs(r + 0.5 * h * k1);
        const Matrix k3 = rhs(r + 0.5 * h * k2);
        const Matrix k4 = rhs(r + h * k3);
        r += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
    }
    return r;
}

// tau -> r(tau) evaluator bundling the initial mismatch with its flow.
struct MismatchPrediction {
    LossKind loss = LossKind::q_power;
    MismatchFlow flow = MismatchFlow::ggn;
    Vector r0;
    std::function<Vector(double)> evaluate;

    static MismatchPrediction closed_form(const LossSpec& loss, MismatchFlow flow,
                                          const Vector& r0) {
        closed_form_mismatch(loss, flow, r0, 0.0);  // validate the pair up front
        MismatchPrediction p;
        p.loss = loss.kind;
        p.flow = flow;
        p.r0 = r0;
        p.evaluate = [loss, flow, r0](double tau) {
            return closed_form_mismatch(loss, flow, r0, tau);
        };
        return p;
    }

    static MismatchPrediction cross_entropy_gj(const Matrix& r0, const Matrix& onehot,
                                               double step) {
        MismatchPrediction p;
        p.loss = LossKind::cross_entropy;
        p.flow = MismatchFlow::g_j;
        p.r0 = Eigen::Map<const Vector>(Matrix(r0.transpose()).data(), r0.size());
        p.evaluate = [r0, onehot, step](double tau) {
            const Matrix r = integrate_cross_entropy_gj(r0, onehot, tau, step);
            return Vector(Eigen::Map<const Vector>(Matrix(r.transpose()).data(), r.size()));
        };
        return p;
    }
};

struct DeviationReport {
    std::vector<double> tau;
    std::vector<double> relative_deviation;  // ||r_emp - r_pred|| / ||r_pred||

    double max_over_window(double tau_lo, double tau_hi) const {
        double worst = 0.0;
        for (size_t i = 0; i < tau.size(); ++i)
            if (tau[i] >= tau_lo && tau[i] <= tau_hi)
                worst = std::max(worst, relative_deviation[i]);
        return worst;
    }
};

// Per-iteration deviation between empirical residuals (indexed by the
// cumulative line-search clock) and the predicted flow.
inline DeviationReport compare_trace(const std::vector<TrainTrace>& traces,
                                     const std::vector<Vector>& empirical_residuals,
                                     const MismatchPrediction& prediction) {
    if (traces.size() != empirical_residuals.size())
        throw std::invalid_argument("compare_trace: trace/residual length mismatch");
    DeviationReport report;
    for (size_t i = 0; i < traces.size(); ++i) {
        const double t = traces[i].cumulative_tau;
        const Vector pred = prediction.evaluate(t);
        const double denom = pred.norm();
        const double dev = (denom > 0.0)
                               ? (empirical_residuals[i] - pred).norm() / denom
                               : empirical_residuals[i].norm();
        report.tau.push_back(t);
        report.relative_deviation.push_back(dev);
    }
    return report;
}

}  // namespace sgn
