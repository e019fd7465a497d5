#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sgn/linalg.hpp"
#include "sgn/mlp.hpp"
#include "sgn/optimizers.hpp"
#include "sgn/sketch.hpp"

namespace sgn {

inline double cosine(const Vector& a, const Vector& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0)
        throw std::domain_error("cosine: undefined for zero vectors");
    return a.dot(b) / (na * nb);
}

// Pushforward of a parameter step into function space, df = J dtheta.
inline Vector function_space_direction(const MlpSpec& spec, const Vector& theta,
                                       const Batch& batch, const Vector& dtheta) {
    return jvp(spec, theta, batch, dtheta);
}

// ||J J^+ v||^2 / ||v||^2: the fraction of v lying in the model's tangent
// space. Dense route for materializable Jacobians.
inline double reachability(const Matrix& j, const Vector& v, double tol = kDefaultSvTol) {
    if (v.norm() == 0.0) throw std::domain_error("reachability: zero vector");
    const Matrix p = orthogonal_projector(j, tol);
    return (p * v).squaredNorm() / v.squaredNorm();
}

// Matvec route: project v onto Im(J) by solving the normal equations
// J^T J w = J^T v with conjugate gradients through jvp/vjp access.
inline double reachability(const MlpSpec& spec, const Vector& theta, const Batch& batch,
                           const Vector& v, int max_iter = 200, double tol = 1e-12) {
    if (v.norm() == 0.0) throw std::domain_error("reachability: zero vector");
    const ForwardPass fp = run_forward(spec, theta, batch.inputs);
    const Vector rhs = vjp(spec, theta, fp, v);
    Vector w = Vector::Zero(theta.size());
    Vector residual = rhs;
    Vector direction = residual;
    double rho = residual.squaredNorm();
    const double rhs_norm = rhs.norm();
    for (int it = 0; it < max_iter && std::sqrt(rho) > tol * std::max(1.0, rhs_norm); ++it) {
        const Vector jd = jvp(spec, theta, fp, direction);
        const Vector ad = vjp(spec, theta, fp, jd);
        const double denom = direction.dot(ad);
        if (denom <= 0.0) break;
        const double alpha = rho / denom;
        w += alpha * direction;
        residual -= alpha * ad;
        const double rho_next = residual.squaredNorm();
        direction = residual + (rho_next / rho) * direction;
        rho = rho_next;
    }
    return jvp(spec, theta, fp, w).squaredNorm() / v.squaredNorm();
}

struct AlignmentTable {
    std::vector<std::string> labels;
    Matrix cosines;  // symmetric, unit diagonal
    double loss_level = 0.0;
    std::string source;

    double lookup(const std::string& a, const std::string& b) const {
        Index ia = -1, ib = -1;
        for (size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == a) ia = static_cast<Index>(i);
            if (labels[i] == b) ib = static_cast<Index>(i);
        }
        if (ia < 0 || ib < 0) throw std::invalid_argument("AlignmentTable: unknown label");
        return cosines(ia, ib);
    }
};

// Function-space snapshot at a fixed parameter point: where would each
// optimizer's update move the outputs? Directions are stored with the
// descent sign flipped (M^+ grad pushed forward), so alignment with the
// mismatch and the function-space gradient reads positively. All rows are
// normalized; zero directions are dropped.
inline AlignmentTable snapshot(
    const MlpSpec& spec, const Vector& theta, const Batch& batch, const LossSpec& loss,
    const SketchConfig& cfg,
    const std::vector<std::pair<std::string, Vector>>& extra_param_directions = {},
    const std::string& source = "") {
    const ForwardPass fp = run_forward(spec, theta, batch.inputs);
    const Matrix outputs = fp.acts.back().transpose();
    const Vector grad = vjp(spec, theta, fp, func_grad(loss, outputs, batch.targets));
    const Index p = theta.size();

    std::vector<std::pair<std::string, Vector>> rows;
    auto add_functional = [&](const std::string& label, const Vector& dir) {
        if (dir.norm() > 0.0) rows.emplace_back(label, dir.normalized());
    };
    auto add_param = [&](const std::string& label, const Vector& dtheta) {
        add_functional(label, jvp(spec, theta, fp, dtheta));
    };

    std::vector<CurvatureMatrix> matrices;
    matrices.push_back(CurvatureMatrix::G_J);
    if (loss.has_curvature()) {
        matrices.push_back(CurvatureMatrix::G);
        matrices.push_back(CurvatureMatrix::H);
    }
    for (CurvatureMatrix m : matrices) {
        const auto matvec = make_curvature_operator(spec, theta, batch, loss, m);
        const SketchedEig eig = randomized_eig(matvec, p, cfg);
        if (auto dir = precondition(eig, grad)) add_param(curvature_name(m), *dir);
    }
    for (const auto& [label, dtheta] : extra_param_directions) add_param(label, dtheta);
    add_param("grad_theta", grad);
    add_functional("func_grad", func_grad(loss, outputs, batch.targets));
    add_functional("mismatch", mismatch(loss, outputs, batch.targets));

    AlignmentTable table;
    table.loss_level = loss_value(loss, outputs, batch.targets);
    table.source = source;
    const Index n = static_cast<Index>(rows.size());
    table.cosines = Matrix::Identity(n, n);
    for (Index i = 0; i < n; ++i) {
        table.labels.push_back(rows[i].first);
        for (Index j = 0; j < i; ++j) {
            const double c = rows[i].second.dot(rows[j].second);
            table.cosines(i, j) = c;
            table.cosines(j, i) = c;
        }
    }
    return table;
}

// Cosine between the sketched G and H parameter-space directions at one
// point; close to one whenever the network curvature term is negligible.
inline double ggn_hessian_agreement(const MlpSpec& spec, const Vector& theta, const Batch& batch,
                                    const LossSpec& loss, const SketchConfig& cfg) {
    if (!loss.has_curvature())
        throw std::invalid_argument("ggn_hessian_agreement: loss has no curvature");
    const Vector grad = loss_gradient(spec, theta, batch, loss);
    const Index p = theta.size();
    const auto mv_g = make_curvature_operator(spec, theta, batch, loss, CurvatureMatrix::G);
    const auto mv_h = make_curvature_operator(spec, theta, batch, loss, CurvatureMatrix::H);
    const auto dir_g = precondition(randomized_eig(mv_g, p, cfg), grad);
    const auto dir_h = precondition(randomized_eig(mv_h, p, cfg), grad);
    if (!dir_g || !dir_h)
        throw std::runtime_error("ggn_hessian_agreement: empty sketch");
    return cosine(*dir_g, *dir_h);
}

}  // namespace sgn
