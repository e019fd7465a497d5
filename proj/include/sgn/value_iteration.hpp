#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <variant>
#include <vector>

#include "sgn/mlp.hpp"
#include "sgn/optimizers.hpp"
#include "sgn/rng.hpp"

namespace sgn {

// Minimum-time double integrator: xdd = u with |u| <= 1, unit cost per step
// outside a goal ball at the origin. States are (position, velocity).
struct DoubleIntegratorEnv {
    double dt = 0.1;
    double goal_eps = 0.1;
    double pos_bound = 2.0;
    double vel_bound = 2.0;
    static constexpr std::array<double, 2> actions{-1.0, 1.0};

    void validate() const {
        if (dt <= 0.0 || goal_eps <= 0.0)
            throw std::invalid_argument("DoubleIntegratorEnv: dt and goal_eps must be > 0");
    }

    using State = Eigen::Vector2d;

    bool in_goal(const State& s) const { return s.norm() <= goal_eps; }
    double stage_cost(const State& s) const { return in_goal(s) ? 0.0 : 1.0; }

    // Semi-implicit Euler, clipped to the state box.
    State step(const State& s, double action) const {
        State next;
        next(1) = std::clamp(s(1) + action * dt, -vel_bound, vel_bound);
        next(0) = std::clamp(s(0) + next(1) * dt, -pos_bound, pos_bound);
        return next;
    }
};

// Grid-sampled value function with bilinear interpolation, used both for
// the dynamic-programming oracle and for serialized artifacts.
struct ValueGrid {
    Index nx = 0;
    Index nv = 0;
    Eigen::Vector2d lo{-2.0, -2.0};
    Eigen::Vector2d hi{2.0, 2.0};
    Matrix values;  // nx x nv

    double x_at(Index i) const { return lo(0) + (hi(0) - lo(0)) * i / (nx - 1); }
    double v_at(Index j) const { return lo(1) + (hi(1) - lo(1)) * j / (nv - 1); }

    double interpolate(const Eigen::Vector2d& s) const {
        const double fx = std::clamp((s(0) - lo(0)) / (hi(0) - lo(0)), 0.0, 1.0) * (nx - 1);
        const double fv = std::clamp((s(1) - lo(1)) / (hi(1) - lo(1)), 0.0, 1.0) * (nv - 1);
        const Index i0 = std::min<Index>(static_cast<Index>(fx), nx - 2);
        const Index j0 = std::min<Index>(static_cast<Index>(fv), nv - 2);
        const double ax = fx - i0;
        const double av = fv - j0;
        return (1 - ax) * (1 - av) * values(i0, j0) + ax * (1 - av) * values(i0 + 1, j0) +
               (1 - ax) * av * values(i0, j0 + 1) + ax * av * values(i0 + 1, j0 + 1);
    }
};

// Value iteration to a fixed point of the discrete Bellman backup on a fine
// grid; stands in for the analytical bang-bang solution.
inline ValueGrid dp_oracle(const DoubleIntegratorEnv& env, Index nx, Index nv,
                           double tol = 1e-8, int max_sweeps = 100000) {
    env.validate();
    ValueGrid grid;
    grid.nx = nx;
    grid.nv = nv;
    grid.lo = {-env.pos_bound, -env.vel_bound};
    grid.hi = {env.pos_bound, env.vel_bound};
    grid.values = Matrix::Zero(nx, nv);

    Matrix next(nx, nv);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double change = 0.0;
        for (Index i = 0; i < nx; ++i) {
            for (Index j = 0; j < nv; ++j) {
                const Eigen::Vector2d s(grid.x_at(i), grid.v_at(j));
                if (env.in_goal(s)) {
                    next(i, j) = 0.0;
                    continue;
                }
                double best = std::numeric_limits<double>::infinity();
                for (double a : env.actions)
                    best = std::min(best, 1.0 + grid.interpolate(env.step(s, a)));
                next(i, j) = best;
            }
        }
        change = (next - grid.values).cwiseAbs().maxCoeff();
        grid.values.swap(next);
        if (change < tol) return grid;
    }
    throw std::runtime_error("dp_oracle: value iteration did not converge");
}

inline double oracle_greedy_action(const ValueGrid& oracle, const DoubleIntegratorEnv& env,
                                   const Eigen::Vector2d& s) {
    double best_a = env.actions[0];
    double best_q = std::numeric_limits<double>::infinity();
    for (double a : env.actions) {
        const double q = env.stage_cost(s) + oracle.interpolate(env.step(s, a));
        if (q < best_q) {
            best_q = q;
            best_a = a;
        }
    }
    return best_a;
}

// Bellman targets y(s) = 1{||s|| > eps} min_a (1 + V(f(s, a))), evaluated
// with the current network and frozen for the following optimizer step.
inline Vector value_targets(const MlpSpec& spec, const Vector& theta, const Matrix& states,
                            const DoubleIntegratorEnv& env) {
    const Index n = states.rows();
    Matrix successors(2 * n, 2);
    for (Index i = 0; i < n; ++i)
        for (int a = 0; a < 2; ++a)
            successors.row(2 * i + a) =
                env.step(states.row(i).transpose(), env.actions[a]).transpose();
    const Matrix v = forward(spec, theta, successors);
    Vector targets(n);
    for (Index i = 0; i < n; ++i) {
        if (env.in_goal(states.row(i).transpose())) {
            targets(i) = 0.0;
        } else {
            targets(i) = 1.0 + std::min(v(2 * i, 0), v(2 * i + 1, 0));
        }
    }
    return targets;
}

// Same backup evaluated against a value grid; used to cross-check the
// oracle's fixed point.
inline Vector value_targets(const ValueGrid& vf, const Matrix& states,
                            const DoubleIntegratorEnv& env) {
    const Index n = states.rows();
    Vector targets(n);
    for (Index i = 0; i < n; ++i) {
        const Eigen::Vector2d s = states.row(i).transpose();
        if (env.in_goal(s)) {
            targets(i) = 0.0;
        } else {
            double best = std::numeric_limits<double>::infinity();
            for (double a : env.actions) best = std::min(best, 1.0 + vf.interpolate(env.step(s, a)));
            targets(i) = best;
        }
    }
    return targets;
}

struct PolicyAgreement {
    Vector per_state;       // positive where the learned ordering matches the oracle
    double positive_fraction = 0.0;
};

// Sign-correctness of the learned one-step action ordering relative to the
// oracle's greedy action; ties score zero.
inline PolicyAgreement policy_agreement(const MlpSpec& spec, const Vector& theta,
                                        const DoubleIntegratorEnv& env, const Matrix& eval_states,
                                        const ValueGrid& oracle) {
    const Index n = eval_states.rows();
    Matrix successors(2 * n, 2);
    for (Index i = 0; i < n; ++i)
        for (int a = 0; a < 2; ++a)
            successors.row(2 * i + a) =
                env.step(eval_states.row(i).transpose(), env.actions[a]).transpose();
    const Matrix v = forward(spec, theta, successors);

    PolicyAgreement out;
    out.per_state.resize(n);
    Index positives = 0;
    for (Index i = 0; i < n; ++i) {
        const Eigen::Vector2d s = eval_states.row(i).transpose();
        const double cost = env.stage_cost(s);
        const double q_minus = cost + v(2 * i, 0);
        const double q_plus = cost + v(2 * i + 1, 0);
        const double ustar = oracle_greedy_action(oracle, env, s);
        out.per_state(i) = (q_minus - q_plus) * ustar;
        if (out.per_state(i) > 0.0) ++positives;
    }
    out.positive_fraction = static_cast<double>(positives) / static_cast<double>(n);
    return out;
}

using FittedViOptimizer =
    std::variant<SketchedOptimizer, std::pair<AdamParams, AdamState>,
                 std::pair<MuonParams, MuonState>, GdParams>;

struct FittedViResult {
    Vector theta;
    std::vector<TrainTrace> traces;
    Matrix train_states;
};

// Vanilla neural fitted value iteration: freeze Bellman targets, take one
// optimizer step on the MSE, repeat. Training states are drawn once,
// uniformly over the state box.
inline FittedViResult fitted_vi_run(const DoubleIntegratorEnv& env, const MlpSpec& spec,
                                    FittedViOptimizer optimizer, int steps, Index n_samples,
                                    std::uint64_t data_seed) {
    env.validate();
    Rng rng(mix_seed(data_seed, 0x76690ull));
    Matrix states(n_samples, 2);
    for (Index i = 0; i < n_samples; ++i) {
        states(i, 0) = rng.uniform(-env.pos_bound, env.pos_bound);
        states(i, 1) = rng.uniform(-env.vel_bound, env.vel_bound);
    }

    FittedViResult result;
    result.train_states = states;
    result.theta = init_params(spec);
    const LossSpec mse = LossSpec::squared();
    double tau = 0.0;

    for (int step = 0; step < steps; ++step) {
        Batch batch;
        batch.inputs = states;
        batch.targets = value_targets(spec, result.theta, states, env);
        TrainTrace trace;
        if (auto* sk = std::get_if<SketchedOptimizer>(&optimizer)) {
            auto res = sk->step(result.theta, batch, step);
            result.theta = res.params;
            trace = res.trace;
        } else {
            const Vector grad = loss_gradient(spec, result.theta, batch, mse);
            if (auto* adam = std::get_if<std::pair<AdamParams, AdamState>>(&optimizer)) {
                result.theta = adam_step(adam->second, result.theta, grad, adam->first);
            } else if (auto* muon = std::get_if<std::pair<MuonParams, MuonState>>(&optimizer)) {
                result.theta = muon_step(muon->second, spec, result.theta, grad, muon->first);
            } else {
                result.theta = gd_step(result.theta, grad, std::get<GdParams>(optimizer), step);
            }
            trace.iteration = step;
            trace.step_size = 0.0;
            trace.loss = loss_value(mse, forward(spec, result.theta, batch.inputs), batch.targets);
        }
        tau += trace.step_size;
        trace.iteration = step;
        trace.cumulative_tau = tau;
        result.traces.push_back(trace);
    }
    return result;
}

// RMSE of the learned value function against the oracle over a uniform
// evaluation grid.
inline double value_rmse(const MlpSpec& spec, const Vector& theta, const ValueGrid& oracle,
                         const Matrix& eval_states) {
    const Matrix v = forward(spec, theta, eval_states);
    double sq = 0.0;
    for (Index i = 0; i < eval_states.rows(); ++i) {
        const double diff = v(i, 0) - oracle.interpolate(eval_states.row(i).transpose());
        sq += diff * diff;
    }
    return std::sqrt(sq / eval_states.rows());
}

inline Matrix uniform_state_grid(const DoubleIntegratorEnv& env, Index n_per_axis) {
    Matrix states(n_per_axis * n_per_axis, 2);
    Index row = 0;
    for (Index i = 0; i < n_per_axis; ++i) {
        const double x = -env.pos_bound + 2.0 * env.pos_bound * i / (n_per_axis - 1);
        for (Index j = 0; j < n_per_axis; ++j) {
            const double v = -env.vel_bound + 2.0 * env.vel_bound * j / (n_per_axis - 1);
            states(row, 0) = x;
            states(row, 1) = v;
            ++row;
        }
    }
    return states;
}

}  // namespace sgn
