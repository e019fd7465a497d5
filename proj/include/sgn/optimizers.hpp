#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sgn/mlp.hpp"
#include "sgn/sketch.hpp"

namespace sgn {

// Step-size candidates, ordered descending so ties resolve toward the
// largest step. Default is the linspace(1,0.5,6) head followed by the
// geometric 2^-k tail with k in linspace(2,30,25).
struct LineSearchGrid {
    std::vector<double> candidates;

    void validate() const {
        if (candidates.empty()) throw std::invalid_argument("LineSearchGrid: empty grid");
        for (double c : candidates)
            if (!(c > 0.0)) throw std::invalid_argument("LineSearchGrid: candidates must be > 0");
    }

    static LineSearchGrid standard() {
        LineSearchGrid g;
        for (int i = 0; i < 6; ++i) g.candidates.push_back(1.0 - 0.1 * i);
        for (int i = 0; i < 25; ++i) {
            const double k = 2.0 + 28.0 * i / 24.0;
            g.candidates.push_back(std::pow(2.0, -k));
        }
        return g;
    }

    // Uniformly scaled-down copy of the standard grid; useful when the
    // discrete path must resolve the continuous-time dynamics.
    static LineSearchGrid scaled(double max_step) {
        LineSearchGrid g = standard();
        for (double& c : g.candidates) c *= max_step;
        return g;
    }
};

struct LineSearchResult {
    double step = 0.0;
    double loss = std::numeric_limits<double>::quiet_NaN();
};

// Argmin over the grid; NaN losses are skipped, ties keep the earlier
// (larger) candidate. All-NaN is a hard failure.
inline LineSearchResult grid_line_search(const LineSearchGrid& grid, const Vector& params,
                                         const Vector& direction,
                                         const std::function<double(const Vector&)>& loss_eval) {
    grid.validate();
    if (!all_finite(direction)) throw std::invalid_argument("grid_line_search: non-finite direction");
    LineSearchResult best;
    for (double eta : grid.candidates) {
        const double loss = loss_eval(params + eta * direction);
        if (std::isnan(loss)) continue;
        if (std::isnan(best.loss) || loss < best.loss) {
            best.step = eta;
            best.loss = loss;
        }
    }
    if (std::isnan(best.loss))
        throw std::runtime_error("grid_line_search: every candidate evaluated to NaN");
    return best;
}

// One row of a training log. sketch_rank < 0 and NaN fields mean "absent"
// (baseline optimizers do not sketch).
struct TrainTrace {
    int iteration = 0;
    double loss = 0.0;
    double step_size = 0.0;
    double cumulative_tau = 0.0;
    double residual_norm = std::numeric_limits<double>::quiet_NaN();
    Index sketch_rank = -1;
    double sufficiency = std::numeric_limits<double>::quiet_NaN();
    double alignment_mismatch = std::numeric_limits<double>::quiet_NaN();
    double alignment_funcgrad = std::numeric_limits<double>::quiet_NaN();
    bool line_search_failed = false;
    bool sketch_fallback = false;
};

struct SketchedStepResult {
    Vector params;
    TrainTrace trace;
    Vector direction;  // parameter-space update direction (pre line search)
};

// One iteration of a sketched second-order optimizer: sketch the chosen
// curvature matrix, precondition the gradient, grid line search along the
// resulting direction. If no candidate decreases the loss the smallest one
// is taken anyway (and flagged) so the cumulative step clock keeps moving.
class SketchedOptimizer {
public:
    SketchedOptimizer(MlpSpec spec, LossSpec loss, CurvatureMatrix matrix, SketchConfig cfg,
                      LineSearchGrid grid = LineSearchGrid::standard())
        : spec_(std::move(spec)), loss_(loss), matrix_(matrix), cfg_(cfg), grid_(std::move(grid)),
          current_rank_(cfg.rank) {
        cfg_.validate();
        grid_.validate();
        if (matrix_ != CurvatureMatrix::G_J && !loss_.has_curvature())
            throw std::invalid_argument("SketchedOptimizer: hinge loss admits only G_J");
    }

    Index current_rank() const { return current_rank_; }
    const SketchConfig& config() const { return cfg_; }

    SketchedStepResult step(const Vector& theta, const Batch& batch, int iteration) {
        batch.validate(spec_);
        if (batch.size() < 1) throw std::invalid_argument("sketched_step: empty batch");
        const Index p = theta.size();

        const Vector grad = loss_gradient(spec_, theta, batch, loss_);
        SketchConfig iter_cfg = cfg_;
        iter_cfg.seed = mix_seed(cfg_.seed, static_cast<std::uint64_t>(iteration));
        iter_cfg.rank = std::min<Index>(current_rank_, p - cfg_.oversketch);

        const auto matvec = make_curvature_operator(spec_, theta, batch, loss_, matrix_,
                                                    probe_chunk(batch.size()));
        const SketchedEig eig = randomized_eig(matvec, p, iter_cfg);

        SketchedStepResult out;
        out.trace.iteration = iteration;
        out.trace.sketch_rank = eig.effective_rank;

        double suff = std::numeric_limits<double>::quiet_NaN();
        if (auto step_dir = precondition(eig, grad)) {
            out.direction = -*step_dir;
            suff = sufficiency(eig, grad, iter_cfg.rank);
        } else {
            out.direction = -grad;
            out.trace.sketch_fallback = true;
        }
        out.trace.sufficiency = suff;

        const double base_loss = loss_value(loss_, forward(spec_, theta, batch.inputs), batch.targets);
        auto eval = [&](const Vector& candidate) {
            return loss_value(loss_, forward(spec_, candidate, batch.inputs), batch.targets);
        };
        LineSearchResult ls = grid_line_search(grid_, theta, out.direction, eval);
        if (ls.loss > base_loss) {
            ls.step = grid_.candidates.back();
            ls.loss = eval(theta + ls.step * out.direction);
            out.trace.line_search_failed = true;
        }

        out.params = theta + ls.step * out.direction;
        out.trace.step_size = ls.step;
        out.trace.loss = ls.loss;

        if (!eig.empty() && !std::isnan(suff))
            current_rank_ = gated_rank_update(current_rank_, eig.effective_rank, cfg_.oversketch,
                                              suff, rank_cap(p));
        return out;
    }

    void set_probe_chunk(Index chunk) { chunk_ = chunk; }

private:
    // Probe blocks are sized so transient tangent buffers stay within a
    // fixed memory budget; wider blocks keep the per-layer products
    // GEMM-shaped.
    Index probe_chunk(Index batch_size) const {
        if (chunk_ > 0) return chunk_;
        const Index max_width =
            *std::max_element(spec_.layer_widths.begin(), spec_.layer_widths.end());
        const Index per_probe_bytes =
            8 * max_width * batch_size *
            (matrix_ == CurvatureMatrix::H ? 3 * spec_.num_layers() : 3);
        constexpr Index budget = Index(192) << 20;
        return std::clamp<Index>(budget / std::max<Index>(per_probe_bytes, 1), 1, 128);
    }

    Index rank_cap(Index p) const {
        const Index hard = p - cfg_.oversketch;
        if (cfg_.rank_cap > 0) return std::min(cfg_.rank_cap, hard);
        return hard;
    }

    MlpSpec spec_;
    LossSpec loss_;
    CurvatureMatrix matrix_;
    SketchConfig cfg_;
    LineSearchGrid grid_;
    Index current_rank_;
    Index chunk_ = 0;  // 0 = auto
};

struct Schedule {
    enum class Kind { constant, cosine };
    Kind kind = Kind::cosine;
    int total_steps = 1;

    double factor(int t) const {
        if (kind == Kind::constant || total_steps <= 1) return 1.0;
        const double x = std::min<double>(t, total_steps - 1) / (total_steps - 1);
        return 0.5 * (1.0 + std::cos(M_PI * x));  // cosine -> 0
    }
};

struct AdamParams {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    Schedule schedule;
};

struct AdamState {
    Vector m;
    Vector v;
    int t = 0;

    static AdamState init(Index p) { return AdamState{Vector::Zero(p), Vector::Zero(p), 0}; }
};

inline Vector adam_step(AdamState& state, const Vector& theta, const Vector& grad,
                        const AdamParams& hp) {
    state.t += 1;
    state.m = hp.beta1 * state.m + (1.0 - hp.beta1) * grad;
    state.v = hp.beta2 * state.v + (1.0 - hp.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(hp.beta1, state.t);
    const double bc2 = 1.0 - std::pow(hp.beta2, state.t);
    const double lr = hp.lr * hp.schedule.factor(state.t - 1);
    const Vector mhat = state.m / bc1;
    const Vector vhat = state.v / bc2;
    return theta - lr * (mhat.array() / (vhat.array().sqrt() + hp.eps)).matrix();
}

// Quintic Newton-Schulz iteration used by Muon; pre-normalized by the
// Frobenius norm so the polynomial's oscillating band applies.
inline Matrix newton_schulz_orthogonalize(const Matrix& m, int steps) {
    constexpr double a = 3.4445, b = -4.7750, c = 2.0315;
    const double norm = m.norm();
    if (norm == 0.0) return m;
    const bool transpose = m.rows() > m.cols();
    Matrix x = transpose ? Matrix(m.transpose() / norm) : Matrix(m / norm);
    for (int i = 0; i < steps; ++i) {
        const Matrix gram = x * x.transpose();
        const Matrix poly = b * gram + c * gram * gram;
        x = a * x + poly * x;
    }
    return transpose ? Matrix(x.transpose()) : x;
}

struct MuonParams {
    double lr = 1e-3;
    int ns_steps = 5;
    double beta = 0.95;
    Schedule schedule;
    AdamParams fallback;  // first/last layers, biases

    void validate() const {
        if (lr <= 0.0) throw std::invalid_argument("MuonParams: lr must be > 0");
        if (ns_steps < 1) throw std::invalid_argument("MuonParams: ns_steps must be >= 1");
    }
};

struct MuonState {
    Vector momentum;
    AdamState adam;
    int t = 0;

    static MuonState init(Index p) { return MuonState{Vector::Zero(p), AdamState::init(p), 0}; }
};

// Muon: momentum buffers per hidden weight matrix, orthogonalized by
// Newton-Schulz. First/last layer weights and all biases take the Adam rule,
// where orthogonalization is not defined or not useful.
inline Vector muon_step(MuonState& state, const MlpSpec& spec, const Vector& theta,
                        const Vector& grad, const MuonParams& hp) {
    hp.validate();
    const ParamLayout layout = make_layout(spec);
    state.t += 1;
    state.momentum = hp.beta * state.momentum + grad;

    // Adam moments advance on the full vector; only fallback blocks use them.
    AdamParams fallback = hp.fallback;
    fallback.lr = hp.lr;
    fallback.schedule = hp.schedule;
    const Vector adam_theta = adam_step(state.adam, theta, grad, fallback);

    const double lr = hp.lr * hp.schedule.factor(state.t - 1);
    Vector next = adam_theta;
    const Index last_layer = spec.num_layers() - 1;
    for (const auto& block : layout.blocks) {
        if (block.is_bias || block.layer == 0 || block.layer == last_layer) continue;
        const Eigen::Map<const Matrix> buf(state.momentum.data() + block.offset, block.rows,
                                           block.cols);
        const Matrix ortho = newton_schulz_orthogonalize(buf, hp.ns_steps);
        Eigen::Map<Matrix>(next.data() + block.offset, block.rows, block.cols) =
            Eigen::Map<const Matrix>(theta.data() + block.offset, block.rows, block.cols) -
            lr * ortho;
    }
    return next;
}

struct GdParams {
    double lr = 1e-3;
    Schedule schedule;
};

inline Vector gd_step(const Vector& theta, const Vector& grad, const GdParams& hp, int t) {
    return theta - hp.lr * hp.schedule.factor(t) * grad;
}

}  // namespace sgn
