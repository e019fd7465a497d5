#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "sgn/config.hpp"
#include "sgn/csv.hpp"
#include "sgn/diagnostics.hpp"
#include "sgn/dynamics.hpp"
#include "sgn/idx.hpp"
#include "sgn/value_iteration.hpp"

namespace sgn {

// Two-frequency product-of-sines target on the unit square.
inline double regression_target(double x, double y) {
    return std::sin(2.0 * M_PI * x) * std::sin(2.0 * M_PI * y) +
           std::sin(7.0 * M_PI * x) * std::sin(7.0 * M_PI * y);
}

inline Batch regression_grid(Index n_per_axis) {
    Batch batch;
    batch.inputs.resize(n_per_axis * n_per_axis, 2);
    batch.targets.resize(n_per_axis * n_per_axis, 1);
    Index row = 0;
    for (Index i = 0; i < n_per_axis; ++i) {
        const double x = static_cast<double>(i) / (n_per_axis - 1);
        for (Index j = 0; j < n_per_axis; ++j) {
            const double y = static_cast<double>(j) / (n_per_axis - 1);
            batch.inputs(row, 0) = x;
            batch.inputs(row, 1) = y;
            batch.targets(row, 0) = regression_target(x, y);
            ++row;
        }
    }
    return batch;
}

inline double eval_mse(const MlpSpec& spec, const Vector& theta, const Batch& eval_batch) {
    const Matrix out = forward(spec, theta, eval_batch.inputs);
    return (out - eval_batch.targets).squaredNorm() / static_cast<double>(out.size());
}

// ---------------------------------------------------------------------------
// checkpoints

inline void save_checkpoint(const std::string& path, const MlpSpec& spec, const Vector& theta) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << "widths";
    for (Index w : spec.layer_widths) out << " " << w;
    out << "\nactivation " << (spec.activation == Activation::swish ? "swish" : "identity");
    out << "\ninit_scale " << format_double(spec.init_scale);
    out << "\nseed " << spec.seed << "\n";
    for (Index i = 0; i < theta.size(); ++i) out << format_double(theta(i)) << "\n";
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline std::pair<MlpSpec, Vector> load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    MlpSpec spec;
    std::string token;
    in >> token;
    if (token != "widths") throw std::runtime_error("load_checkpoint: bad header");
    std::string line;
    std::getline(in, line);
    std::istringstream widths(line);
    Index w;
    while (widths >> w) spec.layer_widths.push_back(w);
    in >> token >> line;
    spec.activation = line == "swish" ? Activation::swish : Activation::identity;
    in >> token >> spec.init_scale;
    in >> token >> spec.seed;
    spec.validate();
    Vector theta(param_count(spec));
    for (Index i = 0; i < theta.size(); ++i)
        if (!(in >> theta(i))) throw std::runtime_error("load_checkpoint: truncated parameters");
    return {spec, theta};
}

// ---------------------------------------------------------------------------
// per-run artifacts

struct RunSummary {
    std::string run_dir;
    std::string optimizer;
    std::uint64_t seed = 0;
    double final_train_loss = 0.0;
    double final_eval = 0.0;   // eval MSE / accuracy / value RMSE depending on task
    double best_eval = 0.0;
    double extra = 0.0;        // task-specific (policy agreement fraction, peak epoch)
    std::vector<TrainTrace> traces;
};

namespace detail {

inline void write_kv_summary(const std::string& path,
                             const std::vector<std::pair<std::string, std::string>>& kv) {
    CsvTable table;
    table.header = {"key", "value"};
    for (const auto& [k, v] : kv) table.rows.push_back({k, v});
    emit_csv(table, path);
}

inline void write_alignment_vs_loss(const std::string& path,
                                    const std::vector<TrainTrace>& traces) {
    CsvTable table;
    table.header = {"iteration", "loss", "alignment_mismatch", "alignment_funcgrad"};
    for (const auto& t : traces) {
        if (std::isnan(t.alignment_mismatch) && std::isnan(t.alignment_funcgrad)) continue;
        table.rows.push_back({std::to_string(t.iteration), format_double(t.loss),
                              std::isnan(t.alignment_mismatch) ? "" : format_double(t.alignment_mismatch),
                              std::isnan(t.alignment_funcgrad) ? "" : format_double(t.alignment_funcgrad)});
    }
    emit_csv(table, path);
}

// Norm-level mismatch-flow comparison for the serialized report; the
// componentwise prediction is evaluated from the stored initial mismatch.
inline void write_ode_compare(const std::string& path, const std::vector<TrainTrace>& traces,
                              const LossSpec& loss, const MismatchFlow flow, const Vector& r0) {
    CsvTable table;
    table.header = {"iteration", "tau", "empirical_norm", "predicted_norm", "relative_deviation"};
    for (const auto& t : traces) {
        if (std::isnan(t.residual_norm)) continue;
        const double pred = closed_form_mismatch(loss, flow, r0, t.cumulative_tau).norm();
        const double dev = pred > 0.0 ? std::abs(t.residual_norm - pred) / pred : t.residual_norm;
        table.rows.push_back({std::to_string(t.iteration), format_double(t.cumulative_tau),
                              format_double(t.residual_norm), format_double(pred),
                              format_double(dev)});
    }
    emit_csv(table, path);
}

inline std::uint64_t run_seed(std::uint64_t seed, const char* salt) {
    std::uint64_t h = seed;
    for (const char* c = salt; *c; ++c) h = mix_seed(h, static_cast<std::uint64_t>(*c));
    return h;
}

// Alignment of the "negative update" pushforward with the mismatch and the
// function-space gradient, measured at the point the step starts from.
inline void fill_alignment(TrainTrace& trace, const MlpSpec& spec, const Vector& theta,
                           const Batch& batch, const LossSpec& loss, const Vector& neg_update) {
    const ForwardPass fp = run_forward(spec, theta, batch.inputs);
    const Matrix outputs = fp.acts.back().transpose();
    const Vector push = jvp(spec, theta, fp, neg_update);
    const Vector r = mismatch(loss, outputs, batch.targets);
    const Vector g = func_grad(loss, outputs, batch.targets);
    if (push.norm() > 0.0 && r.norm() > 0.0) trace.alignment_mismatch = cosine(push, r);
    if (push.norm() > 0.0 && g.norm() > 0.0) trace.alignment_funcgrad = cosine(push, g);
}

}  // namespace detail

inline CurvatureMatrix curvature_of(OptimizerChoice c) {
    switch (c) {
        case OptimizerChoice::g: return CurvatureMatrix::G;
        case OptimizerChoice::g_j: return CurvatureMatrix::G_J;
        case OptimizerChoice::h: return CurvatureMatrix::H;
        default: throw std::invalid_argument("curvature_of: not a sketched optimizer");
    }
}

inline bool is_sketched(OptimizerChoice c) {
    return c == OptimizerChoice::g || c == OptimizerChoice::g_j || c == OptimizerChoice::h;
}

// ---------------------------------------------------------------------------
// regression case study

inline RunSummary run_regression_single(const ExperimentConfig& cfg, OptimizerChoice choice,
                                        std::uint64_t seed, const std::string& run_dir,
                                        int align_stride_baseline = 100,
                                        int eval_stride = 100) {
    namespace fs = std::filesystem;
    fs::create_directories(run_dir);
    const MlpSpec spec = cfg.model_spec(seed);
    Vector theta = init_params(spec);
    const Batch train = regression_grid(cfg.train_grid);
    const Batch eval = regression_grid(cfg.eval_grid);
    const LossSpec loss = cfg.loss;

    RunSummary summary;
    summary.run_dir = run_dir;
    summary.optimizer = optimizer_name(choice);
    summary.seed = seed;

    const Vector r0 = mismatch(loss, forward(spec, theta, train.inputs), train.targets);

    CsvTable eval_curve;
    eval_curve.header = {"iteration", "eval_mse"};
    double best_eval = std::numeric_limits<double>::infinity();
    auto record_eval = [&](int iter) {
        const double mse = eval_mse(spec, theta, eval);
        best_eval = std::min(best_eval, mse);
        eval_curve.rows.push_back({std::to_string(iter), format_double(mse)});
        return mse;
    };

    // post-step mismatch norm, indexed by the post-step cumulative tau
    auto post_step_residual = [&](TrainTrace& trace) {
        const Matrix outputs = forward(spec, theta, train.inputs);
        trace.residual_norm = mismatch(loss, outputs, train.targets).norm();
    };

    if (is_sketched(choice)) {
        SketchConfig sk = cfg.sketch;
        sk.seed = detail::run_seed(seed, "sketch");
        SketchedOptimizer opt(spec, loss, curvature_of(choice), sk, cfg.grid());
        for (int it = 0; it < cfg.steps; ++it) {
            auto res = opt.step(theta, train, it);
            detail::fill_alignment(res.trace, spec, theta, train, loss,
                                   Vector(-res.direction));
            theta = res.params;
            res.trace.cumulative_tau =
                (summary.traces.empty() ? 0.0 : summary.traces.back().cumulative_tau) +
                res.trace.step_size;
            post_step_residual(res.trace);
            summary.traces.push_back(res.trace);
            if (it % eval_stride == 0 || it + 1 == cfg.steps) record_eval(it);
        }
    } else {
        AdamState adam_state = AdamState::init(theta.size());
        MuonState muon_state = MuonState::init(theta.size());
        const int steps = choice == OptimizerChoice::adam   ? cfg.adam_steps
                          : choice == OptimizerChoice::muon ? cfg.muon_steps
                                                            : cfg.gd_steps;
        for (int it = 0; it < steps; ++it) {
            const Vector grad = loss_gradient(spec, theta, train, loss);
            Vector next;
            if (choice == OptimizerChoice::adam) {
                next = adam_step(adam_state, theta, grad, cfg.adam);
            } else if (choice == OptimizerChoice::muon) {
                next = muon_step(muon_state, spec, theta, grad, cfg.muon);
            } else {
                next = gd_step(theta, grad, cfg.gd, it);
            }
            TrainTrace trace;
            trace.iteration = it;
            if (it % align_stride_baseline == 0 || it + 1 == steps)
                detail::fill_alignment(trace, spec, theta, train, loss, Vector(theta - next));
            theta = next;
            const Matrix outputs = forward(spec, theta, train.inputs);
            trace.loss = loss_value(loss, outputs, train.targets);
            trace.residual_norm = mismatch(loss, outputs, train.targets).norm();
            summary.traces.push_back(trace);
            if (it % eval_stride == 0 || it + 1 == steps) record_eval(it);
        }
    }

    summary.final_train_loss = summary.traces.empty() ? 0.0 : summary.traces.back().loss;
    summary.final_eval = eval_mse(spec, theta, eval);
    summary.best_eval = std::min(best_eval, summary.final_eval);

    emit_csv(traces_to_csv(summary.traces), run_dir + "/traces.csv");
    detail::write_alignment_vs_loss(run_dir + "/alignment.csv", summary.traces);
    emit_csv(eval_curve, run_dir + "/eval.csv");
    save_checkpoint(run_dir + "/checkpoint.txt", spec, theta);
    if (is_sketched(choice) && loss.kind != LossKind::cross_entropy) {
        const MismatchFlow flow =
            choice == OptimizerChoice::g ? MismatchFlow::ggn : MismatchFlow::g_j;
        if (!(choice == OptimizerChoice::h))
            detail::write_ode_compare(run_dir + "/ode_compare.csv", summary.traces, loss, flow,
                                      r0);
    }
    detail::write_kv_summary(
        run_dir + "/summary.csv",
        {{"task", "regression"},
         {"optimizer", summary.optimizer},
         {"seed", std::to_string(seed)},
         {"loss", loss.name()},
         {"steps", std::to_string(static_cast<long>(summary.traces.size()))},
         {"final_train_loss", format_double(summary.final_train_loss)},
         {"final_eval_mse", format_double(summary.final_eval)},
         {"best_eval_mse", format_double(summary.best_eval)}});
    return summary;
}

// ---------------------------------------------------------------------------
// job fan-out: seeds and optimizers are independent single-writer jobs

inline int thread_budget() {
    if (const char* env = std::getenv("SGN_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

inline void run_jobs(const std::vector<std::function<void()>>& jobs) {
    const int workers = std::min<int>(thread_budget(), static_cast<int>(jobs.size()));
    if (workers <= 1) {
        for (const auto& job : jobs) job();
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1))
                    jobs[i]();
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::string run_directory(const ExperimentConfig& cfg, const std::string& task,
                                 OptimizerChoice choice, std::uint64_t seed) {
    return cfg.out_dir + "/" + task + "_" + optimizer_name(choice) + "_seed" +
           std::to_string(seed);
}

inline std::vector<RunSummary> run_regression(const ExperimentConfig& cfg) {
    std::vector<RunSummary> results(cfg.optimizers.size() * cfg.seeds.size());
    std::vector<std::function<void()>> jobs;
    size_t idx = 0;
    for (OptimizerChoice choice : cfg.optimizers) {
        for (std::uint64_t seed : cfg.seeds) {
            const size_t slot = idx++;
            jobs.push_back([&, choice, seed, slot] {
                results[slot] = run_regression_single(
                    cfg, choice, seed, run_directory(cfg, "regression", choice, seed));
            });
        }
    }
    run_jobs(jobs);
    return results;
}

// ---------------------------------------------------------------------------
// MNIST case study

struct MnistRunResult {
    RunSummary summary;
    std::vector<double> epoch_accuracy;
    double best_accuracy = 0.0;
    double final_accuracy = 0.0;
    int best_epoch = -1;
};

inline double mnist_accuracy(const MlpSpec& spec, const Vector& theta, const Matrix& images,
                             const std::vector<int>& labels) {
    Index correct = 0;
    const Index chunk = 2048;
    for (Index start = 0; start < images.rows(); start += chunk) {
        const Index n = std::min(chunk, images.rows() - start);
        const Matrix logits = forward(spec, theta, images.middleRows(start, n));
        for (Index i = 0; i < n; ++i) {
            Index argmax = 0;
            logits.row(i).maxCoeff(&argmax);
            if (argmax == labels[start + i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(images.rows());
}

// Seeded Fisher-Yates so batch order is reproducible across standard
// libraries.
inline std::vector<Index> shuffled_indices(Index n, Rng& rng) {
    std::vector<Index> idx(n);
    for (Index i = 0; i < n; ++i) idx[i] = i;
    for (Index i = n - 1; i > 0; --i) {
        const Index j = static_cast<Index>(rng.uniform() * (i + 1));
        std::swap(idx[i], idx[j]);
    }
    return idx;
}

inline MnistRunResult run_mnist_single(const ExperimentConfig& cfg, OptimizerChoice choice,
                                       std::uint64_t seed, const std::string& run_dir,
                                       const MnistDataset& train, const MnistDataset& test) {
    namespace fs = std::filesystem;
    fs::create_directories(run_dir);
    const MlpSpec spec = cfg.model_spec(seed);
    Vector theta = init_params(spec);
    const LossSpec loss = LossSpec::cross_entropy();
    const Matrix onehot = one_hot(train.labels, 10);

    MnistRunResult result;
    result.summary.run_dir = run_dir;
    result.summary.optimizer = optimizer_name(choice);
    result.summary.seed = seed;

    const int epochs = is_sketched(choice) ? cfg.mnist_epochs : cfg.mnist_baseline_epochs;
    const Index n = train.size();
    const Index bs = cfg.mnist_batch_size;
    const Index steps_per_epoch = (n + bs - 1) / bs;

    std::unique_ptr<SketchedOptimizer> sketched;
    if (is_sketched(choice)) {
        SketchConfig sk = cfg.sketch;
        sk.seed = detail::run_seed(seed, "sketch");
        sketched = std::make_unique<SketchedOptimizer>(spec, loss, curvature_of(choice), sk,
                                                       cfg.grid());
        sketched->set_probe_chunk(8);
    }
    AdamState adam_state = AdamState::init(theta.size());
    MuonState muon_state = MuonState::init(theta.size());
    AdamParams adam_hp = cfg.adam;
    adam_hp.schedule.total_steps = static_cast<int>(steps_per_epoch) * epochs;
    MuonParams muon_hp = cfg.muon;
    muon_hp.schedule.total_steps = static_cast<int>(steps_per_epoch) * epochs;

    CsvTable acc_curve;
    acc_curve.header = {"epoch", "iteration", "train_loss", "test_accuracy"};
    Rng shuffle_rng(detail::run_seed(seed, "shuffle"));
    int iter = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const std::vector<Index> order = shuffled_indices(n, shuffle_rng);
        for (Index start = 0; start < n; start += bs) {
            const Index count = std::min(bs, n - start);
            Batch batch;
            batch.inputs.resize(count, train.images.cols());
            batch.targets.resize(count, 10);
            for (Index i = 0; i < count; ++i) {
                batch.inputs.row(i) = train.images.row(order[start + i]);
                batch.targets.row(i) = onehot.row(order[start + i]);
            }
            TrainTrace trace;
            if (sketched) {
                auto res = sketched->step(theta, batch, iter);
                theta = res.params;
                trace = res.trace;
            } else {
                const Vector grad = loss_gradient(spec, theta, batch, loss);
                if (choice == OptimizerChoice::adam)
                    theta = adam_step(adam_state, theta, grad, adam_hp);
                else if (choice == OptimizerChoice::muon)
                    theta = muon_step(muon_state, spec, theta, grad, muon_hp);
                else
                    theta = gd_step(theta, grad, cfg.gd, iter);
                trace.loss =
                    loss_value(loss, forward(spec, theta, batch.inputs), batch.targets);
            }
            trace.iteration = iter;
            trace.cumulative_tau =
                (result.summary.traces.empty() ? 0.0
                                               : result.summary.traces.back().cumulative_tau) +
                trace.step_size;
            result.summary.traces.push_back(trace);
            ++iter;
        }
        const double acc = mnist_accuracy(spec, theta, test.images, test.labels);
        result.epoch_accuracy.push_back(acc);
        if (acc > result.best_accuracy) {
            result.best_accuracy = acc;
            result.best_epoch = epoch;
        }
        acc_curve.rows.push_back({std::to_string(epoch), std::to_string(iter - 1),
                                  format_double(result.summary.traces.back().loss),
                                  format_double(acc)});
    }
    result.final_accuracy = result.epoch_accuracy.back();
    result.summary.final_train_loss = result.summary.traces.back().loss;
    result.summary.final_eval = result.final_accuracy;
    result.summary.best_eval = result.best_accuracy;

    emit_csv(traces_to_csv(result.summary.traces), run_dir + "/traces.csv");
    emit_csv(acc_curve, run_dir + "/accuracy.csv");
    save_checkpoint(run_dir + "/checkpoint.txt", spec, theta);
    detail::write_kv_summary(
        run_dir + "/summary.csv",
        {{"task", "mnist"},
         {"optimizer", result.summary.optimizer},
         {"seed", std::to_string(seed)},
         {"loss", loss.name()},
         {"epochs", std::to_string(epochs)},
         {"final_train_loss", format_double(result.summary.final_train_loss)},
         {"best_accuracy", format_double(result.best_accuracy)},
         {"best_epoch", std::to_string(result.best_epoch)},
         {"final_accuracy", format_double(result.final_accuracy)}});
    return result;
}

inline std::vector<MnistRunResult> run_mnist(const ExperimentConfig& cfg) {
    MnistDataset train = load_mnist_idx(cfg.mnist_train_images, cfg.mnist_train_labels);
    const MnistDataset test = load_mnist_idx(cfg.mnist_test_images, cfg.mnist_test_labels);
    if (cfg.mnist_subset > 0 && cfg.mnist_subset < train.size()) {
        Rng rng(detail::run_seed(cfg.seeds.front(), "subset"));
        const std::vector<Index> order = shuffled_indices(train.size(), rng);
        MnistDataset subset;
        subset.images.resize(cfg.mnist_subset, train.images.cols());
        subset.labels.resize(cfg.mnist_subset);
        for (Index i = 0; i < cfg.mnist_subset; ++i) {
            subset.images.row(i) = train.images.row(order[i]);
            subset.labels[i] = train.labels[order[i]];
        }
        train = std::move(subset);
    }

    std::vector<MnistRunResult> results(cfg.optimizers.size() * cfg.seeds.size());
    std::vector<std::function<void()>> jobs;
    size_t idx = 0;
    for (OptimizerChoice choice : cfg.optimizers) {
        for (std::uint64_t seed : cfg.seeds) {
            const size_t slot = idx++;
            jobs.push_back([&, choice, seed, slot] {
                results[slot] = run_mnist_single(
                    cfg, choice, seed, run_directory(cfg, "mnist", choice, seed), train, test);
            });
        }
    }
    run_jobs(jobs);
    return results;
}

// ---------------------------------------------------------------------------
// double integrator case study

struct ViRunResult {
    RunSummary summary;
    double value_rmse = 0.0;
    double agreement_fraction = 0.0;
};

inline DoubleIntegratorEnv env_from_config(const ExperimentConfig& cfg) {
    DoubleIntegratorEnv env;
    env.dt = cfg.env_dt;
    env.goal_eps = cfg.env_goal_eps;
    env.pos_bound = cfg.env_pos_bound;
    env.vel_bound = cfg.env_vel_bound;
    return env;
}

inline void write_value_grid_csv(const std::string& path, const MlpSpec& spec,
                                 const Vector& theta, const ValueGrid& oracle,
                                 const DoubleIntegratorEnv& env, const Matrix& eval_states,
                                 const PolicyAgreement& agreement) {
    const Matrix learned = forward(spec, theta, eval_states);
    CsvTable table;
    table.header = {"x", "xdot", "learned_value", "oracle_value", "policy_agreement"};
    for (Index i = 0; i < eval_states.rows(); ++i) {
        table.rows.push_back({format_double(eval_states(i, 0)), format_double(eval_states(i, 1)),
                              format_double(learned(i, 0)),
                              format_double(oracle.interpolate(eval_states.row(i).transpose())),
                              format_double(agreement.per_state(i))});
    }
    emit_csv(table, path);
}

inline ViRunResult run_double_integrator_single(const ExperimentConfig& cfg,
                                                OptimizerChoice choice, std::uint64_t seed,
                                                const std::string& run_dir,
                                                const ValueGrid& oracle) {
    namespace fs = std::filesystem;
    fs::create_directories(run_dir);
    const DoubleIntegratorEnv env = env_from_config(cfg);
    const MlpSpec spec = cfg.model_spec(seed);

    FittedViOptimizer optimizer = [&]() -> FittedViOptimizer {
        if (is_sketched(choice)) {
            SketchConfig sk = cfg.sketch;
            sk.seed = detail::run_seed(seed, "sketch");
            return SketchedOptimizer(spec, LossSpec::squared(), curvature_of(choice), sk,
                                     cfg.grid());
        }
        if (choice == OptimizerChoice::adam) {
            AdamParams hp = cfg.adam;
            hp.schedule.total_steps = cfg.vi_baseline_steps;
            return std::make_pair(hp, AdamState::init(param_count(spec)));
        }
        if (choice == OptimizerChoice::muon) {
            MuonParams hp = cfg.muon;
            hp.schedule.total_steps = cfg.vi_baseline_steps;
            return std::make_pair(hp, MuonState::init(param_count(spec)));
        }
        GdParams hp = cfg.gd;
        hp.schedule.total_steps = cfg.vi_baseline_steps;
        return hp;
    }();

    const int steps = is_sketched(choice) ? cfg.steps : cfg.vi_baseline_steps;
    const FittedViResult fit = fitted_vi_run(env, spec, std::move(optimizer), steps,
                                             cfg.vi_train_samples, detail::run_seed(seed, "vi"));

    const Matrix eval_states = uniform_state_grid(env, cfg.vi_eval_grid);
    const PolicyAgreement agreement = policy_agreement(spec, fit.theta, env, eval_states, oracle);

    ViRunResult result;
    result.summary.run_dir = run_dir;
    result.summary.optimizer = optimizer_name(choice);
    result.summary.seed = seed;
    result.summary.traces = fit.traces;
    result.summary.final_train_loss = fit.traces.empty() ? 0.0 : fit.traces.back().loss;
    result.value_rmse = value_rmse(spec, fit.theta, oracle, eval_states);
    result.agreement_fraction = agreement.positive_fraction;
    result.summary.final_eval = result.value_rmse;
    result.summary.extra = result.agreement_fraction;

    emit_csv(traces_to_csv(fit.traces), run_dir + "/traces.csv");
    write_value_grid_csv(run_dir + "/value_grid.csv", spec, fit.theta, oracle, env, eval_states,
                         agreement);
    save_checkpoint(run_dir + "/checkpoint.txt", spec, fit.theta);
    detail::write_kv_summary(run_dir + "/summary.csv",
                             {{"task", "double_integrator"},
                              {"optimizer", result.summary.optimizer},
                              {"seed", std::to_string(seed)},
                              {"steps", std::to_string(steps)},
                              {"final_train_loss", format_double(result.summary.final_train_loss)},
                              {"value_rmse", format_double(result.value_rmse)},
                              {"policy_agreement_fraction",
                               format_double(result.agreement_fraction)}});
    return result;
}

inline std::vector<ViRunResult> run_double_integrator(const ExperimentConfig& cfg) {
    const DoubleIntegratorEnv env = env_from_config(cfg);
    const ValueGrid oracle = dp_oracle(env, cfg.vi_oracle_grid, cfg.vi_oracle_grid);
    std::vector<ViRunResult> results(cfg.optimizers.size() * cfg.seeds.size());
    std::vector<std::function<void()>> jobs;
    size_t idx = 0;
    for (OptimizerChoice choice : cfg.optimizers) {
        for (std::uint64_t seed : cfg.seeds) {
            const size_t slot = idx++;
            jobs.push_back([&, choice, seed, slot] {
                results[slot] = run_double_integrator_single(
                    cfg, choice, seed, run_directory(cfg, "double_integrator", choice, seed),
                    oracle);
            });
        }
    }
    run_jobs(jobs);
    return results;
}

// ---------------------------------------------------------------------------
// oracle / snapshot / diagnose entry points

inline void run_oracle(const ExperimentConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const DoubleIntegratorEnv env = env_from_config(cfg);
    const ValueGrid oracle = dp_oracle(env, cfg.vi_oracle_grid, cfg.vi_oracle_grid);
    CsvTable table;
    table.header = {"x", "xdot", "value", "greedy_action"};
    for (Index i = 0; i < oracle.nx; ++i)
        for (Index j = 0; j < oracle.nv; ++j) {
            const Eigen::Vector2d s(oracle.x_at(i), oracle.v_at(j));
            table.rows.push_back({format_double(s(0)), format_double(s(1)),
                                  format_double(oracle.values(i, j)),
                                  format_double(oracle_greedy_action(oracle, env, s))});
        }
    emit_csv(table, out_dir + "/oracle.csv");
}

inline void write_alignment_table_csv(const AlignmentTable& table, const std::string& path) {
    CsvTable csv;
    csv.header = {"label_a", "label_b", "cosine", "loss_level", "source"};
    for (size_t i = 0; i < table.labels.size(); ++i)
        for (size_t j = 0; j <= i; ++j)
            csv.rows.push_back({table.labels[i], table.labels[j],
                                format_double(table.cosines(i, j)),
                                format_double(table.loss_level), table.source});
    emit_csv(csv, path);
}

inline AlignmentTable run_snapshot(const ExperimentConfig& cfg, const std::string& checkpoint,
                                   const std::string& out_path) {
    const auto [spec, theta] = load_checkpoint(checkpoint);
    Batch batch;
    if (cfg.task == Task::regression) {
        batch = regression_grid(cfg.train_grid);
    } else if (cfg.task == Task::double_integrator) {
        const DoubleIntegratorEnv env = env_from_config(cfg);
        batch.inputs = uniform_state_grid(env, 40);
        batch.targets = value_targets(spec, theta, batch.inputs, env);
    } else {
        throw std::invalid_argument("run_snapshot: provide batch data via the mnist runner");
    }
    SketchConfig sk = cfg.sketch;
    sk.seed = detail::run_seed(cfg.seeds.empty() ? 0 : cfg.seeds.front(), "snapshot");
    const AlignmentTable table = snapshot(spec, theta, batch, cfg.loss, sk, {}, checkpoint);
    write_alignment_table_csv(table, out_path);
    return table;
}

struct DiagnoseEntry {
    std::string run_dir;
    std::string optimizer;
    std::string loss;
    double max_deviation = std::numeric_limits<double>::quiet_NaN();
    double final_loss = 0.0;
    double total_tau = 0.0;
};

// Post-hoc sweep over run directories: reads traces and, where the run's
// (loss, optimizer) pair has closed-form mismatch dynamics, reports the worst
// norm-level deviation.
inline std::vector<DiagnoseEntry> run_diagnose(const std::string& traces_dir,
                                               const std::string& out_path) {
    namespace fs = std::filesystem;
    std::vector<DiagnoseEntry> entries;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(traces_dir))
        if (entry.is_directory() && fs::exists(entry.path() / "traces.csv")) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        DiagnoseEntry diag;
        diag.run_dir = dir.string();
        const CsvTable summary = fs::exists(dir / "summary.csv")
                                     ? read_csv((dir / "summary.csv").string())
                                     : CsvTable{};
        for (const auto& row : summary.rows) {
            if (row[0] == "optimizer") diag.optimizer = row[1];
            if (row[0] == "loss") diag.loss = row[1];
        }
        const auto traces = traces_from_csv(read_csv((dir / "traces.csv").string()));
        if (!traces.empty()) {
            diag.final_loss = traces.back().loss;
            diag.total_tau = traces.back().cumulative_tau;
        }
        if (fs::exists(dir / "ode_compare.csv")) {
            const CsvTable ode = read_csv((dir / "ode_compare.csv").string());
            const Index dev_col = ode.column("relative_deviation");
            double worst = 0.0;
            for (const auto& row : ode.rows) worst = std::max(worst, std::stod(row[dev_col]));
            diag.max_deviation = worst;
        }
        entries.push_back(diag);
    }
    CsvTable out;
    out.header = {"run_dir", "optimizer", "loss", "final_loss", "total_tau", "max_ode_deviation"};
    for (const auto& e : entries)
        out.rows.push_back({e.run_dir, e.optimizer, e.loss, format_double(e.final_loss),
                            format_double(e.total_tau),
                            std::isnan(e.max_deviation) ? "" : format_double(e.max_deviation)});
    emit_csv(out, out_path);
    return entries;
}

}  // namespace sgn
