// Acceptance suite: one pass/fail line per criterion.
//
// Criteria 1-8 are the always-on property suite (CPU, minutes). Criteria
// 9-12 are desk-scale reproductions of the case studies; they run reduced
// configurations by default and the the full-scale study configurations when
// SGN_FULL_ACCEPT=1. The MNIST data-dependent checks run when the IDX files
// are present (SGN_MNIST_DIR or ./data/mnist) and are reported as skipped
// otherwise.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sgn/experiments.hpp"

using namespace sgn;
namespace fs = std::filesystem;

namespace {

enum class Status { pass, fail, skip };

struct Criterion {
    int id;
    std::string name;
    Status status = Status::pass;
    std::string detail;
};

std::vector<Criterion> g_results;

void report(int id, const std::string& name, Status status, const std::string& detail) {
    g_results.push_back({id, name, status, detail});
    const char* tag = status == Status::pass ? "PASS" : status == Status::fail ? "FAIL" : "SKIP";
    std::printf("[%2d] %-4s %-38s %s\n", id, tag, name.c_str(), detail.c_str());
    std::fflush(stdout);
}

bool full_mode() {
    const char* env = std::getenv("SGN_FULL_ACCEPT");
    return env != nullptr && std::string(env) == "1";
}

std::string mnist_dir() {
    if (const char* env = std::getenv("SGN_MNIST_DIR")) return env;
    if (fs::exists("data/mnist/train-images-idx3-ubyte")) return "data/mnist";
    if (fs::exists("../data/mnist/train-images-idx3-ubyte")) return "../data/mnist";
    return "";
}

Matrix grid_inputs(Index n) {
    Matrix x(n * n, 2);
    Index r = 0;
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            x(r, 0) = static_cast<double>(i) / (n - 1);
            x(r, 1) = static_cast<double>(j) / (n - 1);
            ++r;
        }
    return x;
}

char buf[256];

// --------------------------------------------------------------------------
// 1. Pseudoinverse identity (M^T M)^+ M^T = M^+

void criterion_1() {
    Rng rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const Index rows = 2 + static_cast<Index>(rng.uniform() * 18);
        const Index cols = 2 + static_cast<Index>(rng.uniform() * 18);
        Matrix m;
        if (trial % 3 == 0) {
            const Index r = 1 + static_cast<Index>(rng.uniform() * (std::min(rows, cols) - 1));
            m = rng.gaussian_matrix(rows, r) * rng.gaussian_matrix(r, cols);
        } else {
            m = rng.gaussian_matrix(rows, cols);
        }
        const Matrix lhs = pinv(Matrix(m.transpose() * m)) * m.transpose();
        worst = std::max(worst, (lhs - pinv(m)).cwiseAbs().maxCoeff());
    }
    std::snprintf(buf, sizeof(buf), "max entrywise error %.2e (tol 1e-8) over 200 matrices", worst);
    report(1, "pseudoinverse identity", worst <= 1e-8 ? Status::pass : Status::fail, buf);
}

// --------------------------------------------------------------------------
// 2. Projection characterization of the function-space directions

void criterion_2() {
    double worst_gj = 1.0, worst_g = 1.0;
    for (std::uint64_t seed : {11, 12, 13}) {
        const Index d = seed % 2 == 0 ? 6 : 8;
        const Index k = seed % 2 == 0 ? 3 : 2;
        const MlpSpec spec = MlpSpec::make(2, 32, 2, k, Activation::swish, 1.5, seed);
        const Vector theta = init_params(spec);
        Rng rng(seed + 1);
        Batch batch;
        batch.inputs = rng.gaussian_matrix(d, 2);
        batch.targets = rng.gaussian_matrix(d, k);
        const LossSpec loss = LossSpec::q_power(4);
        const Index dk = d * k;

        const ForwardPass fp = run_forward(spec, theta, batch.inputs);
        const Matrix outputs = fp.acts.back().transpose();
        const Vector gf = func_grad(loss, outputs, batch.targets);
        const Vector grad = vjp(spec, theta, fp, gf);

        SketchConfig cfg;
        cfg.rank = dk;
        cfg.oversketch = 8;
        cfg.mode = SketchMode::two_pass;
        cfg.tolerance = 1e-13;
        cfg.seed = seed + 2;

        // G_J function-space direction vs the negative function-space gradient
        const auto op_gj = make_curvature_operator(spec, theta, batch, loss, CurvatureMatrix::G_J);
        const Vector dir_gj = -*precondition(randomized_eig(op_gj, theta.size(), cfg), grad);
        worst_gj = std::min(worst_gj, cosine(jvp(spec, theta, fp, dir_gj), Vector(-gf)));

        // G function-space direction vs the H_l-weighted projection of the
        // function-space Newton direction, both computed densely
        const auto op_g = make_curvature_operator(spec, theta, batch, loss, CurvatureMatrix::G);
        const Vector dir_g = -*precondition(randomized_eig(op_g, theta.size(), cfg), grad);
        const Matrix j = jacobian(spec, theta, batch.inputs);
        Matrix w = Matrix::Zero(dk, dk);
        Vector newton(dk);
        for (Index i = 0; i < d; ++i) {
            const Matrix h = func_hess_block(loss, outputs.row(i).transpose(),
                                             batch.targets.row(i).transpose());
            w.block(i * k, i * k, k, k) = h;
            newton.segment(i * k, k) =
                -h.ldlt().solve(func_grad_row(loss, outputs.row(i).transpose(),
                                              batch.targets.row(i).transpose()));
        }
        const Vector expected = weighted_projector(j, w) * newton;
        worst_g = std::min(worst_g, cosine(jvp(spec, theta, fp, dir_g), expected));
    }
    std::snprintf(buf, sizeof(buf), "min cos(G_J, -grad_f) %.5f, min cos(G, weighted proj) %.5f (tol 0.999)",
                  worst_gj, worst_g);
    report(2, "projection characterization", worst_gj >= 0.999 && worst_g >= 0.999 ? Status::pass : Status::fail,
           buf);
}

// --------------------------------------------------------------------------
// 3. q=2: sketched G and G_J coincide under a shared sketch seed

void criterion_3() {
    double worst = 0.0;
    for (std::uint64_t seed : {21, 22}) {
        const MlpSpec spec = MlpSpec::make(2, 12, 2, 1, Activation::swish, 1.5, seed);
        Rng rng(seed);
        Batch batch;
        batch.inputs = rng.gaussian_matrix(10, 2);
        batch.targets = rng.gaussian_matrix(10, 1);
        SketchConfig cfg;
        cfg.rank = 14;
        cfg.oversketch = 4;
        cfg.mode = SketchMode::two_pass;
        cfg.tolerance = 1e-12;
        cfg.seed = seed + 5;
        SketchedOptimizer opt_g(spec, LossSpec::squared(), CurvatureMatrix::G, cfg);
        SketchedOptimizer opt_gj(spec, LossSpec::squared(), CurvatureMatrix::G_J, cfg);
        Vector a = init_params(spec), b = a;
        for (int it = 0; it < 4; ++it) {
            a = opt_g.step(a, batch, it).params;
            b = opt_gj.step(b, batch, it).params;
            worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
        }
    }
    std::snprintf(buf, sizeof(buf), "max parameter gap %.2e (tol 1e-8) over 2 nets x 4 steps", worst);
    report(3, "q=2 G / G_J coincidence", worst <= 1e-8 ? Status::pass : Status::fail, buf);
}

// --------------------------------------------------------------------------
// 4. Linear model: sketched H step equals sketched G step

void criterion_4() {
    double worst = 0.0;
    for (std::uint64_t seed : {31, 32}) {
        MlpSpec spec;
        spec.layer_widths = {4, 2};
        spec.activation = Activation::identity;
        spec.init_scale = 1.0;
        spec.seed = seed;
        Rng rng(seed);
        Batch batch;
        batch.inputs = rng.gaussian_matrix(6, 4);
        batch.targets = rng.gaussian_matrix(6, 2);
        SketchConfig cfg;
        cfg.rank = 8;
        cfg.oversketch = 2;
        cfg.mode = SketchMode::two_pass;
        cfg.tolerance = 1e-12;
        cfg.seed = seed + 5;
        SketchedOptimizer opt_h(spec, LossSpec::squared(), CurvatureMatrix::H, cfg);
        SketchedOptimizer opt_g(spec, LossSpec::squared(), CurvatureMatrix::G, cfg);
        const Vector theta = init_params(spec);
        const Vector a = opt_h.step(theta, batch, 0).params;
        const Vector b = opt_g.step(theta, batch, 0).params;
        worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
    std::snprintf(buf, sizeof(buf), "max parameter gap %.2e (tol 1e-6)", worst);
    report(4, "linear-model Newton equivalence", worst <= 1e-6 ? Status::pass : Status::fail, buf);
}

// --------------------------------------------------------------------------
// 5. Mismatch flow realization under G with line search

void criterion_5() {
    // (a) squared loss tracks e^{-tau} ||r(0)||
    const MlpSpec spec = MlpSpec::make(2, 32, 2, 1, Activation::swish, 1.8, 1);
    Batch batch;
    batch.inputs = grid_inputs(5);
    batch.targets.resize(25, 1);
    for (Index i = 0; i < 25; ++i)
        batch.targets(i, 0) =
            std::sin(2 * M_PI * batch.inputs(i, 0)) * std::sin(2 * M_PI * batch.inputs(i, 1));

    double worst_dev = 0.0;
    {
        Vector theta = init_params(spec);
        const LossSpec loss = LossSpec::squared();
        SketchConfig cfg;
        cfg.rank = 25;
        cfg.oversketch = 6;
        cfg.mode = SketchMode::two_pass;
        cfg.tolerance = 1e-7;
        cfg.seed = 3;
        SketchedOptimizer opt(spec, loss, CurvatureMatrix::G, cfg, LineSearchGrid::scaled(0.02));
        const double r0 =
            mismatch(loss, forward(spec, theta, batch.inputs), batch.targets).norm();
        double tau = 0.0;
        for (int it = 0; it < 400 && tau < 3.0; ++it) {
            auto res = opt.step(theta, batch, it);
            theta = res.params;
            tau += res.trace.step_size;
            const double rn =
                mismatch(loss, forward(spec, theta, batch.inputs), batch.targets).norm();
            const double pred = std::exp(-tau) * r0;
            worst_dev = std::max(worst_dev, std::abs(rn - pred) / pred);
        }
    }

    // (b) q=4 log-linear decay rate within 20% of 1/3
    double rate_err = 0.0;
    {
        Vector theta = init_params(spec);
        const LossSpec loss = LossSpec::q_power(4);
        SketchConfig cfg;
        cfg.rank = 25;
        cfg.oversketch = 6;
        cfg.mode = SketchMode::two_pass;
        cfg.tolerance = 1e-9;
        cfg.seed = 6;
        SketchedOptimizer opt(spec, loss, CurvatureMatrix::G, cfg, LineSearchGrid::scaled(0.05));
        std::vector<double> taus, lognorms;
        double tau = 0.0;
        for (int it = 0; it < 200 && tau < 4.5; ++it) {
            auto res = opt.step(theta, batch, it);
            theta = res.params;
            tau += res.trace.step_size;
            taus.push_back(tau);
            lognorms.push_back(std::log(
                mismatch(loss, forward(spec, theta, batch.inputs), batch.targets).norm()));
        }
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const int n = static_cast<int>(taus.size());
        for (int i = 0; i < n; ++i) {
            sx += taus[i];
            sy += lognorms[i];
            sxx += taus[i] * taus[i];
            sxy += taus[i] * lognorms[i];
        }
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        rate_err = std::abs(slope + 1.0 / 3.0) * 3.0;
    }
    std::snprintf(buf, sizeof(buf),
                  "squared: max dev %.3f (tol 0.10); q=4 rate err %.3f (tol 0.20)", worst_dev,
                  rate_err);
    report(5, "mismatch flow realization",
           worst_dev <= 0.10 && rate_err <= 0.20 ? Status::pass : Status::fail, buf);
}

// --------------------------------------------------------------------------
// 6. Hinge dynamics: zero mismatch at tau ~ max r(0)

void criterion_6() {
    MlpSpec spec;
    spec.layer_widths = {32, 1};
    spec.activation = Activation::identity;
    spec.init_scale = 0.3;
    spec.seed = 7;
    Vector theta = init_params(spec);
    Rng rng(57);
    Batch batch;
    batch.inputs = rng.gaussian_matrix(24, 32);
    batch.targets.resize(24, 1);
    for (Index i = 0; i < 24; ++i) batch.targets(i, 0) = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const LossSpec loss = LossSpec::hinge();
    const double max_r0 =
        mismatch(loss, forward(spec, theta, batch.inputs), batch.targets).maxCoeff();
    SketchConfig cfg;
    cfg.rank = 26;
    cfg.oversketch = 6;
    cfg.mode = SketchMode::two_pass;
    cfg.tolerance = 1e-12;
    cfg.seed = 300;
    SketchedOptimizer opt(spec, loss, CurvatureMatrix::G_J, cfg, LineSearchGrid::scaled(0.05));
    double tau = 0.0, tau_zero = -1.0;
    for (int it = 0; it < 600; ++it) {
        auto res = opt.step(theta, batch, it);
        theta = res.params;
        tau += res.trace.step_size;
        if (mismatch(loss, forward(spec, theta, batch.inputs), batch.targets).maxCoeff() <= 0.0) {
            tau_zero = tau;
            break;
        }
    }
    const double rel = tau_zero < 0 ? 1.0 : std::abs(tau_zero - max_r0) / max_r0;
    std::snprintf(buf, sizeof(buf), "max r(0) %.3f, zero mismatch at tau %.3f, rel err %.3f (tol 0.15)",
                  max_r0, tau_zero, rel);
    report(6, "hinge dynamics", rel <= 0.15 ? Status::pass : Status::fail, buf);
}

// --------------------------------------------------------------------------
// 7. Sufficiency: [0,1] on exact decompositions; gate blocks growth

void criterion_7() {
    Rng rng(71);
    bool in_range = true;
    for (int trial = 0; trial < 100; ++trial) {
        const Index dim = 6 + static_cast<Index>(rng.uniform() * 10);
        const Matrix b = rng.gaussian_matrix(dim, dim);
        const Matrix m = b * b.transpose();
        Eigen::SelfAdjointEigenSolver<Matrix> es(m);
        SketchedEig eig;
        eig.basis = es.eigenvectors().rowwise().reverse();
        eig.eigvals = es.eigenvalues().reverse();
        eig.effective_rank = dim;
        const Vector grad = rng.gaussian_vector(dim);
        const Index k = 1 + static_cast<Index>(rng.uniform() * (dim - 1));
        const double s = sufficiency(eig, grad, k);
        if (s < 0.0 || s > 1.0 + 1e-12) in_range = false;
    }
    bool gate_ok = true;
    for (int trial = 0; trial < 200; ++trial) {
        const Index prev = 1 + static_cast<Index>(rng.uniform() * 200);
        const Index est = static_cast<Index>(rng.uniform() * 300);
        const Index over = static_cast<Index>(rng.uniform() * 30);
        const Index cap = 1 + static_cast<Index>(rng.uniform() * 400);
        const double s_hi = 1.0 + rng.uniform();
        const Index next = gated_rank_update(prev, est, over, s_hi, cap);
        if (next > prev && next > cap) gate_ok = false;
        if (next > std::min(prev, cap) && next > prev) gate_ok = false;
        if (gated_rank_update(prev, est, over, 0.5, cap) > cap) gate_ok = false;
    }
    std::snprintf(buf, sizeof(buf), "S in [0,1] on 100 exact instances: %s; gate closed at S>=1: %s",
                  in_range ? "yes" : "no", gate_ok ? "yes" : "no");
    report(7, "sufficiency and rank gating", in_range && gate_ok ? Status::pass : Status::fail, buf);
}

// --------------------------------------------------------------------------
// 8. Sketch fidelity and PSD clipping

void criterion_8() {
    Rng rng(81);
    const Index dim = 200;
    double worst_rel = 0.0;
    for (int trial = 0; trial < 6; ++trial) {
        const Index true_rank = 5 + static_cast<Index>(rng.uniform() * 25);
        const Matrix b = rng.gaussian_matrix(dim, true_rank);
        const Matrix m = b * b.transpose();
        SketchConfig cfg;
        cfg.rank = 40;
        cfg.oversketch = 10;
        cfg.mode = trial % 2 == 0 ? SketchMode::one_pass : SketchMode::two_pass;
        cfg.tolerance = 1e-10;
        cfg.seed = 800 + trial;
        const SketchedEig eig = randomized_eig(
            [&](const Eigen::Ref<const Matrix>& v) -> Matrix { return m * v; }, dim, cfg);
        const Matrix rebuilt = eig.basis * eig.eigvals.asDiagonal() * eig.basis.transpose();
        worst_rel = std::max(worst_rel, svd(Matrix(m - rebuilt)).singular_values(0) /
                                            svd(m).singular_values(0));
    }
    bool clip_ok = true;
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix q0 = rng.gaussian_matrix(dim, 6);
        Eigen::HouseholderQR<Matrix> qr(q0);
        const Matrix q = qr.householderQ() * Matrix::Identity(dim, 6);
        Vector vals(6);
        for (Index i = 0; i < 6; ++i) vals(i) = (i % 2 == 0 ? 1.0 : -1.0) * (6.0 - i);
        const Matrix m = q * vals.asDiagonal() * q.transpose();
        SketchConfig cfg;
        cfg.rank = 10;
        cfg.oversketch = 5;
        cfg.mode = SketchMode::two_pass;
        cfg.tolerance = 1e-10;
        cfg.seed = 900 + trial;
        const SketchedEig eig = randomized_eig(
            [&](const Eigen::Ref<const Matrix>& v) -> Matrix { return m * v; }, dim, cfg);
        if (eig.effective_rank == 0 || eig.eigvals.minCoeff() <= 0.0) clip_ok = false;
    }
    std::snprintf(buf, sizeof(buf), "rank-r spectral rel err %.2e (tol 1e-6); clipped spectra nonnegative: %s",
                  worst_rel, clip_ok ? "yes" : "no");
    report(8, "sketch fidelity and PSD clipping",
           worst_rel <= 1e-6 && clip_ok ? Status::pass : Status::fail, buf);
}

// --------------------------------------------------------------------------
// 9. Regression case study: G converges far below G_J and H

void criterion_9() {
    ExperimentConfig cfg;
    cfg.task = Task::regression;
    cfg.optimizers = {OptimizerChoice::g, OptimizerChoice::g_j, OptimizerChoice::h};
    cfg.seeds = {0, 1, 2};
    cfg.loss = LossSpec::q_power(4);
    cfg.out_dir = "acceptance_artifacts/regression";
    if (full_mode()) {
        cfg.width = 50;
        cfg.depth = 6;
        cfg.steps = 7001;
        cfg.train_grid = 50;
        cfg.eval_grid = 150;
        cfg.sketch.rank = 75;
        cfg.sketch.oversketch = 10;
        cfg.sketch.mode = SketchMode::one_pass;
        cfg.sketch.tolerance = 1e-14;
        cfg.sketch.rank_cap = 0;
    } else {
        cfg.width = 24;
        cfg.depth = 4;
        cfg.steps = 1500;
        cfg.train_grid = 16;
        cfg.eval_grid = 48;
        cfg.sketch.rank = 50;
        cfg.sketch.oversketch = 10;
        cfg.sketch.mode = SketchMode::one_pass;
        cfg.sketch.tolerance = 1e-14;
        cfg.sketch.rank_cap = 100;
    }
    const auto results = run_regression(cfg);
    auto eval_of = [&](OptimizerChoice c, std::uint64_t seed) {
        for (const auto& r : results)
            if (r.optimizer == optimizer_name(c) && r.seed == seed) return r.final_eval;
        return -1.0;
    };
    bool ordering = true;
    double worst_ratio = 0.0;
    for (std::uint64_t seed : cfg.seeds) {
        const double g = eval_of(OptimizerChoice::g, seed);
        const double gj = eval_of(OptimizerChoice::g_j, seed);
        const double h = eval_of(OptimizerChoice::h, seed);
        const double ratio = g / std::min(gj, h);
        worst_ratio = std::max(worst_ratio, ratio);
        if (!(g <= 0.1 * gj && g <= 0.1 * h)) ordering = false;
    }
    bool full_ok = true;
    std::string full_note;
    if (full_mode()) {
        for (std::uint64_t seed : cfg.seeds) {
            if (eval_of(OptimizerChoice::g, seed) > 1e-7) full_ok = false;
            if (eval_of(OptimizerChoice::g_j, seed) < 1e-5) full_ok = false;
            if (eval_of(OptimizerChoice::h, seed) < 1e-5) full_ok = false;
        }
        full_note = full_ok ? "; full thresholds met (G<=1e-7, G_J,H>=1e-5)"
                            : "; full thresholds violated";
    }
    std::snprintf(buf, sizeof(buf),
                  "%s config, 3 seeds: worst eval-MSE ratio G/min(G_J,H) %.2e (tol 0.1)%s",
                  full_mode() ? "full" : "reduced", worst_ratio, full_note.c_str());
    report(9, "regression ordering G << {G_J, H}",
           ordering && full_ok ? Status::pass : Status::fail, buf);
}

// --------------------------------------------------------------------------
// 10. Alignment table along a Muon path at loss ~ 1e-5

void criterion_10() {
    const MlpSpec spec = MlpSpec::make(2, 24, 4, 1, Activation::swish, 1.8, 0);
    Vector theta = init_params(spec);
    const Batch train = regression_grid(20);
    const LossSpec loss = LossSpec::q_power(4);
    MuonParams hp;
    hp.lr = 1e-3;
    hp.beta = 0.95;
    hp.ns_steps = 5;
    hp.schedule.kind = Schedule::Kind::cosine;
    hp.schedule.total_steps = 60000;
    MuonState state = MuonState::init(theta.size());
    double loss_now = 1.0;
    int it = 0;
    while (it < 60000) {
        const Vector grad = loss_gradient(spec, theta, train, loss);
        theta = muon_step(state, spec, theta, grad, hp);
        ++it;
        if (it % 50 == 0) {
            loss_now = loss_value(loss, forward(spec, theta, train.inputs), train.targets);
            if (loss_now <= 1.2e-5) break;
        }
    }
    if (loss_now > 1.2e-5) {
        std::snprintf(buf, sizeof(buf), "Muon never reached loss 1.2e-5 (best %.2e)", loss_now);
        report(10, "Muon-path alignment table", Status::fail, buf);
        return;
    }
    SketchConfig cfg;
    cfg.rank = 341;  // 18% of the 1,897 parameters, the full-scale snapshot proportion
    cfg.oversketch = 20;
    cfg.mode = SketchMode::one_pass;
    cfg.tolerance = 1e-14;
    cfg.seed = 99;
    const Vector grad = loss_gradient(spec, theta, train, loss);
    MuonState probe = state;
    const Vector next = muon_step(probe, spec, theta, grad, hp);
    const AlignmentTable table =
        snapshot(spec, theta, train, loss, cfg, {{"Muon", Vector(theta - next)}}, "muon path");
    write_alignment_table_csv(table, "acceptance_artifacts/muon_snapshot_alignment.csv");
    const double c_gj = table.lookup("G_J", "func_grad");
    const double c_g = table.lookup("G", "mismatch");
    std::snprintf(buf, sizeof(buf),
                  "at loss %.2e: cos(G_J, grad_f)=%.3f, cos(G, mismatch)=%.3f (tol 0.95)",
                  loss_now, c_gj, c_g);
    report(10, "Muon-path alignment table",
           c_gj >= 0.95 && c_g >= 0.95 ? Status::pass : Status::fail, buf);
}

// --------------------------------------------------------------------------
// 11. MNIST: loader, cross-entropy pipeline, desk-scale accuracies

void write_be32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

bool idx_loader_checks() {
    fs::create_directories("acceptance_artifacts/idx");
    const std::string img_path = "acceptance_artifacts/idx/images";
    const std::string lab_path = "acceptance_artifacts/idx/labels";
    {
        std::ofstream img(img_path, std::ios::binary);
        write_be32(img, 0x803);
        write_be32(img, 2);
        write_be32(img, 2);
        write_be32(img, 2);
        const unsigned char pixels[8] = {0, 255, 128, 0, 10, 20, 30, 40};
        img.write(reinterpret_cast<const char*>(pixels), 8);
        std::ofstream lab(lab_path, std::ios::binary);
        write_be32(lab, 0x801);
        write_be32(lab, 2);
        const unsigned char labels[2] = {0, 9};
        lab.write(reinterpret_cast<const char*>(labels), 2);
    }
    const MnistDataset data = load_mnist_idx(img_path, lab_path);
    if (data.size() != 2 || data.labels[0] != 0 || data.labels[1] != 9) return false;
    if (data.images(0, 1) != 1.0 || std::abs(data.images(0, 2) - 128.0 / 255.0) > 1e-12)
        return false;
    bool threw = false;
    try {
        std::ofstream bad(img_path + "_bad", std::ios::binary);
        write_be32(bad, 0x805);
        bad.close();
        load_mnist_idx(img_path + "_bad", lab_path);
    } catch (const std::exception&) {
        threw = true;
    }
    return threw;
}

// End-to-end cross-entropy pipeline on synthetic class blobs.
bool synthetic_classification_check(double& accuracy) {
    Rng rng(111);
    const Index per_class = 120, classes = 3;
    auto sample = [&](Index n) {
        Batch b;
        b.inputs.resize(n * classes, 2);
        b.targets = Matrix::Zero(n * classes, classes);
        const double centers[3][2] = {{0.0, 1.2}, {-1.0, -0.7}, {1.0, -0.7}};
        for (Index c = 0; c < classes; ++c)
            for (Index i = 0; i < n; ++i) {
                const Index row = c * n + i;
                b.inputs(row, 0) = centers[c][0] + 0.35 * rng.normal();
                b.inputs(row, 1) = centers[c][1] + 0.35 * rng.normal();
                b.targets(row, c) = 1.0;
    }
        return b;
    };
    const Batch train = sample(per_class);
    const Batch eval = sample(60);
    const MlpSpec spec = MlpSpec::make(2, 32, 2, classes, Activation::swish, 1.8, 5);
    SketchConfig cfg;
    cfg.rank = 40;
    cfg.oversketch = 10;
    cfg.mode = SketchMode::one_pass;
    cfg.tolerance = 1e-7;
    cfg.seed = 6;
    SketchedOptimizer opt(spec, LossSpec::cross_entropy(), CurvatureMatrix::G_J, cfg);
    Vector theta = init_params(spec);
    for (int itn = 0; itn < 30; ++itn) theta = opt.step(theta, train, itn).params;
    const Matrix logits = forward(spec, theta, eval.inputs);
    Index correct = 0;
    for (Index i = 0; i < logits.rows(); ++i) {
        Index argmax = 0;
        logits.row(i).maxCoeff(&argmax);
        if (eval.targets(i, argmax) == 1.0) ++correct;
    }
    accuracy = static_cast<double>(correct) / logits.rows();
    return accuracy >= 0.95;
}

void criterion_11() {
    const bool loader_ok = idx_loader_checks();
    double synth_acc = 0.0;
    const bool synth_ok = synthetic_classification_check(synth_acc);

    const std::string dir = mnist_dir();
    if (dir.empty()) {
        std::snprintf(buf, sizeof(buf),
                      "loader bit-exact: %s; synthetic CE pilot acc %.3f (tol 0.95); real-data "
                      "legs skipped: no MNIST IDX files (set SGN_MNIST_DIR)",
                      loader_ok ? "yes" : "no", synth_acc);
        report(11, "MNIST ingestion and pilot", loader_ok && synth_ok ? Status::skip : Status::fail,
               buf);
        return;
    }

    ExperimentConfig cfg;
    cfg.task = Task::mnist;
    cfg.width = 128;
    cfg.depth = 2;
    cfg.init_scale = 1.8;
    cfg.loss = LossSpec::cross_entropy();
    cfg.seeds = {0};
    cfg.out_dir = "acceptance_artifacts/mnist";
    cfg.mnist_train_images = dir + "/train-images-idx3-ubyte";
    cfg.mnist_train_labels = dir + "/train-labels-idx1-ubyte";
    cfg.mnist_test_images = dir + "/t10k-images-idx3-ubyte";
    cfg.mnist_test_labels = dir + "/t10k-labels-idx1-ubyte";
    cfg.sketch.rank = 350;
    cfg.sketch.oversketch = 10;
    cfg.sketch.mode = SketchMode::one_pass;
    cfg.sketch.tolerance = 1e-7;

    if (!full_mode()) {
        cfg.optimizers = {OptimizerChoice::g_j};
        cfg.mnist_subset = 5000;
        cfg.mnist_epochs = 1;
        const auto results = run_mnist(cfg);
        const double acc = results[0].best_accuracy;
        std::snprintf(buf, sizeof(buf),
                      "loader: %s; synthetic acc %.3f; 5000-sample pilot G_J acc %.3f (tol 0.85)",
                      loader_ok ? "ok" : "BAD", synth_acc, acc);
        report(11, "MNIST ingestion and pilot",
               loader_ok && synth_ok && acc > 0.85 ? Status::pass : Status::fail, buf);
        return;
    }

    cfg.optimizers = {OptimizerChoice::g_j, OptimizerChoice::g};
    cfg.mnist_subset = 0;
    cfg.mnist_epochs = 3;
    const auto results = run_mnist(cfg);
    double gj_best = 0.0, g_peak = 0.0, g_final = 0.0;
    int g_peak_epoch = -1, g_epochs = 0;
    for (const auto& r : results) {
        if (r.summary.optimizer == "gj") gj_best = r.best_accuracy;
        if (r.summary.optimizer == "g") {
            g_peak = r.best_accuracy;
            g_final = r.final_accuracy;
            g_peak_epoch = r.best_epoch;
            g_epochs = static_cast<int>(r.epoch_accuracy.size());
        }
    }
    const bool gj_ok = gj_best >= 0.97 && gj_best <= 0.99;
    const bool collapse_ok =
        g_peak >= 0.85 && g_peak_epoch < g_epochs - 1 && g_final <= g_peak - 0.03;
    std::snprintf(buf, sizeof(buf),
                  "full: G_J best %.4f (in [0.97,0.99]: %s); G peak %.3f@%d final %.3f "
                  "(rise-then-collapse: %s)",
                  gj_best, gj_ok ? "yes" : "no", g_peak, g_peak_epoch, g_final,
                  collapse_ok ? "yes" : "no");
    report(11, "MNIST ingestion and pilot",
           loader_ok && synth_ok && gj_ok && collapse_ok ? Status::pass : Status::fail, buf);
}

// --------------------------------------------------------------------------
// 12. Double integrator: G leads policy agreement and value RMSE

void criterion_12() {
    ExperimentConfig cfg;
    cfg.task = Task::double_integrator;
    cfg.optimizers = {OptimizerChoice::g, OptimizerChoice::g_j, OptimizerChoice::h,
                      OptimizerChoice::adam, OptimizerChoice::muon};
    cfg.loss = LossSpec::squared();
    cfg.init_scale = 1.27;
    cfg.out_dir = "acceptance_artifacts/double_integrator";
    cfg.adam.lr = 1e-3;
    cfg.muon.lr = 1e-3;
    if (full_mode()) {
        cfg.seeds = {0, 1, 2};
        cfg.width = 512;
        cfg.depth = 2;
        cfg.steps = 2000;
        cfg.vi_train_samples = 4000;
        cfg.vi_eval_grid = 121;
        cfg.vi_oracle_grid = 241;
        cfg.vi_baseline_steps = 200;
        cfg.sketch.rank = 96;
        cfg.sketch.oversketch = 16;
        cfg.sketch.mode = SketchMode::two_pass;
        cfg.sketch.tolerance = 1e-5;
        cfg.sketch.rank_cap = 0;
    } else {
        cfg.seeds = {0, 1, 2};
        cfg.width = 40;
        cfg.depth = 2;
        cfg.steps = 200;
        cfg.vi_train_samples = 600;
        cfg.vi_eval_grid = 61;
        cfg.vi_oracle_grid = 161;
        cfg.vi_baseline_steps = 200;
        cfg.sketch.rank = 48;
        cfg.sketch.oversketch = 12;
        cfg.sketch.mode = SketchMode::one_pass;
        cfg.sketch.tolerance = 1e-5;
        cfg.sketch.rank_cap = 88;
    }
    const auto results = run_double_integrator(cfg);
    auto find = [&](OptimizerChoice c, std::uint64_t seed) -> const ViRunResult& {
        for (const auto& r : results)
            if (r.summary.optimizer == optimizer_name(c) && r.summary.seed == seed) return r;
        throw std::logic_error("missing run");
    };
    bool ok = true;
    double min_gap = 1.0;
    for (std::uint64_t seed : cfg.seeds) {
        const auto& g = find(OptimizerChoice::g, seed);
        const auto& adam = find(OptimizerChoice::adam, seed);
        const auto& muon = find(OptimizerChoice::muon, seed);
        min_gap = std::min({min_gap, g.agreement_fraction - adam.agreement_fraction,
                            g.agreement_fraction - muon.agreement_fraction});
        if (!(g.agreement_fraction > adam.agreement_fraction &&
              g.agreement_fraction > muon.agreement_fraction))
            ok = false;
        for (OptimizerChoice other : {OptimizerChoice::g_j, OptimizerChoice::h,
                                      OptimizerChoice::adam, OptimizerChoice::muon}) {
            // q=2 makes G and G_J the same algorithm, so an exact tie is fine
            if (g.value_rmse > find(other, seed).value_rmse * (1.0 + 1e-9)) ok = false;
        }
    }
    std::snprintf(buf, sizeof(buf),
                  "%s config, 3 seeds: min agreement gap over Adam/Muon %.3f; G RMSE lowest: %s",
                  full_mode() ? "full" : "reduced", min_gap, ok ? "yes" : "no");
    report(12, "double-integrator ordering", ok ? Status::pass : Status::fail, buf);
}

}  // namespace

int main() {
    std::setvbuf(stdout, nullptr, _IOLBF, 0);
    fs::create_directories("acceptance_artifacts");
    std::printf("acceptance suite (%s mode)\n", full_mode() ? "full" : "desk/reduced");

    const auto t0 = std::chrono::steady_clock::now();
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    criterion_11();
    criterion_12();
    const auto t1 = std::chrono::steady_clock::now();

    int failed = 0, skipped = 0;
    for (const auto& r : g_results) {
        if (r.status == Status::fail) ++failed;
        if (r.status == Status::skip) ++skipped;
    }
    std::printf("%d/%zu criteria passed, %d skipped, %d failed (%.1f s)\n",
                static_cast<int>(g_results.size()) - failed - skipped, g_results.size(), skipped,
                failed, std::chrono::duration<double>(t1 - t0).count());
    return failed == 0 ? 0 : 1;
}
