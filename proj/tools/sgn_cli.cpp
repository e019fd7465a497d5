// Experiment driver: trains the sketched Gauss-Newton family and baselines
// on the regression / MNIST / double-integrator case studies, and exposes
// the snapshot, oracle and diagnose utilities over the same artifacts.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "sgn/experiments.hpp"

namespace {

int cmd_train(const std::string& config_path, long seed_override, const std::string& out_override) {
    sgn::ExperimentConfig cfg = sgn::ExperimentConfig::from_file(config_path);
    if (seed_override >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed_override)};
    if (!out_override.empty()) cfg.out_dir = out_override;
    cfg.validate();

    switch (cfg.task) {
        case sgn::Task::regression: {
            const auto results = sgn::run_regression(cfg);
            for (const auto& r : results)
                std::printf("%-24s seed=%llu final_train_loss=%.3e eval_mse=%.3e\n",
                            r.optimizer.c_str(), static_cast<unsigned long long>(r.seed),
                            r.final_train_loss, r.final_eval);
            break;
        }
        case sgn::Task::mnist: {
            const auto results = sgn::run_mnist(cfg);
            for (const auto& r : results)
                std::printf("%-24s seed=%llu best_acc=%.4f final_acc=%.4f\n",
                            r.summary.optimizer.c_str(),
                            static_cast<unsigned long long>(r.summary.seed), r.best_accuracy,
                            r.final_accuracy);
            break;
        }
        case sgn::Task::double_integrator: {
            const auto results = sgn::run_double_integrator(cfg);
            for (const auto& r : results)
                std::printf("%-24s seed=%llu value_rmse=%.4f agreement=%.4f\n",
                            r.summary.optimizer.c_str(),
                            static_cast<unsigned long long>(r.summary.seed), r.value_rmse,
                            r.agreement_fraction);
            break;
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sketched Gauss-Newton optimizers and function-space diagnostics"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, out_path, traces_dir, task_name;
    long seed_override = -1;

    auto* train = app.add_subcommand("train", "run every configured optimizer/seed of a config");
    train->add_option("--config", config_path, "experiment config file")->required();
    train->add_option("--seed", seed_override, "override the config's seed list with one seed");
    train->add_option("--out", out_path, "override the config's output directory");

    auto* snap = app.add_subcommand("snapshot",
                                    "pairwise function-space alignment table at a checkpoint");
    snap->add_option("--config", config_path, "experiment config file")->required();
    snap->add_option("--checkpoint", checkpoint_path, "parameter checkpoint")->required();
    snap->add_option("--out", out_path, "output CSV path (default alignment.csv)");

    auto* oracle = app.add_subcommand("oracle", "dynamic-programming value oracle");
    oracle->add_option("--task", task_name, "task name")->required();
    oracle->add_option("--config", config_path, "optional config for env overrides");
    oracle->add_option("--out", out_path, "output directory")->required();

    auto* diagnose = app.add_subcommand("diagnose", "summarize run traces against the "
                                                    "closed-form mismatch dynamics");
    diagnose->add_option("--traces", traces_dir, "directory of run directories")->required();
    diagnose->add_option("--out", out_path, "output CSV path (default diagnose.csv)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, seed_override, out_path);
        if (snap->parsed()) {
            sgn::ExperimentConfig cfg = sgn::ExperimentConfig::from_file(config_path);
            const std::string out = out_path.empty() ? "alignment.csv" : out_path;
            const sgn::AlignmentTable table = sgn::run_snapshot(cfg, checkpoint_path, out);
            std::printf("snapshot at loss %.3e -> %s\n", table.loss_level, out.c_str());
            return 0;
        }
        if (oracle->parsed()) {
            if (task_name != "double_integrator") {
                std::fprintf(stderr, "oracle: unsupported task %s\n", task_name.c_str());
                return 1;
            }
            sgn::ExperimentConfig cfg;
            if (!config_path.empty()) cfg = sgn::ExperimentConfig::from_file(config_path);
            sgn::run_oracle(cfg, out_path);
            std::printf("oracle grid written to %s/oracle.csv\n", out_path.c_str());
            return 0;
        }
        if (diagnose->parsed()) {
            const std::string out = out_path.empty() ? "diagnose.csv" : out_path;
            const auto entries = sgn::run_diagnose(traces_dir, out);
            for (const auto& e : entries)
                std::printf("%-48s %-6s final_loss=%.3e max_ode_dev=%s\n", e.run_dir.c_str(),
                            e.optimizer.c_str(), e.final_loss,
                            std::isnan(e.max_deviation)
                                ? "n/a"
                                : sgn::format_double(e.max_deviation).c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
