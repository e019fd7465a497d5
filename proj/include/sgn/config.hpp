#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgn/losses.hpp"
#include "sgn/mlp.hpp"
#include "sgn/optimizers.hpp"
#include "sgn/sketch.hpp"

namespace sgn {

enum class Task { regression, mnist, double_integrator };

// Sectioned key-value configuration file. Keys mirror the hyperparameter
// tables so a run is auditable against its settings line by line.
class RawConfig {
public:
    static RawConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config: cannot open " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_string(ss.str());
    }

    static RawConfig parse_string(const std::string& text) {
        RawConfig cfg;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string stripped = strip(line);
            if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') continue;
            if (stripped.front() == '[') {
                if (stripped.back() != ']')
                    throw std::runtime_error("config: malformed section at line " +
                                             std::to_string(lineno));
                section = strip(stripped.substr(1, stripped.size() - 2));
                continue;
            }
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config: expected key = value at line " +
                                         std::to_string(lineno));
            std::string key = strip(stripped.substr(0, eq));
            std::string value = strip(stripped.substr(eq + 1));
            if (!value.empty() && value.front() == '"' && value.back() == '"' && value.size() >= 2)
                value = value.substr(1, value.size() - 2);
            cfg.values_[section + "." + key] = value;
        }
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw std::runtime_error("config: missing key " + key);
        return it->second;
    }

    double get_num(const std::string& key, double fallback) const {
        return has(key) ? std::stod(require(key)) : fallback;
    }

    long get_int(const std::string& key, long fallback) const {
        return has(key) ? std::stol(require(key)) : fallback;
    }

    std::vector<std::string> get_list(const std::string& key) const {
        std::vector<std::string> out;
        if (!has(key)) return out;
        std::stringstream ss(require(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            const std::string s = strip(item);
            if (!s.empty()) out.push_back(s);
        }
        return out;
    }

private:
    static std::string strip(const std::string& s) {
        const auto begin = s.find_first_not_of(" \t\r");
        if (begin == std::string::npos) return "";
        const auto end = s.find_last_not_of(" \t\r");
        return s.substr(begin, end - begin + 1);
    }

    std::map<std::string, std::string> values_;
};

enum class OptimizerChoice { g, g_j, h, adam, muon, gd };

inline OptimizerChoice optimizer_from_name(const std::string& name) {
    if (name == "g") return OptimizerChoice::g;
    if (name == "gj" || name == "g_j") return OptimizerChoice::g_j;
    if (name == "h") return OptimizerChoice::h;
    if (name == "adam") return OptimizerChoice::adam;
    if (name == "muon") return OptimizerChoice::muon;
    if (name == "gd") return OptimizerChoice::gd;
    throw std::invalid_argument("config: unknown optimizer " + name);
}

inline std::string optimizer_name(OptimizerChoice c) {
    switch (c) {
        case OptimizerChoice::g: return "g";
        case OptimizerChoice::g_j: return "gj";
        case OptimizerChoice::h: return "h";
        case OptimizerChoice::adam: return "adam";
        case OptimizerChoice::muon: return "muon";
        case OptimizerChoice::gd: return "gd";
    }
    return "?";
}

struct ExperimentConfig {
    Task task = Task::regression;
    std::vector<OptimizerChoice> optimizers;
    std::vector<std::uint64_t> seeds;
    int steps = 7001;
    std::string out_dir = "runs";

    // model
    Index width = 50;
    Index depth = 6;
    Activation activation = Activation::swish;
    double init_scale = 1.8;

    // loss
    LossSpec loss = LossSpec::q_power(4);

    // regression data
    Index train_grid = 50;
    Index eval_grid = 150;

    // sketch
    SketchConfig sketch;

    // line search
    double line_search_max_step = 1.0;

    // baselines
    AdamParams adam;
    int adam_steps = 200001;
    MuonParams muon;
    int muon_steps = 200001;
    GdParams gd;
    int gd_steps = 200001;

    // mnist
    std::string mnist_train_images, mnist_train_labels;
    std::string mnist_test_images, mnist_test_labels;
    Index mnist_batch_size = 512;
    Index mnist_subset = 0;  // 0 = full training set
    int mnist_epochs = 3;
    int mnist_baseline_epochs = 15;

    // double integrator
    double env_dt = 0.1;
    double env_goal_eps = 0.1;
    double env_pos_bound = 2.0;
    double env_vel_bound = 2.0;
    Index vi_train_samples = 4000;
    Index vi_eval_grid = 121;
    Index vi_oracle_grid = 241;
    int vi_baseline_steps = 200;

    MlpSpec model_spec(std::uint64_t seed) const {
        Index input = 2, output = 1;
        if (task == Task::mnist) {
            input = 784;
            output = 10;
        }
        return MlpSpec::make(input, width, depth, output, activation, init_scale, seed);
    }

    LineSearchGrid grid() const { return LineSearchGrid::scaled(line_search_max_step); }

    void validate() const {
        if (seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
        if (optimizers.empty()) throw std::invalid_argument("config: no optimizers selected");
        for (OptimizerChoice c : optimizers) {
            const bool needs_curvature = c == OptimizerChoice::g || c == OptimizerChoice::h;
            if (needs_curvature && !loss.has_curvature())
                throw std::invalid_argument("config: hinge loss admits only G_J among the "
                                            "sketched optimizers");
        }
        sketch.validate();
        if (task == Task::mnist) {
            for (const std::string& p : {mnist_train_images, mnist_train_labels,
                                         mnist_test_images, mnist_test_labels}) {
                if (p.empty() || !std::filesystem::exists(p))
                    throw std::invalid_argument("config: MNIST data path missing: " + p);
            }
        }
    }

    static ExperimentConfig from_raw(const RawConfig& raw) {
        ExperimentConfig cfg;
        const std::string task = raw.get("run.task", "regression");
        if (task == "regression") cfg.task = Task::regression;
        else if (task == "mnist") cfg.task = Task::mnist;
        else if (task == "double_integrator") cfg.task = Task::double_integrator;
        else throw std::invalid_argument("config: unknown task " + task);

        for (const auto& name : raw.get_list("run.optimizers"))
            cfg.optimizers.push_back(optimizer_from_name(name));
        for (const auto& s : raw.get_list("run.seeds"))
            cfg.seeds.push_back(std::stoull(s));
        cfg.steps = static_cast<int>(raw.get_int("run.steps", cfg.steps));
        cfg.out_dir = raw.get("run.out_dir", cfg.out_dir);

        cfg.width = raw.get_int("model.width", cfg.width);
        cfg.depth = raw.get_int("model.depth", cfg.depth);
        const std::string act = raw.get("model.activation", "swish");
        if (act == "swish") cfg.activation = Activation::swish;
        else if (act == "identity") cfg.activation = Activation::identity;
        else throw std::invalid_argument("config: unknown activation " + act);
        cfg.init_scale = raw.get_num("model.init_scale", cfg.init_scale);

        const std::string loss_kind = raw.get("loss.kind", "q_power");
        if (loss_kind == "q_power")
            cfg.loss = LossSpec::q_power(static_cast<int>(raw.get_int("loss.q", 4)));
        else if (loss_kind == "log_cosh") cfg.loss = LossSpec::log_cosh();
        else if (loss_kind == "cross_entropy") cfg.loss = LossSpec::cross_entropy();
        else if (loss_kind == "hinge") cfg.loss = LossSpec::hinge();
        else throw std::invalid_argument("config: unknown loss " + loss_kind);

        cfg.train_grid = raw.get_int("data.train_grid", cfg.train_grid);
        cfg.eval_grid = raw.get_int("data.eval_grid", cfg.eval_grid);

        cfg.sketch.rank = raw.get_int("sketch.rank", cfg.sketch.rank);
        cfg.sketch.oversketch = raw.get_int("sketch.oversketch", cfg.sketch.oversketch);
        const std::string mode = raw.get("sketch.mode", "one_pass");
        if (mode == "one_pass") cfg.sketch.mode = SketchMode::one_pass;
        else if (mode == "two_pass") cfg.sketch.mode = SketchMode::two_pass;
        else throw std::invalid_argument("config: unknown sketch mode " + mode);
        cfg.sketch.tolerance = raw.get_num("sketch.tolerance", cfg.sketch.tolerance);
        cfg.sketch.rank_cap = raw.get_int("sketch.rank_cap", cfg.sketch.rank_cap);

        cfg.line_search_max_step = raw.get_num("line_search.max_step", cfg.line_search_max_step);

        cfg.adam.lr = raw.get_num("adam.lr", cfg.adam.lr);
        cfg.adam.beta1 = raw.get_num("adam.beta1", cfg.adam.beta1);
        cfg.adam.beta2 = raw.get_num("adam.beta2", cfg.adam.beta2);
        cfg.adam.eps = raw.get_num("adam.eps", cfg.adam.eps);
        cfg.adam_steps = static_cast<int>(raw.get_int("adam.steps", cfg.adam_steps));
        cfg.adam.schedule.kind = raw.get("adam.schedule", "cosine") == "constant"
                                     ? Schedule::Kind::constant
                                     : Schedule::Kind::cosine;
        cfg.adam.schedule.total_steps = cfg.adam_steps;

        cfg.muon.lr = raw.get_num("muon.lr", cfg.muon.lr);
        cfg.muon.ns_steps = static_cast<int>(raw.get_int("muon.ns_steps", cfg.muon.ns_steps));
        cfg.muon.beta = raw.get_num("muon.beta", cfg.muon.beta);
        cfg.muon_steps = static_cast<int>(raw.get_int("muon.steps", cfg.muon_steps));
        cfg.muon.schedule.kind = raw.get("muon.schedule", "cosine") == "constant"
                                     ? Schedule::Kind::constant
                                     : Schedule::Kind::cosine;
        cfg.muon.schedule.total_steps = cfg.muon_steps;

        cfg.gd.lr = raw.get_num("gd.lr", cfg.gd.lr);
        cfg.gd_steps = static_cast<int>(raw.get_int("gd.steps", cfg.gd_steps));
        cfg.gd.schedule.total_steps = cfg.gd_steps;

        cfg.mnist_train_images = raw.get("mnist.train_images", "");
        cfg.mnist_train_labels = raw.get("mnist.train_labels", "");
        cfg.mnist_test_images = raw.get("mnist.test_images", "");
        cfg.mnist_test_labels = raw.get("mnist.test_labels", "");
        cfg.mnist_batch_size = raw.get_int("mnist.batch_size", cfg.mnist_batch_size);
        cfg.mnist_subset = raw.get_int("mnist.subset", cfg.mnist_subset);
        cfg.mnist_epochs = static_cast<int>(raw.get_int("mnist.epochs", cfg.mnist_epochs));
        cfg.mnist_baseline_epochs =
            static_cast<int>(raw.get_int("mnist.baseline_epochs", cfg.mnist_baseline_epochs));

        cfg.env_dt = raw.get_num("env.dt", cfg.env_dt);
        cfg.env_goal_eps = raw.get_num("env.goal_eps", cfg.env_goal_eps);
        cfg.env_pos_bound = raw.get_num("env.pos_bound", cfg.env_pos_bound);
        cfg.env_vel_bound = raw.get_num("env.vel_bound", cfg.env_vel_bound);
        cfg.vi_train_samples = raw.get_int("env.train_samples", cfg.vi_train_samples);
        cfg.vi_eval_grid = raw.get_int("env.eval_grid", cfg.vi_eval_grid);
        cfg.vi_oracle_grid = raw.get_int("env.oracle_grid", cfg.vi_oracle_grid);
        cfg.vi_baseline_steps =
            static_cast<int>(raw.get_int("env.baseline_steps", cfg.vi_baseline_steps));
        return cfg;
    }

    static ExperimentConfig from_file(const std::string& path) {
        ExperimentConfig cfg = from_raw(RawConfig::parse_file(path));
        cfg.validate();
        return cfg;
    }
};

}  // namespace sgn
