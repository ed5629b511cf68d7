// Copyright 2026 The ddit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ddit/checkpoint.hpp"
#include "ddit/config.hpp"
#include "ddit/plots.hpp"
#include "ddit/sampling.hpp"
#include "ddit/train.hpp"

// Command-line surface: train, sample, eval-fid, sweep, plot. Every run
// writes its fully resolved config next to its outputs. All subcommand logic
// lives here so tests can drive the CLI in-process.

namespace ddit {

namespace cli_detail {

namespace fs = std::filesystem;

/// "a.b.c=value" -> nested JSON override; the value parses as JSON when it
/// can, and falls back to a plain string.
inline void add_dotted_override(json& patch, const std::string& spec) {
    size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("--set expects key.path=value, got: " + spec);
    std::string path  = spec.substr(0, eq);
    std::string value = spec.substr(eq + 1);
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::parse_error&) {
        parsed = value;
    }
    json* node = &patch;
    size_t pos = 0;
    while (true) {
        size_t dot = path.find('.', pos);
        std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (key.empty()) throw std::invalid_argument("--set: empty key segment in " + path);
        if (dot == std::string::npos) {
            (*node)[key] = parsed;
            break;
        }
        node = &(*node)[key];
        pos  = dot + 1;
    }
}

inline json teacher_sigma_override(const std::string& text) {
    if (text == "fixed_min" || text == "same_as_student") return text;
    try {
        size_t used = 0;
        double v    = std::stod(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument("teacher sigma must be fixed_min, same_as_student, or a number");
}

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<int64_t> steps;
    std::optional<uint64_t> seed;
    std::optional<Index> batch;
    std::optional<double> lr;
    std::optional<double> mask_ratio;
    std::optional<std::string> teacher_sigma;
    std::optional<std::string> out_dir;
    bool disable_ld = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file (empty = defaults)");
        cmd->add_option("--set", sets, "override a config key, e.g. --set model.embed_dim=32");
        cmd->add_option("--steps", steps, "total training steps");
        cmd->add_option("--seed", seed, "master seed");
        cmd->add_option("--batch", batch, "batch size");
        cmd->add_option("--lr", lr, "learning rate");
        cmd->add_option("--mask-ratio", mask_ratio, "student-view mask ratio in [0,1]");
        cmd->add_option("--teacher-sigma", teacher_sigma,
                        "teacher noise: fixed_min, same_as_student, or a value");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_flag("--disable-ld", disable_ld, "train without the discrimination loss");
    }

    json overrides() const {
        json patch = json::object();
        for (const std::string& s : sets) add_dotted_override(patch, s);
        if (steps) patch["total_steps"] = *steps;
        if (seed) patch["seed"] = *seed;
        if (batch) patch["batch_size"] = *batch;
        if (lr) patch["lr"] = *lr;
        if (mask_ratio) patch["mask_ratio"] = *mask_ratio;
        if (teacher_sigma) patch["teacher_sigma_mode"] = teacher_sigma_override(*teacher_sigma);
        if (out_dir) patch["out_dir"] = *out_dir;
        if (disable_ld) patch["disable_L_D"] = true;
        return patch;
    }
};

/// Full training run into cfg.out_dir: resolved config, metrics log, periodic
/// eval/checkpoints, final checkpoint.
inline TrainState run_train_command(const RunConfig& cfg, TrainState state) {
    fs::create_directories(cfg.out_dir);
    write_config(cfg, (fs::path(cfg.out_dir) / "resolved_config.json").string());
    Dataset dataset = load_dataset(cfg.dataset, cfg.seed, cfg.model.n_classes);

    fs::path metrics_path = fs::path(cfg.out_dir) / "metrics.ndjson";
    fs::path eval_path    = fs::path(cfg.out_dir) / "eval.ndjson";
    if (state.step == 0) {  // fresh run: do not append onto an older log
        fs::remove(metrics_path);
        fs::remove(eval_path);
    }
    MetricsWriter metrics(metrics_path.string());

    TrainCallbacks cb;
    cb.on_metrics = [&](const StepMetrics& m) { metrics.append(m); };
    cb.on_checkpoint = [&](TrainState& st) {
        save_checkpoint(st, cfg,
                        (fs::path(cfg.out_dir) / ("checkpoint_step" + std::to_string(st.step) +
                                                  ".bin"))
                            .string());
    };
    RawPixelFeatures fx;
    cb.on_eval = [&](const TrainState& st, int64_t step) {
        FidReport r = evaluate_fid(st.student, cfg, dataset, fx, cfg.seed ^ 0xE5A1ull);
        r.step      = step;
        std::ofstream out(eval_path, std::ios::app);
        out << fid_report_json(r).dump() << "\n";
    };

    state = run_training(cfg, dataset, std::move(state), cb);
    save_checkpoint(state, cfg, (fs::path(cfg.out_dir) / "checkpoint.bin").string());
    return state;
}

inline int cmd_train(const CommonOpts& opts, const std::string& resume_path) {
    RunConfig cfg = parse_config(opts.config_path, opts.overrides());
    TrainState state;
    if (!resume_path.empty()) {
        Checkpoint ckpt = load_checkpoint(resume_path);
        state           = std::move(ckpt.state);
    } else {
        state = make_train_state(cfg);
    }
    state = run_train_command(cfg, std::move(state));
    std::cout << "trained to step " << state.step << "; outputs in " << cfg.out_dir << "\n";
    return 0;
}

inline int cmd_sample(const std::string& ckpt_path, Index class_label, Index count,
                      uint64_t seed, std::optional<int> steps,
                      const std::optional<std::string>& out_dir) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    const RunConfig& cfg = ckpt.cfg;
    int n_steps = steps.value_or(cfg.sample_steps);
    auto samples = generate(ckpt.state.student, cfg.model, cfg.noise, class_label, count, n_steps,
                            cfg.sample_rho, seed);
    fs::path dir = out_dir ? fs::path(*out_dir) : fs::path(cfg.out_dir) / "samples";
    fs::create_directories(dir);
    for (size_t i = 0; i < samples.size(); ++i) {
        fs::path p = dir / ("sample_class" + std::to_string(class_label) + "_" +
                            std::to_string(i) + (cfg.model.channels == 1 ? ".pgm" : ".ppm"));
        save_image(p.string(), samples[i]);
        std::cout << p.string() << "\n";
    }
    return 0;
}

inline int cmd_eval_fid(const std::string& ckpt_path, std::optional<Index> count, uint64_t seed,
                        const std::optional<std::string>& out_dir) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    RunConfig cfg   = ckpt.cfg;
    if (count) cfg.eval_samples = *count;
    Dataset dataset = load_dataset(cfg.dataset, cfg.seed, cfg.model.n_classes);
    RawPixelFeatures fx;
    FidReport r = evaluate_fid(ckpt.state.student, cfg, dataset, fx, seed);
    json j      = fid_report_json(r);
    fs::path dir = out_dir ? fs::path(*out_dir) : fs::path(cfg.out_dir);
    fs::create_directories(dir);
    std::ofstream out(dir / "fid_report.json");
    out << j.dump(2) << "\n";
    std::cout << j.dump() << "\n";
    return 0;
}

/// One training run per swept value; per-value runs live in subdirectories
/// and the summary/chart land in the sweep root.
inline int cmd_sweep(const CommonOpts& opts, const std::string& param,
                     const std::vector<std::string>& values) {
    if (param != "teacher_sigma" && param != "mask_ratio")
        throw std::invalid_argument("sweep --param must be teacher_sigma or mask_ratio");
    if (values.empty()) throw std::invalid_argument("sweep needs at least one --values entry");
    json base_overrides = opts.overrides();
    std::string root = base_overrides.contains("out_dir")
                           ? base_overrides["out_dir"].get<std::string>()
                           : std::string("sweep_out");
    fs::create_directories(root);

    json summary;
    summary["param"]   = param;
    summary["entries"] = json::array();
    for (const std::string& value : values) {
        json overrides = base_overrides;
        std::string slug = value;
        for (char& c : slug)
            if (c == '.') c = 'p';
        overrides["out_dir"] = (fs::path(root) / (param + "_" + slug)).string();
        json value_json;
        if (param == "teacher_sigma") {
            value_json = teacher_sigma_override(value);
            overrides["teacher_sigma_mode"] = value_json;
        } else {
            value_json = json::parse(value);  // numeric ratio
            overrides["mask_ratio"] = value_json;
        }
        RunConfig cfg    = parse_config(opts.config_path, overrides);
        TrainState state = run_train_command(cfg, make_train_state(cfg));

        Dataset dataset = load_dataset(cfg.dataset, cfg.seed, cfg.model.n_classes);
        RawPixelFeatures fx;
        FidReport r = evaluate_fid(state.student, cfg, dataset, fx, cfg.seed ^ 0xE5A1ull);
        std::vector<StepMetrics> ms =
            read_metrics((fs::path(cfg.out_dir) / "metrics.ndjson").string());
        json entry;
        entry["value"]      = value_json;
        entry["fid"]        = r.fid;
        entry["final_L_G"]  = ms.empty() ? 0.0 : ms.back().l_g;
        entry["run_dir"]    = cfg.out_dir;
        summary["entries"].push_back(entry);
        std::cout << "sweep " << param << " = " << value << ": fid " << r.fid << "\n";
    }
    std::ofstream out(fs::path(root) / ("sweep_" + param + ".json"));
    out << summary.dump(2) << "\n";
    out.close();
    for (const std::string& f : emit_plots(root)) std::cout << f << "\n";
    return 0;
}

}  // namespace cli_detail

/// Dispatches a full command line (without the program name). Returns the
/// process exit status; failures print a one-line cause to stderr.
inline int cli_dispatch(const std::vector<std::string>& args) {
    CLI::App app{"masked diffusion-transformer training with an EMA-teacher discrimination loss"};
    app.require_subcommand(1);

    cli_detail::CommonOpts train_opts;
    std::string resume_path;
    CLI::App* train = app.add_subcommand("train", "train a model");
    train_opts.attach(train);
    train->add_option("--resume", resume_path, "checkpoint to resume from");

    std::string sample_ckpt;
    Index sample_class = 0, sample_count = 4;
    uint64_t sample_seed = 0;
    std::optional<int> sample_steps;
    std::optional<std::string> sample_out;
    CLI::App* sample = app.add_subcommand("sample", "generate images from a checkpoint");
    sample->add_option("--ckpt", sample_ckpt, "checkpoint file")->required();
    sample->add_option("--class", sample_class, "class label")->required();
    sample->add_option("--count", sample_count, "number of samples");
    sample->add_option("--seed", sample_seed, "sampling seed");
    sample->add_option("--steps", sample_steps, "sampler steps N");
    sample->add_option("--out", sample_out, "output directory");

    std::string eval_ckpt;
    std::optional<Index> eval_count;
    uint64_t eval_seed = 0;
    std::optional<std::string> eval_out;
    CLI::App* evalfid = app.add_subcommand("eval-fid", "Frechet distance against the dataset");
    evalfid->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    evalfid->add_option("--count", eval_count, "generated samples per class");
    evalfid->add_option("--seed", eval_seed, "sampling seed");
    evalfid->add_option("--out", eval_out, "output directory");

    cli_detail::CommonOpts sweep_opts;
    std::string sweep_param;
    std::vector<std::string> sweep_values;
    CLI::App* sweep = app.add_subcommand("sweep", "train once per swept value and chart FID");
    sweep_opts.attach(sweep);
    sweep->add_option("--param", sweep_param, "teacher_sigma or mask_ratio")->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")
        ->required()
        ->delimiter(',');

    std::string plot_run;
    CLI::App* plot = app.add_subcommand("plot", "render charts for a run directory");
    plot->add_option("--run", plot_run, "run directory")->required();

    std::vector<const char*> argv;
    argv.push_back("ddit");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (train->parsed()) return cli_detail::cmd_train(train_opts, resume_path);
        if (sample->parsed())
            return cli_detail::cmd_sample(sample_ckpt, sample_class, sample_count, sample_seed,
                                          sample_steps, sample_out);
        if (evalfid->parsed())
            return cli_detail::cmd_eval_fid(eval_ckpt, eval_count, eval_seed, eval_out);
        if (sweep->parsed()) return cli_detail::cmd_sweep(sweep_opts, sweep_param, sweep_values);
        if (plot->parsed()) {
            for (const std::string& f : emit_plots(plot_run)) std::cout << f << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 1;
}

}  // namespace ddit
