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

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "ddit/dataset.hpp"
#include "ddit/distill.hpp"
#include "ddit/edm.hpp"
#include "ddit/network.hpp"

// Run configuration: a strict JSON schema (unknown keys are errors, so typos
// cannot silently fall back to defaults) whose key paths mirror the struct
// fields. CLI overrides are applied as a JSON merge patch before parsing.

namespace ddit {

using nlohmann::json;

enum class TeacherSigmaMode { kFixedMin, kFixedValue, kSameAsStudent };

struct RunConfig {
    ModelConfig model;
    NoiseSpec noise;
    TemperatureSchedule temps;
    EmaSchedule ema;
    double center_m_c = 0.9;
    double center_m_p = 0.9;

    double mask_ratio                   = 0.2;
    TeacherSigmaMode teacher_sigma_mode = TeacherSigmaMode::kFixedMin;
    double teacher_sigma_value          = 0.0;  // used when mode == kFixedValue
    bool disable_l_d                    = false;
    bool edm_weighted_loss              = false;

    int64_t total_steps = 2000;
    Index batch_size    = 64;
    double lr           = 1e-4;
    uint64_t seed       = 0;

    DatasetSpec dataset;
    int64_t eval_interval       = 0;  // 0 disables periodic eval
    int64_t checkpoint_interval = 0;  // 0 keeps only the final checkpoint
    Index eval_samples          = 64; // generated per class during eval
    int sample_steps            = 40;
    double sample_rho           = 7.0;
    std::string out_dir         = "out";

    void validate() const {
        model.validate();
        noise.validate();
        temps.validate();
        ema.validate();
        dataset.validate();
        if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0))
            throw std::invalid_argument("mask_ratio: must be in [0,1]");
        if (teacher_sigma_mode == TeacherSigmaMode::kFixedValue &&
            !(teacher_sigma_value >= noise.sigma_min && teacher_sigma_value <= noise.sigma_max))
            throw std::invalid_argument(
                "teacher_sigma_mode: fixed value must lie in [sigma_min, sigma_max]");
        if (!(center_m_c >= 0.0 && center_m_c <= 1.0 && center_m_p >= 0.0 && center_m_p <= 1.0))
            throw std::invalid_argument("centers: momenta must be in [0,1]");
        if (total_steps < 0) throw std::invalid_argument("total_steps: must be >= 0");
        if (batch_size < 1) throw std::invalid_argument("batch_size: must be >= 1");
        if (!(lr > 0.0)) throw std::invalid_argument("lr: must be > 0");
        if (eval_interval < 0) throw std::invalid_argument("eval_interval: must be >= 0");
        if (checkpoint_interval < 0)
            throw std::invalid_argument("checkpoint_interval: must be >= 0");
        if (eval_samples < 1) throw std::invalid_argument("eval_samples: must be >= 1");
        if (sample_steps < 1) throw std::invalid_argument("sample_steps: must be >= 1");
        if (!(sample_rho > 0.0)) throw std::invalid_argument("sample_rho: must be > 0");
        if (dataset.kind == "two_texture") {
            if (model.image_size != dataset.image_size)
                throw std::invalid_argument(
                    "dataset.image_size: must match model.image_size for two_texture");
            if (model.channels != 1)
                throw std::invalid_argument("model.channels: two_texture images have 1 channel");
            if (model.n_classes != 2)
                throw std::invalid_argument("model.n_classes: two_texture has 2 classes");
        }
        if (dataset.kind == "directory" && !std::filesystem::exists(dataset.path))
            throw std::invalid_argument("dataset.path: " + dataset.path + " does not exist");
    }
};

namespace detail {

/// Consumes keys from one JSON object level; leftovers are unknown keys.
class JsonReader {
  public:
    JsonReader(json obj, std::string prefix) : obj_(std::move(obj)), prefix_(std::move(prefix)) {
        if (!obj_.is_object()) throw std::invalid_argument(where("") + "expected an object");
    }

    template <typename T>
    void number(const char* key, T& out) {
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        if (!it->is_number()) throw std::invalid_argument(where(key) + "expected a number");
        out = it->get<T>();
        obj_.erase(it);
    }

    void integer(const char* key, Index& out) {
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        if (!it->is_number_integer()) throw std::invalid_argument(where(key) + "expected an integer");
        out = it->get<Index>();
        obj_.erase(it);
    }

    void integer64(const char* key, int64_t& out) {
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        if (!it->is_number_integer()) throw std::invalid_argument(where(key) + "expected an integer");
        out = it->get<int64_t>();
        obj_.erase(it);
    }

    void integer32(const char* key, int& out) {
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        if (!it->is_number_integer()) throw std::invalid_argument(where(key) + "expected an integer");
        out = it->get<int>();
        obj_.erase(it);
    }

    void unsigned64(const char* key, uint64_t& out) {
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        if (!it->is_number_unsigned() && !it->is_number_integer())
            throw std::invalid_argument(where(key) + "expected a non-negative integer");
        if (it->is_number_integer() && it->get<int64_t>() < 0)
            throw std::invalid_argument(where(key) + "expected a non-negative integer");
        out = it->get<uint64_t>();
        obj_.erase(it);
    }

    void boolean(const char* key, bool& out) {
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        if (!it->is_boolean()) throw std::invalid_argument(where(key) + "expected a boolean");
        out = it->get<bool>();
        obj_.erase(it);
    }

    void string(const char* key, std::string& out) {
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        if (!it->is_string()) throw std::invalid_argument(where(key) + "expected a string");
        out = it->get<std::string>();
        obj_.erase(it);
    }

    bool take(const char* key, json& out) {
        auto it = obj_.find(key);
        if (it == obj_.end()) return false;
        out = *it;
        obj_.erase(it);
        return true;
    }

    void done() {
        if (!obj_.empty())
            throw std::invalid_argument("unknown config key: " + prefix_ + obj_.begin().key());
    }

  private:
    std::string where(const char* key) const { return prefix_ + std::string(key) + ": "; }

    json obj_;
    std::string prefix_;
};

}  // namespace detail

inline RunConfig config_from_json(const json& root) {
    RunConfig cfg;
    detail::JsonReader top(root, "");

    json sub;
    if (top.take("model", sub)) {
        detail::JsonReader r(sub, "model.");
        r.integer("embed_dim", cfg.model.embed_dim);
        r.integer("depth_encoder", cfg.model.depth_encoder);
        r.integer("depth_decoder", cfg.model.depth_decoder);
        r.integer("n_heads", cfg.model.n_heads);
        r.integer("patch_size", cfg.model.patch_size);
        r.integer("n_classes", cfg.model.n_classes);
        r.integer("proj_dim", cfg.model.proj_dim);
        r.integer("proj_hidden", cfg.model.proj_hidden);
        r.integer("channels", cfg.model.channels);
        r.integer("image_size", cfg.model.image_size);
        r.done();
    }
    if (top.take("noise", sub)) {
        detail::JsonReader r(sub, "noise.");
        r.number("sigma_min", cfg.noise.sigma_min);
        r.number("sigma_max", cfg.noise.sigma_max);
        r.number("sigma_data", cfg.noise.sigma_data);
        r.number("p_mean", cfg.noise.p_mean);
        r.number("p_std", cfg.noise.p_std);
        r.done();
    }
    if (top.take("temps", sub)) {
        detail::JsonReader r(sub, "temps.");
        r.number("tau_s", cfg.temps.tau_s);
        r.number("tau_t_start", cfg.temps.tau_t_start);
        r.number("tau_t_end", cfg.temps.tau_t_end);
        r.integer32("warmup_epochs", cfg.temps.warmup_epochs);
        r.done();
    }
    if (top.take("ema", sub)) {
        detail::JsonReader r(sub, "ema.");
        r.number("beta_start", cfg.ema.beta_start);
        r.number("beta_end", cfg.ema.beta_end);
        r.done();
    }
    if (top.take("centers", sub)) {
        detail::JsonReader r(sub, "centers.");
        r.number("m_c", cfg.center_m_c);
        r.number("m_p", cfg.center_m_p);
        r.done();
    }
    if (top.take("dataset", sub)) {
        detail::JsonReader r(sub, "dataset.");
        r.string("kind", cfg.dataset.kind);
        r.string("path", cfg.dataset.path);
        r.integer("size", cfg.dataset.size);
        r.integer("image_size", cfg.dataset.image_size);
        r.done();
    }
    top.number("mask_ratio", cfg.mask_ratio);
    if (json v; top.take("teacher_sigma_mode", v)) {
        if (v.is_string()) {
            std::string s = v.get<std::string>();
            if (s == "fixed_min")
                cfg.teacher_sigma_mode = TeacherSigmaMode::kFixedMin;
            else if (s == "same_as_student")
                cfg.teacher_sigma_mode = TeacherSigmaMode::kSameAsStudent;
            else
                throw std::invalid_argument(
                    "teacher_sigma_mode: expected fixed_min, same_as_student, or a number");
        } else if (v.is_number()) {
            cfg.teacher_sigma_mode  = TeacherSigmaMode::kFixedValue;
            cfg.teacher_sigma_value = v.get<double>();
        } else {
            throw std::invalid_argument(
                "teacher_sigma_mode: expected fixed_min, same_as_student, or a number");
        }
    }
    top.boolean("disable_L_D", cfg.disable_l_d);
    top.boolean("edm_weighted_loss", cfg.edm_weighted_loss);
    top.integer64("total_steps", cfg.total_steps);
    top.integer("batch_size", cfg.batch_size);
    top.number("lr", cfg.lr);
    top.unsigned64("seed", cfg.seed);
    top.integer64("eval_interval", cfg.eval_interval);
    top.integer64("checkpoint_interval", cfg.checkpoint_interval);
    top.integer("eval_samples", cfg.eval_samples);
    top.integer32("sample_steps", cfg.sample_steps);
    top.number("sample_rho", cfg.sample_rho);
    top.string("out_dir", cfg.out_dir);
    top.done();

    cfg.validate();
    return cfg;
}

inline json config_to_json(const RunConfig& cfg) {
    json j;
    j["model"] = {{"embed_dim", cfg.model.embed_dim},
                  {"depth_encoder", cfg.model.depth_encoder},
                  {"depth_decoder", cfg.model.depth_decoder},
                  {"n_heads", cfg.model.n_heads},
                  {"patch_size", cfg.model.patch_size},
                  {"n_classes", cfg.model.n_classes},
                  {"proj_dim", cfg.model.proj_dim},
                  {"proj_hidden", cfg.model.proj_hidden},
                  {"channels", cfg.model.channels},
                  {"image_size", cfg.model.image_size}};
    j["noise"] = {{"sigma_min", cfg.noise.sigma_min},
                  {"sigma_max", cfg.noise.sigma_max},
                  {"sigma_data", cfg.noise.sigma_data},
                  {"p_mean", cfg.noise.p_mean},
                  {"p_std", cfg.noise.p_std}};
    j["temps"] = {{"tau_s", cfg.temps.tau_s},
                  {"tau_t_start", cfg.temps.tau_t_start},
                  {"tau_t_end", cfg.temps.tau_t_end},
                  {"warmup_epochs", cfg.temps.warmup_epochs}};
    j["ema"]     = {{"beta_start", cfg.ema.beta_start}, {"beta_end", cfg.ema.beta_end}};
    j["centers"] = {{"m_c", cfg.center_m_c}, {"m_p", cfg.center_m_p}};
    j["dataset"] = {{"kind", cfg.dataset.kind},
                    {"path", cfg.dataset.path},
                    {"size", cfg.dataset.size},
                    {"image_size", cfg.dataset.image_size}};
    j["mask_ratio"] = cfg.mask_ratio;
    switch (cfg.teacher_sigma_mode) {
        case TeacherSigmaMode::kFixedMin: j["teacher_sigma_mode"] = "fixed_min"; break;
        case TeacherSigmaMode::kSameAsStudent: j["teacher_sigma_mode"] = "same_as_student"; break;
        case TeacherSigmaMode::kFixedValue: j["teacher_sigma_mode"] = cfg.teacher_sigma_value; break;
    }
    j["disable_L_D"]         = cfg.disable_l_d;
    j["edm_weighted_loss"]   = cfg.edm_weighted_loss;
    j["total_steps"]         = cfg.total_steps;
    j["batch_size"]          = cfg.batch_size;
    j["lr"]                  = cfg.lr;
    j["seed"]                = cfg.seed;
    j["eval_interval"]       = cfg.eval_interval;
    j["checkpoint_interval"] = cfg.checkpoint_interval;
    j["eval_samples"]        = cfg.eval_samples;
    j["sample_steps"]        = cfg.sample_steps;
    j["sample_rho"]          = cfg.sample_rho;
    j["out_dir"]             = cfg.out_dir;
    return j;
}

/// Reads a config file (missing/empty file = all defaults) and applies CLI
/// overrides as a JSON merge patch. Overrides win over file values.
inline RunConfig parse_config(const std::string& path, const json& overrides = json::object()) {
    json root = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config: cannot open " + path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
            root = json::parse(text);
            if (!root.is_object()) throw std::invalid_argument("config: top level must be an object");
        }
    }
    root.merge_patch(overrides);
    return config_from_json(root);
}

inline void write_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("config: cannot write " + path);
    out << config_to_json(cfg).dump(2) << "\n";
}

}  // namespace ddit
