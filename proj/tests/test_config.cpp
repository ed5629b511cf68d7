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

#include <catch2/catch.hpp>
#include <filesystem>
#include <fstream>

#include "ddit/config.hpp"

using namespace ddit;
namespace fs = std::filesystem;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
    fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << text;
    return p.string();
}

}  // namespace

TEST_CASE("empty file yields all defaults", "[config]") {
    std::string p = write_temp("ddit_empty.json", "");
    RunConfig cfg = parse_config(p);
    CHECK(cfg.model.embed_dim == 64);
    CHECK(cfg.model.depth_decoder == 8);
    CHECK(cfg.noise.sigma_min == 0.002);
    CHECK(cfg.noise.sigma_max == 80.0);
    CHECK(cfg.noise.sigma_data == 0.5);
    CHECK(cfg.temps.tau_s == 0.1);
    CHECK(cfg.temps.tau_t_start == 0.09);
    CHECK(cfg.temps.tau_t_end == 0.099);
    CHECK(cfg.ema.beta_start == 0.996);
    CHECK(cfg.ema.beta_end == 0.999);
    CHECK(cfg.mask_ratio == 0.2);
    CHECK(cfg.teacher_sigma_mode == TeacherSigmaMode::kFixedMin);
    CHECK(cfg.lr == 1e-4);
    CHECK(cfg.dataset.kind == "two_texture");
    CHECK(cfg.sample_steps == 40);
    CHECK(cfg.sample_rho == 7.0);
}

TEST_CASE("unknown keys are rejected with their path", "[config]") {
    SECTION("top level") {
        std::string p = write_temp("ddit_unknown.json", R"({"mask_ration": 0.3})");
        CHECK_THROWS_WITH(parse_config(p), Catch::Matchers::Contains("mask_ration"));
    }
    SECTION("nested") {
        std::string p = write_temp("ddit_unknown2.json", R"({"model": {"embed_dims": 32}})");
        CHECK_THROWS_WITH(parse_config(p), Catch::Matchers::Contains("model.embed_dims"));
    }
}

TEST_CASE("range errors name the key", "[config]") {
    SECTION("mask_ratio out of range") {
        std::string p = write_temp("ddit_range.json", R"({"mask_ratio": 1.5})");
        CHECK_THROWS_WITH(parse_config(p), Catch::Matchers::Contains("mask_ratio"));
    }
    SECTION("type error names the key") {
        std::string p = write_temp("ddit_type.json", R"({"model": {"embed_dim": "big"}})");
        CHECK_THROWS_WITH(parse_config(p), Catch::Matchers::Contains("model.embed_dim"));
    }
    SECTION("teacher fixed sigma outside the noise range") {
        std::string p = write_temp("ddit_ts.json", R"({"teacher_sigma_mode": 100.0})");
        CHECK_THROWS_WITH(parse_config(p), Catch::Matchers::Contains("teacher_sigma_mode"));
    }
}

TEST_CASE("override precedence: CLI wins over the file", "[config]") {
    std::string p = write_temp("ddit_prec.json", R"({"mask_ratio": 0.5, "total_steps": 77})");
    json overrides{{"mask_ratio", 0.2}};
    RunConfig cfg = parse_config(p, overrides);
    CHECK(cfg.mask_ratio == 0.2);
    CHECK(cfg.total_steps == 77);
}

TEST_CASE("round-trip: serialize(parse(f)) parses to an equal config", "[config]") {
    std::string p = write_temp("ddit_rt.json", R"({
        "model": {"embed_dim": 32, "depth_encoder": 2, "n_heads": 4},
        "teacher_sigma_mode": 0.5,
        "mask_ratio": 0.4,
        "seed": 123,
        "disable_L_D": true
    })");
    RunConfig a = parse_config(p);
    json ser    = config_to_json(a);
    RunConfig b = config_from_json(ser);
    CHECK(config_to_json(b) == ser);
    CHECK(b.teacher_sigma_mode == TeacherSigmaMode::kFixedValue);
    CHECK(b.teacher_sigma_value == 0.5);
    CHECK(b.disable_l_d);
}

TEST_CASE("teacher sigma modes parse from string or number", "[config]") {
    std::string p1 = write_temp("ddit_m1.json", R"({"teacher_sigma_mode": "fixed_min"})");
    CHECK(parse_config(p1).teacher_sigma_mode == TeacherSigmaMode::kFixedMin);
    std::string p2 = write_temp("ddit_m2.json", R"({"teacher_sigma_mode": "same_as_student"})");
    CHECK(parse_config(p2).teacher_sigma_mode == TeacherSigmaMode::kSameAsStudent);
    std::string p3 = write_temp("ddit_m3.json", R"({"teacher_sigma_mode": "sometimes"})");
    CHECK_THROWS_AS(parse_config(p3), std::invalid_argument);
}

TEST_CASE("directory datasets require an existing path", "[config]") {
    std::string p = write_temp("ddit_dir.json",
                               R"({"dataset": {"kind": "directory", "path": "/nonexistent_xyz"},
                                   "model": {"n_classes": 3}})");
    CHECK_THROWS_WITH(parse_config(p), Catch::Matchers::Contains("does not exist"));
}
