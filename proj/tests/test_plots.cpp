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

#include "ddit/plots.hpp"

using namespace ddit;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("write_line_chart basics", "[plots]") {
    fs::path dir = fs::temp_directory_path() / "ddit_plots";
    fs::create_directories(dir);
    SECTION("chart with data is written and is valid-looking SVG") {
        ChartSpec spec;
        spec.title   = "demo";
        spec.x_label = "x";
        spec.y_label = "y";
        spec.series  = {{"a", {0, 1, 2, 3}, {1.0, 0.5, 0.25, 0.125}}};
        fs::path p = dir / "demo.svg";
        CHECK(write_line_chart(p.string(), spec));
        std::string svg = slurp(p);
        CHECK(svg.find("<svg") != std::string::npos);
        CHECK(svg.find("polyline") != std::string::npos);
        CHECK(svg.find("demo") != std::string::npos);
    }
    SECTION("empty series set is omitted without a crash") {
        ChartSpec spec;
        spec.series = {{"empty", {}, {}}};
        fs::path p  = dir / "none.svg";
        CHECK_FALSE(write_line_chart(p.string(), spec));
        CHECK_FALSE(fs::exists(p));
    }
    SECTION("re-running writes identical bytes") {
        ChartSpec spec;
        spec.title  = "idem";
        spec.series = {{"a", {0, 1, 2}, {3.0, 1.0, 2.0}}};
        spec.ref_lines = {{"ref", 2.5}};
        fs::path p = dir / "idem.svg";
        REQUIRE(write_line_chart(p.string(), spec));
        std::string first = slurp(p);
        REQUIRE(write_line_chart(p.string(), spec));
        CHECK(slurp(p) == first);
    }
    SECTION("unwritable path errors") {
        ChartSpec spec;
        spec.series = {{"a", {0, 1}, {0.0, 1.0}}};
        CHECK_THROWS_AS(write_line_chart("/nonexistent_dir_xyz/c.svg", spec), std::runtime_error);
    }
    fs::remove_all(dir);
}

TEST_CASE("tile_grid assembles separated tiles", "[plots]") {
    std::vector<Array> imgs;
    for (int i = 0; i < 3; ++i) {
        Array a{{1, 2, 2}};
        a.data.setConstant(-1.0 + i * 0.5);
        imgs.push_back(a);
    }
    Array grid = tile_grid(imgs, 2, 4);
    // 2 rows x 2 cols of 8x8 tiles with 1px separators
    CHECK(grid.shape == std::vector<Index>{1, 2 * 9 + 1, 2 * 9 + 1});
    CHECK(grid.data[0] == 1.0);                    // separator pixel
    CHECK(grid.data[1 * 19 + 1] == Approx(-1.0));  // first tile content
}

TEST_CASE("emit_plots renders whatever logs exist", "[plots]") {
    fs::path run = fs::temp_directory_path() / "ddit_run_plots";
    fs::remove_all(run);
    fs::create_directories(run);

    SECTION("no logs: nothing written, no crash") {
        CHECK(emit_plots(run.string()).empty());
    }
    SECTION("metrics log produces the loss chart") {
        {
            MetricsWriter w((run / "metrics.ndjson").string());
            for (int i = 0; i < 5; ++i) {
                StepMetrics m;
                m.step            = i;
                m.l_g             = 1.0 / (1 + i);
                m.l_d_cls         = 0.5;
                m.l_d_patch       = 0.25;
                m.teacher_entropy = 3.0;
                w.append(m);
            }
        }
        auto written = emit_plots(run.string());
        CHECK(fs::exists(run / "plots" / "loss_vs_step.svg"));
        CHECK(fs::exists(run / "plots" / "teacher_entropy_vs_step.svg"));
        CHECK_FALSE(fs::exists(run / "plots" / "fid_vs_step.svg"));  // no eval log
        // idempotent re-run
        std::string before = slurp(run / "plots" / "loss_vs_step.svg");
        emit_plots(run.string());
        CHECK(slurp(run / "plots" / "loss_vs_step.svg") == before);
    }
    SECTION("sweep summary produces an ascending-x chart with ref lines") {
        json summary;
        summary["param"] = "teacher_sigma";
        summary["entries"] = json::array({{{"value", 80.0}, {"fid", 60.0}},
                                          {{"value", 0.002}, {"fid", 50.0}},
                                          {{"value", "same_as_student"}, {"fid", 63.0}},
                                          {{"value", 0.5}, {"fid", 66.0}}});
        std::ofstream(run / "sweep_teacher_sigma.json") << summary.dump();
        emit_plots(run.string());
        std::string svg = slurp(run / "plots" / "sweep_teacher_sigma.svg");
        REQUIRE(!svg.empty());
        CHECK(svg.find("same_as_student") != std::string::npos);
        // x ascending: the 0.002 point must be plotted left of the 80 point
        size_t poly = svg.find("<polyline");
        size_t pts  = svg.find("points=\"", poly);
        std::string coords = svg.substr(pts + 8, svg.find('"', pts + 8) - pts - 8);
        double first_x = std::stod(coords);
        size_t last_space = coords.find_last_of(' ', coords.size() - 2);
        double last_x = std::stod(coords.substr(last_space + 1));
        CHECK(first_x < last_x);
    }
    SECTION("sample files produce a grid image") {
        fs::create_directories(run / "samples");
        for (int i = 0; i < 4; ++i) {
            Array a{{1, 4, 4}};
            a.data.setConstant(i * 0.3 - 0.5);
            save_image((run / "samples" / ("sample_class0_" + std::to_string(i) + ".pgm")).string(), a);
        }
        emit_plots(run.string());
        CHECK(fs::exists(run / "plots" / "samples_grid.pgm"));
    }
    fs::remove_all(run);
}
