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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ddit/image_io.hpp"
#include "ddit/train.hpp"

// Plot emission without external tooling: line charts as self-contained SVG
// text (byte-deterministic, so re-running overwrites identically) and sample
// grids as upscaled PGM/PPM tiles.
//
// Stable file names under <run_dir>/plots/:
//   loss_vs_step.svg, teacher_entropy_vs_step.svg, fid_vs_step.svg,
//   sweep_<param>.svg, samples_grid.pgm|ppm

namespace ddit {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct RefLine {
    std::string label;
    double y = 0.0;
};

struct ChartSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    std::vector<RefLine> ref_lines;
    bool log_x = false;
    bool log_y = false;
};

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

inline std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b"};

}  // namespace detail

/// Writes a line chart; returns false (and writes nothing) when no series has
/// at least one point.
inline bool write_line_chart(const std::string& path, const ChartSpec& spec) {
    std::vector<Series> drawable;
    for (const Series& s : spec.series) {
        if (s.x.size() != s.y.size()) throw std::invalid_argument("chart: x/y length mismatch");
        if (!s.x.empty()) drawable.push_back(s);
    }
    if (drawable.empty() && spec.ref_lines.empty()) return false;

    auto tx = [&](double v) { return spec.log_x ? std::log10(std::max(v, 1e-300)) : v; };
    auto ty = [&](double v) { return spec.log_y ? std::log10(std::max(v, 1e-300)) : v; };

    double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
    for (const Series& s : drawable)
        for (size_t i = 0; i < s.x.size(); ++i) {
            x_min = std::min(x_min, tx(s.x[i]));
            x_max = std::max(x_max, tx(s.x[i]));
            y_min = std::min(y_min, ty(s.y[i]));
            y_max = std::max(y_max, ty(s.y[i]));
        }
    for (const RefLine& r : spec.ref_lines) {
        y_min = std::min(y_min, ty(r.y));
        y_max = std::max(y_max, ty(r.y));
    }
    if (drawable.empty()) {
        x_min = 0.0;
        x_max = 1.0;
    }
    if (x_max <= x_min) x_max = x_min + 1.0;
    if (y_max <= y_min) y_max = y_min + 1.0;
    double y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    const double w = 720, h = 440, ml = 80, mr = 24, mt = 44, mb = 56;
    auto px = [&](double v) { return ml + (tx(v) - x_min) / (x_max - x_min) * (w - ml - mr); };
    auto py = [&](double v) { return h - mb - (ty(v) - y_min) / (y_max - y_min) * (h - mt - mb); };

    std::ofstream out(path);
    if (!out) throw std::runtime_error("chart: cannot write " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">"
        << spec.title << "</text>\n";

    // axes box and ticks
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << w - ml - mr << "\" height=\""
        << h - mt - mb << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        double fx = x_min + (x_max - x_min) * i / 5.0;
        double fy = y_min + (y_max - y_min) * i / 5.0;
        double gx = ml + (w - ml - mr) * i / 5.0;
        double gy = h - mb - (h - mt - mb) * i / 5.0;
        double label_x = spec.log_x ? std::pow(10.0, fx) : fx;
        double label_y = spec.log_y ? std::pow(10.0, fy) : fy;
        out << "<line x1=\"" << gx << "\" y1=\"" << h - mb << "\" x2=\"" << gx << "\" y2=\""
            << h - mb + 5 << "\" stroke=\"#333\"/>\n";
        out << "<text x=\"" << gx << "\" y=\"" << h - mb + 18 << "\" text-anchor=\"middle\">"
            << detail::fmt(label_x) << "</text>\n";
        out << "<line x1=\"" << ml - 5 << "\" y1=\"" << gy << "\" x2=\"" << ml << "\" y2=\"" << gy
            << "\" stroke=\"#333\"/>\n";
        out << "<text x=\"" << ml - 8 << "\" y=\"" << gy + 4 << "\" text-anchor=\"end\">"
            << detail::fmt(label_y) << "</text>\n";
    }
    out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
        << "\" text-anchor=\"middle\">" << spec.x_label << "</text>\n";
    out << "<text x=\"18\" y=\"" << (mt + h - mb) / 2
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << (mt + h - mb) / 2 << ")\">"
        << spec.y_label << "</text>\n";

    for (const RefLine& r : spec.ref_lines) {
        double gy = py(r.y);
        out << "<line x1=\"" << ml << "\" y1=\"" << detail::fmt2(gy) << "\" x2=\"" << w - mr
            << "\" y2=\"" << detail::fmt2(gy)
            << "\" stroke=\"#888\" stroke-dasharray=\"6,4\"/>\n";
        out << "<text x=\"" << w - mr - 4 << "\" y=\"" << detail::fmt2(gy - 4)
            << "\" text-anchor=\"end\" fill=\"#666\">" << r.label << "</text>\n";
    }

    for (size_t si = 0; si < drawable.size(); ++si) {
        const Series& s   = drawable[si];
        const char* color = detail::kPalette[si % 6];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < s.x.size(); ++i)
            out << detail::fmt2(px(s.x[i])) << "," << detail::fmt2(py(s.y[i])) << " ";
        out << "\"/>\n";
        if (s.x.size() <= 24)  // mark sparse series
            for (size_t i = 0; i < s.x.size(); ++i)
                out << "<circle cx=\"" << detail::fmt2(px(s.x[i])) << "\" cy=\""
                    << detail::fmt2(py(s.y[i])) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        double ly = mt + 16 + 16 * static_cast<double>(si);
        out << "<line x1=\"" << w - mr - 130 << "\" y1=\"" << ly - 4 << "\" x2=\"" << w - mr - 110
            << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << w - mr - 104 << "\" y=\"" << ly << "\">" << s.label << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw std::runtime_error("chart: write failed for " + path);
    return true;
}

/// Tiles equally-sized images into one grid image with a 1-pixel separator,
/// nearest-neighbor upscaled.
inline Array tile_grid(const std::vector<Array>& images, Index cols, Index upscale = 8) {
    if (images.empty()) throw std::invalid_argument("tile_grid: no images");
    const auto shape = images[0].shape;
    for (const Array& a : images)
        if (a.shape != shape) throw std::invalid_argument("tile_grid: mixed shapes");
    const Index c = shape[0], ih = shape[1], iw = shape[2];
    const Index rows = (static_cast<Index>(images.size()) + cols - 1) / cols;
    const Index th = rows * (ih * upscale + 1) + 1, tw = cols * (iw * upscale + 1) + 1;
    Array grid{{c, th, tw}};
    grid.data.setConstant(1.0);  // white separators
    for (size_t k = 0; k < images.size(); ++k) {
        Index r0 = 1 + (static_cast<Index>(k) / cols) * (ih * upscale + 1);
        Index c0 = 1 + (static_cast<Index>(k) % cols) * (iw * upscale + 1);
        for (Index ch = 0; ch < c; ++ch)
            for (Index y = 0; y < ih * upscale; ++y)
                for (Index x = 0; x < iw * upscale; ++x)
                    grid.data[(ch * th + r0 + y) * tw + c0 + x] =
                        images[k].data[(ch * ih + y / upscale) * iw + x / upscale];
    }
    return grid;
}

/// Renders every chart a run directory's logs support. Missing logs simply
/// omit their chart. Returns the list of files written.
inline std::vector<std::string> emit_plots(const std::string& run_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(run_dir)) throw std::runtime_error("emit_plots: no run dir " + run_dir);
    fs::path plots = fs::path(run_dir) / "plots";
    fs::create_directories(plots);
    std::vector<std::string> written;

    fs::path metrics_path = fs::path(run_dir) / "metrics.ndjson";
    if (fs::exists(metrics_path)) {
        std::vector<StepMetrics> ms = read_metrics(metrics_path.string());
        ChartSpec loss;
        loss.title   = "training losses";
        loss.x_label = "step";
        loss.y_label = "loss";
        Series lg{"L_G", {}, {}}, lc{"L_D_cls", {}, {}}, lp{"L_D_patch", {}, {}};
        Series ent{"teacher entropy", {}, {}};
        for (const StepMetrics& m : ms) {
            double s = static_cast<double>(m.step);
            lg.x.push_back(s);
            lg.y.push_back(m.l_g);
            lc.x.push_back(s);
            lc.y.push_back(m.l_d_cls);
            lp.x.push_back(s);
            lp.y.push_back(m.l_d_patch);
            ent.x.push_back(s);
            ent.y.push_back(m.teacher_entropy);
        }
        loss.series = {lg, lc, lp};
        if (write_line_chart((plots / "loss_vs_step.svg").string(), loss))
            written.push_back((plots / "loss_vs_step.svg").string());
        ChartSpec entropy;
        entropy.title   = "teacher entropy";
        entropy.x_label = "step";
        entropy.y_label = "entropy (nats)";
        entropy.series  = {ent};
        if (write_line_chart((plots / "teacher_entropy_vs_step.svg").string(), entropy))
            written.push_back((plots / "teacher_entropy_vs_step.svg").string());
    }

    fs::path eval_path = fs::path(run_dir) / "eval.ndjson";
    if (fs::exists(eval_path)) {
        std::ifstream in(eval_path);
        Series fid{"FID", {}, {}};
        std::string line;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            json j = json::parse(line);
            fid.x.push_back(j.at("step").get<double>());
            fid.y.push_back(j.at("fid").get<double>());
        }
        ChartSpec spec;
        spec.title   = "FID vs step (raw-pixel features)";
        spec.x_label = "step";
        spec.y_label = "FID";
        spec.series  = {fid};
        if (write_line_chart((plots / "fid_vs_step.svg").string(), spec))
            written.push_back((plots / "fid_vs_step.svg").string());
    }

    for (const char* param : {"teacher_sigma", "mask_ratio"}) {
        fs::path sweep_path = fs::path(run_dir) / (std::string("sweep_") + param + ".json");
        if (!fs::exists(sweep_path)) continue;
        std::ifstream in(sweep_path);
        json j = json::parse(in);
        struct Entry {
            double value;
            double fid;
        };
        std::vector<Entry> numeric;
        ChartSpec spec;
        for (const json& e : j.at("entries")) {
            if (e.at("value").is_number())
                numeric.push_back({e.at("value").get<double>(), e.at("fid").get<double>()});
            else
                spec.ref_lines.push_back(
                    {e.at("value").get<std::string>(), e.at("fid").get<double>()});
        }
        std::sort(numeric.begin(), numeric.end(),
                  [](const Entry& a, const Entry& b) { return a.value < b.value; });
        Series s{"FID", {}, {}};
        for (const Entry& e : numeric) {
            s.x.push_back(e.value);
            s.y.push_back(e.fid);
        }
        spec.title   = std::string("FID vs ") + param;
        spec.x_label = param;
        spec.y_label = "FID";
        spec.log_x   = std::string(param) == "teacher_sigma";
        spec.series  = {s};
        fs::path out = plots / (std::string("sweep_") + param + ".svg");
        if (write_line_chart(out.string(), spec)) written.push_back(out.string());
    }

    fs::path samples_dir = fs::path(run_dir) / "samples";
    if (fs::is_directory(samples_dir)) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(samples_dir)) {
            std::string ext = e.path().extension().string();
            if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path().string());
        }
        std::sort(files.begin(), files.end());
        if (!files.empty()) {
            std::vector<Array> images;
            images.reserve(files.size());
            for (const std::string& f : files) images.push_back(load_image(f));
            Index cols = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(images.size()))));
            Array grid = tile_grid(images, cols);
            fs::path out =
                plots / (images[0].shape[0] == 1 ? "samples_grid.pgm" : "samples_grid.ppm");
            save_image(out.string(), grid);
            written.push_back(out.string());
        }
    }
    return written;
}

}  // namespace ddit
