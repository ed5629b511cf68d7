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
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "ddit/common.hpp"

// Lossless binary PGM (P5, 1 channel) and PPM (P6, 3 channels) containers.
// Model space is [-1, 1]; 8-bit codes map linearly with 255 -> 1.0.

namespace ddit {

inline double pixel_to_model(unsigned char v) { return static_cast<double>(v) / 127.5 - 1.0; }

inline unsigned char model_to_pixel(double x) {
    double v = std::round((x + 1.0) * 127.5);
    return static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
}

/// Writes (1,H,W) as PGM or (3,H,W) as PPM.
inline void save_image(const std::string& path, const Array& img) {
    if (img.shape.size() != 3 || (img.shape[0] != 1 && img.shape[0] != 3))
        throw std::invalid_argument("save_image: expected (1,H,W) or (3,H,W)");
    const Index c = img.shape[0], h = img.shape[1], w = img.shape[2];
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_image: cannot open " + path);
    out << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            for (Index ch = 0; ch < c; ++ch)
                out.put(static_cast<char>(model_to_pixel(img.data[(ch * h + y) * w + x])));
    if (!out) throw std::runtime_error("save_image: write failed for " + path);
}

namespace detail {

inline int next_pnm_int(std::istream& in) {
    // skip whitespace and '#' comments
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (!std::isspace(ch)) {
            break;
        }
        ch = in.get();
    }
    if (ch == EOF) throw std::runtime_error("pnm: truncated header");
    int value = 0;
    while (ch != EOF && std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        ch    = in.get();
    }
    return value;
}

}  // namespace detail

/// Reads a binary PGM/PPM into model space.
inline Array load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_image: cannot open " + path);
    char m0 = static_cast<char>(in.get()), m1 = static_cast<char>(in.get());
    Index channels;
    if (m0 == 'P' && m1 == '5')
        channels = 1;
    else if (m0 == 'P' && m1 == '6')
        channels = 3;
    else
        throw std::runtime_error("load_image: " + path + " is not binary PGM/PPM");
    Index w      = detail::next_pnm_int(in);
    Index h      = detail::next_pnm_int(in);
    int maxval   = detail::next_pnm_int(in);
    if (w < 1 || h < 1) throw std::runtime_error("load_image: bad dimensions in " + path);
    if (maxval != 255) throw std::runtime_error("load_image: only maxval 255 supported: " + path);

    Array img{{channels, h, w}};
    std::string buf(static_cast<size_t>(channels * h * w), '\0');
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw std::runtime_error("load_image: truncated pixel data in " + path);
    size_t k = 0;
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            for (Index ch = 0; ch < channels; ++ch)
                img.data[(ch * h + y) * w + x] = pixel_to_model(static_cast<unsigned char>(buf[k++]));
    return img;
}

}  // namespace ddit
