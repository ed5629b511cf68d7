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

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index  = Eigen::Index;

/// Dense n-dimensional array of doubles. Shape is row-major; images use
/// (channels, height, width).
struct Array {
    std::vector<Index> shape;
    Vector data;

    Array() = default;
    explicit Array(std::vector<Index> s)
        : shape(std::move(s)), data(Vector::Zero(numel_of(shape))) {}
    Array(std::vector<Index> s, Vector d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel_of(shape))
            throw std::invalid_argument("Array: data size does not match shape");
    }

    static Index numel_of(const std::vector<Index>& s) {
        return std::accumulate(s.begin(), s.end(), Index{1}, std::multiplies<Index>());
    }

    Index numel() const { return data.size(); }
    bool finite() const { return data.allFinite(); }
    bool same_shape(const Array& o) const { return shape == o.shape; }

    double& operator[](Index i) { return data[i]; }
    double operator[](Index i) const { return data[i]; }
};

inline bool operator==(const Array& a, const Array& b) {
    return a.shape == b.shape && (a.data.array() == b.data.array()).all();
}

inline std::string shape_str(const std::vector<Index>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

}  // namespace ddit
