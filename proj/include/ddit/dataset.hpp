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
#include <filesystem>
#include <string>
#include <vector>

#include "ddit/common.hpp"
#include "ddit/image_io.hpp"
#include "ddit/rng.hpp"

// Tiny in-memory datasets: a synthetic two-texture generator with known class
// statistics, and a directory loader for class-labeled PGM/PPM images.
// Shuffling is a pure function of (seed, epoch), so batch assembly needs no
// mutable iterator state and resumes are exact.

namespace ddit {

struct DatasetSpec {
    std::string kind = "two_texture";  // two_texture | directory
    std::string path;                  // directory root when kind == directory
    Index size       = 1024;           // synthetic example count
    Index image_size = 8;              // synthetic image side

    void validate() const {
        if (kind != "two_texture" && kind != "directory")
            throw std::invalid_argument("dataset.kind: must be two_texture or directory");
        if (kind == "two_texture" && size < 1)
            throw std::invalid_argument("dataset.size: must be >= 1");
        if (kind == "directory" && path.empty())
            throw std::invalid_argument("dataset.path: required for directory datasets");
    }
};

struct Example {
    Array x;
    Index label;
};

class Dataset {
  public:
    /// Class 0: horizontal stripes, class 1: vertical stripes, both at
    /// amplitude 0.5 with Gaussian pixel noise (std 0.2), clamped to [-1,1].
    static Dataset two_texture(Index size, Index image_size, uint64_t seed) {
        if (size < 1) throw std::invalid_argument("two_texture: size must be >= 1");
        Dataset d;
        d.n_classes_ = 2;
        d.examples_.reserve(static_cast<size_t>(size));
        const double amp = 0.5, noise = 0.2;
        for (Index i = 0; i < size; ++i) {
            Index label = i % 2;
            RngStream rng = named_stream(seed, "two_texture", static_cast<uint64_t>(i));
            Array img{{1, image_size, image_size}};
            for (Index y = 0; y < image_size; ++y)
                for (Index x = 0; x < image_size; ++x) {
                    double stripe = ((label == 0 ? y : x) % 2 == 0) ? amp : -amp;
                    img.data[y * image_size + x] =
                        std::clamp(stripe + noise * rng.normal(), -1.0, 1.0);
                }
            d.examples_.push_back({std::move(img), label});
        }
        return d;
    }

    /// Directory layout: root/<class_name>/*.pgm|*.ppm; class names sorted
    /// lexicographically map to labels 0..C-1. All images must share one size.
    static Dataset from_directory(const std::string& root, Index expected_classes = 0) {
        namespace fs = std::filesystem;
        if (!fs::is_directory(root))
            throw std::runtime_error("dataset: " + root + " is not a directory");
        std::vector<std::string> class_dirs;
        for (const auto& e : fs::directory_iterator(root))
            if (e.is_directory()) class_dirs.push_back(e.path().filename().string());
        std::sort(class_dirs.begin(), class_dirs.end());
        if (class_dirs.empty()) throw std::runtime_error("dataset: no class directories in " + root);
        if (expected_classes > 0 && static_cast<Index>(class_dirs.size()) != expected_classes)
            throw std::runtime_error("dataset: found " + std::to_string(class_dirs.size()) +
                                     " class directories in " + root + ", expected " +
                                     std::to_string(expected_classes));

        Dataset d;
        d.n_classes_ = static_cast<Index>(class_dirs.size());
        for (size_t label = 0; label < class_dirs.size(); ++label) {
            std::vector<std::string> files;
            for (const auto& e : fs::directory_iterator(fs::path(root) / class_dirs[label])) {
                std::string ext = e.path().extension().string();
                if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path().string());
            }
            std::sort(files.begin(), files.end());
            if (files.empty())
                throw std::runtime_error("dataset: class directory " + class_dirs[label] +
                                         " holds no .pgm/.ppm images");
            for (const std::string& f : files) {
                Array img = load_image(f);
                if (!d.examples_.empty() && img.shape != d.examples_.front().x.shape)
                    throw std::runtime_error("dataset: mixed image sizes (" + f + ")");
                d.examples_.push_back({std::move(img), static_cast<Index>(label)});
            }
        }
        return d;
    }

    Index size() const { return static_cast<Index>(examples_.size()); }
    Index n_classes() const { return n_classes_; }
    const Example& at(Index i) const { return examples_[static_cast<size_t>(i)]; }
    const std::vector<Index>& shape() const { return examples_.front().x.shape; }

    /// Deterministic permutation for one epoch.
    std::vector<Index> epoch_order(uint64_t seed, int64_t epoch) const {
        std::vector<Index> order(static_cast<size_t>(size()));
        for (Index i = 0; i < size(); ++i) order[static_cast<size_t>(i)] = i;
        RngStream rng = named_stream(seed, "shuffle", static_cast<uint64_t>(epoch));
        for (Index i = size() - 1; i > 0; --i) {
            Index j = static_cast<Index>(rng.uniform_below(static_cast<uint64_t>(i) + 1));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }
        return order;
    }

    /// Batch for a given training step, cycling deterministically over epochs.
    std::vector<const Example*> batch(uint64_t seed, int64_t step, Index batch_size) const {
        if (batch_size < 1) throw std::invalid_argument("batch: batch_size must be >= 1");
        std::vector<const Example*> out;
        out.reserve(static_cast<size_t>(batch_size));
        int64_t cursor = step * batch_size;
        int64_t epoch  = cursor / size();
        std::vector<Index> order = epoch_order(seed, epoch);
        for (Index i = 0; i < batch_size; ++i) {
            int64_t pos = cursor + i;
            if (pos / size() != epoch) {
                epoch = pos / size();
                order = epoch_order(seed, epoch);
            }
            out.push_back(&examples_[static_cast<size_t>(order[static_cast<size_t>(pos % size())])]);
        }
        return out;
    }

    double epoch_of_step(int64_t step, Index batch_size) const {
        return static_cast<double>(step) * static_cast<double>(batch_size) /
               static_cast<double>(size());
    }

    /// Empirical per-class pixel mean.
    Vector class_mean(Index label) const {
        Vector mean = Vector::Zero(examples_.front().x.numel());
        Index count = 0;
        for (const Example& e : examples_)
            if (e.label == label) {
                mean += e.x.data;
                count++;
            }
        if (count == 0) throw std::invalid_argument("class_mean: no examples with that label");
        return mean / static_cast<double>(count);
    }

  private:
    std::vector<Example> examples_;
    Index n_classes_ = 0;
};

inline Dataset load_dataset(const DatasetSpec& spec, uint64_t seed, Index expected_classes = 0) {
    spec.validate();
    if (spec.kind == "two_texture") return Dataset::two_texture(spec.size, spec.image_size, seed);
    return Dataset::from_directory(spec.path, expected_classes);
}

}  // namespace ddit
