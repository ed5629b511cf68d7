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

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "ddit/common.hpp"

namespace ddit {

// All randomness flows through named streams derived from one master seed.
// mt19937_64 output and the uniform/normal transforms below are fully
// specified here, so sequences are reproducible across runs and platforms
// (std::*_distribution is implementation-defined and deliberately avoided).

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_name(const std::string& name) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Deterministic random stream. uniform01() maps the top 53 engine bits to
/// [0,1); normal() is a plain Box-Muller transform (sin branch discarded so
/// the stream carries no hidden state beyond the engine).
class RngStream {
  public:
    RngStream() : engine_(0) {}
    explicit RngStream(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double normal() {
        // u1 in (0,1] so the log is finite.
        double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    void fill_normal(Vector& v) {
        for (Index i = 0; i < v.size(); ++i) v[i] = normal();
    }

    Vector normal_vector(Index n) {
        Vector v(n);
        fill_normal(v);
        return v;
    }

    /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    uint64_t uniform_below(uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_below: n must be > 0");
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    static RngStream deserialize(const std::string& s) {
        RngStream r;
        std::istringstream is(s);
        is >> r.engine_;
        if (is.fail()) throw std::runtime_error("RngStream: bad serialized state");
        return r;
    }

    bool operator==(const RngStream& o) const { return engine_ == o.engine_; }

  private:
    std::mt19937_64 engine_;
};

/// Named stream: one per purpose ("mask", "noise_student", ...).
inline RngStream named_stream(uint64_t master_seed, const std::string& name) {
    return RngStream(splitmix64(master_seed ^ hash_name(name)));
}

/// Named stream for one counter value (training step, sample index, ...).
/// Streams for distinct (name, counter) pairs are independent, which makes
/// checkpoint resume trivially bit-exact: the counter is the state.
inline RngStream named_stream(uint64_t master_seed, const std::string& name, uint64_t counter) {
    return RngStream(splitmix64(splitmix64(master_seed ^ hash_name(name)) + counter));
}

}  // namespace ddit
