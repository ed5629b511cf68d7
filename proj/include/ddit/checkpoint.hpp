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

#include <cstring>
#include <fstream>
#include <string>

#include "ddit/config.hpp"
#include "ddit/train.hpp"

// Single-file binary checkpoint: version tag, the resolved config, and every
// piece of mutable training state (parameters, teacher, centers, Adam
// moments, step). Raw little-endian doubles, so round-trips are bitwise. A
// load either fully succeeds or throws; no partial state escapes.

namespace ddit {

namespace detail {

constexpr char kCkptMagic[8]   = {'D', 'D', 'I', 'T', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCkptVersion = 1;

inline void write_bytes(std::ostream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out) throw std::runtime_error("checkpoint: write failed");
}

inline void read_bytes(std::istream& in, void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw std::runtime_error("checkpoint: truncated file");
}

template <typename T>
void write_pod(std::ostream& out, T v) {
    write_bytes(out, &v, sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v;
    read_bytes(in, &v, sizeof(T));
    return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_pod<uint64_t>(out, s.size());
    write_bytes(out, s.data(), s.size());
}

inline std::string read_string(std::istream& in, uint64_t max_len = 1ull << 30) {
    uint64_t n = read_pod<uint64_t>(in);
    if (n > max_len) throw std::runtime_error("checkpoint: implausible string length");
    std::string s(static_cast<size_t>(n), '\0');
    read_bytes(in, s.data(), s.size());
    return s;
}

inline void write_matrix(std::ostream& out, const Matrix& m) {
    write_pod<uint64_t>(out, static_cast<uint64_t>(m.rows()));
    write_pod<uint64_t>(out, static_cast<uint64_t>(m.cols()));
    write_bytes(out, m.data(), sizeof(double) * static_cast<size_t>(m.size()));
}

inline Matrix read_matrix(std::istream& in) {
    uint64_t rows = read_pod<uint64_t>(in);
    uint64_t cols = read_pod<uint64_t>(in);
    if (rows > (1ull << 24) || cols > (1ull << 24))
        throw std::runtime_error("checkpoint: implausible matrix shape");
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    read_bytes(in, m.data(), sizeof(double) * static_cast<size_t>(m.size()));
    return m;
}

inline void write_params(std::ostream& out, const ParamSet& p) {
    write_pod<uint64_t>(out, p.names.size());
    for (size_t i = 0; i < p.names.size(); ++i) {
        write_string(out, p.names[i]);
        write_matrix(out, p.values[i]);
    }
}

inline ParamSet read_params(std::istream& in) {
    uint64_t n = read_pod<uint64_t>(in);
    if (n > (1u << 20)) throw std::runtime_error("checkpoint: implausible tensor count");
    ParamSet p;
    for (uint64_t i = 0; i < n; ++i) {
        std::string name = read_string(in, 4096);
        p.add(name, read_matrix(in));
    }
    return p;
}

}  // namespace detail

inline void save_checkpoint(const TrainState& state, const RunConfig& cfg,
                            const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    detail::write_bytes(out, detail::kCkptMagic, sizeof(detail::kCkptMagic));
    detail::write_pod<uint32_t>(out, detail::kCkptVersion);
    detail::write_string(out, config_to_json(cfg).dump());
    detail::write_pod<int64_t>(out, state.step);
    detail::write_pod<uint64_t>(out, state.seed);
    detail::write_params(out, state.student);
    detail::write_params(out, state.teacher);
    detail::write_pod<double>(out, state.centers.m_c);
    detail::write_pod<double>(out, state.centers.m_p);
    detail::write_matrix(out, state.centers.c_cls);
    detail::write_matrix(out, state.centers.c_patch);
    detail::write_pod<int64_t>(out, state.opt.t);
    detail::write_pod<uint64_t>(out, state.opt.m.size());
    for (const Matrix& m : state.opt.m) detail::write_matrix(out, m);
    for (const Matrix& v : state.opt.v) detail::write_matrix(out, v);
    detail::write_bytes(out, "DEND", 4);
    out.flush();
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

struct Checkpoint {
    RunConfig cfg;
    TrainState state;
};

/// Loads and fully validates a checkpoint. The stored parameter manifest must
/// match the manifest implied by the stored config, and the teacher manifest
/// must mirror the student's encoder-side tensors.
inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    detail::read_bytes(in, magic, sizeof(magic));
    if (std::memcmp(magic, detail::kCkptMagic, sizeof(magic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t version = detail::read_pod<uint32_t>(in);
    if (version != detail::kCkptVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

    Checkpoint out;
    out.cfg = config_from_json(json::parse(detail::read_string(in)));
    TrainState& st = out.state;
    st.step        = detail::read_pod<int64_t>(in);
    st.seed        = detail::read_pod<uint64_t>(in);
    st.student     = detail::read_params(in);
    st.teacher     = detail::read_params(in);
    st.centers.m_c = detail::read_pod<double>(in);
    st.centers.m_p = detail::read_pod<double>(in);
    st.centers.c_cls   = detail::read_matrix(in).row(0);
    st.centers.c_patch = detail::read_matrix(in).row(0);
    st.opt.t           = detail::read_pod<int64_t>(in);
    uint64_t n_opt     = detail::read_pod<uint64_t>(in);
    if (n_opt != st.student.values.size())
        throw std::runtime_error("checkpoint: optimizer state does not match the manifest");
    for (uint64_t i = 0; i < n_opt; ++i) st.opt.m.push_back(detail::read_matrix(in));
    for (uint64_t i = 0; i < n_opt; ++i) st.opt.v.push_back(detail::read_matrix(in));
    char trailer[4];
    detail::read_bytes(in, trailer, sizeof(trailer));
    if (std::memcmp(trailer, "DEND", 4) != 0)
        throw std::runtime_error("checkpoint: bad trailer in " + path);

    // manifest check against the config
    RngStream probe   = named_stream(st.seed, "init");
    ParamSet expected = init_student_params(out.cfg.model, probe);
    if (!expected.same_manifest(st.student))
        throw std::runtime_error("checkpoint: stored manifest does not match the config");
    ParamSet expected_teacher = teacher_from_student(expected);
    if (!expected_teacher.same_manifest(st.teacher))
        throw std::runtime_error("checkpoint: teacher manifest mismatch");
    for (size_t i = 0; i < st.opt.m.size(); ++i)
        if (st.opt.m[i].rows() != st.student.values[i].rows() ||
            st.opt.m[i].cols() != st.student.values[i].cols() ||
            st.opt.v[i].rows() != st.student.values[i].rows() ||
            st.opt.v[i].cols() != st.student.values[i].cols())
            throw std::runtime_error("checkpoint: optimizer moment shape mismatch");
    if (st.centers.c_cls.size() != out.cfg.model.proj_dim ||
        st.centers.c_patch.size() != out.cfg.model.proj_dim)
        throw std::runtime_error("checkpoint: center width mismatch");
    return out;
}

}  // namespace ddit
