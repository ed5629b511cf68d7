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

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ddit/autodiff.hpp"
#include "ddit/common.hpp"
#include "ddit/masking.hpp"
#include "ddit/rng.hpp"

// DiT-style transformer: patch/position/condition embedding, blocks with
// condition-modulated layer norm (adaLN-zero), an encoder with a learned
// [CLS] token, a decoder that projects back to patch space, and a 3-layer
// projection head. Teacher and student encoders share this architecture and
// parameter manifest; the teacher is maintained by EMA only.

namespace ddit {

struct ModelConfig {
    Index embed_dim     = 64;
    Index depth_encoder = 4;
    Index depth_decoder = 8;
    Index n_heads       = 4;
    Index patch_size    = 2;
    Index n_classes     = 2;
    Index proj_dim      = 256;  // K
    Index proj_hidden   = 128;
    Index channels      = 1;
    Index image_size    = 8;  // square images

    void validate() const {
        if (embed_dim < 4 || embed_dim % n_heads != 0 || embed_dim % 4 != 0)
            throw std::invalid_argument(
                "ModelConfig: embed_dim must be divisible by n_heads and by 4");
        if (depth_encoder < 1 || depth_decoder < 1)
            throw std::invalid_argument("ModelConfig: depths must be >= 1");
        if (proj_dim < 2) throw std::invalid_argument("ModelConfig: proj_dim must be >= 2");
        if (proj_hidden < 1) throw std::invalid_argument("ModelConfig: proj_hidden must be >= 1");
        if (n_classes < 0) throw std::invalid_argument("ModelConfig: n_classes must be >= 0");
        grid();  // checks divisibility
    }

    PatchGrid grid() const { return PatchGrid::for_image(channels, image_size, image_size, patch_size); }
    Index n_patches() const { return grid().n_patches; }
    Index patch_dim() const { return grid().token_dim(); }
    /// Designated label for unconditional samples.
    Index null_label() const { return n_classes; }
};

// ---------------------------------------------------------------------------
// Parameters

/// Flat named parameter container; insertion order defines the manifest.
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Matrix> values;
    std::unordered_map<std::string, size_t> lookup;

    void add(const std::string& name, Matrix m) {
        if (lookup.count(name)) throw std::invalid_argument("ParamSet: duplicate " + name);
        lookup[name] = names.size();
        names.push_back(name);
        values.push_back(std::move(m));
    }

    bool has(const std::string& name) const { return lookup.count(name) > 0; }

    Matrix& at(const std::string& name) {
        auto it = lookup.find(name);
        if (it == lookup.end()) throw std::out_of_range("ParamSet: missing " + name);
        return values[it->second];
    }
    const Matrix& at(const std::string& name) const {
        auto it = lookup.find(name);
        if (it == lookup.end()) throw std::out_of_range("ParamSet: missing " + name);
        return values[it->second];
    }

    size_t count() const { return names.size(); }

    Index scalar_count() const {
        Index n = 0;
        for (const Matrix& m : values) n += m.size();
        return n;
    }

    std::vector<std::pair<std::string, std::pair<Index, Index>>> manifest() const {
        std::vector<std::pair<std::string, std::pair<Index, Index>>> out;
        out.reserve(names.size());
        for (size_t i = 0; i < names.size(); ++i)
            out.push_back({names[i], {values[i].rows(), values[i].cols()}});
        return out;
    }

    bool same_manifest(const ParamSet& o) const {
        if (names != o.names) return false;
        for (size_t i = 0; i < values.size(); ++i)
            if (values[i].rows() != o.values[i].rows() || values[i].cols() != o.values[i].cols())
                return false;
        return true;
    }
};

enum class InitMode {
    kStandard,  // adaLN-zero: modulation layers and the decoder output layer start at zero
    kGeneric,   // everything randomized; used by gradient audits
};

namespace detail {

inline Matrix xavier(Index rows, Index cols, RngStream& rng) {
    double std = std::sqrt(2.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = std * rng.normal();
    return m;
}

inline Matrix gaussian(Index rows, Index cols, double std, RngStream& rng) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = std * rng.normal();
    return m;
}

inline void add_linear(ParamSet& p, const std::string& prefix, Index in, Index out,
                       RngStream& rng, bool zero, InitMode mode) {
    bool z = zero && mode == InitMode::kStandard;
    p.add(prefix + ".w", z ? Matrix::Zero(in, out) : xavier(in, out, rng));
    p.add(prefix + ".b",
          mode == InitMode::kGeneric ? gaussian(1, out, 0.05, rng) : Matrix::Zero(1, out));
    if (zero && mode == InitMode::kGeneric) {
        // Generic audits need live gradients through the normally-zero layers.
        p.at(prefix + ".w") = gaussian(in, out, 0.05, rng);
    }
}

inline void add_block(ParamSet& p, const std::string& prefix, const ModelConfig& cfg,
                      RngStream& rng, InitMode mode) {
    const Index d = cfg.embed_dim;
    add_linear(p, prefix + ".attn.q", d, d, rng, false, mode);
    add_linear(p, prefix + ".attn.k", d, d, rng, false, mode);
    add_linear(p, prefix + ".attn.v", d, d, rng, false, mode);
    add_linear(p, prefix + ".attn.o", d, d, rng, false, mode);
    add_linear(p, prefix + ".mlp.fc1", d, 4 * d, rng, false, mode);
    add_linear(p, prefix + ".mlp.fc2", 4 * d, d, rng, false, mode);
    add_linear(p, prefix + ".mod", d, 6 * d, rng, /*zero=*/true, mode);
}

}  // namespace detail

/// Encoder-side parameters (shared embedding + condition machinery, encoder
/// blocks, projection head). This is exactly the manifest the teacher mirrors.
inline ParamSet init_encoder_params(const ModelConfig& cfg, RngStream& rng,
                                    InitMode mode = InitMode::kStandard) {
    cfg.validate();
    const Index d = cfg.embed_dim;
    ParamSet p;
    p.add("embed.patch.w", detail::xavier(cfg.patch_dim(), d, rng));
    p.add("embed.patch.b", mode == InitMode::kGeneric ? detail::gaussian(1, d, 0.05, rng)
                                                      : Matrix::Zero(1, d));
    p.add("embed.cls", detail::gaussian(1, d, 0.02, rng));
    detail::add_linear(p, "cond.mlp.fc1", d, d, rng, false, mode);
    detail::add_linear(p, "cond.mlp.fc2", d, d, rng, false, mode);
    {
        Matrix table = detail::gaussian(cfg.n_classes + 1, d, 0.02, rng);
        for (Index a = 0; a < table.rows(); ++a)
            for (Index b = a + 1; b < table.rows(); ++b)
                if ((table.row(a).array() == table.row(b).array()).all())
                    throw std::runtime_error("init: class embedding rows collide");
        p.add("cond.class_table", std::move(table));
    }
    for (Index i = 0; i < cfg.depth_encoder; ++i)
        detail::add_block(p, "enc.block" + std::to_string(i), cfg, rng, mode);
    detail::add_linear(p, "head.fc1", d, cfg.proj_hidden, rng, false, mode);
    detail::add_linear(p, "head.fc2", cfg.proj_hidden, cfg.proj_hidden, rng, false, mode);
    // Small final-layer init keeps early head logits near zero (near-uniform
    // softmax, high teacher entropy).
    p.add("head.fc3.w", detail::gaussian(cfg.proj_hidden, cfg.proj_dim,
                                         mode == InitMode::kGeneric ? 0.05 : 0.02, rng));
    p.add("head.fc3.b", mode == InitMode::kGeneric ? detail::gaussian(1, cfg.proj_dim, 0.05, rng)
                                                   : Matrix::Zero(1, cfg.proj_dim));
    return p;
}

/// Full student parameters: encoder-side manifest plus the decoder.
inline ParamSet init_student_params(const ModelConfig& cfg, RngStream& rng,
                                    InitMode mode = InitMode::kStandard) {
    ParamSet p = init_encoder_params(cfg, rng, mode);
    for (Index i = 0; i < cfg.depth_decoder; ++i)
        detail::add_block(p, "dec.block" + std::to_string(i), cfg, rng, mode);
    detail::add_linear(p, "dec.final.mod", cfg.embed_dim, 2 * cfg.embed_dim, rng, true, mode);
    detail::add_linear(p, "dec.final.out", cfg.embed_dim, cfg.patch_dim(), rng, true, mode);
    return p;
}

/// Teacher = copy of the student's encoder-side tensors.
inline ParamSet teacher_from_student(const ParamSet& student) {
    ParamSet t;
    for (size_t i = 0; i < student.names.size(); ++i) {
        const std::string& n = student.names[i];
        if (n.rfind("dec.", 0) == 0) continue;
        t.add(n, student.values[i]);
    }
    return t;
}

inline bool is_decoder_param(const std::string& name) { return name.rfind("dec.", 0) == 0; }

// ---------------------------------------------------------------------------
// Fixed (non-learned) embeddings

/// 1-D sin/cos features: [sin(t w_0..), cos(t w_0..)], w_j = 10000^(-j/(F/2)).
inline Eigen::RowVectorXd sincos_features(double t, Index dim) {
    if (dim % 2 != 0) throw std::invalid_argument("sincos_features: dim must be even");
    const Index half = dim / 2;
    Eigen::RowVectorXd out(dim);
    for (Index j = 0; j < half; ++j) {
        double w = std::exp(-std::log(10000.0) * static_cast<double>(j) /
                            static_cast<double>(half));
        out[j]        = std::sin(t * w);
        out[half + j] = std::cos(t * w);
    }
    return out;
}

/// Fixed 2-D sin/cos positional table, one row per grid position. Tokens keep
/// their absolute grid position regardless of which subset is visible.
inline Matrix sincos_pos_embed(const PatchGrid& g, Index dim) {
    if (dim % 4 != 0) throw std::invalid_argument("sincos_pos_embed: dim must be divisible by 4");
    Matrix pos(g.n_patches, dim);
    const Index half = dim / 2;
    for (Index gy = 0; gy < g.grid_h; ++gy)
        for (Index gx = 0; gx < g.grid_w; ++gx) {
            Index t = gy * g.grid_w + gx;
            pos.block(t, 0, 1, half)    = sincos_features(static_cast<double>(gy), half);
            pos.block(t, half, 1, half) = sincos_features(static_cast<double>(gx), half);
        }
    return pos;
}

// ---------------------------------------------------------------------------
// Forward passes (tape-based)

/// Binds a ParamSet onto a tape as leaf vars.
struct NetContext {
    Tape& tape;
    const ParamSet& params;
    std::vector<Var> leaves;

    NetContext(Tape& t, const ParamSet& p, bool requires_grad) : tape(t), params(p) {
        leaves.reserve(p.count());
        for (const Matrix& m : p.values) leaves.push_back(t.leaf(m, requires_grad));
    }

    Var operator[](const std::string& name) const {
        auto it = params.lookup.find(name);
        if (it == params.lookup.end()) throw std::out_of_range("NetContext: missing " + name);
        return leaves[it->second];
    }

    Var linear(Var x, const std::string& prefix) const {
        return tape.add_row(tape.matmul(x, (*this)[prefix + ".w"]), (*this)[prefix + ".b"]);
    }
};

/// Condition embedding: sin/cos features of c_noise through a 2-layer MLP,
/// plus a learned class-embedding row. Label n_classes is the null label.
inline Var embed_condition(NetContext& ctx, const std::vector<double>& c_noise,
                           const std::vector<Index>& labels, const ModelConfig& cfg) {
    if (c_noise.size() != labels.size() || c_noise.empty())
        throw std::invalid_argument("embed_condition: bad batch");
    const Index b = static_cast<Index>(c_noise.size());
    Matrix feats(b, cfg.embed_dim);
    for (Index i = 0; i < b; ++i) {
        if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] > cfg.n_classes)
            throw std::out_of_range("embed_condition: label out of range");
        feats.row(i) = sincos_features(c_noise[static_cast<size_t>(i)], cfg.embed_dim);
    }
    Tape& t  = ctx.tape;
    Var x    = t.leaf(std::move(feats));
    Var h    = ctx.linear(t.silu(ctx.linear(x, "cond.mlp.fc1")), "cond.mlp.fc2");
    Var rows = t.gather_rows(ctx["cond.class_table"], labels);
    return t.add(h, rows);
}

/// Patch embedding + fixed positional rows. `raw_tokens` is (B*n) x patch_dim
/// and `pos_rows` the matching positional rows.
inline Var embed_tokens(NetContext& ctx, Matrix raw_tokens, Matrix pos_rows) {
    Tape& t = ctx.tape;
    Var x   = ctx.linear(t.leaf(std::move(raw_tokens)), "embed.patch");
    return t.add(x, t.leaf(std::move(pos_rows)));
}

namespace detail {

/// One DiT block: attention + MLP with condition-modulated layer norm.
/// `cond_act` is silu(cond), B x D. Zero-initialized modulation means the
/// block is an exact identity at standard init.
inline Var dit_block(NetContext& ctx, Var x, Var cond_act, const std::string& prefix,
                     Index batch, Index tokens, Index heads) {
    Tape& t       = ctx.tape;
    const Index d = t.val(x).cols();
    Var mod       = ctx.linear(cond_act, prefix + ".mod");
    Var shift1    = t.slice_cols(mod, 0, d);
    Var scale1    = t.slice_cols(mod, d, d);
    Var gate1     = t.slice_cols(mod, 2 * d, d);
    Var shift2    = t.slice_cols(mod, 3 * d, d);
    Var scale2    = t.slice_cols(mod, 4 * d, d);
    Var gate2     = t.slice_cols(mod, 5 * d, d);

    Var h = t.bcast_add(t.bcast_mul(t.layernorm(x), t.add_scalar(scale1, 1.0), tokens),
                        shift1, tokens);
    Var q = ctx.linear(h, prefix + ".attn.q");
    Var k = ctx.linear(h, prefix + ".attn.k");
    Var v = ctx.linear(h, prefix + ".attn.v");
    Var a = ctx.linear(t.attention(q, k, v, batch, tokens, heads), prefix + ".attn.o");
    x     = t.add(x, t.bcast_mul(a, gate1, tokens));

    Var h2 = t.bcast_add(t.bcast_mul(t.layernorm(x), t.add_scalar(scale2, 1.0), tokens),
                         shift2, tokens);
    Var m  = ctx.linear(t.gelu(ctx.linear(h2, prefix + ".mlp.fc1")), prefix + ".mlp.fc2");
    return t.add(x, t.bcast_mul(m, gate2, tokens));
}

}  // namespace detail

/// Encoder over embedded tokens; prepends the learned [CLS] vector, so the
/// output has tokens_per_sample + 1 rows per sample, CLS first.
inline Var encode(NetContext& ctx, Var tokens, Var cond, const ModelConfig& cfg,
                  Index batch, Index tokens_per_sample) {
    if (tokens_per_sample < 1)
        throw std::invalid_argument("encode: empty token list");
    Tape& t = ctx.tape;
    if (t.val(tokens).rows() != batch * tokens_per_sample)
        throw std::invalid_argument("encode: token rows do not match batch layout");

    Var cls = t.gather_rows(ctx["embed.cls"], std::vector<Index>(static_cast<size_t>(batch), 0));
    std::vector<std::pair<int, Index>> plan;
    plan.reserve(static_cast<size_t>(batch * (tokens_per_sample + 1)));
    for (Index b = 0; b < batch; ++b) {
        plan.push_back({0, b});
        for (Index i = 0; i < tokens_per_sample; ++i) plan.push_back({1, b * tokens_per_sample + i});
    }
    Var x        = t.assemble_rows(cls, tokens, std::move(plan));
    Var cond_act = t.silu(cond);
    for (Index i = 0; i < cfg.depth_encoder; ++i)
        x = detail::dit_block(ctx, x, cond_act, "enc.block" + std::to_string(i), batch,
                              tokens_per_sample + 1, cfg.n_heads);
    return x;
}

/// Decoder over the complete token set H (no CLS): blocks plus a final
/// modulated projection back to patch dimensionality.
inline Var decode(NetContext& ctx, Var h, Var cond, const ModelConfig& cfg, Index batch) {
    Tape& t       = ctx.tape;
    const Index n = cfg.n_patches();
    if (t.val(h).rows() != batch * n)
        throw std::invalid_argument("decode: token set must contain exactly n patches per sample");
    Var cond_act = t.silu(cond);
    Var x        = h;
    for (Index i = 0; i < cfg.depth_decoder; ++i)
        x = detail::dit_block(ctx, x, cond_act, "dec.block" + std::to_string(i), batch, n,
                              cfg.n_heads);
    const Index d = cfg.embed_dim;
    Var mod   = ctx.linear(cond_act, "dec.final.mod");
    Var shift = t.slice_cols(mod, 0, d);
    Var scale = t.slice_cols(mod, d, d);
    Var y = t.bcast_add(t.bcast_mul(t.layernorm(x), t.add_scalar(scale, 1.0), n), shift, n);
    return ctx.linear(y, "dec.final.out");
}

/// 3-layer projection head: two hidden layers with GELU, linear map to K.
/// Applied identically to CLS and patch tokens.
inline Var project(NetContext& ctx, Var tokens) {
    Tape& t = ctx.tape;
    Var h   = t.gelu(ctx.linear(tokens, "head.fc1"));
    h       = t.gelu(ctx.linear(h, "head.fc2"));
    return ctx.linear(h, "head.fc3");
}

// Row-layout helpers for encoder outputs ([CLS, t_0, ..., t_{T-1}] per sample).
inline std::vector<Index> cls_row_indices(Index batch, Index tokens_per_sample) {
    std::vector<Index> idx(static_cast<size_t>(batch));
    for (Index b = 0; b < batch; ++b) idx[static_cast<size_t>(b)] = b * (tokens_per_sample + 1);
    return idx;
}

inline std::vector<Index> patch_row_indices(Index batch, Index tokens_per_sample) {
    std::vector<Index> idx;
    idx.reserve(static_cast<size_t>(batch * tokens_per_sample));
    for (Index b = 0; b < batch; ++b)
        for (Index i = 0; i < tokens_per_sample; ++i)
            idx.push_back(b * (tokens_per_sample + 1) + 1 + i);
    return idx;
}

}  // namespace ddit
