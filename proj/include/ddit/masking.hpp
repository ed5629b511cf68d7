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
#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ddit/common.hpp"
#include "ddit/rng.hpp"

// Patchification and the binary mask machinery that splits a token set into
// visible/invisible subsets and merges encoder outputs back into the complete
// set. There is deliberately no learnable mask token anywhere: invisible
// tokens re-enter the decoder as-is, so training and inference see the same
// token population.

namespace ddit {

struct PatchGrid {
    Index n_patches  = 0;
    Index patch_size = 0;
    Index grid_h     = 0;
    Index grid_w     = 0;
    Index channels   = 0;

    static PatchGrid for_image(Index channels, Index height, Index width, Index patch_size) {
        if (patch_size < 1) throw std::invalid_argument("PatchGrid: patch_size must be >= 1");
        if (height % patch_size != 0 || width % patch_size != 0)
            throw std::invalid_argument("PatchGrid: image sides must be divisible by patch_size");
        PatchGrid g;
        g.patch_size = patch_size;
        g.channels   = channels;
        g.grid_h     = height / patch_size;
        g.grid_w     = width / patch_size;
        g.n_patches  = g.grid_h * g.grid_w;
        return g;
    }

    Index token_dim() const { return patch_size * patch_size * channels; }
};

/// Binary per-patch mask (1 = masked/invisible) plus sorted index maps.
struct PatchMask {
    std::vector<uint8_t> bits;
    std::vector<Index> visible_idx;
    std::vector<Index> invisible_idx;

    Index n() const { return static_cast<Index>(bits.size()); }

    static PatchMask from_bits(std::vector<uint8_t> bits) {
        PatchMask m;
        m.bits = std::move(bits);
        for (Index i = 0; i < m.n(); ++i)
            (m.bits[i] ? m.invisible_idx : m.visible_idx).push_back(i);
        return m;
    }

    static PatchMask all_visible(Index n) {
        return from_bits(std::vector<uint8_t>(static_cast<size_t>(n), 0));
    }
};

// Instrumentation: total sample_mask invocations, used to audit that the
// sampling path never constructs a mask.
inline std::atomic<uint64_t> g_sample_mask_calls{0};

/// Exact-count mask: floor(ratio*n) indices masked, uniform without
/// replacement, deterministic per stream state.
inline PatchMask sample_mask(Index n, double ratio, RngStream& rng) {
    if (n < 1) throw std::invalid_argument("sample_mask: n must be >= 1");
    if (!(ratio >= 0.0 && ratio <= 1.0))
        throw std::invalid_argument("sample_mask: ratio must be in [0,1]");
    g_sample_mask_calls.fetch_add(1, std::memory_order_relaxed);

    const Index n_masked = static_cast<Index>(ratio * static_cast<double>(n));
    std::vector<Index> perm(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) perm[i] = i;
    // Partial Fisher-Yates: the first n_masked entries become the masked set.
    for (Index i = 0; i < n_masked; ++i) {
        Index j = i + static_cast<Index>(rng.uniform_below(static_cast<uint64_t>(n - i)));
        std::swap(perm[i], perm[j]);
    }
    std::vector<uint8_t> bits(static_cast<size_t>(n), 0);
    for (Index i = 0; i < n_masked; ++i) bits[static_cast<size_t>(perm[i])] = 1;
    return PatchMask::from_bits(std::move(bits));
}

/// Image/latent (C,H,W) -> n tokens of p*p*C reals, row-major patch order.
/// Within a token the layout is (channel, dy, dx).
inline Matrix patchify(const Array& x, const PatchGrid& g) {
    if (x.shape != std::vector<Index>{g.channels, g.grid_h * g.patch_size, g.grid_w * g.patch_size})
        throw std::invalid_argument("patchify: array shape does not match grid");
    const Index p = g.patch_size;
    const Index w = g.grid_w * p;
    Matrix tokens(g.n_patches, g.token_dim());
    for (Index gy = 0; gy < g.grid_h; ++gy)
        for (Index gx = 0; gx < g.grid_w; ++gx) {
            const Index t = gy * g.grid_w + gx;
            for (Index c = 0; c < g.channels; ++c)
                for (Index dy = 0; dy < p; ++dy)
                    for (Index dx = 0; dx < p; ++dx)
                        tokens(t, c * p * p + dy * p + dx) =
                            x.data[(c * g.grid_h * p + gy * p + dy) * w + gx * p + dx];
        }
    return tokens;
}

inline Array unpatchify(const Matrix& tokens, const PatchGrid& g) {
    if (tokens.rows() != g.n_patches || tokens.cols() != g.token_dim())
        throw std::invalid_argument("unpatchify: token matrix does not match grid");
    const Index p = g.patch_size;
    const Index w = g.grid_w * p;
    Array x{{g.channels, g.grid_h * p, g.grid_w * p}};
    for (Index gy = 0; gy < g.grid_h; ++gy)
        for (Index gx = 0; gx < g.grid_w; ++gx) {
            const Index t = gy * g.grid_w + gx;
            for (Index c = 0; c < g.channels; ++c)
                for (Index dy = 0; dy < p; ++dy)
                    for (Index dx = 0; dx < p; ++dx)
                        x.data[(c * g.grid_h * p + gy * p + dy) * w + gx * p + dx] =
                            tokens(t, c * p * p + dy * p + dx);
        }
    return x;
}

/// Gather rows at visible_idx / invisible_idx (ascending order).
inline std::pair<Matrix, Matrix> split_visible(const Matrix& tokens, const PatchMask& mask) {
    if (tokens.rows() != mask.n())
        throw std::invalid_argument("split_visible: token count does not match mask length");
    Matrix vis(static_cast<Index>(mask.visible_idx.size()), tokens.cols());
    Matrix inv(static_cast<Index>(mask.invisible_idx.size()), tokens.cols());
    for (size_t i = 0; i < mask.visible_idx.size(); ++i)
        vis.row(static_cast<Index>(i)) = tokens.row(mask.visible_idx[i]);
    for (size_t i = 0; i < mask.invisible_idx.size(); ++i)
        inv.row(static_cast<Index>(i)) = tokens.row(mask.invisible_idx[i]);
    return {std::move(vis), std::move(inv)};
}

/// Rebuild the complete token set H: encoded tokens at visible positions,
/// untouched invisible tokens at masked positions. |H| is always n.
inline Matrix merge_tokens(const Matrix& encoded_visible, const Matrix& invisible_tokens,
                           const PatchMask& mask) {
    if (encoded_visible.rows() != static_cast<Index>(mask.visible_idx.size()))
        throw std::invalid_argument("merge_tokens: visible count mismatch");
    if (invisible_tokens.rows() != static_cast<Index>(mask.invisible_idx.size()))
        throw std::invalid_argument("merge_tokens: invisible count mismatch");
    if (encoded_visible.rows() > 0 && invisible_tokens.rows() > 0 &&
        encoded_visible.cols() != invisible_tokens.cols())
        throw std::invalid_argument("merge_tokens: token width mismatch");
    const Index cols = encoded_visible.rows() > 0 ? encoded_visible.cols() : invisible_tokens.cols();
    Matrix h(mask.n(), cols);
    for (size_t i = 0; i < mask.visible_idx.size(); ++i)
        h.row(mask.visible_idx[i]) = encoded_visible.row(static_cast<Index>(i));
    for (size_t i = 0; i < mask.invisible_idx.size(); ++i)
        h.row(mask.invisible_idx[i]) = invisible_tokens.row(static_cast<Index>(i));
    return h;
}

}  // namespace ddit
