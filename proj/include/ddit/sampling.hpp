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

#include <Eigen/Eigenvalues>

#include <memory>
#include <vector>

#include "ddit/dataset.hpp"
#include "ddit/train.hpp"

// Class-conditional generation through the trained student branch, plus
// desk-scale evaluation: Frechet distance over pluggable features. The
// default feature extractor is raw-pixel flattening, so scores are comparable
// only within this artifact, never against Inception-feature numbers.

namespace ddit {

/// Preconditioned student-branch denoiser over a stacked batch array of shape
/// (count, C, H, W). No mask is ever constructed here: the sampler always
/// feeds all patches, matching the training-side merge that keeps |H| = n.
inline DenoiserFn student_denoiser(const ParamSet& student, const ModelConfig& model,
                                   const NoiseSpec& noise, Index class_label) {
    if (class_label < 0 || class_label > model.n_classes)
        throw std::invalid_argument("student_denoiser: invalid class label");
    PatchMask full = PatchMask::all_visible(model.n_patches());
    return [&student, model, noise, class_label, full](const Array& x, double sigma) {
        if (x.shape.size() != 4)
            throw std::invalid_argument("student_denoiser: expected (count,C,H,W)");
        const Index count = x.shape[0];
        const Index per   = x.numel() / count;
        std::vector<Array> slices(static_cast<size_t>(count));
        std::vector<const Array*> ptrs(static_cast<size_t>(count));
        std::vector<double> sigmas(static_cast<size_t>(count), sigma);
        std::vector<Index> labels(static_cast<size_t>(count), class_label);
        std::vector<const PatchMask*> masks(static_cast<size_t>(count), &full);
        for (Index i = 0; i < count; ++i) {
            slices[static_cast<size_t>(i)] =
                Array{{x.shape[1], x.shape[2], x.shape[3]}, x.data.segment(i * per, per)};
            ptrs[static_cast<size_t>(i)] = &slices[static_cast<size_t>(i)];
        }
        Tape tape;
        tape.grad_enabled = false;
        NetContext ctx(tape, student, false);
        StudentForward fwd = student_forward(ctx, model, noise, ptrs, sigmas, labels, masks);
        const Matrix& d    = tape.val(fwd.d_tokens);
        const PatchGrid g  = model.grid();
        Array out{x.shape};
        for (Index i = 0; i < count; ++i) {
            Array img = unpatchify(d.middleRows(i * g.n_patches, g.n_patches), g);
            out.data.segment(i * per, per) = img.data;
        }
        return out;
    };
}

/// Draws `count` class-conditional samples with the deterministic Heun
/// sampler. Sample i's initial noise comes from the stream (seed, i), so a
/// given (seed, index) pair always yields the same image.
inline std::vector<Array> generate(const ParamSet& student, const ModelConfig& model,
                                   const NoiseSpec& noise, Index class_label, Index count,
                                   int n_steps, double rho, uint64_t seed) {
    if (count < 1) throw std::invalid_argument("generate: count must be >= 1");
    SigmaSchedule sched = sampling_sigmas(noise, n_steps, rho);
    const Index c = model.channels, s = model.image_size;
    Array x{{count, c, s, s}};
    const Index per = c * s * s;
    for (Index i = 0; i < count; ++i) {
        RngStream rng = named_stream(seed, "sample_init", static_cast<uint64_t>(i));
        for (Index j = 0; j < per; ++j) x.data[i * per + j] = sched.sigmas[0] * rng.normal();
    }
    DenoiserFn den = student_denoiser(student, model, noise, class_label);
    Array out      = heun_sample_from(den, sched, std::move(x));
    std::vector<Array> samples;
    samples.reserve(static_cast<size_t>(count));
    for (Index i = 0; i < count; ++i)
        samples.push_back(Array{{c, s, s}, out.data.segment(i * per, per)});
    return samples;
}

// ---------------------------------------------------------------------------
// Frechet distance over pluggable features

class FeatureExtractor {
  public:
    virtual ~FeatureExtractor()                   = default;
    virtual Vector features(const Array& x) const = 0;
};

/// Desk-scale default: the flattened pixel values themselves.
class RawPixelFeatures : public FeatureExtractor {
  public:
    Vector features(const Array& x) const override { return x.data; }
};

inline Matrix extract_features(const FeatureExtractor& fx, const std::vector<Array>& images) {
    if (images.empty()) throw std::invalid_argument("extract_features: no images");
    Vector first = fx.features(images[0]);
    Matrix out(static_cast<Index>(images.size()), first.size());
    out.row(0) = first;
    for (size_t i = 1; i < images.size(); ++i) out.row(static_cast<Index>(i)) = fx.features(images[i]);
    return out;
}

struct FeatureStats {
    Vector mu;
    Matrix sigma;
    Index count = 0;
};

/// Sample mean and unbiased covariance of row-stacked features.
inline FeatureStats feature_stats(const Matrix& features) {
    if (features.rows() < 2) throw std::invalid_argument("feature_stats: need count >= 2");
    FeatureStats st;
    st.count = features.rows();
    st.mu    = features.colwise().mean();
    Matrix centered = features.rowwise() - st.mu.transpose();
    st.sigma        = centered.transpose() * centered / static_cast<double>(st.count - 1);
    st.sigma        = 0.5 * (st.sigma + st.sigma.transpose());
    return st;
}

namespace detail {

/// Symmetric PSD square root by eigendecomposition. Eigenvalues below
/// -tolerance are an error; small negatives are clipped to zero.
inline Matrix psd_sqrt(const Matrix& m, double tolerance) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
    if (eig.info() != Eigen::Success) throw std::runtime_error("psd_sqrt: eigensolver failed");
    Vector lam = eig.eigenvalues();
    for (Index i = 0; i < lam.size(); ++i) {
        if (lam[i] < -tolerance)
            throw std::runtime_error("psd_sqrt: matrix is not PSD (eigenvalue " +
                                     std::to_string(lam[i]) + ")");
        lam[i] = std::sqrt(std::max(lam[i], 0.0));
    }
    return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), computed through the
/// symmetric form Tr sqrt(S_a^(1/2) S_b S_a^(1/2)).
inline double frechet_distance(const FeatureStats& a, const FeatureStats& b,
                               double tolerance = 1e-6) {
    if (a.mu.size() != b.mu.size()) throw std::invalid_argument("frechet_distance: dim mismatch");
    if (a.sigma.rows() != a.sigma.cols() || b.sigma.rows() != b.sigma.cols() ||
        a.sigma.rows() != a.mu.size() || b.sigma.rows() != b.mu.size())
        throw std::invalid_argument("frechet_distance: bad covariance shape");
    if (!a.sigma.isApprox(a.sigma.transpose(), 1e-8) || !b.sigma.isApprox(b.sigma.transpose(), 1e-8))
        throw std::invalid_argument("frechet_distance: covariance not symmetric");

    Matrix a_half = detail::psd_sqrt(a.sigma, tolerance);
    Matrix inner  = a_half * b.sigma * a_half;
    inner         = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(inner);
    if (eig.info() != Eigen::Success) throw std::runtime_error("frechet_distance: eigensolver failed");
    double tr_sqrt = 0.0;
    for (Index i = 0; i < eig.eigenvalues().size(); ++i) {
        double lam = eig.eigenvalues()[i];
        if (lam < -tolerance)
            throw std::runtime_error("frechet_distance: product matrix is not PSD");
        tr_sqrt += std::sqrt(std::max(lam, 0.0));
    }
    double dist = (a.mu - b.mu).squaredNorm() + a.sigma.trace() + b.sigma.trace() - 2.0 * tr_sqrt;
    return std::max(dist, 0.0);
}

struct FidReport {
    Index n_real  = 0;
    Index n_fake  = 0;
    Index d       = 0;
    double fid    = 0.0;
    int64_t step  = -1;  // -1 when not tied to a training step
};

inline json fid_report_json(const FidReport& r) {
    json j{{"n_real", r.n_real}, {"n_fake", r.n_fake}, {"d", r.d}, {"fid", r.fid}};
    if (r.step >= 0) j["step"] = r.step;
    return j;
}

/// Generates eval_samples per class and scores them against the full dataset.
inline FidReport evaluate_fid(const ParamSet& student, const RunConfig& cfg,
                              const Dataset& dataset, const FeatureExtractor& fx,
                              uint64_t seed) {
    std::vector<Array> fake;
    for (Index cls = 0; cls < cfg.model.n_classes; ++cls) {
        std::vector<Array> s = generate(student, cfg.model, cfg.noise, cls, cfg.eval_samples,
                                        cfg.sample_steps, cfg.sample_rho,
                                        splitmix64(seed + static_cast<uint64_t>(cls)));
        for (Array& a : s) fake.push_back(std::move(a));
    }
    std::vector<Array> real;
    real.reserve(static_cast<size_t>(dataset.size()));
    for (Index i = 0; i < dataset.size(); ++i) real.push_back(dataset.at(i).x);

    FeatureStats fs_fake = feature_stats(extract_features(fx, fake));
    FeatureStats fs_real = feature_stats(extract_features(fx, real));
    FidReport r;
    r.n_real = fs_real.count;
    r.n_fake = fs_fake.count;
    r.d      = fs_real.mu.size();
    r.fid    = frechet_distance(fs_real, fs_fake);
    return r;
}

}  // namespace ddit
