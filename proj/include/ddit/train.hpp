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

#include <chrono>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddit/autodiff.hpp"
#include "ddit/config.hpp"
#include "ddit/dataset.hpp"
#include "ddit/distill.hpp"
#include "ddit/edm.hpp"
#include "ddit/masking.hpp"
#include "ddit/network.hpp"

// Training engine. One step: build discriminative view pairs, run the student
// branch (masked encoder -> merged token set -> decoder, preconditioned) for
// the generative loss, run the frozen teacher for the discrimination targets,
// backprop into the student only, Adam update, EMA teacher update, center
// update. Per-step randomness comes from named counter-derived streams, so a
// resumed run replays the exact stream states.

namespace ddit {

struct ViewPair {
    Array student_view;
    Array teacher_view;
    double sigma_s    = 0.0;
    double sigma_t    = 0.0;
    PatchMask mask;
    Index class_label = 0;
};

struct StepStreams {
    RngStream sigma;
    RngStream noise_student;
    RngStream noise_teacher;
    RngStream mask;

    static StepStreams at_step(uint64_t seed, int64_t step) {
        StepStreams s;
        uint64_t c      = static_cast<uint64_t>(step);
        s.sigma         = named_stream(seed, "sigma", c);
        s.noise_student = named_stream(seed, "noise_student", c);
        s.noise_teacher = named_stream(seed, "noise_teacher", c);
        s.mask          = named_stream(seed, "mask", c);
        return s;
    }
};

/// Teacher-noise level for one view pair. kSameAsStudent draws its own sigma
/// from the training distribution (an independent draw, not sigma_s itself).
inline double teacher_sigma(const RunConfig& cfg, RngStream& sigma_rng) {
    switch (cfg.teacher_sigma_mode) {
        case TeacherSigmaMode::kFixedMin: return cfg.noise.sigma_min;
        case TeacherSigmaMode::kFixedValue: return cfg.teacher_sigma_value;
        case TeacherSigmaMode::kSameAsStudent: return sample_sigma_student(cfg.noise, sigma_rng);
    }
    throw std::logic_error("teacher_sigma: bad mode");
}

/// Student view at a freshly drawn sigma_s, teacher view at the configured
/// teacher noise (sigma_min by default), mask on the student side only.
inline ViewPair build_views(const Array& x0, Index label, const RunConfig& cfg,
                            StepStreams& streams) {
    ViewPair vp;
    vp.class_label  = label;
    vp.sigma_s      = sample_sigma_student(cfg.noise, streams.sigma);
    vp.sigma_t      = teacher_sigma(cfg, streams.sigma);
    vp.student_view = perturb(x0, vp.sigma_s, streams.noise_student);
    vp.teacher_view = perturb(x0, vp.sigma_t, streams.noise_teacher);
    vp.mask         = sample_mask(cfg.model.n_patches(), cfg.mask_ratio, streams.mask);
    return vp;
}

// ---------------------------------------------------------------------------
// Forward passes

struct StudentForward {
    Var d_tokens;     // (B*n) x patch_dim, preconditioned denoiser output
    Var enc_cls;      // B x D
    Var enc_patches;  // (B*Tv) x D, visible tokens in ascending grid order
    Index n_visible = 0;
};

/// The full student branch D_theta: embed all patches of c_in * x, encode the
/// visible subset with a CLS token, insert the untouched invisible embeddings
/// back at their grid positions, decode, and close the sigma-dependent skip:
/// D = c_skip x + c_out F(c_in x, c_noise).
inline StudentForward student_forward(NetContext& ctx, const ModelConfig& model,
                                      const NoiseSpec& noise,
                                      const std::vector<const Array*>& x_sigma,
                                      const std::vector<double>& sigmas,
                                      const std::vector<Index>& labels,
                                      const std::vector<const PatchMask*>& masks) {
    Tape& t       = ctx.tape;
    const Index b = static_cast<Index>(x_sigma.size());
    if (b < 1 || sigmas.size() != static_cast<size_t>(b) || labels.size() != static_cast<size_t>(b) ||
        masks.size() != static_cast<size_t>(b))
        throw std::invalid_argument("student_forward: inconsistent batch");
    const PatchGrid grid = model.grid();
    const Index n = grid.n_patches, p_dim = grid.token_dim(), d = model.embed_dim;
    const Index tv = static_cast<Index>(masks[0]->visible_idx.size());
    if (tv == 0) throw std::invalid_argument("student_forward: mask leaves no visible patches");
    for (const PatchMask* m : masks) {
        if (m->n() != n) throw std::invalid_argument("student_forward: mask length != n");
        if (static_cast<Index>(m->visible_idx.size()) != tv)
            throw std::invalid_argument("student_forward: uneven visible counts in batch");
    }
    const Index ti = n - tv;

    Matrix raw(b * n, p_dim);   // c_in-scaled network input tokens
    Matrix skip(b * n, p_dim);  // c_skip-scaled skip-path tokens
    Matrix c_out_rows(b, p_dim);
    std::vector<double> c_noise(static_cast<size_t>(b));
    const Matrix pos = sincos_pos_embed(grid, d);
    Matrix pos_tiled(b * n, d);
    for (Index i = 0; i < b; ++i) {
        const PreconditionCoeffs c = precondition_coeffs(sigmas[static_cast<size_t>(i)], noise);
        Matrix tok                 = patchify(*x_sigma[static_cast<size_t>(i)], grid);
        raw.middleRows(i * n, n)   = c.c_in * tok;
        skip.middleRows(i * n, n)  = c.c_skip * tok;
        c_out_rows.row(i).setConstant(c.c_out);
        c_noise[static_cast<size_t>(i)]  = c.c_noise;
        pos_tiled.middleRows(i * n, n)   = pos;
    }

    Var embedded = embed_tokens(ctx, std::move(raw), std::move(pos_tiled));
    std::vector<Index> vis_rows, inv_rows;
    vis_rows.reserve(static_cast<size_t>(b * tv));
    inv_rows.reserve(static_cast<size_t>(b * ti));
    for (Index i = 0; i < b; ++i) {
        for (Index j : masks[static_cast<size_t>(i)]->visible_idx) vis_rows.push_back(i * n + j);
        for (Index j : masks[static_cast<size_t>(i)]->invisible_idx) inv_rows.push_back(i * n + j);
    }
    Var e_vis = t.gather_rows(embedded, vis_rows);
    Var e_inv = t.gather_rows(embedded, inv_rows);

    Var cond    = embed_condition(ctx, c_noise, labels, model);
    Var enc_out = encode(ctx, e_vis, cond, model, b, tv);

    StudentForward out;
    out.n_visible   = tv;
    out.enc_cls     = t.gather_rows(enc_out, cls_row_indices(b, tv));
    out.enc_patches = t.gather_rows(enc_out, patch_row_indices(b, tv));

    // complete token set H: encoder outputs at visible positions, untouched
    // embeddings at invisible positions
    std::vector<std::pair<int, Index>> plan;
    plan.reserve(static_cast<size_t>(b * n));
    for (Index i = 0; i < b; ++i) {
        const PatchMask& m = *masks[static_cast<size_t>(i)];
        Index vis_rank = 0, inv_rank = 0;
        for (Index j = 0; j < n; ++j) {
            if (m.bits[static_cast<size_t>(j)])
                plan.push_back({1, i * ti + inv_rank++});
            else
                plan.push_back({0, i * tv + vis_rank++});
        }
    }
    Var h       = t.assemble_rows(out.enc_patches, e_inv, std::move(plan));
    Var f_out   = decode(ctx, h, cond, model, b);
    Var scaled  = t.bcast_mul(f_out, t.leaf(std::move(c_out_rows)), n);
    out.d_tokens = t.add(t.leaf(std::move(skip)), scaled);
    return out;
}

struct TeacherVars {
    Var cls_logits;    // B x K
    Var patch_logits;  // (B*n) x K, all grid positions
};

/// Teacher branch: unmasked encode of c_in * x_sigma_t plus the projection
/// head on CLS and every patch token.
inline TeacherVars teacher_forward(NetContext& ctx, const ModelConfig& model,
                                   const NoiseSpec& noise,
                                   const std::vector<const Array*>& x_sigma,
                                   const std::vector<double>& sigmas,
                                   const std::vector<Index>& labels) {
    Tape& t       = ctx.tape;
    const Index b = static_cast<Index>(x_sigma.size());
    const PatchGrid grid = model.grid();
    const Index n = grid.n_patches, d = model.embed_dim;

    Matrix raw(b * n, grid.token_dim());
    std::vector<double> c_noise(static_cast<size_t>(b));
    const Matrix pos = sincos_pos_embed(grid, d);
    Matrix pos_tiled(b * n, d);
    for (Index i = 0; i < b; ++i) {
        const PreconditionCoeffs c = precondition_coeffs(sigmas[static_cast<size_t>(i)], noise);
        raw.middleRows(i * n, n)   = c.c_in * patchify(*x_sigma[static_cast<size_t>(i)], grid);
        c_noise[static_cast<size_t>(i)] = c.c_noise;
        pos_tiled.middleRows(i * n, n)  = pos;
    }
    Var embedded = embed_tokens(ctx, std::move(raw), std::move(pos_tiled));
    Var cond     = embed_condition(ctx, c_noise, labels, model);
    Var enc_out  = encode(ctx, embedded, cond, model, b, n);

    TeacherVars out;
    out.cls_logits   = project(ctx, t.gather_rows(enc_out, cls_row_indices(b, n)));
    out.patch_logits = project(ctx, t.gather_rows(enc_out, patch_row_indices(b, n)));
    return out;
}

// ---------------------------------------------------------------------------
// Loss assembly

struct LossBuild {
    Var total;
    Var l_g;
    Var l_d_cls;    // invalid when the discrimination loss is disabled
    Var l_d_patch;  // invalid when the discrimination loss is disabled
    double teacher_entropy = 0.0;
    Matrix teacher_cls_logits;    // for the center update
    Matrix teacher_patch_logits;  // all positions
};

/// Builds L = L_G + L_D on the student tape. Teacher logits are read out as
/// values (stop-gradient): the loss graph holds them as constants, so no
/// gradient can reach teacher parameters. `teacher_ctx` must be null exactly
/// when cfg.disable_l_d is set.
inline LossBuild build_step_loss(NetContext& student_ctx, NetContext* teacher_ctx,
                                 const RunConfig& cfg, const Centers& centers, double tau_t,
                                 const std::vector<ViewPair>& views,
                                 const std::vector<const Example*>& batch) {
    Tape& t       = student_ctx.tape;
    const Index b = static_cast<Index>(views.size());
    if (b < 1 || batch.size() != views.size())
        throw std::invalid_argument("build_step_loss: inconsistent batch");
    if ((teacher_ctx == nullptr) != cfg.disable_l_d)
        throw std::invalid_argument("build_step_loss: teacher context/disable_L_D mismatch");
    const PatchGrid grid = cfg.model.grid();
    const Index n = grid.n_patches;

    std::vector<const Array*> x_s(static_cast<size_t>(b)), x_t(static_cast<size_t>(b));
    std::vector<double> sig_s(static_cast<size_t>(b)), sig_t(static_cast<size_t>(b));
    std::vector<Index> labels(static_cast<size_t>(b));
    std::vector<const PatchMask*> masks(static_cast<size_t>(b));
    for (Index i = 0; i < b; ++i) {
        const ViewPair& vp      = views[static_cast<size_t>(i)];
        x_s[static_cast<size_t>(i)]    = &vp.student_view;
        x_t[static_cast<size_t>(i)]    = &vp.teacher_view;
        sig_s[static_cast<size_t>(i)]  = vp.sigma_s;
        sig_t[static_cast<size_t>(i)]  = vp.sigma_t;
        labels[static_cast<size_t>(i)] = vp.class_label;
        masks[static_cast<size_t>(i)]  = &vp.mask;
    }

    StudentForward fwd = student_forward(student_ctx, cfg.model, cfg.noise, x_s, sig_s, labels, masks);

    // L_G: mean squared error of the denoised output against x0 over all n
    // patches (the loss never restricts to the mask)
    Matrix x0_tokens(b * n, grid.token_dim());
    for (Index i = 0; i < b; ++i)
        x0_tokens.middleRows(i * n, n) = patchify(batch[static_cast<size_t>(i)]->x, grid);
    Var residual2 = t.square(t.sub(fwd.d_tokens, t.leaf(std::move(x0_tokens))));
    LossBuild out;
    if (cfg.edm_weighted_loss) {
        Matrix w(b, grid.token_dim());
        for (Index i = 0; i < b; ++i)
            w.row(i).setConstant(edm_loss_weight(sig_s[static_cast<size_t>(i)], cfg.noise));
        residual2 = t.bcast_mul(residual2, t.leaf(std::move(w)), n);
    }
    out.l_g   = t.mean_all(residual2);
    out.total = out.l_g;
    if (cfg.disable_l_d) return out;

    TeacherVars tv = teacher_forward(*teacher_ctx, cfg.model, cfg.noise, x_t, sig_t, labels);
    out.teacher_cls_logits   = t.val(tv.cls_logits);
    out.teacher_patch_logits = t.val(tv.patch_logits);

    // teacher targets: centered + sharpened distributions at visible positions
    const Index n_vis = fwd.n_visible;
    Matrix pt_cls     = sharpen_softmax(out.teacher_cls_logits, tau_t, centers.c_cls);
    Matrix pt_vis(b * n_vis, cfg.model.proj_dim);
    for (Index i = 0; i < b; ++i) {
        const PatchMask& m = *masks[static_cast<size_t>(i)];
        for (Index vr = 0; vr < n_vis; ++vr) {
            Index j = m.visible_idx[static_cast<size_t>(vr)];
            pt_vis.row(i * n_vis + vr) = sharpen_softmax(
                out.teacher_patch_logits.row(i * n + j), tau_t, centers.c_patch);
        }
    }
    double entropy = 0.0;
    for (Index r = 0; r < pt_cls.rows(); ++r) entropy += distribution_entropy(pt_cls.row(r));
    for (Index r = 0; r < pt_vis.rows(); ++r) entropy += distribution_entropy(pt_vis.row(r));
    out.teacher_entropy = entropy / static_cast<double>(pt_cls.rows() + pt_vis.rows());

    Var s_cls_logits   = project(student_ctx, fwd.enc_cls);
    Var s_patch_logits = project(student_ctx, fwd.enc_patches);
    out.l_d_cls        = t.mean_all(t.softmax_xent(s_cls_logits, std::move(pt_cls), cfg.temps.tau_s));
    out.l_d_patch =
        t.mean_all(t.softmax_xent(s_patch_logits, std::move(pt_vis), cfg.temps.tau_s));
    out.total = t.add(out.total, t.add(out.l_d_cls, out.l_d_patch));
    return out;
}

/// Standalone generative loss of one view pair (module-level contract).
inline double generative_loss(const ParamSet& student, const RunConfig& cfg, const ViewPair& vp,
                              const Array& x0) {
    Tape t;
    t.grad_enabled = false;
    NetContext ctx(t, student, false);
    Example ex{x0, vp.class_label};
    RunConfig local  = cfg;
    local.disable_l_d = true;
    Centers unused   = Centers::zeros(cfg.model.proj_dim);
    LossBuild lb     = build_step_loss(ctx, nullptr, local, unused, cfg.temps.tau_t_start, {vp},
                                       {&ex});
    return t.val(lb.l_g)(0, 0);
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
    double lr    = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps   = 1e-8;
};

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    int64_t t = 0;

    static AdamState like(const ParamSet& p) {
        AdamState s;
        s.m.reserve(p.values.size());
        s.v.reserve(p.values.size());
        for (const Matrix& w : p.values) {
            s.m.push_back(Matrix::Zero(w.rows(), w.cols()));
            s.v.push_back(Matrix::Zero(w.rows(), w.cols()));
        }
        return s;
    }
};

inline void adam_step(ParamSet& params, const std::vector<Matrix>& grads, AdamState& st,
                      const AdamConfig& cfg) {
    if (grads.size() != params.values.size() || st.m.size() != params.values.size())
        throw std::invalid_argument("adam_step: state/gradient mismatch");
    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    for (size_t i = 0; i < params.values.size(); ++i) {
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grads[i];
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grads[i].cwiseProduct(grads[i]);
        params.values[i].array() -=
            cfg.lr * (st.m[i].array() / bc1) / ((st.v[i].array() / bc2).sqrt() + cfg.eps);
    }
}

// ---------------------------------------------------------------------------
// Train state and step

struct TrainState {
    ParamSet student;
    ParamSet teacher;
    Centers centers;
    AdamState opt;
    int64_t step  = 0;
    uint64_t seed = 0;
};

inline TrainState make_train_state(const RunConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.seed        = cfg.seed;
    RngStream init = named_stream(cfg.seed, "init");
    st.student     = init_student_params(cfg.model, init);
    st.teacher     = teacher_from_student(st.student);
    st.centers     = Centers::zeros(cfg.model.proj_dim);
    st.centers.m_c = cfg.center_m_c;
    st.centers.m_p = cfg.center_m_p;
    st.opt         = AdamState::like(st.student);
    return st;
}

struct StepMetrics {
    int64_t step           = 0;
    double l_g             = 0.0;
    double l_d_cls         = 0.0;
    double l_d_patch       = 0.0;
    double beta            = 0.0;
    double tau_t           = 0.0;
    double teacher_entropy = 0.0;
    double grad_norm       = 0.0;
    double wallclock       = 0.0;
};

struct TrainError : std::runtime_error {
    int64_t step;
    TrainError(int64_t step_, const std::string& what_) : std::runtime_error(what_), step(step_) {}
};

/// One optimization step over a batch. Mutates the state (single writer).
inline StepMetrics train_step(TrainState& state, const RunConfig& cfg,
                              const std::vector<const Example*>& batch, double epoch) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    StepStreams streams = StepStreams::at_step(state.seed, state.step);
    std::vector<ViewPair> views;
    views.reserve(batch.size());
    for (const Example* ex : batch) views.push_back(build_views(ex->x, ex->label, cfg, streams));

    ScheduleValues sched = schedules(state.step, cfg.total_steps, epoch, cfg.ema, cfg.temps);

    Tape tape;
    NetContext student_ctx(tape, state.student, true);
    LossBuild lb;
    if (cfg.disable_l_d) {
        lb = build_step_loss(student_ctx, nullptr, cfg, state.centers, sched.tau_t, views, batch);
    } else {
        NetContext teacher_ctx(tape, state.teacher, false);  // no-grad: EMA only
        lb = build_step_loss(student_ctx, &teacher_ctx, cfg, state.centers, sched.tau_t, views,
                             batch);
    }

    StepMetrics m;
    m.step            = state.step;
    m.l_g             = tape.val(lb.l_g)(0, 0);
    m.l_d_cls         = lb.l_d_cls.valid() ? tape.val(lb.l_d_cls)(0, 0) : 0.0;
    m.l_d_patch       = lb.l_d_patch.valid() ? tape.val(lb.l_d_patch)(0, 0) : 0.0;
    m.beta            = sched.beta;
    m.tau_t           = sched.tau_t;
    m.teacher_entropy = lb.teacher_entropy;
    if (!std::isfinite(m.l_g) || !std::isfinite(m.l_d_cls) || !std::isfinite(m.l_d_patch)) {
        std::string sigmas;
        for (const ViewPair& vp : views) sigmas += std::to_string(vp.sigma_s) + " ";
        throw TrainError(state.step, "non-finite loss at step " + std::to_string(state.step) +
                                         " (sigma_s draws: " + sigmas + ")");
    }

    tape.backward(lb.total);
    std::vector<Matrix> grads;
    grads.reserve(state.student.values.size());
    double sq_norm = 0.0;
    for (const std::string& name : state.student.names) {
        grads.push_back(tape.grad_of(student_ctx[name]));
        sq_norm += grads.back().squaredNorm();
    }
    m.grad_norm = std::sqrt(sq_norm);

    AdamConfig adam;
    adam.lr = cfg.lr;
    adam_step(state.student, grads, state.opt, adam);
    ema_update(state.teacher, state.student, sched.beta);
    if (!cfg.disable_l_d)
        update_centers(state.centers, lb.teacher_cls_logits, lb.teacher_patch_logits);
    state.step += 1;
    m.wallclock = std::chrono::duration<double>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();
    return m;
}

// ---------------------------------------------------------------------------
// Metrics log + training loop

inline json metrics_to_json(const StepMetrics& m) {
    return json{{"step", m.step},
                {"L_G", m.l_g},
                {"L_D_cls", m.l_d_cls},
                {"L_D_patch", m.l_d_patch},
                {"beta", m.beta},
                {"tau_t", m.tau_t},
                {"teacher_entropy", m.teacher_entropy},
                {"grad_norm", m.grad_norm},
                {"wallclock", m.wallclock}};
}

inline StepMetrics metrics_from_json(const json& j) {
    StepMetrics m;
    m.step            = j.at("step").get<int64_t>();
    m.l_g             = j.at("L_G").get<double>();
    m.l_d_cls         = j.at("L_D_cls").get<double>();
    m.l_d_patch       = j.at("L_D_patch").get<double>();
    m.beta            = j.at("beta").get<double>();
    m.tau_t           = j.at("tau_t").get<double>();
    m.teacher_entropy = j.at("teacher_entropy").get<double>();
    m.grad_norm       = j.at("grad_norm").get<double>();
    m.wallclock       = j.at("wallclock").get<double>();
    return m;
}

/// Newline-delimited JSON metrics, one record per step.
class MetricsWriter {
  public:
    explicit MetricsWriter(const std::string& path) : out_(path, std::ios::app) {
        if (!out_) throw std::runtime_error("metrics: cannot open " + path);
    }

    void append(const StepMetrics& m) {
        out_ << metrics_to_json(m).dump() << "\n";
        out_.flush();
    }

  private:
    std::ofstream out_;
};

inline std::vector<StepMetrics> read_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("metrics: cannot open " + path);
    std::vector<StepMetrics> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(metrics_from_json(json::parse(line)));
    }
    return out;
}

struct TrainCallbacks {
    std::function<void(const StepMetrics&)> on_metrics;
    std::function<void(TrainState&)> on_checkpoint;        // at checkpoint_interval
    std::function<void(const TrainState&, int64_t)> on_eval;  // at eval_interval
};

/// Runs steps [state.step, cfg.total_steps). Empty dataset is an error;
/// total_steps = 0 returns the initial state with an empty log.
inline TrainState run_training(const RunConfig& cfg, const Dataset& dataset, TrainState state,
                               const TrainCallbacks& cb = {},
                               std::vector<StepMetrics>* log = nullptr) {
    cfg.validate();
    if (dataset.size() == 0) throw std::invalid_argument("run_training: dataset is empty");
    while (state.step < cfg.total_steps) {
        auto batch   = dataset.batch(state.seed, state.step, cfg.batch_size);
        double epoch = dataset.epoch_of_step(state.step, cfg.batch_size);
        StepMetrics m = train_step(state, cfg, batch, epoch);
        if (log) log->push_back(m);
        if (cb.on_metrics) cb.on_metrics(m);
        if (cb.on_eval && cfg.eval_interval > 0 &&
            (state.step % cfg.eval_interval == 0 || state.step == cfg.total_steps))
            cb.on_eval(state, state.step);
        if (cb.on_checkpoint && cfg.checkpoint_interval > 0 &&
            state.step % cfg.checkpoint_interval == 0)
            cb.on_checkpoint(state);
    }
    return state;
}

}  // namespace ddit
