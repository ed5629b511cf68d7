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
#include <stdexcept>
#include <vector>

#include "ddit/common.hpp"
#include "ddit/masking.hpp"
#include "ddit/network.hpp"

// DINO-style discrimination objective: temperature-sharpened softmax with
// teacher-side centering, per-token cross-entropy aggregated over visible
// patch tokens plus the [CLS] token, running-center updates and EMA teacher
// updates with their schedules. Teacher outputs are constants everywhere
// (stop-gradient); only EMA ever moves teacher parameters.

namespace ddit {

constexpr double kLogFloor = 1e-12;

struct Centers {
    Eigen::RowVectorXd c_cls;
    Eigen::RowVectorXd c_patch;
    double m_c = 0.9;
    double m_p = 0.9;

    static Centers zeros(Index k) {
        Centers c;
        c.c_cls   = Eigen::RowVectorXd::Zero(k);
        c.c_patch = Eigen::RowVectorXd::Zero(k);
        return c;
    }
};

struct TemperatureSchedule {
    double tau_s       = 0.1;
    double tau_t_start = 0.09;
    double tau_t_end   = 0.099;
    int warmup_epochs  = 5;

    void validate() const {
        if (!(tau_s > 0.0 && tau_t_start > 0.0 && tau_t_end > 0.0))
            throw std::invalid_argument("TemperatureSchedule: temperatures must be > 0");
        if (!(tau_t_start < tau_s && tau_t_end < tau_s))
            throw std::invalid_argument("TemperatureSchedule: teacher must be sharper (tau_t < tau_s)");
        if (warmup_epochs < 1)
            throw std::invalid_argument("TemperatureSchedule: warmup_epochs must be >= 1");
    }
};

struct EmaSchedule {
    double beta_start = 0.996;
    double beta_end   = 0.999;

    void validate() const {
        if (!(beta_start > 0.0 && beta_start < 1.0 && beta_end > 0.0 && beta_end < 1.0))
            throw std::invalid_argument("EmaSchedule: betas must be in (0,1)");
        if (beta_start > beta_end)
            throw std::invalid_argument("EmaSchedule: beta must be non-decreasing");
    }
};

/// Row-wise p_k = exp((z_k - c_k)/tau) / sum_j exp((z_j - c_j)/tau).
/// The center is a teacher-side device; pass the no-center overload for the
/// student.
inline Matrix sharpen_softmax(const Matrix& logits, double tau, const Eigen::RowVectorXd& center) {
    if (!(tau > 0.0)) throw std::invalid_argument("sharpen_softmax: temperature must be > 0");
    if (center.size() != 0 && center.size() != logits.cols())
        throw std::invalid_argument("sharpen_softmax: center width mismatch");
    Matrix p(logits.rows(), logits.cols());
    for (Index r = 0; r < logits.rows(); ++r) {
        Eigen::RowVectorXd y = logits.row(r);
        if (center.size() != 0) y -= center;
        y /= tau;
        double m = y.maxCoeff();
        // scalar std::exp: underflows to exact zero, so saturated logits
        // produce exact one-hot rows
        for (Index k = 0; k < y.size(); ++k) y[k] = std::exp(y[k] - m);
        p.row(r) = y / y.sum();
    }
    return p;
}

inline Matrix sharpen_softmax(const Matrix& logits, double tau) {
    return sharpen_softmax(logits, tau, Eigen::RowVectorXd());
}

/// -sum_k p_teacher[k] ln p_student[k], teacher row treated as constant.
inline double token_cross_entropy(const Eigen::RowVectorXd& p_teacher,
                                  const Eigen::RowVectorXd& p_student) {
    if (p_teacher.size() != p_student.size())
        throw std::invalid_argument("token_cross_entropy: width mismatch");
    return -(p_teacher.array() * p_student.array().max(kLogFloor).log()).sum();
}

inline double distribution_entropy(const Eigen::RowVectorXd& p) {
    return -(p.array() * p.array().max(kLogFloor).log()).sum();
}

struct TokenLogits {
    Eigen::RowVectorXd cls;  // 1 x K
    Matrix patches;          // tokens x K
};

struct DiscriminationLoss {
    double patch_term = 0.0;
    double cls_term   = 0.0;
    double total() const { return patch_term + cls_term; }
};

/// Single-sample discrimination loss:
///   L_D = (1/|visible|) sum_{i in visible} CE(P_T_i, P_S_i) + CE(P_T_cls, P_S_cls)
/// Teacher rows are centered (c_patch / c_cls) and sharpened at tau_t; student
/// rows use tau_s with no centering. Teacher patch logits cover all n grid
/// positions; student patch logits exist exactly at the visible indices.
inline DiscriminationLoss discrimination_loss(const TokenLogits& teacher,
                                              const TokenLogits& student, const PatchMask& mask,
                                              const Centers& centers, double tau_t, double tau_s) {
    const Index n_vis = static_cast<Index>(mask.visible_idx.size());
    if (n_vis == 0) throw std::invalid_argument("discrimination_loss: zero visible tokens");
    if (teacher.patches.rows() != mask.n())
        throw std::invalid_argument("discrimination_loss: teacher patch rows must cover the grid");
    if (student.patches.rows() != n_vis)
        throw std::invalid_argument("discrimination_loss: student rows must match visible count");

    DiscriminationLoss out;
    Matrix pt_cls = sharpen_softmax(teacher.cls, tau_t, centers.c_cls);
    Matrix ps_cls = sharpen_softmax(student.cls, tau_s);
    out.cls_term  = token_cross_entropy(pt_cls.row(0), ps_cls.row(0));

    Matrix ps = sharpen_softmax(student.patches, tau_s);
    for (Index i = 0; i < n_vis; ++i) {
        Matrix pt = sharpen_softmax(teacher.patches.row(mask.visible_idx[static_cast<size_t>(i)]),
                                    tau_t, centers.c_patch);
        out.patch_term += token_cross_entropy(pt.row(0), ps.row(i));
    }
    out.patch_term /= static_cast<double>(n_vis);
    return out;
}

/// Running-center update from the current batch of teacher head outputs
/// (pre-softmax). cls_logits is B x K, patch_logits stacks all teacher patch
/// tokens of the batch.
inline void update_centers(Centers& centers, const Matrix& cls_logits, const Matrix& patch_logits) {
    if (cls_logits.rows() == 0 || patch_logits.rows() == 0)
        throw std::invalid_argument("update_centers: empty batch");
    if (!(centers.m_c >= 0.0 && centers.m_c <= 1.0 && centers.m_p >= 0.0 && centers.m_p <= 1.0))
        throw std::invalid_argument("update_centers: momenta must be in [0,1]");
    centers.c_cls   = centers.m_c * centers.c_cls + (1.0 - centers.m_c) * cls_logits.colwise().mean();
    centers.c_patch =
        centers.m_p * centers.c_patch + (1.0 - centers.m_p) * patch_logits.colwise().mean();
}

/// theta' <- beta theta' + (1 - beta) theta, elementwise over the shared
/// manifest. Never part of any gradient computation.
inline void ema_update(ParamSet& teacher, const ParamSet& student, double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("ema_update: beta out of [0,1]");
    for (size_t i = 0; i < teacher.names.size(); ++i) {
        const std::string& name = teacher.names[i];
        if (!student.has(name)) throw std::invalid_argument("ema_update: manifest mismatch at " + name);
        const Matrix& s = student.at(name);
        Matrix& t       = teacher.values[i];
        if (s.rows() != t.rows() || s.cols() != t.cols())
            throw std::invalid_argument("ema_update: shape mismatch at " + name);
        t = beta * t + (1.0 - beta) * s;
    }
}

struct ScheduleValues {
    double beta;
    double tau_t;
};

/// beta follows a cosine ramp beta_start -> beta_end over total_steps; tau_t
/// ramps linearly over the first warmup_epochs epochs, then stays constant.
inline ScheduleValues schedules(int64_t step, int64_t total_steps, double epoch,
                                const EmaSchedule& ema, const TemperatureSchedule& temps) {
    ema.validate();
    temps.validate();
    double u = total_steps <= 0
                   ? 1.0
                   : std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
    ScheduleValues out;
    out.beta = ema.beta_end + (ema.beta_start - ema.beta_end) * 0.5 * (1.0 + std::cos(M_PI * u));
    double w = static_cast<double>(temps.warmup_epochs);
    out.tau_t = epoch >= w ? temps.tau_t_end
                           : temps.tau_t_start +
                                 (temps.tau_t_end - temps.tau_t_start) * std::max(epoch, 0.0) / w;
    return out;
}

}  // namespace ddit
