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
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ddit/common.hpp"
#include "ddit/rng.hpp"

// EDM-style diffusion math (Karras et al. 2022): sigma-parameterized noise
// injection, preconditioning, score conversion, the Karras sampling schedule
// and a deterministic second-order Heun PF-ODE sampler.

namespace ddit {

struct NoiseSpec {
    double sigma_min  = 0.002;
    double sigma_max  = 80.0;
    double sigma_data = 0.5;
    double p_mean     = -1.2;
    double p_std      = 1.2;

    void validate() const {
        if (!(sigma_min > 0.0 && sigma_min < sigma_max))
            throw std::invalid_argument("NoiseSpec: need 0 < sigma_min < sigma_max");
        if (!(sigma_data > 0.0)) throw std::invalid_argument("NoiseSpec: sigma_data must be > 0");
        if (!(p_std > 0.0)) throw std::invalid_argument("NoiseSpec: p_std must be > 0");
    }
};

/// Deterministic decreasing noise levels sigma_0..sigma_N for sampling.
struct SigmaSchedule {
    std::vector<double> sigmas;  // length n_steps + 1, last entry 0
    int n_steps = 40;
    double rho  = 7.0;

    void validate() const {
        if (n_steps < 1 || sigmas.size() != static_cast<size_t>(n_steps) + 1)
            throw std::invalid_argument("SigmaSchedule: bad length");
        if (sigmas.back() != 0.0)
            throw std::invalid_argument("SigmaSchedule: last level must be 0");
        for (int i = 0; i + 1 <= n_steps; ++i)
            if (!(sigmas[i] > sigmas[i + 1]))
                throw std::invalid_argument("SigmaSchedule: levels must strictly decrease");
    }
};

struct PreconditionCoeffs {
    double c_skip;
    double c_out;
    double c_in;
    double c_noise;
};

/// Draw a training noise level: ln(sigma) ~ Normal(p_mean, p_std^2).
inline double sample_sigma_student(const NoiseSpec& spec, RngStream& rng) {
    return std::exp(spec.p_mean + spec.p_std * rng.normal());
}

/// x_sigma = x0 + n, n ~ Normal(0, sigma^2 I).
inline Array perturb(const Array& x0, double sigma, RngStream& rng) {
    if (!x0.finite()) throw std::invalid_argument("perturb: non-finite input");
    if (sigma < 0.0) throw std::invalid_argument("perturb: sigma must be >= 0");
    if (sigma == 0.0) return x0;
    Array out = x0;
    for (Index i = 0; i < out.numel(); ++i) out.data[i] += sigma * rng.normal();
    return out;
}

inline PreconditionCoeffs precondition_coeffs(double sigma, const NoiseSpec& spec) {
    if (!(sigma > 0.0)) throw std::invalid_argument("precondition_coeffs: sigma must be > 0");
    const double sd2 = spec.sigma_data * spec.sigma_data;
    const double s2  = sigma * sigma;
    PreconditionCoeffs c;
    c.c_skip  = sd2 / (s2 + sd2);
    c.c_out   = sigma * spec.sigma_data / std::sqrt(s2 + sd2);
    c.c_in    = 1.0 / std::sqrt(s2 + sd2);
    c.c_noise = std::log(sigma) / 4.0;
    return c;
}

/// Per-sigma loss weight lambda(sigma) = 1 / c_out(sigma)^2, the weighting
/// EDM pairs with its preconditioning. Optional in the generative loss.
inline double edm_loss_weight(double sigma, const NoiseSpec& spec) {
    const double c_out = precondition_coeffs(sigma, spec).c_out;
    return 1.0 / (c_out * c_out);
}

/// Wrap a raw network F into the preconditioned denoiser
/// D(x, sigma) = c_skip x + c_out F(c_in x, c_noise).
/// `network_fn` maps (scaled input, c_noise) to an array of the same shape.
template <typename NetworkFn>
Array denoise(NetworkFn&& network_fn, const Array& x, double sigma, const NoiseSpec& spec) {
    const PreconditionCoeffs c = precondition_coeffs(sigma, spec);
    Array scaled{x.shape, c.c_in * x.data};
    Array f = network_fn(scaled, c.c_noise);
    if (!f.same_shape(x))
        throw std::runtime_error("denoise: network output shape " + shape_str(f.shape) +
                                 " does not match input " + shape_str(x.shape));
    return Array{x.shape, c.c_skip * x.data + c.c_out * f.data};
}

/// Score estimate (D - x_sigma) / sigma^2.
inline Array score(const Array& denoised, const Array& x_sigma, double sigma) {
    if (!denoised.same_shape(x_sigma)) throw std::invalid_argument("score: shape mismatch");
    if (!(sigma > 0.0)) throw std::invalid_argument("score: sigma must be > 0 (singular at 0)");
    return Array{denoised.shape, (denoised.data - x_sigma.data) / (sigma * sigma)};
}

/// Karras time-step discretization:
/// sigma_i = (sigma_max^(1/rho) + i/(N-1) (sigma_min^(1/rho) - sigma_max^(1/rho)))^rho,
/// sigma_N = 0. Endpoints are assigned directly so they are exact.
inline SigmaSchedule sampling_sigmas(const NoiseSpec& spec, int n_steps, double rho) {
    if (n_steps < 1) throw std::invalid_argument("sampling_sigmas: n_steps must be >= 1");
    if (!(rho > 0.0)) throw std::invalid_argument("sampling_sigmas: rho must be > 0");
    spec.validate();

    SigmaSchedule sched;
    sched.n_steps = n_steps;
    sched.rho     = rho;
    sched.sigmas.resize(static_cast<size_t>(n_steps) + 1);
    sched.sigmas[0] = spec.sigma_max;
    if (n_steps >= 2) {
        const double max_inv = std::pow(spec.sigma_max, 1.0 / rho);
        const double min_inv = std::pow(spec.sigma_min, 1.0 / rho);
        for (int i = 1; i < n_steps - 1; ++i) {
            double t        = static_cast<double>(i) / static_cast<double>(n_steps - 1);
            sched.sigmas[i] = std::pow(max_inv + t * (min_inv - max_inv), rho);
        }
        sched.sigmas[n_steps - 1] = spec.sigma_min;
    }
    sched.sigmas[n_steps] = 0.0;
    sched.validate();
    return sched;
}

struct SamplerError : std::runtime_error {
    int step;
    SamplerError(int step_, const std::string& what_)
        : std::runtime_error(what_), step(step_) {}
};

using DenoiserFn = std::function<Array(const Array&, double)>;

/// Deterministic Heun integration of dx/dsigma = (x - D(x, sigma)) / sigma
/// from sigma_0 down to 0, starting from the given state at sigma_0. Euler
/// predictor at sigma_i, trapezoidal corrector at sigma_{i+1}; the final step
/// to sigma_N = 0 stays plain Euler because the denoiser is undefined at
/// sigma = 0.
inline Array heun_sample_from(const DenoiserFn& denoiser, const SigmaSchedule& schedule,
                              Array x) {
    schedule.validate();
    for (int i = 0; i < schedule.n_steps; ++i) {
        const double s_cur = schedule.sigmas[i];
        const double s_nxt = schedule.sigmas[i + 1];
        const double dt    = s_nxt - s_cur;

        Array den = denoiser(x, s_cur);
        if (!den.same_shape(x)) throw SamplerError(i, "heun_sample: denoiser shape mismatch");
        Vector d = (x.data - den.data) / s_cur;

        if (s_nxt == 0.0) {
            x.data += dt * d;
        } else {
            Array x_pred{x.shape, x.data + dt * d};
            Array den2 = denoiser(x_pred, s_nxt);
            if (!den2.same_shape(x)) throw SamplerError(i, "heun_sample: denoiser shape mismatch");
            Vector d2 = (x_pred.data - den2.data) / s_nxt;
            x.data += dt * 0.5 * (d + d2);
        }
        if (!x.finite())
            throw SamplerError(i, "heun_sample: non-finite state at step " + std::to_string(i));
    }
    return x;
}

/// heun_sample_from with the standard start x ~ Normal(0, sigma_0^2 I).
inline Array heun_sample(const DenoiserFn& denoiser, const SigmaSchedule& schedule,
                         const std::vector<Index>& shape, RngStream& rng) {
    schedule.validate();
    Array x{shape};
    rng.fill_normal(x.data);
    x.data *= schedule.sigmas[0];
    return heun_sample_from(denoiser, schedule, std::move(x));
}

}  // namespace ddit
