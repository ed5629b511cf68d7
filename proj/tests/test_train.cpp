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

#include <catch2/catch.hpp>

#include "ddit/train.hpp"
#include "testutil.hpp"

using namespace ddit;

namespace {

RunConfig tiny_run() {
    RunConfig cfg;
    cfg.model.embed_dim     = 8;
    cfg.model.depth_encoder = 1;
    cfg.model.depth_decoder = 1;
    cfg.model.n_heads       = 2;
    cfg.model.patch_size    = 2;
    cfg.model.n_classes     = 2;
    cfg.model.proj_dim      = 16;
    cfg.model.proj_hidden   = 16;
    cfg.model.channels      = 1;
    cfg.model.image_size    = 4;  // n = 4
    cfg.dataset.kind        = "two_texture";
    cfg.dataset.size        = 32;
    cfg.dataset.image_size  = 4;
    cfg.batch_size          = 4;
    cfg.total_steps         = 12;
    cfg.mask_ratio          = 0.5;
    cfg.seed                = 99;
    return cfg;
}

bool metrics_equal_ignoring_wallclock(const StepMetrics& a, const StepMetrics& b) {
    return a.step == b.step && a.l_g == b.l_g && a.l_d_cls == b.l_d_cls &&
           a.l_d_patch == b.l_d_patch && a.beta == b.beta && a.tau_t == b.tau_t &&
           a.teacher_entropy == b.teacher_entropy && a.grad_norm == b.grad_norm;
}

}  // namespace

TEST_CASE("build_views constructs the discriminative pair", "[train]") {
    RunConfig cfg = tiny_run();
    Dataset data  = Dataset::two_texture(8, 4, 5);

    SECTION("teacher view sits at sigma_min by default") {
        StepStreams s = StepStreams::at_step(cfg.seed, 0);
        ViewPair vp   = build_views(data.at(0).x, data.at(0).label, cfg, s);
        CHECK(vp.sigma_t == cfg.noise.sigma_min);
        CHECK(vp.sigma_s > 0.0);
        // teacher view differs from x0 only by noise of std 0.002
        CHECK((vp.teacher_view.data - data.at(0).x.data).cwiseAbs().maxCoeff() < 0.002 * 6);
    }
    SECTION("mask has the exact configured count") {
        RunConfig wide       = tiny_run();
        wide.model.image_size   = 20;  // n = 100
        wide.dataset.image_size = 20;
        wide.mask_ratio         = 0.2;
        StepStreams s = StepStreams::at_step(1, 0);
        Array x0{{1, 20, 20}};
        ViewPair vp = build_views(x0, 0, wide, s);
        CHECK(vp.mask.invisible_idx.size() == 20);
    }
    SECTION("same seed, same step: identical pair") {
        StepStreams s1 = StepStreams::at_step(7, 3);
        StepStreams s2 = StepStreams::at_step(7, 3);
        ViewPair a = build_views(data.at(1).x, 1, cfg, s1);
        ViewPair b = build_views(data.at(1).x, 1, cfg, s2);
        CHECK(a.sigma_s == b.sigma_s);
        CHECK(a.student_view == b.student_view);
        CHECK(a.teacher_view == b.teacher_view);
        CHECK(a.mask.bits == b.mask.bits);
    }
    SECTION("fixed-value and same-as-student teacher modes") {
        RunConfig fixed          = tiny_run();
        fixed.teacher_sigma_mode  = TeacherSigmaMode::kFixedValue;
        fixed.teacher_sigma_value = 0.5;
        StepStreams s1 = StepStreams::at_step(7, 0);
        CHECK(build_views(data.at(0).x, 0, fixed, s1).sigma_t == 0.5);
        RunConfig same         = tiny_run();
        same.teacher_sigma_mode = TeacherSigmaMode::kSameAsStudent;
        StepStreams s2 = StepStreams::at_step(7, 0);
        ViewPair vp    = build_views(data.at(0).x, 0, same, s2);
        CHECK(vp.sigma_t > 0.0);
        CHECK(vp.sigma_t != vp.sigma_s);  // independent draw
    }
}

TEST_CASE("generative loss closed form at standard init", "[train]") {
    // At standard init the decoder output layer is zero, so F == 0 and the
    // denoised output is exactly c_skip * x_sigma.
    RunConfig cfg = tiny_run();
    Dataset data  = Dataset::two_texture(8, 4, 5);
    StepStreams s = StepStreams::at_step(cfg.seed, 0);
    ViewPair vp   = build_views(data.at(0).x, data.at(0).label, cfg, s);
    TrainState st = make_train_state(cfg);

    double got = generative_loss(st.student, cfg, vp, data.at(0).x);
    double c_skip = precondition_coeffs(vp.sigma_s, cfg.noise).c_skip;
    Vector diff   = c_skip * vp.student_view.data - data.at(0).x.data;
    CHECK(got == Approx(diff.squaredNorm() / diff.size()).epsilon(1e-12));

    SECTION("loss averages over all patches regardless of mask ratio") {
        // with F == 0 the encoder input set is irrelevant, so the loss is
        // bitwise identical across mask ratios
        ViewPair vp0 = vp;
        vp0.mask     = PatchMask::all_visible(cfg.model.n_patches());
        CHECK(generative_loss(st.student, cfg, vp0, data.at(0).x) == got);
    }
    SECTION("EDM-weighted option scales by 1/c_out^2") {
        RunConfig weighted        = cfg;
        weighted.edm_weighted_loss = true;
        double w = edm_loss_weight(vp.sigma_s, cfg.noise);
        CHECK(generative_loss(st.student, weighted, vp, data.at(0).x) ==
              Approx(w * got).epsilon(1e-10));
    }
}

TEST_CASE("decoupling: stop-gradient and decoder isolation are exact", "[train]") {
    RunConfig cfg = tiny_run();
    Dataset data  = Dataset::two_texture(8, 4, 5);
    RngStream init = named_stream(3, "init");
    ParamSet student = init_student_params(cfg.model, init, InitMode::kGeneric);
    ParamSet teacher = teacher_from_student(student);
    // make the teacher distinct from the student
    for (Matrix& m : teacher.values) m.array() += 0.01;
    Centers centers = Centers::zeros(cfg.model.proj_dim);

    StepStreams s = StepStreams::at_step(cfg.seed, 0);
    std::vector<ViewPair> views;
    std::vector<const Example*> batch;
    for (Index i = 0; i < 2; ++i) {
        batch.push_back(&data.at(i));
        views.push_back(build_views(data.at(i).x, data.at(i).label, cfg, s));
    }

    // teacher deliberately placed on the tape WITH gradients enabled: the
    // stop-gradient must still keep every teacher gradient at exact zero
    Tape tape;
    NetContext student_ctx(tape, student, true);
    NetContext teacher_ctx(tape, teacher, true);
    LossBuild lb = build_step_loss(student_ctx, &teacher_ctx, cfg, centers, 0.09, views, batch);

    SECTION("d L_D / d decoder == 0 and teacher gradients == 0") {
        tape.backward(tape.add(lb.l_d_cls, lb.l_d_patch));
        for (const std::string& name : student.names) {
            if (is_decoder_param(name)) {
                INFO(name);
                CHECK(tape.grad_of(student_ctx[name]).isZero(0.0));
            }
        }
        for (const std::string& name : teacher.names) {
            INFO(name);
            CHECK(tape.grad_of(teacher_ctx[name]).isZero(0.0));
        }
        // the student encoder does receive discrimination gradient
        CHECK(!tape.grad_of(student_ctx["enc.block0.attn.q.w"]).isZero(0.0));
        CHECK(!tape.grad_of(student_ctx["head.fc3.w"]).isZero(0.0));
    }
    SECTION("total loss: teacher gradients stay exactly zero") {
        tape.backward(lb.total);
        for (const std::string& name : teacher.names)
            CHECK(tape.grad_of(teacher_ctx[name]).isZero(0.0));
        CHECK(!tape.grad_of(student_ctx["dec.final.out.w"]).isZero(0.0));
    }
}

TEST_CASE("analytic gradients of L_G + L_D match finite differences", "[train][slow]") {
    RunConfig cfg = tiny_run();
    Dataset data  = Dataset::two_texture(8, 4, 5);
    RngStream init = named_stream(4, "init");
    ParamSet student = init_student_params(cfg.model, init, InitMode::kGeneric);
    ParamSet teacher = teacher_from_student(student);
    for (Matrix& m : teacher.values) m.array() += 0.005;
    Centers centers = Centers::zeros(cfg.model.proj_dim);
    RngStream crng  = named_stream(5, "centers");
    for (Index k = 0; k < cfg.model.proj_dim; ++k) {
        centers.c_cls[k]   = 0.1 * crng.normal();
        centers.c_patch[k] = 0.1 * crng.normal();
    }

    StepStreams s = StepStreams::at_step(11, 0);
    std::vector<ViewPair> views;
    std::vector<const Example*> batch;
    for (Index i = 0; i < 2; ++i) {
        batch.push_back(&data.at(i));
        views.push_back(build_views(data.at(i).x, data.at(i).label, cfg, s));
    }

    auto loss_value = [&](const ParamSet& p) {
        Tape t;
        t.grad_enabled = false;
        NetContext sc(t, p, false);
        NetContext tc(t, teacher, false);
        LossBuild lb = build_step_loss(sc, &tc, cfg, centers, 0.09, views, batch);
        return t.val(lb.total)(0, 0);
    };

    Tape tape;
    NetContext sc(tape, student, true);
    NetContext tc(tape, teacher, false);
    LossBuild lb = build_step_loss(sc, &tc, cfg, centers, 0.09, views, batch);
    tape.backward(lb.total);

    // spot-check a deterministic sample of coordinates in every tensor
    ParamSet probe = student;
    const double h = 1e-5;
    for (size_t pi = 0; pi < student.names.size(); ++pi) {
        Matrix analytic = tape.grad_of(sc[student.names[pi]]);
        Index stride    = std::max<Index>(1, analytic.size() / 5);
        for (Index lin = 0; lin < analytic.size(); lin += stride) {
            Index i = lin % analytic.rows(), j = lin / analytic.rows();
            double orig = probe.values[pi](i, j);
            probe.values[pi](i, j) = orig + h;
            double up = loss_value(probe);
            probe.values[pi](i, j) = orig - h;
            double dn = loss_value(probe);
            probe.values[pi](i, j) = orig;
            double fd = (up - dn) / (2.0 * h);
            INFO(student.names[pi] << "(" << i << "," << j << ")");
            CHECK(std::abs(fd - analytic(i, j)) <=
                  1e-8 + 1e-4 * std::max(std::abs(fd), std::abs(analytic(i, j))));
        }
    }
}

TEST_CASE("train_step metrics and determinism", "[train]") {
    RunConfig cfg = tiny_run();
    Dataset data  = Dataset::two_texture(cfg.dataset.size, 4, cfg.seed);

    SECTION("two identical-seed runs produce identical metrics for 10+ steps") {
        cfg.total_steps = 10;
        std::vector<StepMetrics> log_a, log_b;
        run_training(cfg, data, make_train_state(cfg), {}, &log_a);
        run_training(cfg, data, make_train_state(cfg), {}, &log_b);
        REQUIRE(log_a.size() == 10);
        REQUIRE(log_b.size() == 10);
        for (size_t i = 0; i < log_a.size(); ++i)
            CHECK(metrics_equal_ignoring_wallclock(log_a[i], log_b[i]));
    }
    SECTION("teacher parameters move only by EMA") {
        TrainState st   = make_train_state(cfg);
        ParamSet frozen = st.teacher;
        auto batch      = data.batch(cfg.seed, 0, cfg.batch_size);
        StepMetrics m   = train_step(st, cfg, batch, 0.0);
        // after one step: teacher = beta * old + (1 - beta) * new_student
        for (const std::string& name : st.teacher.names) {
            Matrix expected =
                m.beta * frozen.at(name) + (1.0 - m.beta) * st.student.at(name);
            CHECK(st.teacher.at(name).isApprox(expected, 1e-12));
        }
    }
    SECTION("metrics carry the schedule values") {
        TrainState st = make_train_state(cfg);
        auto batch    = data.batch(cfg.seed, 0, cfg.batch_size);
        StepMetrics m = train_step(st, cfg, batch, 0.0);
        CHECK(m.beta == Approx(0.996));
        CHECK(m.tau_t == Approx(0.09));
        CHECK(m.l_g > 0.0);
        CHECK(m.l_d_cls >= 0.0);
        CHECK(m.l_d_patch >= 0.0);
        CHECK(m.teacher_entropy > 0.0);
        CHECK(m.grad_norm > 0.0);
        CHECK(st.step == 1);
    }
}

TEST_CASE("non-finite loss aborts with a diagnostic", "[train]") {
    RunConfig cfg = tiny_run();
    Dataset data  = Dataset::two_texture(cfg.dataset.size, 4, cfg.seed);
    TrainState st = make_train_state(cfg);
    st.student.at("embed.patch.w")(0, 0) = std::nan("");
    auto batch = data.batch(cfg.seed, 0, cfg.batch_size);
    try {
        train_step(st, cfg, batch, 0.0);
        FAIL("expected TrainError");
    } catch (const TrainError& e) {
        CHECK(e.step == 0);
        CHECK(std::string(e.what()).find("sigma_s") != std::string::npos);
    }
}

TEST_CASE("run_training edge cases", "[train]") {
    RunConfig cfg = tiny_run();
    Dataset data  = Dataset::two_texture(cfg.dataset.size, 4, cfg.seed);

    SECTION("total_steps = 0 returns the initial state with an empty log") {
        cfg.total_steps = 0;
        std::vector<StepMetrics> log;
        TrainState st = run_training(cfg, data, make_train_state(cfg), {}, &log);
        CHECK(st.step == 0);
        CHECK(log.empty());
    }
    SECTION("disable_L_D removes the loss but keeps the EMA tracking") {
        cfg.disable_l_d = true;
        cfg.total_steps = 3;
        std::vector<StepMetrics> log;
        TrainState st = run_training(cfg, data, make_train_state(cfg), {}, &log);
        for (const StepMetrics& m : log) {
            CHECK(m.l_d_cls == 0.0);
            CHECK(m.l_d_patch == 0.0);
        }
        // EMA is unconditional: the teacher tracks the moving student
        TrainState fresh = make_train_state(cfg);
        bool teacher_moved = false;
        for (const std::string& name : st.teacher.names)
            if (!st.teacher.at(name).isApprox(fresh.teacher.at(name), 0.0)) teacher_moved = true;
        CHECK(teacher_moved);
    }
    SECTION("per-step metrics include both discrimination terms") {
        cfg.total_steps = 2;
        std::vector<StepMetrics> log;
        run_training(cfg, data, make_train_state(cfg), {}, &log);
        json j = metrics_to_json(log[0]);
        CHECK(j.contains("L_G"));
        CHECK(j.contains("L_D_cls"));
        CHECK(j.contains("L_D_patch"));
        CHECK(j.contains("beta"));
        CHECK(j.contains("tau_t"));
        CHECK(j.contains("teacher_entropy"));
        CHECK(j.contains("grad_norm"));
        CHECK(j.contains("wallclock"));
    }
}
