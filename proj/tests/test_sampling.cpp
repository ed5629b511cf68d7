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

#include "ddit/sampling.hpp"
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
    cfg.model.image_size    = 4;
    cfg.dataset.size        = 16;
    cfg.dataset.image_size  = 4;
    cfg.batch_size          = 4;
    cfg.sample_steps        = 12;
    cfg.seed                = 31;
    return cfg;
}

}  // namespace

TEST_CASE("generate shape, determinism, and masklessness", "[sampling]") {
    RunConfig cfg = tiny_run();
    TrainState st = make_train_state(cfg);

    SECTION("count and shape match the request") {
        auto samples = generate(st.student, cfg.model, cfg.noise, 1, 3, cfg.sample_steps,
                                cfg.sample_rho, 5);
        REQUIRE(samples.size() == 3);
        for (const Array& s : samples) {
            CHECK(s.shape == std::vector<Index>{1, 4, 4});
            CHECK(s.finite());
        }
    }
    SECTION("same seed gives bitwise-identical samples") {
        auto a = generate(st.student, cfg.model, cfg.noise, 0, 2, cfg.sample_steps,
                          cfg.sample_rho, 9);
        auto b = generate(st.student, cfg.model, cfg.noise, 0, 2, cfg.sample_steps,
                          cfg.sample_rho, 9);
        CHECK(a[0] == b[0]);
        CHECK(a[1] == b[1]);
    }
    SECTION("generation never constructs a mask") {
        uint64_t before = g_sample_mask_calls.load();
        generate(st.student, cfg.model, cfg.noise, 0, 2, 6, cfg.sample_rho, 9);
        CHECK(g_sample_mask_calls.load() == before);
    }
    SECTION("invalid class rejected") {
        CHECK_THROWS_AS(generate(st.student, cfg.model, cfg.noise, 7, 1, 6, 7.0, 1),
                        std::invalid_argument);
    }
    SECTION("per-sample streams: sample i is independent of the batch size") {
        auto a = generate(st.student, cfg.model, cfg.noise, 0, 1, 6, 7.0, 4);
        auto b = generate(st.student, cfg.model, cfg.noise, 0, 3, 6, 7.0, 4);
        CHECK(a[0].data.isApprox(b[0].data, 1e-12));
    }
}

TEST_CASE("feature_stats", "[sampling]") {
    SECTION("identical rows give a zero covariance") {
        Matrix f = Matrix::Constant(5, 3, 0.7);
        FeatureStats st = feature_stats(f);
        CHECK(st.sigma.isZero(0.0));
        CHECK(st.mu.isApprox(Vector::Constant(3, 0.7), 1e-15));
        CHECK(st.count == 5);
    }
    SECTION("d=1 features {0,2}: mu=1, sigma=2 (unbiased)") {
        Matrix f(2, 1);
        f << 0.0, 2.0;
        FeatureStats st = feature_stats(f);
        CHECK(st.mu[0] == Approx(1.0));
        CHECK(st.sigma(0, 0) == Approx(2.0));
    }
    SECTION("permutation invariance") {
        RngStream rng = named_stream(2, "test");
        Matrix f      = testutil::random_matrix(6, 4, rng);
        Matrix g(6, 4);
        std::vector<Index> perm{5, 3, 0, 1, 4, 2};
        for (Index i = 0; i < 6; ++i) g.row(i) = f.row(perm[static_cast<size_t>(i)]);
        FeatureStats a = feature_stats(f), b = feature_stats(g);
        CHECK(a.mu.isApprox(b.mu, 1e-12));
        CHECK(a.sigma.isApprox(b.sigma, 1e-12));
    }
    SECTION("fewer than two rows rejected") {
        CHECK_THROWS_AS(feature_stats(Matrix(1, 3)), std::invalid_argument);
    }
}

TEST_CASE("frechet_distance closed forms", "[sampling]") {
    auto gauss1d = [](double mu, double var) {
        FeatureStats st;
        st.mu    = Vector::Constant(1, mu);
        st.sigma = Matrix::Constant(1, 1, var);
        st.count = 2;
        return st;
    };
    SECTION("identical stats give zero") {
        RngStream rng = named_stream(3, "test");
        Matrix f      = testutil::random_matrix(8, 3, rng);
        FeatureStats a = feature_stats(f);
        CHECK(frechet_distance(a, a) <= 1e-6);
    }
    SECTION("1-D N(0,1) vs N(d,1) gives d^2") {
        for (double d : {0.5, 2.0, 7.0})
            CHECK(frechet_distance(gauss1d(0, 1), gauss1d(d, 1)) == Approx(d * d).margin(1e-6));
    }
    SECTION("1-D N(0,1) vs N(0,4) gives (1-2)^2 = 1") {
        CHECK(frechet_distance(gauss1d(0, 1), gauss1d(0, 4)) == Approx(1.0).margin(1e-6));
    }
    SECTION("symmetry") {
        RngStream rng = named_stream(4, "test");
        Matrix f = testutil::random_matrix(10, 3, rng);
        Matrix g = testutil::random_matrix(12, 3, rng);
        g.array() += 0.3;
        FeatureStats a = feature_stats(f), b = feature_stats(g);
        CHECK(frechet_distance(a, b) == Approx(frechet_distance(b, a)).margin(1e-8));
        CHECK(frechet_distance(a, b) >= 0.0);
    }
    SECTION("non-PSD covariance rejected") {
        FeatureStats bad;
        bad.mu    = Vector::Zero(2);
        bad.sigma = Matrix(2, 2);
        bad.sigma << 1.0, 0.0, 0.0, -0.5;
        bad.count = 2;
        CHECK_THROWS_WITH(frechet_distance(bad, bad), Catch::Matchers::Contains("PSD"));
    }
    SECTION("dimension mismatch rejected") {
        FeatureStats a = gauss1d(0, 1);
        FeatureStats b;
        b.mu    = Vector::Zero(2);
        b.sigma = Matrix::Identity(2, 2);
        b.count = 2;
        CHECK_THROWS_AS(frechet_distance(a, b), std::invalid_argument);
    }
}

TEST_CASE("evaluate_fid produces a well-formed report", "[sampling]") {
    RunConfig cfg   = tiny_run();
    cfg.eval_samples = 4;
    cfg.sample_steps = 6;
    Dataset data    = Dataset::two_texture(16, 4, cfg.seed);
    TrainState st   = make_train_state(cfg);
    RawPixelFeatures fx;
    FidReport r = evaluate_fid(st.student, cfg, data, fx, 3);
    CHECK(r.n_real == 16);
    CHECK(r.n_fake == 8);
    CHECK(r.d == 16);
    CHECK(r.fid >= 0.0);
    CHECK(std::isfinite(r.fid));
    json j = fid_report_json(r);
    CHECK(j.at("n_real") == 16);
    CHECK(j.at("fid").get<double>() >= 0.0);
}
