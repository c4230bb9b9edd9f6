#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace cimq;

namespace {

double max_param_diff(const ParamMap& a, const ParamMap& b) {
    double m = 0.0;
    for (const auto& [name, t] : a) {
        const Tensor& u = b.at(name);
        for (size_t i = 0; i < t.size(); ++i) m = std::max(m, std::abs(t.data[i] - u.data[i]));
    }
    return m;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("conv2d matches a hand-computed dot") {
    Tensor x = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
    Tensor k = Tensor::from_data({2, 2, 1, 1}, {1, 0, 0, 1});
    Tensor y = conv2d_forward(x, k, 1, 0);
    REQUIRE(y.shape == std::vector<size_t>{1, 1, 1});
    CHECK(y.data[0] == 5.0);
}

TEST_CASE("conv2d agrees with the im2col reference on randomized cases") {
    Rng rng(2024);
    int cases = 0;
    for (int it = 0; it < 150; ++it) {
        const size_t kh = 1 + rng.next_u64() % 3, kw = 1 + rng.next_u64() % 3;
        const size_t d = 1 + rng.next_u64() % 4, n = 1 + rng.next_u64() % 3;
        const int stride = 1 + static_cast<int>(rng.next_u64() % 2);
        const int pad = static_cast<int>(rng.next_u64() % 2);
        const size_t h = kh + rng.next_u64() % 5, w = kw + rng.next_u64() % 5;

        Tensor x = Tensor::zeros({d, h, w});
        for (double& v : x.data) v = rng.normal();
        Tensor k = Tensor::zeros({kh, kw, d, n});
        for (double& v : k.data) v = rng.normal();

        Tensor got = conv2d_forward(x, k, stride, pad);
        Tensor want = oracle::conv2d_im2col(x, k, stride, pad);
        REQUIRE(got.shape == want.shape);
        for (size_t i = 0; i < got.size(); ++i) {
            CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
        }
        ++cases;
    }
    CHECK(cases == 150);
}

TEST_CASE("conv2d rejects malformed geometry") {
    Tensor x = Tensor::zeros({2, 4, 4});
    Tensor k = Tensor::zeros({3, 3, 3, 1});  // depth mismatch
    CHECK_THROWS_AS(conv2d_forward(x, k, 1, 0), DimensionError);

    Tensor flat = Tensor::zeros({16});
    Tensor k2 = Tensor::zeros({3, 3, 2, 1});
    CHECK_THROWS_AS(conv2d_forward(flat, k2, 1, 0), DimensionError);

    Tensor tiny = Tensor::zeros({2, 2, 2});
    CHECK_THROWS_AS(conv2d_forward(tiny, k2, 1, 0), DimensionError);  // empty output

    CHECK_THROWS_AS(conv2d_forward(x, k2, 0, 0), ArgumentError);
    CHECK_THROWS_AS(conv2d_forward(x, k2, 1, -1), ArgumentError);
}

TEST_CASE("forward applies relu and dense flattening") {
    // conv to 2 channels, relu, then a dense that picks channel sums
    ModelGraph m;
    m.input_shape = {1, 2, 2};
    m.num_classes = 2;
    m.layers.push_back({LayerKind::Conv2d, "c", 1, 0});
    m.layers.push_back({LayerKind::Relu, "", 1, 0});
    m.layers.push_back({LayerKind::Dense, "d", 1, 0});
    // 1x1 conv, channel 0 = +x, channel 1 = -x
    m.params.emplace("c", Tensor::from_data({1, 1, 1, 2}, {1.0, -1.0}));
    Tensor d = Tensor::zeros({8, 2});
    for (size_t r = 0; r < 8; ++r) d.data[r * 2 + (r < 4 ? 0 : 1)] = 1.0;
    m.params.emplace("d", std::move(d));
    m.validate();

    Tensor x = Tensor::from_data({1, 2, 2}, {1.0, -2.0, 3.0, -4.0});
    Tensor z = forward(m, x);
    REQUIRE(z.size() == 2);
    // channel 0 after relu: (1,0,3,0) -> 4; channel 1 after relu: (0,2,0,4) -> 6
    CHECK(z.data[0] == doctest::Approx(4.0));
    CHECK(z.data[1] == doctest::Approx(6.0));
}

TEST_CASE("cross-entropy loss matches the closed form") {
    ModelGraph m;
    m.input_shape = {2};
    m.num_classes = 2;
    m.layers.push_back({LayerKind::Dense, "d", 1, 0});
    m.params.emplace("d", Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0}));
    m.validate();

    Dataset batch;
    batch.inputs = Tensor::from_data({1, 2}, {0.3, 1.1});
    batch.labels = {0};
    const double L = loss_and_grad(m, batch).first;
    CHECK(L == doctest::Approx(std::log(1.0 + std::exp(1.1 - 0.3))).epsilon(1e-12));
}

TEST_CASE("squared-logits loss and gradient are exact on the diagonal probe") {
    ModelGraph m = make_diag_quadratic_model();
    Dataset batch = make_diag_quadratic_batch();
    // L = mean((sqrt2*w1)^2, (2*w2)^2) = w1^2 + 2*w2^2 with w = (0.25, -0.5)
    auto [L, g] = loss_and_grad(m, batch);
    CHECK(L == doctest::Approx(0.5625).epsilon(1e-12));
    const Tensor& gw = g.begin()->second;
    CHECK(gw.data[0] == doctest::Approx(0.5).epsilon(1e-12));   // dL/dw1 = 2*w1
    CHECK(gw.data[1] == doctest::Approx(-2.0).epsilon(1e-12));  // dL/dw2 = 4*w2
}

TEST_CASE("analytic gradients match loss-only finite differences") {
    ModelGraph m = make_small_cnn(7);
    Dataset batch = make_small_cnn_batch(6, 8);
    ParamMap g = loss_and_grad(m, batch).second;
    ParamMap g_fd = oracle::grad_fd(m, batch, 1e-5);
    for (const auto& [name, t] : g) {
        const Tensor& fd = g_fd.at(name);
        for (size_t i = 0; i < t.size(); ++i) {
            CHECK(t.data[i] ==
                  doctest::Approx(fd.data[i]).epsilon(1e-5).scale(std::abs(t.data[i]) + 1e-6));
        }
    }
}

TEST_CASE("per-sample gradients average to the batch gradient") {
    ModelGraph m = make_small_cnn(3);
    Dataset batch = make_small_cnn_batch(5, 4);
    auto [L, g] = loss_and_grad(m, batch);

    ParamMap acc = zeros_like_params(m);
    double loss_acc = 0.0;
    size_t visits = 0;
    for_each_sample_grad(m, batch, [&](size_t i, double li, const ParamMap& gi) {
        CHECK(i == visits);
        ++visits;
        loss_acc += li;
        for (auto& [name, t] : acc) {
            const Tensor& s = gi.at(name);
            for (size_t j = 0; j < t.size(); ++j) t.data[j] += s.data[j];
        }
    });
    CHECK(visits == batch.n());
    CHECK(loss_acc / 5.0 == doctest::Approx(L).epsilon(1e-12));
    for (auto& [name, t] : acc) {
        for (double& v : t.data) v /= 5.0;
    }
    CHECK(max_param_diff(acc, g) < 1e-12);
}

TEST_CASE("hvp is exact on a quadratic and restores parameters") {
    ModelGraph m = make_diag_quadratic_model();
    Dataset batch = make_diag_quadratic_batch();
    ParamMap before = m.params;

    ParamMap v = zeros_like_params(m);
    v.begin()->second.data[0] = 1.0;
    v.begin()->second.data[1] = -0.5;
    ParamMap hv = hvp(m, batch, v, 1e-4);
    // H = diag(2, 4)
    CHECK(hv.begin()->second.data[0] == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(hv.begin()->second.data[1] == doctest::Approx(-2.0).epsilon(1e-7));
    CHECK(max_param_diff(before, m.params) == 0.0);

    CHECK_THROWS_AS(hvp(m, batch, v, 0.0), ArgumentError);
    CHECK_THROWS_AS(hvp(m, batch, v, -1.0), ArgumentError);
}

TEST_CASE("hvp matches an independent-step gradient difference on a cnn") {
    // relu-free stack: the loss is smooth in the parameters, so two central
    // differences taken at different steps must agree; with kinks in the path
    // the two steps may straddle different linear regions and legitimately
    // diverge, which would test the network, not the hvp bookkeeping
    ModelGraph m;
    m.input_shape = {1, 8, 8};
    m.num_classes = 4;
    m.loss = LossKind::CrossEntropy;
    m.layers = {{LayerKind::Conv2d, "c1", 1, 1},
                {LayerKind::Conv2d, "c2", 2, 0},
                {LayerKind::Dense, "fc", 1, 0}};
    Rng wrng(404);
    auto gauss = [&](std::vector<size_t> shape, double scale) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (double& x : t.data) x = scale * wrng.normal();
        return t;
    };
    m.params.emplace("c1", gauss({3, 3, 1, 2}, 0.5));
    m.params.emplace("c2", gauss({2, 2, 2, 3}, 0.5));
    m.params.emplace("fc", gauss({48, 4}, 0.3));
    m.validate();
    Dataset batch = make_blob_dataset(4, 12);
    Rng rng(5);
    ParamMap v = zeros_like_params(m);
    for (auto& [name, t] : v) {
        for (double& x : t.data) x = rng.rademacher();
    }
    ParamMap got = hvp(m, batch, v, default_hvp_eps(m));
    ParamMap want = oracle::hvp_fd(m, batch, v, 3e-4);

    double num = 0.0, den = 0.0;
    for (const auto& [name, t] : got) {
        const Tensor& w = want.at(name);
        for (size_t i = 0; i < t.size(); ++i) {
            num += (t.data[i] - w.data[i]) * (t.data[i] - w.data[i]);
            den += w.data[i] * w.data[i];
        }
    }
    REQUIRE(den > 0.0);
    CHECK(std::sqrt(num / den) < 1e-3);
}

TEST_CASE("non-finite weights are reported as numeric failures") {
    ModelGraph m = make_small_cnn(2);
    Dataset batch = make_small_cnn_batch(2, 2);
    m.params.begin()->second.data[0] = std::nan("");
    CHECK_THROWS_AS(loss_and_grad(m, batch), NumericError);
}

TEST_CASE("model validation rejects inconsistent graphs") {
    ModelGraph m = make_diag_quadratic_model();
    m.validate();

    ModelGraph bad = m;
    bad.num_classes = 3;
    CHECK_THROWS_AS(bad.validate(), DimensionError);

    bad = m;
    bad.num_classes = 0;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);

    bad = m;
    bad.input_shape.clear();
    CHECK_THROWS_AS(bad.validate(), DimensionError);

    bad = m;
    bad.layers.push_back(bad.layers[0]);  // duplicate parameter name
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("dataset validation and slicing") {
    Dataset d;
    d.inputs = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
    d.labels = {0, 1, 0};
    d.validate(2);

    Dataset bad = d;
    bad.labels = {0, 2, 0};
    CHECK_THROWS_AS(bad.validate(2), ArgumentError);
    bad.labels = {0, 1};
    CHECK_THROWS_AS(bad.validate(2), DimensionError);

    Tensor s1 = d.sample(1);
    REQUIRE(s1.shape == std::vector<size_t>{2});
    CHECK(s1.data[0] == 3.0);
    CHECK(s1.data[1] == 4.0);

    Dataset sub = d.subset({2, 0});
    CHECK(sub.n() == 2);
    CHECK(sub.labels[0] == 0);
    CHECK(sub.inputs.data[0] == 5.0);
    CHECK(sub.inputs.data[2] == 1.0);
}

TEST_CASE("model and dataset files round-trip") {
    testsup::ScopedDir dir("model_io");
    ModelGraph m = make_small_cnn(21);
    save_model(dir.path, "small", m);
    ModelGraph r = load_model(dir.path / "small.json");
    REQUIRE(r.layers.size() == m.layers.size());
    CHECK(r.input_shape == m.input_shape);
    CHECK(r.num_classes == m.num_classes);
    for (const auto& [name, t] : m.params) {
        const Tensor& u = r.params.at(name);
        REQUIRE(u.shape == t.shape);
        for (size_t i = 0; i < t.size(); ++i) {
            CHECK(u.data[i] == static_cast<double>(static_cast<float>(t.data[i])));
        }
    }

    Dataset d = make_small_cnn_batch(4, 6);
    save_dataset(dir.path / "x.cimt", dir.path / "y.cimt", d);
    Dataset rd = load_dataset(dir.path / "x.cimt", dir.path / "y.cimt");
    CHECK(rd.n() == d.n());
    CHECK(rd.labels == d.labels);
}

TEST_CASE("accuracy counts argmax matches") {
    ModelGraph m;
    m.input_shape = {2};
    m.num_classes = 2;
    m.layers.push_back({LayerKind::Dense, "d", 1, 0});
    m.params.emplace("d", Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0}));
    m.validate();

    Dataset d;
    d.inputs = Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
    d.labels = {0, 0};  // second sample argmaxes to class 1
    CHECK(dataset_accuracy(m, d) == doctest::Approx(50.0));
}

}  // TEST_SUITE
