#include <cmath>

#include "doctest.h"
#include "support.hpp"

using namespace cimq;

namespace {

// 1x1 conv with 4 single-weight strips and caller-chosen weights/scores; lets
// scale-coupling cases pin every number by hand
struct HandLayer {
    ModelGraph model;
    std::vector<SensitivityRecord> records;
};

HandLayer hand_layer(const std::vector<double>& weights, const std::vector<double>& scores) {
    HandLayer h;
    h.model.input_shape = {1, 1, 1};
    h.model.num_classes = weights.size();
    h.model.loss = LossKind::SquaredLogits;
    h.model.layers.push_back({LayerKind::Conv2d, "c", 1, 0});
    h.model.params.emplace("c", Tensor::from_data({1, 1, 1, weights.size()}, weights));
    h.model.validate();
    for (size_t i = 0; i < weights.size(); ++i) {
        SensitivityRecord r;
        r.id = {0, 1, 1, static_cast<int>(i) + 1};
        r.strip_index = i;
        r.p_strip = 1;
        r.score = scores[i];
        h.records.push_back(r);
    }
    return h;
}

}  // namespace

TEST_SUITE("quantizer") {

TEST_CASE("bit widths pin the code range") {
    CHECK(q_max_for_bits(8) == 127);
    CHECK(q_max_for_bits(4) == 7);
    CHECK_THROWS_AS(q_max_for_bits(5), ArgumentError);
    CHECK_THROWS_AS(q_max_for_bits(0), ArgumentError);
}

TEST_CASE("fit_scale spans the max magnitude") {
    QuantSpec s = fit_scale({-2.54, 1.0, 0.2}, 8);
    CHECK(s.scale == doctest::Approx(2.54 / 127.0).epsilon(1e-15));
    CHECK(s.q_max == 127);

    QuantSpec z = fit_scale({0.0, 0.0}, 4);
    CHECK(z.scale == 1.0);  // degenerate input quantizes to all-zero codes
    CHECK(quantize(0.0, z) == 0);
}

TEST_CASE("quantize rounds half to even and saturates") {
    QuantSpec unit{8, 1.0, 127};
    CHECK(quantize(0.5, unit) == 0);
    CHECK(quantize(1.5, unit) == 2);
    CHECK(quantize(2.5, unit) == 2);
    CHECK(quantize(3.5, unit) == 4);
    CHECK(quantize(-0.5, unit) == 0);
    CHECK(quantize(-2.5, unit) == -2);
    CHECK(quantize(300.0, unit) == 127);
    CHECK(quantize(-300.0, unit) == -127);
    CHECK(dequantize(-3, {4, 0.25, 7}) == -0.75);
    CHECK_THROWS_AS(quantize(1.0, QuantSpec{8, 0.0, 127}), ArgumentError);
}

TEST_CASE("requantizing a dequantized value is a fixed point") {
    Rng rng(77);
    QuantSpec s = fit_scale({3.7}, 4);
    for (int i = 0; i < 500; ++i) {
        const double x = 8.0 * (rng.uniform() - 0.5);
        const int c = quantize(x, s);
        CHECK(quantize(dequantize(c, s), s) == c);
    }
}

TEST_CASE("cluster assignment splits strictly above the threshold") {
    auto h = hand_layer({1, 1, 1, 1, 1}, {5, 4, 3, 2, 1});
    BitwidthMap map = assign_clusters(h.records, 3.0);
    CHECK(map.q == 2);  // score 3 sits at the threshold and stays LOW
    CHECK(map.p_low == 3);
    CHECK(map.R == 5);
    CHECK(map.threshold == 3.0);
    for (size_t i = 0; i < map.strips.size(); ++i) {
        CHECK(map.strips[i].rank == i);
        CHECK(map.strips[i].cluster == (map.strips[i].score > 3.0 ? Cluster::High : Cluster::Low));
    }
    CHECK(compression_ratio(map) == doctest::Approx(0.6));

    CHECK_THROWS_AS(assign_clusters({}, 0.0), ArgumentError);
}

TEST_CASE("scale coupling keeps the low grid on a power-of-two multiple") {
    // HIGH max 127 -> s_q = 1; LOW max 30 -> free fit 30/7, k = round(log2) = 2
    auto h = hand_layer({127, 30, 5, 1}, {4, 3, 2, 1});
    auto [mc, map] = compress(h.model, h.records, 3.5);
    const LayerScales& ls = map.layer_scales.at(0);
    CHECK(ls.s_q == 1.0);
    CHECK(ls.k == 2);
    CHECK(ls.s_p == 4.0);

    // 30/4 = 7.5 rounds to 8 and saturates at code 7 -> 28; 5/4 -> 1 -> 4; 1/4 -> 0
    const Tensor& w = mc.params.at("c");
    CHECK(w.data[0] == 127.0);
    CHECK(w.data[1] == 28.0);
    CHECK(w.data[2] == 4.0);
    CHECK(w.data[3] == 0.0);

    // every weight now sits on its grid: a second pass is the identity
    BitwidthMap map2 = assign_clusters(h.records, 3.5);
    ModelGraph mc2 = apply_bitwidth_map(mc, map2);
    CHECK(mc2.params.at("c").data == w.data);
    CHECK(map2.layer_scales.at(0).k == 2);
    CHECK(map2.layer_scales.at(0).s_p == 4.0);
}

TEST_CASE("scale coupling clamps k at zero when LOW would fit finer") {
    // free low fit 0.7/7 = 0.1 vs s_q = 10.16/127 = 0.08: ratio 1.25, k = 0
    auto h = hand_layer({10.16, 0.7, 0.35, 0.07}, {4, 3, 2, 1});
    auto [mc, map] = compress(h.model, h.records, 3.5);
    const LayerScales& ls = map.layer_scales.at(0);
    CHECK(ls.k == 0);
    CHECK(ls.s_p == ls.s_q);
    // LOW codes clamp into the coarser shared grid: 0.7/0.08 = 8.75 -> 7
    CHECK(mc.params.at("c").data[1] == doctest::Approx(7.0 * ls.s_q));
}

TEST_CASE("single-cluster layers reuse one scale") {
    auto all_high = hand_layer({64, 32, 16, 8}, {4, 3, 2, 1});
    auto [mh, maph] = compress(all_high.model, all_high.records, 0.5);
    CHECK(maph.q == 4);
    CHECK(maph.layer_scales.at(0).k == 0);
    CHECK(maph.layer_scales.at(0).s_p == maph.layer_scales.at(0).s_q);

    auto all_low = hand_layer({64, 32, 16, 8}, {4, 3, 2, 1});
    auto [ml, mapl] = compress(all_low.model, all_low.records, 9.0);
    CHECK(mapl.p_low == 4);
    CHECK(mapl.layer_scales.at(0).s_p == doctest::Approx(64.0 / 7.0));
    CHECK(mapl.layer_scales.at(0).s_q == mapl.layer_scales.at(0).s_p);
    // 8-bit grid untouched by the LOW-only fit: weights land on s_p multiples
    CHECK(ml.params.at("c").data[0] == doctest::Approx(64.0));
    CHECK(ml.params.at("c").data[3] == doctest::Approx(std::nearbyint(8.0 * 7.0 / 64.0) * 64.0 / 7.0));
}

TEST_CASE("non-strip parameters pass through compression untouched") {
    ModelGraph m = make_small_cnn(41);
    Dataset batch = make_small_cnn_batch(4, 3);
    auto records = rank_strips(score_strips(m, batch, decompose_strips(m),
                                            HutchinsonConfig{2, 42, 0.0}));
    auto [mc, map] = compress(m, records, records[records.size() / 2].score);
    CHECK(mc.params.at("fc").data == m.params.at("fc").data);
    CHECK(map.q + map.p_low == map.R);
    CHECK(map.R == 28);

    // map must cover the model it is applied to
    BitwidthMap short_map = map;
    short_map.strips.pop_back();
    short_map.R -= 1;
    short_map.p_low -= 1;
    CHECK_THROWS_AS(apply_bitwidth_map(m, short_map), ArgumentError);
}

TEST_CASE("bitwidth map json round-trips and rejects inconsistent counts") {
    auto h = hand_layer({127, 30, 5, 1}, {4, 3, 2, 1});
    auto [mc, map] = compress(h.model, h.records, 2.5);
    map.per_layer_threshold[0] = 2.5;

    nlohmann::json j = bitwidth_map_to_json(map);
    BitwidthMap back = bitwidth_map_from_json(j);
    CHECK(back.threshold == map.threshold);
    CHECK(back.aligned == map.aligned);
    CHECK(back.q == map.q);
    CHECK(back.p_low == map.p_low);
    CHECK(back.R == map.R);
    CHECK(back.per_layer_threshold == map.per_layer_threshold);
    REQUIRE(back.strips.size() == map.strips.size());
    for (size_t i = 0; i < map.strips.size(); ++i) {
        CHECK(back.strips[i].id == map.strips[i].id);
        CHECK(back.strips[i].cluster == map.strips[i].cluster);
        CHECK(back.strips[i].rank == map.strips[i].rank);
        CHECK(back.strips[i].score == map.strips[i].score);
    }
    CHECK(back.layer_scales.at(0).s_q == map.layer_scales.at(0).s_q);
    CHECK(back.layer_scales.at(0).s_p == map.layer_scales.at(0).s_p);
    CHECK(back.layer_scales.at(0).k == map.layer_scales.at(0).k);

    nlohmann::json bad = j;
    bad["counts"]["q"] = 99;
    CHECK_THROWS_AS(bitwidth_map_from_json(bad), FormatError);
}

}  // TEST_SUITE
