#include <algorithm>

#include "doctest.h"
#include "support.hpp"

using namespace cimq;

TEST_SUITE("strips") {

TEST_CASE("decomposition covers every conv kernel position exactly once") {
    ModelGraph m = make_small_cnn(5);
    auto strips = decompose_strips(m);
    REQUIRE(strips.size() == 28);  // c1: 2*2*3, c2: 2*2*4

    size_t params_covered = 0;
    for (const auto& s : strips) params_covered += s.values.size();
    CHECK(params_covered == m.params.at("c1").size() + m.params.at("c2").size());

    // layers ascending, then out_channel, then kernel position; index is the
    // decompose position
    for (size_t i = 0; i < strips.size(); ++i) {
        CHECK(strips[i].index == i);
        if (i > 0) {
            CHECK(structural_less(strips[i - 1].id, strips[i].id));
        }
    }
    CHECK(strips.front().id.layer_id == 0);
    CHECK(strips.back().id.layer_id == 2);

    // depth comes from the owning kernel
    CHECK(strips.front().p_strip() == 2);
    CHECK(strips.back().p_strip() == 3);
}

TEST_CASE("param offsets address the kernel slice of the strip") {
    ModelGraph m = make_small_cnn(5);
    auto strips = decompose_strips(m);
    const Tensor& c1 = m.params.at("c1");  // [2,2,2,3]

    auto it = std::find_if(strips.begin(), strips.end(), [](const StripWeight& s) {
        return s.id == StripId{0, 2, 1, 3};
    });
    REQUIRE(it != strips.end());
    CHECK(it->param == "c1");
    // flat offset of (m=2,n=1,d,oc=3): (((2-1)*2 + (1-1))*2 + d)*3 + (3-1) = 14, 17
    auto offs = it->param_offsets(m);
    REQUIRE(offs.size() == 2);
    CHECK(offs[0] == 14);
    CHECK(offs[1] == 17);
    CHECK(it->values[0] == c1.data[14]);
    CHECK(it->values[1] == c1.data[17]);
}

TEST_CASE("strip keys are layer:m:n:oc") {
    CHECK(strip_key({0, 2, 1, 3}) == "0:2:1:3");
    CHECK(strip_key({4, 1, 1, 12}) == "4:1:1:12");
}

TEST_CASE("reassembly inverts decomposition") {
    ModelGraph m = make_small_cnn(9);
    auto strips = decompose_strips(m);

    Tensor back = reassemble_kernel(m, 2, strips);
    const Tensor& orig = m.params.at("c2");
    REQUIRE(back.shape == orig.shape);
    CHECK(back.data == orig.data);

    // editing one strip moves exactly its offsets
    auto it = std::find_if(strips.begin(), strips.end(), [](const StripWeight& s) {
        return s.id.layer_id == 2 && s.id.m == 1 && s.id.n == 2 && s.id.out_channel == 4;
    });
    REQUIRE(it != strips.end());
    for (double& v : it->values) v += 10.0;
    Tensor edited = reassemble_kernel(m, 2, strips);
    auto offs = it->param_offsets(m);
    size_t moved = 0;
    for (size_t i = 0; i < edited.size(); ++i) {
        if (edited.data[i] != orig.data[i]) {
            ++moved;
            CHECK(std::find(offs.begin(), offs.end(), i) != offs.end());
            CHECK(edited.data[i] == doctest::Approx(orig.data[i] + 10.0));
        }
    }
    CHECK(moved == offs.size());
}

TEST_CASE("write_strip_values overwrites the slice in place") {
    ModelGraph m = make_small_cnn(13);
    auto strips = decompose_strips(m);
    const StripWeight& s = strips[20];
    std::vector<double> repl(s.p_strip(), 0.5);
    write_strip_values(m, s, repl);
    auto offs = s.param_offsets(m);
    for (size_t o : offs) CHECK(m.params.at(s.param).data[o] == 0.5);

    CHECK_THROWS_AS(write_strip_values(m, s, std::vector<double>(s.p_strip() + 1, 0.0)),
                    DimensionError);
}

TEST_CASE("models without conv layers cannot be decomposed") {
    ModelGraph m = make_diag_quadratic_model();
    CHECK_THROWS_AS(decompose_strips(m), ArgumentError);

    ModelGraph cnn = make_small_cnn(1);
    auto strips = decompose_strips(cnn);
    CHECK_THROWS_AS(reassemble_kernel(cnn, 1, strips), ArgumentError);  // layer 1 is relu
}

}  // TEST_SUITE
