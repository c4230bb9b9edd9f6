#include <cstdio>
#include <fstream>

#include "cimq/tensor_io.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cimq;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

uint64_t offset_of(const std::filesystem::path& p) {
    try {
        read_tensor(p);
    } catch (const FormatError& e) {
        return e.byte_offset();
    }
    FAIL("expected FormatError");
    return ~0ull;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("construction validates shape and payload size") {
    Tensor t = Tensor::zeros({2, 3});
    CHECK(t.ndim() == 2);
    CHECK(t.size() == 6);
    for (double v : t.data) CHECK(v == 0.0);

    CHECK_THROWS_AS(Tensor::zeros({}), DimensionError);
    CHECK_THROWS_AS(Tensor::zeros({2, 0, 3}), DimensionError);
    CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}), DimensionError);

    Tensor u = Tensor::from_data({4}, {1.0, 2.0, 3.0, 4.0});
    CHECK(u[2] == 3.0);
}

TEST_CASE("offset and at follow row-major order") {
    Tensor t = Tensor::zeros({2, 3, 4});
    CHECK(t.offset({0, 0, 0}) == 0);
    CHECK(t.offset({0, 0, 3}) == 3);
    CHECK(t.offset({0, 2, 1}) == 2 * 4 + 1);
    CHECK(t.offset({1, 2, 3}) == 23);
    t.at({1, 0, 2}) = 7.5;
    CHECK(t.data[1 * 12 + 0 * 4 + 2] == 7.5);
}

TEST_CASE("require_same_shape names the caller") {
    Tensor a = Tensor::zeros({2, 2});
    Tensor b = Tensor::zeros({4});
    CHECK_THROWS_WITH_AS(require_same_shape(a, b, "gradient"),
                         doctest::Contains("gradient"), DimensionError);
}

TEST_CASE("file round trip preserves shape and f32 payload") {
    testsup::ScopedDir dir("tensor_rt");
    Tensor t = Tensor::zeros({3, 2, 5});
    Rng rng(99);
    for (double& v : t.data) v = rng.normal();

    const auto path = dir.path / "t.cimt";
    write_tensor(path, t);
    Tensor r = read_tensor(path);

    REQUIRE(r.shape == t.shape);
    for (size_t i = 0; i < t.size(); ++i) {
        CHECK(r.data[i] == static_cast<double>(static_cast<float>(t.data[i])));
    }

    // a second write of the read-back tensor is byte-identical: the payload is
    // already f32-representable
    const auto path2 = dir.path / "t2.cimt";
    write_tensor(path2, r);
    CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("values are narrowed to f32 on write") {
    testsup::ScopedDir dir("tensor_narrow");
    Tensor t = Tensor::from_data({2}, {1e-300, 0.1});
    const auto path = dir.path / "n.cimt";
    write_tensor(path, t);
    Tensor r = read_tensor(path);
    CHECK(r.data[0] == 0.0);                                   // underflows f32
    CHECK(r.data[1] == static_cast<double>(0.1f));             // f32 rounding
    CHECK(r.data[1] != 0.1);
}

TEST_CASE("header layout is stable") {
    testsup::ScopedDir dir("tensor_hdr");
    Tensor t = Tensor::from_data({2, 1}, {1.0, -1.0});
    const auto path = dir.path / "h.cimt";
    write_tensor(path, t);
    const std::string raw = slurp(path);
    REQUIRE(raw.size() == 8 + 2 * 8 + 2 * 4);
    CHECK(raw.substr(0, 4) == "CIMT");
    CHECK(raw[4] == 1);   // version
    CHECK(raw[5] == 0);   // dtype f32
    CHECK(raw[6] == 2);   // ndim
    CHECK(raw[7] == 0);   // reserved
    CHECK(static_cast<unsigned char>(raw[8]) == 2);   // dim 0, little-endian
    CHECK(static_cast<unsigned char>(raw[16]) == 1);  // dim 1
}

TEST_CASE("format errors carry the offset of the first bad byte") {
    testsup::ScopedDir dir("tensor_fmt");
    Tensor t = Tensor::from_data({3}, {1.0, 2.0, 3.0});
    const auto good_path = dir.path / "good.cimt";
    write_tensor(good_path, t);
    const std::string good = slurp(good_path);
    const auto bad = dir.path / "bad.cimt";

    SUBCASE("truncated header") {
        spit(bad, good.substr(0, 5));
        CHECK(offset_of(bad) == 5);
    }
    SUBCASE("bad magic") {
        std::string b = good;
        b[1] = 'X';
        spit(bad, b);
        CHECK(offset_of(bad) == 0);
    }
    SUBCASE("unsupported version") {
        std::string b = good;
        b[4] = 9;
        spit(bad, b);
        CHECK(offset_of(bad) == 4);
    }
    SUBCASE("unsupported dtype") {
        std::string b = good;
        b[5] = 7;
        spit(bad, b);
        CHECK(offset_of(bad) == 5);
    }
    SUBCASE("zero rank") {
        std::string b = good;
        b[6] = 0;
        spit(bad, b);
        CHECK(offset_of(bad) == 6);
    }
    SUBCASE("nonzero reserved byte") {
        std::string b = good;
        b[7] = 1;
        spit(bad, b);
        CHECK(offset_of(bad) == 7);
    }
    SUBCASE("truncated dims") {
        spit(bad, good.substr(0, 12));
        CHECK(offset_of(bad) == 12);
    }
    SUBCASE("zero axis extent") {
        std::string b = good;
        for (int i = 8; i < 16; ++i) b[i] = 0;
        spit(bad, b);
        CHECK(offset_of(bad) == 8);
    }
    SUBCASE("truncated payload") {
        spit(bad, good.substr(0, good.size() - 1));
        CHECK(offset_of(bad) == good.size() - 1);
    }
    SUBCASE("trailing bytes") {
        spit(bad, good + "zz");
        CHECK(offset_of(bad) == good.size());
    }
    SUBCASE("message names the offending file and offset") {
        spit(bad, "CIMX");
        try {
            read_tensor(bad);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("bad.cimt") != std::string::npos);
            CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
        }
    }
}

}  // TEST_SUITE
