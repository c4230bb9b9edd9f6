#include "cimq/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace cimq {

namespace {

constexpr char kMagic[4] = {'C', 'I', 'M', 'T'};
constexpr uint8_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 0;

void put_u64_le(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32_le(std::string& out, float f) {
    uint32_t v = std::bit_cast<uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t get_u64_le(const unsigned char* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

float get_f32_le(const unsigned char* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    return std::bit_cast<float>(v);
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
    if (t.ndim() == 0) throw DimensionError("cannot serialize a tensor with no shape");
    if (t.ndim() > 255) throw DimensionError("tensor rank exceeds serializable limit of 255");

    std::string buf;
    buf.reserve(8 + 8 * t.ndim() + 4 * t.size());
    buf.append(kMagic, 4);
    buf.push_back(static_cast<char>(kVersion));
    buf.push_back(static_cast<char>(kDtypeF32));
    buf.push_back(static_cast<char>(t.ndim()));
    buf.push_back(0);  // reserved
    for (size_t d : t.shape) put_u64_le(buf, d);
    for (double v : t.data) put_f32_le(buf, static_cast<float>(v));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error("short write: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open for reading: " + path.string());
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    const uint64_t n = raw.size();

    if (n < 8) throw FormatError("truncated header in " + path.string(), n);
    if (std::memcmp(p, kMagic, 4) != 0) throw FormatError("bad magic in " + path.string(), 0);
    if (p[4] != kVersion) {
        throw FormatError("unsupported version " + std::to_string(p[4]) + " in " + path.string(), 4);
    }
    if (p[5] != kDtypeF32) {
        throw FormatError("unsupported dtype " + std::to_string(p[5]) + " in " + path.string(), 5);
    }
    const uint8_t ndim = p[6];
    if (ndim == 0) throw FormatError("zero-rank tensor in " + path.string(), 6);
    if (p[7] != 0) throw FormatError("nonzero reserved byte in " + path.string(), 7);

    const uint64_t dims_end = 8 + 8ull * ndim;
    if (n < dims_end) throw FormatError("truncated dims in " + path.string(), n);
    std::vector<size_t> shape(ndim);
    uint64_t count = 1;
    for (uint8_t i = 0; i < ndim; ++i) {
        uint64_t d = get_u64_le(p + 8 + 8ull * i);
        if (d == 0) throw FormatError("zero extent for axis " + std::to_string(i) + " in " + path.string(),
                                      8 + 8ull * i);
        shape[i] = static_cast<size_t>(d);
        count *= d;
    }

    const uint64_t expect = dims_end + 4ull * count;
    if (n < expect) throw FormatError("truncated payload in " + path.string(), n);
    if (n > expect) throw FormatError("trailing bytes after payload in " + path.string(), expect);

    std::vector<double> data(count);
    for (uint64_t i = 0; i < count; ++i) {
        data[i] = static_cast<double>(get_f32_le(p + dims_end + 4 * i));
    }
    return Tensor::from_data(std::move(shape), std::move(data));
}

}  // namespace cimq
