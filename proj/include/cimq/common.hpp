#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cimq {

inline constexpr const char* kToolVersion = "0.1.0";

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or axis mismatch between tensors / layers.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Invalid argument value (bad bit width, negative stride, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// NaN/Inf produced during numeric work; carries the layer or op where it appeared.
class NumericError : public Error {
public:
    NumericError(const std::string& msg, std::string where)
        : Error(msg + " [at " + where + "]"), where_(std::move(where)) {}
    const std::string& where() const { return where_; }

private:
    std::string where_;
};

// Malformed serialized input; carries the byte offset of the first bad byte.
class FormatError : public Error {
public:
    FormatError(const std::string& msg, uint64_t byte_offset)
        : Error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}
    uint64_t byte_offset() const { return byte_offset_; }

private:
    uint64_t byte_offset_ = 0;
};

// Integer accumulator would leave the representable range.
class OverflowError : public Error {
public:
    using Error::Error;
};

// Configuration file problems (missing key, unreadable referenced file, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Stage-level pipeline failures (missing upstream artifact, unknown stage name).
class PipelineError : public Error {
public:
    using Error::Error;
};

// Shortest exact decimal for a double: %.17g round-trips, %g drops padding zeros.
std::string format_double(double v);

// One splitmix64 round over seed^stream; decorrelates per-item substreams so
// scoring order / scheduling cannot change which random numbers an item sees.
uint64_t mix_seed(uint64_t seed, uint64_t stream);

// Deterministic RNG. Draws are pinned to the mt19937_64 bit stream (standard
// mandates the exact sequence); uniform/normal avoid std::*_distribution, whose
// output differs across library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0,1), 53-bit mantissa
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    // standard normal via Box-Muller; caches the second value of each pair
    double normal();

    // +1 or -1 with equal probability
    double rademacher() { return (eng_() >> 63) ? 1.0 : -1.0; }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Runs fn(i) for i in [0,n). Work items must be independent; results may not
// depend on the thread count. Exceptions are rethrown on the calling thread.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace cimq
