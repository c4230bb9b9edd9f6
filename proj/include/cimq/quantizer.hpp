#pragma once

#include <map>
#include <optional>

#include "cimq/sensitivity.hpp"

#include <nlohmann/json.hpp>

namespace cimq {

struct QuantSpec {
    int bits = 8;
    double scale = 1.0;
    int q_max = 127;  // 2^(bits-1) - 1; codes live in [-q_max, q_max]
};

// scale = max|values| / q_max; all-zero input gets scale 1 so every code is 0
QuantSpec fit_scale(const std::vector<double>& values, int bits);
int q_max_for_bits(int bits);

// code = clamp(round-half-to-even(x/scale), -q_max, q_max); clamping is silent
int quantize(double x, const QuantSpec& spec);
double dequantize(int code, const QuantSpec& spec);

enum class Cluster : uint8_t { Low = 0, High = 1 };

// Per-layer scale pair tied by s_p = s_q * 2^k (integer k >= 0), which is what
// lets low-bit partial sums shift exactly into the high-bit accumulation domain.
struct LayerScales {
    double s_q = 1.0;  // 8-bit scale
    double s_p = 1.0;  // 4-bit scale
    int k = 0;

    QuantSpec high_spec() const { return {8, s_q, 127}; }
    QuantSpec low_spec() const { return {4, s_p, 7}; }
};

struct StripAssignment {
    StripId id;
    Cluster cluster = Cluster::Low;
    size_t rank = 0;     // 0 = highest score
    double score = 0.0;
};

struct BitwidthMap {
    double threshold = 0.0;
    bool aligned = false;
    // per-layer effective thresholds after capacity alignment; empty otherwise
    std::map<int, double> per_layer_threshold;
    std::map<int, LayerScales> layer_scales;
    std::vector<StripAssignment> strips;  // rank order (descending score)
    size_t q = 0;      // HIGH count
    size_t p_low = 0;  // LOW count
    size_t R = 0;      // total

    const StripAssignment* find(const StripId& id) const;
};

// strict-greater rule: score > T -> HIGH, score <= T -> LOW
BitwidthMap assign_clusters(const std::vector<SensitivityRecord>& records, double T);

// LOW-strip fraction p_low / R
double compression_ratio(const BitwidthMap& map);

// fits per-(layer, cluster) scales into map and returns the model with every
// strip replaced by its quantize/dequantize image; non-strip params untouched
std::pair<ModelGraph, BitwidthMap> compress(const ModelGraph& model,
                                            const std::vector<SensitivityRecord>& records, double T);

// compress with a pre-built assignment (used after capacity alignment)
ModelGraph apply_bitwidth_map(const ModelGraph& model, BitwidthMap& map);

nlohmann::json bitwidth_map_to_json(const BitwidthMap& map);
BitwidthMap bitwidth_map_from_json(const nlohmann::json& j);

}  // namespace cimq
