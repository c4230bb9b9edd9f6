#pragma once

#include <filesystem>

#include "cimq/strips.hpp"

namespace cimq {

struct HutchinsonConfig {
    int m = 8;          // probe count
    uint64_t seed = 42;
    double eps = 0.0;   // HVP step; 0 -> default_hvp_eps(model)
};

// a set of parameter coordinates treated as one block
struct ParamCoord {
    std::string param;
    size_t flat = 0;
};
struct ParamGroup {
    std::vector<ParamCoord> coords;
    uint64_t stream = 0;  // probe substream id; (seed, stream) pins the noise
};

// Hutchinson block-trace: (1/m) sum v^T (H v) with Rademacher +-1 entries on the
// group's coordinates and zero elsewhere. Exact for within-block diagonal
// Hessians at any m and seed, since v_i^2 == 1.
double group_trace(const ModelGraph& model, const Dataset& batch, const ParamGroup& group,
                   const HutchinsonConfig& cfg);

struct SensitivityRecord {
    StripId id;
    size_t strip_index = 0;
    size_t p_strip = 0;
    double trace_estimate = 0.0;
    double sq_norm = 0.0;
    double score = 0.0;
};

// trace/(2*p) * ||w||^2; negative traces pass through unclamped
double strip_score(double trace_estimate, size_t p_strip, double sq_norm);

// One record per strip. Probe streams derive from (cfg.seed, strip index), so
// scores are independent of evaluation order and may be computed in parallel.
std::vector<SensitivityRecord> score_strips(const ModelGraph& model, const Dataset& batch,
                                            const std::vector<StripWeight>& strips,
                                            const HutchinsonConfig& cfg);

// descending score; ties in structural order (layer, out_channel, kernel pos)
std::vector<SensitivityRecord> rank_strips(std::vector<SensitivityRecord> records);

// columns: layer_id,m,n,out_channel,p_strip,trace,sq_norm,score; rows by rank
void write_sensitivity_csv(const std::filesystem::path& path,
                           const std::vector<SensitivityRecord>& ranked);
std::vector<SensitivityRecord> read_sensitivity_csv(const std::filesystem::path& path);

}  // namespace cimq
