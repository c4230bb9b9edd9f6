#pragma once

#include <filesystem>

#include "cimq/quantizer.hpp"

namespace cimq {

// Parametric tile model. A weight of b bits occupies b/cell_bits adjacent cells
// in one row (its column group); a strip of depth D occupies D rows of that
// group. Each occupied column group is digitized by one ADC conversion per
// input bit cycle.
struct HardwareConfig {
    size_t array_rows = 128;
    size_t array_cols = 128;
    int cell_bits = 2;
    int adc_levels_high = 256;
    int adc_levels_low = 16;
    int cols_per_adc_high = 4;
    int cols_per_adc_low = 2;
    int input_bits = 8;
    double e_adc_unit = 2e-15;    // J per conversion per 2^adc_bits
    double e_accum_unit = 5e-15;  // J per partial-sum add
    double e_other_unit = 1e-12;  // J per tile activation
    double t_read = 10e-9;        // s per read cycle

    int cells_per_weight(int bits) const;
    size_t strip_capacity(int bits) const;  // strips per tile: cols / cells_per_weight
    int adc_levels(int bits) const { return bits == 8 ? adc_levels_high : adc_levels_low; }
    int adc_bits(int bits) const;
    int cols_per_adc(int bits) const { return bits == 8 ? cols_per_adc_high : cols_per_adc_low; }
    void validate() const;
};

// One strip segment on one tile: `codes` holds the weight codes for the rows
// [row_offset, row_offset + codes.size()) of the strip.
struct TileStrip {
    size_t strip_index = 0;  // position in the map's rank-ordered strip list
    StripId id;
    size_t row_offset = 0;
    std::vector<int> codes;
};

struct Tile {
    size_t id = 0;
    int bits = 8;
    int layer_id = 0;
    size_t rows_used = 0;  // common to all strips on the tile (one vertical segment)
    std::vector<TileStrip> strips;

    size_t cells_used(const HardwareConfig& hw) const;
};

struct TilePlacement {
    HardwareConfig hw;
    std::vector<Tile> tiles;
};

// First-fit in rank order within each (layer, cluster); strips deeper than
// array_rows split row-wise across vertically stacked tiles.
TilePlacement place(const BitwidthMap& map, const std::vector<StripWeight>& strips,
                    const HardwareConfig& hw);

// 100 * used cells / total cells over tiles of one bit class; 100 when empty
double utilization(const TilePlacement& p, int bits);

// Exact integer dot product per hosted strip for one 1-bit input slice; the
// analog column sum is modeled as ideal.
std::vector<int64_t> ideal_mvm(const Tile& tile, const std::vector<uint8_t>& input_slice);

// exact shift of LOW partial sums into the HIGH accumulation domain
int64_t expand_one(int64_t z, int k);
std::vector<int64_t> expand(const std::vector<int64_t>& z_low, int k);

// Crossbar-path conv layer: activations quantized at input_bits, bit-serialized
// unsigned after a symmetric shift, accumulated per tile in ascending tile id,
// LOW sums expanded by the layer's k. Returns real activations s_q*s_a*Z_int.
Tensor mixed_mvm(const TilePlacement& placement, const ModelGraph& model, int layer_id,
                 const Tensor& activation, const BitwidthMap& map, const HardwareConfig& hw);

// Full-network inference with every conv layer on the crossbar path and
// relu/dense in software. model_c supplies shapes and the non-conv weights.
Tensor crossbar_forward(const TilePlacement& placement, const ModelGraph& model_c,
                        const BitwidthMap& map, const HardwareConfig& hw, const Tensor& x);

// Software twin of the crossbar path: identical network walk, but each conv
// runs conv2d_forward on the activation after the same input_bits quantization.
Tensor quantized_reference_forward(const ModelGraph& model_c, const HardwareConfig& hw,
                                   const Tensor& x);

struct Workload {
    uint64_t n_input_vectors = 1;
};

struct CostEntry {
    double energy_adc = 0.0;
    double energy_accum = 0.0;
    double energy_other = 0.0;
    double energy_total = 0.0;
    double latency = 0.0;
    double utilization_high = 100.0;
    double utilization_low = 100.0;
    size_t tiles_high = 0;
    size_t tiles_low = 0;
};

struct CostReport {
    CostEntry total;
    std::map<int, CostEntry> layers;
};

// Closed-form accounting per tile of bit-width b, G = occupied column groups:
//   conversions   = n_vec * input_bits * G
//   energy_adc    = conversions * e_adc_unit * 2^adc_bits(b)
//   energy_accum  = adds * e_accum_unit, adds = conversions (shift-accumulate)
//                   + segment merges + per-output reductions + expand merges
//   energy_other  = n_vec * tiles * e_other_unit
//   latency       = sum over layers of max-over-tiles(ceil(G / ADCs)) *
//                   n_vec * input_bits * t_read
CostReport simulate_cost(const TilePlacement& placement, const Workload& wl,
                         const HardwareConfig& hw);

// columns: tile_id,bits,layer_id,strips,cells_used ('strips' is ;-joined indices)
void write_placement_csv(const std::filesystem::path& path, const TilePlacement& p);

nlohmann::json cost_report_to_json(const CostReport& report);
void write_cost_report_csv(const std::filesystem::path& path, const CostReport& report);

}  // namespace cimq
