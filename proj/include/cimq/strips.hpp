#pragma once

#include <vector>

#include "cimq/model.hpp"

namespace cimq {

// Identity of one 1x1xD kernel slice. kernel_pos (m,n) and out_channel are
// 1-based to match reporting conventions.
struct StripId {
    int layer_id = 0;  // index into ModelGraph::layers
    int m = 1;
    int n = 1;
    int out_channel = 1;

    friend bool operator==(const StripId& a, const StripId& b) = default;
};

// tie-break order for equal scores: (layer_id, out_channel, kernel_pos)
bool structural_less(const StripId& a, const StripId& b);
std::string strip_key(const StripId& id);  // "layer:m:n:oc", used in JSON maps

struct StripWeight {
    StripId id;
    size_t index = 0;   // position in decompose order; probe substream key
    std::string param;  // owning kernel tensor
    std::vector<double> values;  // the D weights along the input-depth axis

    size_t p_strip() const { return values.size(); }
    // flat offsets into the kernel tensor, one per value
    std::vector<size_t> param_offsets(const ModelGraph& model) const;
};

// One strip per (conv layer, kernel position, output channel); layers ascending,
// then out_channel, then kernel position. Non-conv layers contribute nothing.
std::vector<StripWeight> decompose_strips(const ModelGraph& model);

// writes every strip of the given layer back into a kernel-shaped tensor
Tensor reassemble_kernel(const ModelGraph& model, int layer_id,
                         const std::vector<StripWeight>& strips);

// overwrite the strip's slice inside model.params
void write_strip_values(ModelGraph& model, const StripWeight& strip,
                        const std::vector<double>& values);

}  // namespace cimq
