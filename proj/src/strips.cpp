#include "cimq/strips.hpp"

#include <tuple>

namespace cimq {

bool structural_less(const StripId& a, const StripId& b) {
    return std::tuple(a.layer_id, a.out_channel, a.m, a.n) <
           std::tuple(b.layer_id, b.out_channel, b.m, b.n);
}

std::string strip_key(const StripId& id) {
    return std::to_string(id.layer_id) + ":" + std::to_string(id.m) + ":" + std::to_string(id.n) +
           ":" + std::to_string(id.out_channel);
}

std::vector<size_t> StripWeight::param_offsets(const ModelGraph& model) const {
    const Tensor& ker = model.params.at(param);
    const size_t kw = ker.shape[1], depth = ker.shape[2], nout = ker.shape[3];
    std::vector<size_t> offs(depth);
    for (size_t d = 0; d < depth; ++d) {
        offs[d] = (((id.m - 1) * kw + (id.n - 1)) * depth + d) * nout + (id.out_channel - 1);
    }
    return offs;
}

std::vector<StripWeight> decompose_strips(const ModelGraph& model) {
    std::vector<StripWeight> strips;
    bool any_conv = false;
    for (size_t li = 0; li < model.layers.size(); ++li) {
        const LayerDesc& d = model.layers[li];
        if (d.kind != LayerKind::Conv2d) continue;
        any_conv = true;
        const Tensor& ker = model.params.at(d.param);
        const size_t kh = ker.shape[0], kw = ker.shape[1];
        const size_t depth = ker.shape[2], nout = ker.shape[3];
        for (size_t oc = 0; oc < nout; ++oc) {
            for (size_t m = 0; m < kh; ++m) {
                for (size_t n = 0; n < kw; ++n) {
                    StripWeight s;
                    s.id = {static_cast<int>(li), static_cast<int>(m + 1), static_cast<int>(n + 1),
                            static_cast<int>(oc + 1)};
                    s.index = strips.size();
                    s.param = d.param;
                    s.values.resize(depth);
                    for (size_t dd = 0; dd < depth; ++dd) {
                        s.values[dd] = ker.data[((m * kw + n) * depth + dd) * nout + oc];
                    }
                    strips.push_back(std::move(s));
                }
            }
        }
    }
    if (!any_conv) throw ArgumentError("model has no conv layer to decompose");
    return strips;
}

Tensor reassemble_kernel(const ModelGraph& model, int layer_id,
                         const std::vector<StripWeight>& strips) {
    const LayerDesc& d = model.layers.at(static_cast<size_t>(layer_id));
    if (d.kind != LayerKind::Conv2d) {
        throw ArgumentError("layer " + std::to_string(layer_id) + " is not a conv layer");
    }
    const Tensor& ref = model.params.at(d.param);
    Tensor ker = Tensor::zeros(ref.shape);
    const size_t kw = ref.shape[1], depth = ref.shape[2], nout = ref.shape[3];
    size_t seen = 0;
    for (const auto& s : strips) {
        if (s.id.layer_id != layer_id) continue;
        if (s.values.size() != depth) {
            throw DimensionError("strip " + strip_key(s.id) + " has " +
                                 std::to_string(s.values.size()) + " values, layer depth is " +
                                 std::to_string(depth));
        }
        for (size_t dd = 0; dd < depth; ++dd) {
            ker.data[(((s.id.m - 1) * kw + (s.id.n - 1)) * depth + dd) * nout +
                     (s.id.out_channel - 1)] = s.values[dd];
        }
        ++seen;
    }
    if (seen != ref.shape[0] * kw * nout) {
        throw ArgumentError("layer " + std::to_string(layer_id) + " expects " +
                            std::to_string(ref.shape[0] * kw * nout) + " strips, got " +
                            std::to_string(seen));
    }
    return ker;
}

void write_strip_values(ModelGraph& model, const StripWeight& strip,
                        const std::vector<double>& values) {
    Tensor& ker = model.params.at(strip.param);
    if (values.size() != ker.shape[2]) {
        throw DimensionError("strip " + strip_key(strip.id) + ": " + std::to_string(values.size()) +
                             " values for depth " + std::to_string(ker.shape[2]));
    }
    const size_t kw = ker.shape[1], depth = ker.shape[2], nout = ker.shape[3];
    for (size_t dd = 0; dd < depth; ++dd) {
        ker.data[(((strip.id.m - 1) * kw + (strip.id.n - 1)) * depth + dd) * nout +
                 (strip.id.out_channel - 1)] = values[dd];
    }
}

}  // namespace cimq
