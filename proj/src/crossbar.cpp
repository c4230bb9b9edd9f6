#include "cimq/crossbar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

namespace cimq {

int HardwareConfig::cells_per_weight(int bits) const {
    if (cell_bits < 1 || bits % cell_bits != 0) {
        throw ArgumentError("weight of " + std::to_string(bits) + " bits does not slice evenly into " +
                            std::to_string(cell_bits) + "-bit cells");
    }
    return bits / cell_bits;
}

size_t HardwareConfig::strip_capacity(int bits) const {
    return array_cols / static_cast<size_t>(cells_per_weight(bits));
}

int HardwareConfig::adc_bits(int bits) const {
    const int levels = adc_levels(bits);
    int b = 0;
    while ((1 << b) < levels) ++b;
    if ((1 << b) != levels) {
        throw ArgumentError("adc_levels " + std::to_string(levels) + " is not a power of two");
    }
    return b;
}

void HardwareConfig::validate() const {
    if (array_rows < 1 || array_cols < 1) throw ArgumentError("array dimensions must be >= 1");
    if (input_bits != 4 && input_bits != 8) {
        throw ArgumentError("input_bits must be 4 or 8, got " + std::to_string(input_bits));
    }
    for (int b : {4, 8}) {
        if (strip_capacity(b) < 1) {
            throw ArgumentError("array_cols " + std::to_string(array_cols) +
                                " cannot host a single " + std::to_string(b) + "-bit weight");
        }
        adc_bits(b);
        if (cols_per_adc(b) < 1) throw ArgumentError("cols_per_adc must be >= 1");
    }
    if (e_adc_unit < 0 || e_accum_unit < 0 || e_other_unit < 0) {
        throw ArgumentError("energy unit constants must be >= 0");
    }
    if (t_read <= 0) throw ArgumentError("t_read must be > 0");
}

size_t Tile::cells_used(const HardwareConfig& hw) const {
    return strips.size() * static_cast<size_t>(hw.cells_per_weight(bits)) * rows_used;
}

TilePlacement place(const BitwidthMap& map, const std::vector<StripWeight>& strips,
                    const HardwareConfig& hw) {
    hw.validate();
    if (map.layer_scales.empty()) throw ArgumentError("place: bitwidth map has no fitted scales");

    std::unordered_map<std::string, const StripWeight*> by_key;
    for (const auto& s : strips) by_key[strip_key(s.id)] = &s;

    TilePlacement out;
    out.hw = hw;

    // rank-ordered strip indices per (layer, cluster)
    std::map<int, std::vector<size_t>> layers;
    for (size_t i = 0; i < map.strips.size(); ++i) layers[map.strips[i].id.layer_id].push_back(i);

    for (const auto& [layer, members] : layers) {
        for (Cluster cluster : {Cluster::High, Cluster::Low}) {
            const int bits = cluster == Cluster::High ? 8 : 4;
            const size_t capacity = hw.strip_capacity(bits);
            const QuantSpec spec = cluster == Cluster::High
                                       ? map.layer_scales.at(layer).high_spec()
                                       : map.layer_scales.at(layer).low_spec();

            // gather this cluster's strips, already in rank order
            std::vector<size_t> mine;
            for (size_t idx : members) {
                if (map.strips[idx].cluster == cluster) mine.push_back(idx);
            }
            if (mine.empty()) continue;

            for (size_t start = 0; start < mine.size(); start += capacity) {
                const size_t stop = std::min(mine.size(), start + capacity);
                // depth of the stack = max depth among its strips (uniform per layer)
                size_t depth = 0;
                for (size_t i = start; i < stop; ++i) {
                    auto it = by_key.find(strip_key(map.strips[mine[i]].id));
                    if (it == by_key.end()) {
                        throw ArgumentError("place: no weights for strip " +
                                            strip_key(map.strips[mine[i]].id));
                    }
                    depth = std::max(depth, it->second->p_strip());
                }
                for (size_t row0 = 0; row0 < depth; row0 += hw.array_rows) {
                    Tile tile;
                    tile.id = out.tiles.size();
                    tile.bits = bits;
                    tile.layer_id = layer;
                    tile.rows_used = std::min(hw.array_rows, depth - row0);
                    for (size_t i = start; i < stop; ++i) {
                        const StripWeight* sw = by_key.at(strip_key(map.strips[mine[i]].id));
                        if (row0 >= sw->p_strip()) continue;
                        TileStrip ts;
                        ts.strip_index = mine[i];
                        ts.id = sw->id;
                        ts.row_offset = row0;
                        const size_t rows = std::min(tile.rows_used, sw->p_strip() - row0);
                        ts.codes.resize(rows);
                        for (size_t r = 0; r < rows; ++r) {
                            ts.codes[r] = quantize(sw->values[row0 + r], spec);
                        }
                        tile.strips.push_back(std::move(ts));
                    }
                    out.tiles.push_back(std::move(tile));
                }
            }
        }
    }
    return out;
}

double utilization(const TilePlacement& p, int bits) {
    size_t used = 0, total = 0;
    for (const auto& t : p.tiles) {
        if (t.bits != bits) continue;
        used += t.cells_used(p.hw);
        total += p.hw.array_rows * p.hw.array_cols;
    }
    if (total == 0) return 100.0;  // vacuous: no tiles of this class
    return 100.0 * static_cast<double>(used) / static_cast<double>(total);
}

std::vector<int64_t> ideal_mvm(const Tile& tile, const std::vector<uint8_t>& input_slice) {
    if (input_slice.size() != tile.rows_used) {
        throw DimensionError("ideal_mvm: slice length " + std::to_string(input_slice.size()) +
                             " != rows used " + std::to_string(tile.rows_used));
    }
    std::vector<int64_t> out(tile.strips.size(), 0);
    for (size_t s = 0; s < tile.strips.size(); ++s) {
        const auto& codes = tile.strips[s].codes;
        int64_t acc = 0;
        for (size_t r = 0; r < codes.size(); ++r) {
            if (input_slice[r]) acc += codes[r];
        }
        out[s] = acc;
    }
    return out;
}

int64_t expand_one(int64_t z, int k) {
    if (k < 0) throw ArgumentError("expand: k must be >= 0");
    if (k >= 31) throw OverflowError("expand: shift by " + std::to_string(k) + " leaves 32-bit range");
    const int64_t r = z * (int64_t(1) << k);
    if (r > INT32_MAX || r < -int64_t(INT32_MAX)) {
        throw OverflowError("expand: " + std::to_string(z) + " << " + std::to_string(k) +
                            " exceeds the 32-bit accumulator");
    }
    return r;
}

std::vector<int64_t> expand(const std::vector<int64_t>& z_low, int k) {
    std::vector<int64_t> out(z_low.size());
    for (size_t i = 0; i < z_low.size(); ++i) out[i] = expand_one(z_low[i], k);
    return out;
}

Tensor mixed_mvm(const TilePlacement& placement, const ModelGraph& model, int layer_id,
                 const Tensor& activation, const BitwidthMap& map, const HardwareConfig& hw) {
    const LayerDesc& desc = model.layers.at(static_cast<size_t>(layer_id));
    if (desc.kind != LayerKind::Conv2d) {
        throw ArgumentError("mixed_mvm: layer " + std::to_string(layer_id) + " is not conv2d");
    }
    const Tensor& ker = model.params.at(desc.param);
    const size_t kh = ker.shape[0], kw = ker.shape[1], depth = ker.shape[2], nout = ker.shape[3];
    if (activation.ndim() != 3 || activation.shape[0] != depth) {
        throw DimensionError("mixed_mvm: activation " + activation.shape_str() +
                             " does not match layer depth " + std::to_string(depth));
    }
    const size_t h = activation.shape[1], w = activation.shape[2];
    const long long ho = (static_cast<long long>(h) + 2ll * desc.pad - static_cast<long long>(kh)) /
                             desc.stride + 1;
    const long long wo = (static_cast<long long>(w) + 2ll * desc.pad - static_cast<long long>(kw)) /
                             desc.stride + 1;
    if (ho < 1 || wo < 1) throw DimensionError("mixed_mvm: empty output extent");

    auto ls_it = map.layer_scales.find(layer_id);
    if (ls_it == map.layer_scales.end()) {
        throw ArgumentError("mixed_mvm: no scales for layer " + std::to_string(layer_id));
    }
    const LayerScales& ls = ls_it->second;

    // quantize and shift the activation: u = code + q_max, bit-planes of u feed the rows
    const QuantSpec sa = fit_scale(activation.data, hw.input_bits);
    std::vector<int> shifted(activation.size());
    for (size_t i = 0; i < activation.size(); ++i) {
        shifted[i] = quantize(activation.data[i], sa) + sa.q_max;
    }

    Tensor out = Tensor::zeros({nout, static_cast<size_t>(ho), static_cast<size_t>(wo)});
    std::vector<int64_t> z(out.size(), 0);

    bool covered = false;
    std::vector<uint8_t> slice;
    for (const auto& tile : placement.tiles) {
        if (tile.layer_id != layer_id) continue;
        covered = true;

        // strips grouped by kernel position: one input slice serves the group
        std::map<std::pair<int, int>, std::vector<size_t>> groups;
        for (size_t s = 0; s < tile.strips.size(); ++s) {
            groups[{tile.strips[s].id.m, tile.strips[s].id.n}].push_back(s);
        }
        std::vector<int64_t> row_sums(tile.strips.size(), 0);
        for (size_t s = 0; s < tile.strips.size(); ++s) {
            for (int c : tile.strips[s].codes) row_sums[s] += c;
        }

        for (const auto& [mn, members] : groups) {
            const int m = mn.first, n = mn.second;
            for (long long i = 0; i < ho; ++i) {
                const long long ih = i * desc.stride - desc.pad + (m - 1);
                if (ih < 0 || ih >= static_cast<long long>(h)) continue;  // zero padding adds nothing
                for (long long j = 0; j < wo; ++j) {
                    const long long iw = j * desc.stride - desc.pad + (n - 1);
                    if (iw < 0 || iw >= static_cast<long long>(w)) continue;

                    // bit-serial read: one slice per input bit, weighted by 2^b
                    std::vector<int64_t> acc(tile.strips.size(), 0);
                    slice.assign(tile.rows_used, 0);
                    for (int b = 0; b < hw.input_bits; ++b) {
                        for (size_t r = 0; r < tile.rows_used; ++r) {
                            // row r hosts strip depth index row_offset + r
                            const size_t d = tile.strips[members.front()].row_offset + r;
                            slice[r] = d < depth
                                           ? static_cast<uint8_t>((shifted[(d * h + ih) * w + iw] >> b) & 1)
                                           : 0;
                        }
                        const std::vector<int64_t> col = ideal_mvm(tile, slice);
                        const int64_t weight = int64_t(1) << b;
                        for (size_t s : members) acc[s] += weight * col[s];
                    }
                    for (size_t s : members) {
                        const TileStrip& ts = tile.strips[s];
                        // undo the symmetric shift: subtract q_max * sum(codes)
                        int64_t dot = acc[s] - static_cast<int64_t>(sa.q_max) * row_sums[s];
                        if (map.strips[ts.strip_index].cluster == Cluster::Low) {
                            dot = expand_one(dot, ls.k);
                        }
                        const size_t oi = ((static_cast<size_t>(ts.id.out_channel - 1) * ho + i) * wo + j);
                        z[oi] += dot;
                        if (z[oi] > INT32_MAX || z[oi] < -int64_t(INT32_MAX)) {
                            throw OverflowError("accumulator overflow at layer " +
                                                std::to_string(layer_id) + ", tile " +
                                                std::to_string(tile.id));
                        }
                    }
                }
            }
        }
    }
    if (!covered) throw ArgumentError("mixed_mvm: placement has no tiles for layer " +
                                      std::to_string(layer_id));

    const double scale = ls.s_q * sa.scale;
    for (size_t i = 0; i < z.size(); ++i) out.data[i] = scale * static_cast<double>(z[i]);
    return out;
}

namespace {

enum class ConvPath { Crossbar, QuantizedReference };

Tensor network_walk(const ModelGraph& model, const Tensor& x, ConvPath path,
                    const TilePlacement* placement, const BitwidthMap* map,
                    const HardwareConfig& hw) {
    Tensor act = x;
    for (size_t li = 0; li < model.layers.size(); ++li) {
        const LayerDesc& d = model.layers[li];
        switch (d.kind) {
            case LayerKind::Conv2d: {
                if (path == ConvPath::Crossbar) {
                    act = mixed_mvm(*placement, model, static_cast<int>(li), act, *map, hw);
                } else {
                    const QuantSpec sa = fit_scale(act.data, hw.input_bits);
                    Tensor q = act;
                    for (double& v : q.data) v = dequantize(quantize(v, sa), sa);
                    act = conv2d_forward(q, model.params.at(d.param), d.stride, d.pad);
                }
                break;
            }
            case LayerKind::Relu:
                for (double& v : act.data) v = v > 0.0 ? v : 0.0;
                break;
            case LayerKind::Dense: {
                const Tensor& w = model.params.at(d.param);
                Tensor z = Tensor::zeros({w.shape[1]});
                for (size_t a = 0; a < w.shape[0]; ++a) {
                    const double xv = act.data[a];
                    if (xv == 0.0) continue;
                    for (size_t o = 0; o < w.shape[1]; ++o) z.data[o] += xv * w.data[a * w.shape[1] + o];
                }
                act = std::move(z);
                break;
            }
        }
    }
    return act;
}

}  // namespace

Tensor crossbar_forward(const TilePlacement& placement, const ModelGraph& model_c,
                        const BitwidthMap& map, const HardwareConfig& hw, const Tensor& x) {
    return network_walk(model_c, x, ConvPath::Crossbar, &placement, &map, hw);
}

Tensor quantized_reference_forward(const ModelGraph& model_c, const HardwareConfig& hw,
                                   const Tensor& x) {
    return network_walk(model_c, x, ConvPath::QuantizedReference, nullptr, nullptr, hw);
}

namespace {

struct LayerAgg {
    double energy_adc = 0, energy_accum = 0, energy_other = 0, latency_cycles = 0;
    size_t used_high = 0, used_low = 0, total_high = 0, total_low = 0;
    size_t tiles_high = 0, tiles_low = 0;
    uint64_t max_adc_conversions = 0;  // busiest ADC, per input vector
};

CostEntry finalize(const LayerAgg& a) {
    CostEntry e;
    e.energy_adc = a.energy_adc;
    e.energy_accum = a.energy_accum;
    e.energy_other = a.energy_other;
    e.energy_total = a.energy_adc + a.energy_accum + a.energy_other;
    e.latency = a.latency_cycles;
    e.utilization_high =
        a.total_high == 0 ? 100.0 : 100.0 * static_cast<double>(a.used_high) / a.total_high;
    e.utilization_low =
        a.total_low == 0 ? 100.0 : 100.0 * static_cast<double>(a.used_low) / a.total_low;
    e.tiles_high = a.tiles_high;
    e.tiles_low = a.tiles_low;
    return e;
}

}  // namespace

CostReport simulate_cost(const TilePlacement& placement, const Workload& wl,
                         const HardwareConfig& hw) {
    hw.validate();
    if (wl.n_input_vectors < 1) throw ArgumentError("simulate_cost: n_input_vectors must be >= 1");
    const double nv = static_cast<double>(wl.n_input_vectors);

    std::map<int, LayerAgg> per_layer;
    LayerAgg total;

    for (const auto& tile : placement.tiles) {
        const int b = tile.bits;
        const size_t cols_used = tile.strips.size() * static_cast<size_t>(hw.cells_per_weight(b));
        const uint64_t groups = (cols_used + hw.cols_per_adc(b) - 1) / hw.cols_per_adc(b);
        const size_t adcs = std::max<size_t>(1, hw.array_cols / hw.cols_per_adc(b));

        const double conversions = nv * hw.input_bits * static_cast<double>(groups);
        const double e_adc = conversions * hw.e_adc_unit * std::ldexp(1.0, hw.adc_bits(b));
        // one shift-add per conversion, one merge per hosted strip instance
        const double adds = conversions + nv * static_cast<double>(tile.strips.size());
        const double e_acc = adds * hw.e_accum_unit;
        const double e_oth = nv * hw.e_other_unit;
        const uint64_t adc_conv = ((groups + adcs - 1) / adcs) * hw.input_bits;

        for (LayerAgg* agg : {&per_layer[tile.layer_id], &total}) {
            agg->energy_adc += e_adc;
            agg->energy_accum += e_acc;
            agg->energy_other += e_oth;
            agg->max_adc_conversions = std::max(agg->max_adc_conversions, adc_conv);
            if (b == 8) {
                agg->used_high += tile.cells_used(hw);
                agg->total_high += hw.array_rows * hw.array_cols;
                ++agg->tiles_high;
            } else {
                agg->used_low += tile.cells_used(hw);
                agg->total_low += hw.array_rows * hw.array_cols;
                ++agg->tiles_low;
            }
        }
    }

    CostReport report;
    double latency_total = 0.0;
    for (auto& [layer, agg] : per_layer) {
        agg.latency_cycles = nv * static_cast<double>(agg.max_adc_conversions) * hw.t_read;
        latency_total += agg.latency_cycles;
        report.layers[layer] = finalize(agg);
    }
    total.latency_cycles = latency_total;  // layers execute sequentially
    report.total = finalize(total);
    return report;
}

void write_placement_csv(const std::filesystem::path& path, const TilePlacement& p) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << "tile_id,bits,layer_id,strips,cells_used\n";
    for (const auto& t : p.tiles) {
        out << t.id << ',' << t.bits << ',' << t.layer_id << ',';
        for (size_t i = 0; i < t.strips.size(); ++i) {
            if (i) out << ';';
            out << t.strips[i].strip_index;
        }
        out << ',' << t.cells_used(p.hw) << "\n";
    }
    if (!out) throw Error("short write: " + path.string());
}

static nlohmann::json entry_to_json(const CostEntry& e) {
    return {{"energy_adc", e.energy_adc},
            {"energy_accum", e.energy_accum},
            {"energy_other", e.energy_other},
            {"energy_total", e.energy_total},
            {"latency", e.latency},
            {"utilization_high", e.utilization_high},
            {"utilization_low", e.utilization_low},
            {"tiles_high", e.tiles_high},
            {"tiles_low", e.tiles_low}};
}

nlohmann::json cost_report_to_json(const CostReport& report) {
    nlohmann::json layers = nlohmann::json::object();
    for (const auto& [layer, e] : report.layers) layers[std::to_string(layer)] = entry_to_json(e);
    return {{"total", entry_to_json(report.total)}, {"layers", layers}};
}

void write_cost_report_csv(const std::filesystem::path& path, const CostReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << "layer_id,energy_adc,energy_accum,energy_other,energy_total,latency,"
           "utilization_high,utilization_low,tiles_high,tiles_low\n";
    auto row = [&](const std::string& label, const CostEntry& e) {
        out << label << ',' << format_double(e.energy_adc) << ',' << format_double(e.energy_accum)
            << ',' << format_double(e.energy_other) << ',' << format_double(e.energy_total) << ','
            << format_double(e.latency) << ',' << format_double(e.utilization_high) << ','
            << format_double(e.utilization_low) << ',' << e.tiles_high << ',' << e.tiles_low << "\n";
    };
    row("total", report.total);
    for (const auto& [layer, e] : report.layers) row(std::to_string(layer), e);
    if (!out) throw Error("short write: " + path.string());
}

}  // namespace cimq
