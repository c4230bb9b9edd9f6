#include "cimq/quantizer.hpp"

#include <cmath>

namespace cimq {

int q_max_for_bits(int bits) {
    if (bits != 4 && bits != 8) {
        throw ArgumentError("unsupported bit-width " + std::to_string(bits) + " (need 4 or 8)");
    }
    return (1 << (bits - 1)) - 1;
}

QuantSpec fit_scale(const std::vector<double>& values, int bits) {
    const int qm = q_max_for_bits(bits);
    double amax = 0.0;
    for (double v : values) amax = std::max(amax, std::abs(v));
    QuantSpec spec;
    spec.bits = bits;
    spec.q_max = qm;
    spec.scale = amax == 0.0 ? 1.0 : amax / static_cast<double>(qm);
    return spec;
}

int quantize(double x, const QuantSpec& spec) {
    if (spec.scale <= 0.0) throw ArgumentError("quantize: scale must be > 0");
    double r = std::nearbyint(x / spec.scale);  // FE_TONEAREST: half to even
    if (r > spec.q_max) r = spec.q_max;
    if (r < -spec.q_max) r = -spec.q_max;
    return static_cast<int>(r);
}

double dequantize(int code, const QuantSpec& spec) {
    return static_cast<double>(code) * spec.scale;
}

const StripAssignment* BitwidthMap::find(const StripId& id) const {
    for (const auto& s : strips) {
        if (s.id == id) return &s;
    }
    return nullptr;
}

BitwidthMap assign_clusters(const std::vector<SensitivityRecord>& records, double T) {
    if (records.empty()) throw ArgumentError("assign_clusters: no records");
    auto ranked = rank_strips(records);
    BitwidthMap map;
    map.threshold = T;
    map.R = ranked.size();
    map.strips.reserve(ranked.size());
    for (size_t i = 0; i < ranked.size(); ++i) {
        StripAssignment a;
        a.id = ranked[i].id;
        a.rank = i;
        a.score = ranked[i].score;
        a.cluster = ranked[i].score > T ? Cluster::High : Cluster::Low;
        if (a.cluster == Cluster::High) {
            ++map.q;
        } else {
            ++map.p_low;
        }
        map.strips.push_back(a);
    }
    return map;
}

double compression_ratio(const BitwidthMap& map) {
    if (map.R == 0) throw ArgumentError("compression_ratio: empty map");
    return static_cast<double>(map.p_low) / static_cast<double>(map.R);
}

ModelGraph apply_bitwidth_map(const ModelGraph& model, BitwidthMap& map) {
    auto strips = decompose_strips(model);
    if (strips.size() != map.R) {
        throw ArgumentError("bitwidth map covers " + std::to_string(map.R) + " strips, model has " +
                            std::to_string(strips.size()));
    }

    // per-layer value pools per cluster (values read from the current weights)
    std::map<int, std::vector<double>> high_vals, low_vals;
    std::map<int, bool> seen_layer;
    for (const auto& s : strips) {
        const StripAssignment* a = map.find(s.id);
        if (!a) throw ArgumentError("bitwidth map is missing strip " + strip_key(s.id));
        seen_layer[s.id.layer_id] = true;
        auto& pool = a->cluster == Cluster::High ? high_vals[s.id.layer_id] : low_vals[s.id.layer_id];
        pool.insert(pool.end(), s.values.begin(), s.values.end());
    }

    map.layer_scales.clear();
    for (const auto& [layer, _] : seen_layer) {
        const auto hi = high_vals.find(layer);
        const auto lo = low_vals.find(layer);
        LayerScales ls;
        if (hi != high_vals.end() && lo != low_vals.end()) {
            ls.s_q = fit_scale(hi->second, 8).scale;
            double free_p = fit_scale(lo->second, 4).scale;
            long long k = std::llround(std::log2(free_p / ls.s_q));
            ls.k = static_cast<int>(std::max(0ll, k));
            ls.s_p = ls.s_q * std::ldexp(1.0, ls.k);
        } else if (hi != high_vals.end()) {
            ls.s_q = fit_scale(hi->second, 8).scale;
            ls.s_p = ls.s_q;
            ls.k = 0;
        } else {
            ls.s_p = fit_scale(lo->second, 4).scale;
            ls.s_q = ls.s_p;
            ls.k = 0;
        }
        map.layer_scales[layer] = ls;
    }

    ModelGraph out = model;
    for (const auto& s : strips) {
        const StripAssignment* a = map.find(s.id);
        const LayerScales& ls = map.layer_scales.at(s.id.layer_id);
        const QuantSpec spec = a->cluster == Cluster::High ? ls.high_spec() : ls.low_spec();
        std::vector<double> vals(s.values.size());
        for (size_t i = 0; i < vals.size(); ++i) {
            vals[i] = dequantize(quantize(s.values[i], spec), spec);
        }
        write_strip_values(out, s, vals);
    }
    return out;
}

std::pair<ModelGraph, BitwidthMap> compress(const ModelGraph& model,
                                            const std::vector<SensitivityRecord>& records, double T) {
    BitwidthMap map = assign_clusters(records, T);
    ModelGraph out = apply_bitwidth_map(model, map);
    return {std::move(out), std::move(map)};
}

nlohmann::json bitwidth_map_to_json(const BitwidthMap& map) {
    nlohmann::json j;
    j["threshold"] = map.threshold;
    j["aligned"] = map.aligned;
    j["counts"] = {{"q", map.q}, {"p_low", map.p_low}, {"R", map.R}};
    nlohmann::json scales = nlohmann::json::object();
    for (const auto& [layer, ls] : map.layer_scales) {
        scales[std::to_string(layer)] = {{"s_q", ls.s_q}, {"s_p", ls.s_p}, {"k", ls.k}};
    }
    j["layer_scales"] = scales;
    if (!map.per_layer_threshold.empty()) {
        nlohmann::json plt = nlohmann::json::object();
        for (const auto& [layer, t] : map.per_layer_threshold) plt[std::to_string(layer)] = t;
        j["per_layer_threshold"] = plt;
    }
    nlohmann::json strips = nlohmann::json::array();
    for (const auto& a : map.strips) {
        strips.push_back({{"key", strip_key(a.id)},
                          {"cluster", a.cluster == Cluster::High ? "high" : "low"},
                          {"rank", a.rank},
                          {"score", a.score}});
    }
    j["strips"] = strips;
    return j;
}

static StripId parse_strip_key(const std::string& key) {
    StripId id;
    int fields[4] = {0, 0, 0, 0};
    size_t pos = 0;
    for (int f = 0; f < 4; ++f) {
        size_t next = f < 3 ? key.find(':', pos) : key.size();
        if (next == std::string::npos) throw FormatError("bad strip key '" + key + "'", 0);
        fields[f] = std::atoi(key.substr(pos, next - pos).c_str());
        pos = next + 1;
    }
    id.layer_id = fields[0];
    id.m = fields[1];
    id.n = fields[2];
    id.out_channel = fields[3];
    return id;
}

BitwidthMap bitwidth_map_from_json(const nlohmann::json& j) {
    BitwidthMap map;
    map.threshold = j.at("threshold").get<double>();
    map.aligned = j.value("aligned", false);
    map.q = j.at("counts").at("q").get<size_t>();
    map.p_low = j.at("counts").at("p_low").get<size_t>();
    map.R = j.at("counts").at("R").get<size_t>();
    for (const auto& [key, val] : j.at("layer_scales").items()) {
        LayerScales ls;
        ls.s_q = val.at("s_q").get<double>();
        ls.s_p = val.at("s_p").get<double>();
        ls.k = val.at("k").get<int>();
        map.layer_scales[std::atoi(key.c_str())] = ls;
    }
    if (j.contains("per_layer_threshold")) {
        for (const auto& [key, val] : j.at("per_layer_threshold").items()) {
            map.per_layer_threshold[std::atoi(key.c_str())] = val.get<double>();
        }
    }
    for (const auto& s : j.at("strips")) {
        StripAssignment a;
        a.id = parse_strip_key(s.at("key").get<std::string>());
        a.cluster = s.at("cluster").get<std::string>() == "high" ? Cluster::High : Cluster::Low;
        a.rank = s.at("rank").get<size_t>();
        a.score = s.at("score").get<double>();
        map.strips.push_back(a);
    }
    if (map.q + map.p_low != map.R || map.strips.size() != map.R) {
        throw FormatError("inconsistent strip counts in bitwidth map", 0);
    }
    return map;
}

}  // namespace cimq
