#include "cimq/sensitivity.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace cimq {

double group_trace(const ModelGraph& model, const Dataset& batch, const ParamGroup& group,
                   const HutchinsonConfig& cfg) {
    if (group.coords.empty()) throw ArgumentError("group_trace: empty coordinate group");
    if (cfg.m < 1) throw ArgumentError("group_trace: probe count must be >= 1");
    const double eps = cfg.eps > 0.0 ? cfg.eps : default_hvp_eps(model);

    // direction tensors only for the params this group touches
    ParamMap v;
    for (const auto& c : group.coords) {
        if (v.find(c.param) == v.end()) {
            v.emplace(c.param, Tensor::zeros(model.params.at(c.param).shape));
        }
    }

    Rng rng(mix_seed(cfg.seed, group.stream));
    double acc = 0.0;
    for (int probe = 0; probe < cfg.m; ++probe) {
        std::vector<double> signs(group.coords.size());
        for (auto& s : signs) s = rng.rademacher();
        for (size_t i = 0; i < group.coords.size(); ++i) {
            v.at(group.coords[i].param).data[group.coords[i].flat] = signs[i];
        }
        ParamMap hv = hvp(model, batch, v, eps);
        double dot = 0.0;
        for (size_t i = 0; i < group.coords.size(); ++i) {
            dot += signs[i] * hv.at(group.coords[i].param).data[group.coords[i].flat];
        }
        acc += dot;
        for (const auto& c : group.coords) v.at(c.param).data[c.flat] = 0.0;
    }
    return acc / static_cast<double>(cfg.m);
}

double strip_score(double trace_estimate, size_t p_strip, double sq_norm) {
    if (p_strip == 0) throw ArgumentError("strip_score: empty strip");
    return trace_estimate / (2.0 * static_cast<double>(p_strip)) * sq_norm;
}

std::vector<SensitivityRecord> score_strips(const ModelGraph& model, const Dataset& batch,
                                            const std::vector<StripWeight>& strips,
                                            const HutchinsonConfig& cfg) {
    std::vector<SensitivityRecord> out(strips.size());
    parallel_for(strips.size(), [&](size_t i) {
        const StripWeight& s = strips[i];
        ParamGroup group;
        group.stream = s.index;
        auto offs = s.param_offsets(model);
        group.coords.reserve(offs.size());
        for (size_t off : offs) group.coords.push_back({s.param, off});

        double trace = 0.0;
        try {
            trace = group_trace(model, batch, group, cfg);
        } catch (const NumericError& e) {
            throw NumericError(e.what(), "strip " + strip_key(s.id));
        }
        double sq = 0.0;
        for (double w : s.values) sq += w * w;
        out[i] = {s.id, s.index, s.p_strip(), trace, sq, strip_score(trace, s.p_strip(), sq)};
    });
    return out;
}

std::vector<SensitivityRecord> rank_strips(std::vector<SensitivityRecord> records) {
    std::sort(records.begin(), records.end(), [](const SensitivityRecord& a, const SensitivityRecord& b) {
        if (a.score != b.score) return a.score > b.score;
        return structural_less(a.id, b.id);
    });
    return records;
}

static const char* kCsvHeader = "layer_id,m,n,out_channel,p_strip,trace,sq_norm,score";

void write_sensitivity_csv(const std::filesystem::path& path,
                           const std::vector<SensitivityRecord>& ranked) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << kCsvHeader << "\n";
    for (const auto& r : ranked) {
        out << r.id.layer_id << ',' << r.id.m << ',' << r.id.n << ',' << r.id.out_channel << ','
            << r.p_strip << ',' << format_double(r.trace_estimate) << ','
            << format_double(r.sq_norm) << ',' << format_double(r.score) << "\n";
    }
    if (!out) throw Error("short write: " + path.string());
}

std::vector<SensitivityRecord> read_sensitivity_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open for reading: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty sensitivity report " + path.string(), 0);
    // tolerate a trailing \r from foreign editors
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader) throw FormatError("unexpected header in " + path.string(), 0);

    std::vector<SensitivityRecord> records;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8) {
            throw FormatError("line " + std::to_string(lineno) + " of " + path.string() + " has " +
                              std::to_string(cells.size()) + " fields, expected 8", 0);
        }
        SensitivityRecord r;
        r.id.layer_id = std::atoi(cells[0].c_str());
        r.id.m = std::atoi(cells[1].c_str());
        r.id.n = std::atoi(cells[2].c_str());
        r.id.out_channel = std::atoi(cells[3].c_str());
        r.p_strip = static_cast<size_t>(std::atoll(cells[4].c_str()));
        r.trace_estimate = std::strtod(cells[5].c_str(), nullptr);
        r.sq_norm = std::strtod(cells[6].c_str(), nullptr);
        r.score = std::strtod(cells[7].c_str(), nullptr);
        r.strip_index = records.size();  // rank position; decompose index is not serialized
        records.push_back(r);
    }
    if (records.empty()) throw FormatError("no strip rows in " + path.string(), 0);
    return records;
}

}  // namespace cimq
