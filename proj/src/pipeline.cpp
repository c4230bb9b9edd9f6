#include "cimq/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <numeric>

#include "cimq/digest.hpp"

namespace cimq {

const std::vector<std::string> kStageOrder = {"score",
                                              "optimize",
                                              "compress",
                                              "place",
                                              "simulate",
                                              "report"};

namespace {

nlohmann::json read_json_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw ConfigError(std::string(what) + " not readable: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(what) + " is not valid JSON (" + path.string() + "): " + e.what());
    }
    return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw Error("short write: " + path.string());
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    write_text(path, j.dump(2) + "\n");
}

AlignMode align_from_string(const std::string& s) {
    if (s == "per_layer") return AlignMode::PerLayer;
    if (s == "global") return AlignMode::Global;
    if (s == "none") return AlignMode::None;
    throw ConfigError("unknown align mode '" + s + "' (per_layer, global, none)");
}

std::string align_to_string(AlignMode m) {
    switch (m) {
        case AlignMode::PerLayer: return "per_layer";
        case AlignMode::Global: return "global";
        case AlignMode::None: return "none";
    }
    return "?";
}

}  // namespace

void apply_hw_override(HardwareConfig& hw, const std::string& spec) {
    const size_t eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("--hw-override needs key=value, got '" + spec + "'");
    const std::string key = spec.substr(0, eq);
    const std::string val = spec.substr(eq + 1);
    try {
        if (key == "array_rows") hw.array_rows = std::stoull(val);
        else if (key == "array_cols") hw.array_cols = std::stoull(val);
        else if (key == "cell_bits") hw.cell_bits = std::stoi(val);
        else if (key == "adc_levels_high") hw.adc_levels_high = std::stoi(val);
        else if (key == "adc_levels_low") hw.adc_levels_low = std::stoi(val);
        else if (key == "cols_per_adc_high") hw.cols_per_adc_high = std::stoi(val);
        else if (key == "cols_per_adc_low") hw.cols_per_adc_low = std::stoi(val);
        else if (key == "input_bits") hw.input_bits = std::stoi(val);
        else if (key == "e_adc_unit") hw.e_adc_unit = std::stod(val);
        else if (key == "e_accum_unit") hw.e_accum_unit = std::stod(val);
        else if (key == "e_other_unit") hw.e_other_unit = std::stod(val);
        else if (key == "t_read") hw.t_read = std::stod(val);
        else throw ConfigError("unknown hardware field '" + key + "'");
    } catch (const std::invalid_argument&) {
        throw ConfigError("bad value '" + val + "' for hardware field '" + key + "'");
    } catch (const std::out_of_range&) {
        throw ConfigError("value '" + val + "' out of range for hardware field '" + key + "'");
    }
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path,
                                    const std::optional<std::filesystem::path>& out_override,
                                    const std::optional<uint64_t>& seed_override,
                                    const std::vector<std::string>& hw_overrides) {
    nlohmann::json j = read_json_file(path, "pipeline config");
    PipelineConfig cfg;
    cfg.config_path = std::filesystem::absolute(path);
    const auto base = cfg.config_path.parent_path();
    auto rel = [&](const std::string& key) -> std::filesystem::path {
        if (!j.contains(key)) throw ConfigError("config missing '" + key + "' (" + path.string() + ")");
        std::filesystem::path p = j.at(key).get<std::string>();
        return p.is_absolute() ? p : base / p;
    };
    try {
        cfg.model_manifest = rel("model");
        cfg.train_inputs = rel("train_inputs");
        cfg.train_labels = rel("train_labels");
        cfg.eval_inputs = rel("eval_inputs");
        cfg.eval_labels = rel("eval_labels");
        cfg.out_dir = rel("out_dir");
        if (j.contains("calibration")) {
            cfg.calibration.samples = j["calibration"].value("samples", cfg.calibration.samples);
            cfg.calibration.seed = j["calibration"].value("seed", cfg.calibration.seed);
        }
        if (j.contains("hutchinson")) {
            cfg.hutchinson.m = j["hutchinson"].value("m", cfg.hutchinson.m);
            cfg.hutchinson.seed = j["hutchinson"].value("seed", cfg.hutchinson.seed);
            cfg.hutchinson.eps = j["hutchinson"].value("eps", cfg.hutchinson.eps);
        }
        if (j.contains("threshold")) {
            const auto& t = j["threshold"];
            cfg.threshold.opt.t0_quantile = t.value("t0_quantile", cfg.threshold.opt.t0_quantile);
            cfg.threshold.opt.eta = t.value("eta", cfg.threshold.opt.eta);
            cfg.threshold.opt.eps_tol = t.value("eps_tol", cfg.threshold.opt.eps_tol);
            cfg.threshold.opt.max_iter = t.value("max_iter", cfg.threshold.opt.max_iter);
            cfg.threshold.opt.fd_step = t.value("fd_step", cfg.threshold.opt.fd_step);
            if (t.contains("fixed_quantile") && !t["fixed_quantile"].is_null()) {
                cfg.threshold.fixed_quantile = t["fixed_quantile"].get<double>();
            }
            cfg.threshold.align = align_from_string(t.value("align", std::string("per_layer")));
        }
        if (j.contains("hardware")) {
            for (const auto& [key, val] : j["hardware"].items()) {
                apply_hw_override(cfg.hardware, key + "=" +
                                                    (val.is_string() ? val.get<std::string>()
                                                                     : val.dump()));
            }
        }
        if (j.contains("workload")) {
            cfg.workload_vectors = j["workload"].value("n_input_vectors", cfg.workload_vectors);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad config " + path.string() + ": " + e.what());
    }

    if (out_override) {
        cfg.out_dir = out_override->is_absolute() ? *out_override
                                                  : std::filesystem::absolute(*out_override);
    }
    if (seed_override) cfg.hutchinson.seed = *seed_override;
    for (const auto& o : hw_overrides) apply_hw_override(cfg.hardware, o);

    // referenced files must exist before any stage runs
    for (const auto& p : {cfg.model_manifest, cfg.train_inputs, cfg.train_labels, cfg.eval_inputs,
                          cfg.eval_labels}) {
        if (!std::filesystem::exists(p)) throw ConfigError("referenced file missing: " + p.string());
    }
    if (cfg.calibration.samples < 1) throw ConfigError("calibration.samples must be >= 1");
    if (cfg.hutchinson.m < 1) throw ConfigError("hutchinson.m must be >= 1");
    if (cfg.threshold.fixed_quantile &&
        (*cfg.threshold.fixed_quantile < 0.0 || *cfg.threshold.fixed_quantile > 1.0)) {
        throw ConfigError("threshold.fixed_quantile must lie in [0,1]");
    }
    try {
        cfg.hardware.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("hardware config invalid: ") + e.what());
    }
    return cfg;
}

nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg) {
    // canonical form: everything that shapes the artifacts. out_dir is where
    // they land, not what they are, so it stays out of the run's identity.
    nlohmann::json j;
    j["model"] = cfg.model_manifest.string();
    j["train_inputs"] = cfg.train_inputs.string();
    j["train_labels"] = cfg.train_labels.string();
    j["eval_inputs"] = cfg.eval_inputs.string();
    j["eval_labels"] = cfg.eval_labels.string();
    j["calibration"] = {{"samples", cfg.calibration.samples}, {"seed", cfg.calibration.seed}};
    j["hutchinson"] = {{"m", cfg.hutchinson.m}, {"seed", cfg.hutchinson.seed},
                       {"eps", cfg.hutchinson.eps}};
    j["threshold"] = {{"t0_quantile", cfg.threshold.opt.t0_quantile},
                      {"eta", cfg.threshold.opt.eta},
                      {"eps_tol", cfg.threshold.opt.eps_tol},
                      {"max_iter", cfg.threshold.opt.max_iter},
                      {"fd_step", cfg.threshold.opt.fd_step},
                      {"align", align_to_string(cfg.threshold.align)}};
    if (cfg.threshold.fixed_quantile) {
        j["threshold"]["fixed_quantile"] = *cfg.threshold.fixed_quantile;
    }
    const HardwareConfig& hw = cfg.hardware;
    j["hardware"] = {{"array_rows", hw.array_rows},
                     {"array_cols", hw.array_cols},
                     {"cell_bits", hw.cell_bits},
                     {"adc_levels_high", hw.adc_levels_high},
                     {"adc_levels_low", hw.adc_levels_low},
                     {"cols_per_adc_high", hw.cols_per_adc_high},
                     {"cols_per_adc_low", hw.cols_per_adc_low},
                     {"input_bits", hw.input_bits},
                     {"e_adc_unit", hw.e_adc_unit},
                     {"e_accum_unit", hw.e_accum_unit},
                     {"e_other_unit", hw.e_other_unit},
                     {"t_read", hw.t_read}};
    j["workload"] = {{"n_input_vectors", cfg.workload_vectors}};
    return j;
}

StageContext StageContext::load(PipelineConfig cfg) {
    StageContext ctx{std::move(cfg), {}, {}, {}, {}};
    ctx.model = load_model(ctx.cfg.model_manifest);
    ctx.train = load_dataset(ctx.cfg.train_inputs, ctx.cfg.train_labels);
    ctx.eval = load_dataset(ctx.cfg.eval_inputs, ctx.cfg.eval_labels);
    ctx.train.validate(ctx.model.num_classes);
    ctx.eval.validate(ctx.model.num_classes);

    // fixed seeded subsample of the training set; shared by scoring and Fisher
    const size_t want = std::min(ctx.cfg.calibration.samples, ctx.train.n());
    std::vector<size_t> idx(ctx.train.n());
    std::iota(idx.begin(), idx.end(), size_t{0});
    Rng rng(mix_seed(ctx.cfg.calibration.seed, 0xca1b));
    for (size_t i = idx.size() - 1; i > 0; --i) {
        const size_t j = static_cast<size_t>(rng.next_u64() % (i + 1));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(want);
    ctx.calibration = ctx.train.subset(idx);
    return ctx;
}

double dataset_accuracy(const ModelGraph& model, const Dataset& data) {
    size_t hits = 0;
    for (size_t s = 0; s < data.n(); ++s) {
        const Tensor logits = forward(model, data.sample(s));
        size_t best = 0;
        for (size_t o = 1; o < logits.size(); ++o) {
            if (logits.data[o] > logits.data[best]) best = o;
        }
        if (static_cast<int>(best) == data.labels[s]) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(data.n());
}

namespace {

struct StageFiles {
    std::vector<std::string> inputs;   // artifact names relative to out_dir
    std::vector<std::string> outputs;
};

StageFiles stage_files(const std::string& stage) {
    if (stage == "score") return {{}, {"sensitivity.csv"}};
    if (stage == "optimize") return {{"sensitivity.csv"}, {"threshold.json", "threshold_iters.csv"}};
    if (stage == "compress") {
        return {{"sensitivity.csv", "threshold.json"}, {"bitwidth_map.json", "compressed/model.json"}};
    }
    if (stage == "place") return {{"bitwidth_map.json"}, {"placement.csv"}};
    if (stage == "simulate") {
        return {{"bitwidth_map.json", "placement.csv"}, {"simulate.json", "cost_report.csv"}};
    }
    if (stage == "report") return {{"simulate.json"}, {"report.json", "report.csv"}};
    throw PipelineError("unknown stage '" + stage + "'");
}

std::string upstream_of(const std::string& artifact) {
    if (artifact == "sensitivity.csv") return "score";
    if (artifact == "threshold.json" || artifact == "threshold_iters.csv") return "optimize";
    if (artifact == "bitwidth_map.json" || artifact.rfind("compressed/", 0) == 0) return "compress";
    if (artifact == "placement.csv") return "place";
    if (artifact == "simulate.json" || artifact == "cost_report.csv") return "simulate";
    return "?";
}

void require_inputs(const StageContext& ctx, const std::string& stage) {
    for (const auto& a : stage_files(stage).inputs) {
        if (!std::filesystem::exists(ctx.cfg.out_dir / a)) {
            throw PipelineError("stage '" + stage + "' requires " + a + " from stage '" +
                                upstream_of(a) + "' (missing under " + ctx.cfg.out_dir.string() + ")");
        }
    }
}

// manifest bookkeeping: read-modify-write one stage entry
void record_stage(const StageContext& ctx, const std::string& stage, double wall_seconds,
                  bool skipped) {
    const auto path = ctx.cfg.out_dir / "run_manifest.json";
    nlohmann::json manifest;
    if (std::filesystem::exists(path)) {
        std::ifstream in(path);
        try {
            in >> manifest;
        } catch (const nlohmann::json::exception&) {
            manifest = nlohmann::json::object();  // regenerate a broken manifest
        }
    }
    manifest["tool_version"] = kToolVersion;
    manifest["config_sha256"] = sha256_bytes(pipeline_config_to_json(ctx.cfg).dump(2));
    nlohmann::json entry;
    entry["skipped"] = skipped;
    entry["wall_seconds"] = wall_seconds;
    nlohmann::json inputs = nlohmann::json::object();
    for (const auto& a : stage_files(stage).inputs) {
        const auto p = ctx.cfg.out_dir / a;
        if (std::filesystem::exists(p)) inputs[a] = sha256_file(p);
    }
    nlohmann::json outputs = nlohmann::json::object();
    for (const auto& a : stage_files(stage).outputs) {
        const auto p = ctx.cfg.out_dir / a;
        if (std::filesystem::exists(p)) outputs[a] = sha256_file(p);
    }
    // compressed tensors are enumerated, not hard-coded
    if (stage == "compress") {
        const auto cdir = ctx.cfg.out_dir / "compressed";
        if (std::filesystem::exists(cdir)) {
            for (const auto& e : std::filesystem::directory_iterator(cdir)) {
                if (!e.is_regular_file()) continue;
                outputs["compressed/" + e.path().filename().string()] = sha256_file(e.path());
            }
        }
    }
    entry["inputs"] = inputs;
    entry["outputs"] = outputs;
    manifest["stages"][stage] = entry;
    write_json_file(path, manifest);
}

std::vector<SensitivityRecord> load_records(const StageContext& ctx) {
    return read_sensitivity_csv(ctx.cfg.out_dir / "sensitivity.csv");
}

// threshold selection shared by compress/place/simulate when they rebuild state
struct ThresholdDecision {
    double t_star = 0.0;
    AlignMode align = AlignMode::None;
    size_t capacity = 32;
};

ThresholdDecision load_decision(const StageContext& ctx) {
    nlohmann::json j = read_json_file(ctx.cfg.out_dir / "threshold.json", "threshold artifact");
    ThresholdDecision d;
    d.t_star = j.at("t_star").get<double>();
    d.align = align_from_string(j.at("align_mode").get<std::string>());
    d.capacity = j.at("capacity").get<size_t>();
    return d;
}

BitwidthMap decide_map(const StageContext& ctx, const std::vector<SensitivityRecord>& records,
                       const ThresholdDecision& d) {
    if (d.align == AlignMode::None) return assign_clusters(records, d.t_star);
    CapacityConfig cap{d.capacity, d.align == AlignMode::PerLayer};
    const AlignResult align = align_to_capacity(records, d.t_star, cap);
    return make_aligned_map(records, d.t_star, align);
}

void stage_score(StageContext& ctx) {
    const auto strips = decompose_strips(ctx.model);
    const auto records = rank_strips(score_strips(ctx.model, ctx.calibration, strips,
                                                  ctx.cfg.hutchinson));
    write_sensitivity_csv(ctx.cfg.out_dir / "sensitivity.csv", records);
    std::cout << "score: R=" << records.size() << " strips, score range ["
              << format_double(records.back().score) << ", " << format_double(records.front().score)
              << "]\n";
}

void stage_optimize(StageContext& ctx) {
    require_inputs(ctx, "optimize");
    const auto records = load_records(ctx);
    const size_t capacity = ctx.cfg.hardware.strip_capacity(8);

    nlohmann::json j;
    double t_star = 0.0;
    if (ctx.cfg.threshold.fixed_quantile) {
        // pinned threshold: take the quantile of the ranked scores directly
        const auto ranked = rank_strips(records);
        const long long R = static_cast<long long>(ranked.size());
        const long long r = std::llround(std::clamp(*ctx.cfg.threshold.fixed_quantile, 0.0, 1.0) *
                                         static_cast<double>(R));
        t_star = r == 0 ? ranked.back().score - 1.0 : ranked[static_cast<size_t>(R - r)].score;
        j["fixed_quantile"] = *ctx.cfg.threshold.fixed_quantile;
        j["t_star"] = t_star;
        j["t_star_rank"] = static_cast<double>(r);
        j["converged"] = true;
        j["iterations"] = 0;
        write_iteration_log_csv(ctx.cfg.out_dir / "threshold_iters.csv", {});
    } else {
        const ThresholdOptResult res =
            optimize_threshold(ctx.model, records, ctx.calibration, ctx.cfg.threshold.opt);
        t_star = res.t_star;
        j["t_star"] = res.t_star;
        j["t_star_rank"] = res.t_star_rank;
        j["best_loss"] = res.best_loss;
        j["initial_loss"] = res.initial_loss;
        j["converged"] = res.converged;
        j["iterations"] = res.trace.size();
        write_iteration_log_csv(ctx.cfg.out_dir / "threshold_iters.csv", res.trace);
    }

    j["align_mode"] = align_to_string(ctx.cfg.threshold.align);
    j["capacity"] = capacity;
    ThresholdDecision d{t_star, ctx.cfg.threshold.align, capacity};
    const BitwidthMap map = decide_map(ctx, records, d);
    j["q"] = map.q;
    j["p_low"] = map.p_low;
    j["R"] = map.R;
    j["cr"] = compression_ratio(map);
    if (ctx.cfg.threshold.align != AlignMode::None) {
        const CapacityConfig cap{capacity, ctx.cfg.threshold.align == AlignMode::PerLayer};
        const AlignResult align = align_to_capacity(records, t_star, cap);
        j["demoted"] = align.demoted.size();
        j["q_unaligned"] = align.q_before;
        if (ctx.cfg.threshold.align == AlignMode::Global) {
            j["t_prime"] = align.t_prime;
        } else {
            nlohmann::json per = nlohmann::json::object();
            for (const auto& [layer, t] : align.per_layer_t) per[std::to_string(layer)] = t;
            j["per_layer_t"] = per;
        }
    }
    write_json_file(ctx.cfg.out_dir / "threshold.json", j);
    std::cout << "optimize: T*=" << format_double(t_star) << " q=" << map.q << " p_low=" << map.p_low
              << " CR=" << format_double(compression_ratio(map)) << "\n";
}

void stage_compress(StageContext& ctx) {
    require_inputs(ctx, "compress");
    const auto records = load_records(ctx);
    const ThresholdDecision d = load_decision(ctx);
    BitwidthMap map = decide_map(ctx, records, d);
    const ModelGraph model_c = apply_bitwidth_map(ctx.model, map);
    write_json_file(ctx.cfg.out_dir / "bitwidth_map.json", bitwidth_map_to_json(map));
    save_model(ctx.cfg.out_dir / "compressed", "model", model_c);
    std::cout << "compress: " << map.q << " strips at 8-bit, " << map.p_low << " at 4-bit\n";
}

void stage_place(StageContext& ctx) {
    require_inputs(ctx, "place");
    BitwidthMap map = bitwidth_map_from_json(
        read_json_file(ctx.cfg.out_dir / "bitwidth_map.json", "bitwidth map"));
    const auto strips = decompose_strips(ctx.model);
    const TilePlacement placement = place(map, strips, ctx.cfg.hardware);
    write_placement_csv(ctx.cfg.out_dir / "placement.csv", placement);
    std::cout << "place: " << placement.tiles.size() << " tiles, high util "
              << format_double(utilization(placement, 8)) << "%, low util "
              << format_double(utilization(placement, 4)) << "%\n";
}

void stage_simulate(StageContext& ctx) {
    require_inputs(ctx, "simulate");
    BitwidthMap map = bitwidth_map_from_json(
        read_json_file(ctx.cfg.out_dir / "bitwidth_map.json", "bitwidth map"));
    const auto strips = decompose_strips(ctx.model);
    const TilePlacement placement = place(map, strips, ctx.cfg.hardware);
    const ModelGraph model_c = apply_bitwidth_map(ctx.model, map);

    size_t hits = 0;
    for (size_t s = 0; s < ctx.eval.n(); ++s) {
        const Tensor logits =
            crossbar_forward(placement, model_c, map, ctx.cfg.hardware, ctx.eval.sample(s));
        size_t best = 0;
        for (size_t o = 1; o < logits.size(); ++o) {
            if (logits.data[o] > logits.data[best]) best = o;
        }
        if (static_cast<int>(best) == ctx.eval.labels[s]) ++hits;
    }
    const double accuracy = 100.0 * static_cast<double>(hits) / static_cast<double>(ctx.eval.n());

    Workload wl;
    wl.n_input_vectors = ctx.cfg.workload_vectors > 0 ? ctx.cfg.workload_vectors : ctx.eval.n();
    const CostReport cost = simulate_cost(placement, wl, ctx.cfg.hardware);
    write_cost_report_csv(ctx.cfg.out_dir / "cost_report.csv", cost);

    nlohmann::json j;
    j["cr"] = compression_ratio(map);
    j["accuracy"] = accuracy;
    j["eval_samples"] = ctx.eval.n();
    j["n_input_vectors"] = wl.n_input_vectors;
    j["q"] = map.q;
    j["p_low"] = map.p_low;
    j["R"] = map.R;
    j["cost"] = cost_report_to_json(cost);
    write_json_file(ctx.cfg.out_dir / "simulate.json", j);
    std::cout << "simulate: accuracy " << format_double(accuracy) << "%, energy "
              << format_double(cost.total.energy_total) << " J, latency "
              << format_double(cost.total.latency) << " s\n";
}

void stage_report(StageContext& ctx) {
    // consolidate every simulate artifact under out_dir, one row per run
    std::vector<std::pair<std::string, nlohmann::json>> runs;
    if (!std::filesystem::exists(ctx.cfg.out_dir)) {
        throw PipelineError("stage 'report' requires simulate.json from stage 'simulate' (missing under " +
                            ctx.cfg.out_dir.string() + ")");
    }
    for (const auto& e : std::filesystem::recursive_directory_iterator(ctx.cfg.out_dir)) {
        if (!e.is_regular_file() || e.path().filename() != "simulate.json") continue;
        runs.emplace_back(std::filesystem::relative(e.path(), ctx.cfg.out_dir).string(),
                          read_json_file(e.path(), "simulate artifact"));
    }
    if (runs.empty()) {
        throw PipelineError("stage 'report' requires simulate.json from stage 'simulate' (none under " +
                            ctx.cfg.out_dir.string() + ")");
    }
    std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) {
        const double ca = a.second.at("cr").template get<double>();
        const double cb = b.second.at("cr").template get<double>();
        if (ca != cb) return ca < cb;
        return a.first < b.first;
    });

    nlohmann::json rows = nlohmann::json::array();
    std::string csv =
        "cr,accuracy,energy_adc,energy_accum,energy_other,energy_total,latency,"
        "utilization_high,utilization_low,tiles_high,tiles_low,source\n";
    for (const auto& [src, sim] : runs) {
        const auto& tot = sim.at("cost").at("total");
        nlohmann::json row;
        row["cr"] = sim.at("cr");
        row["accuracy"] = sim.at("accuracy");
        row["energy_adc"] = tot.at("energy_adc");
        row["energy_accum"] = tot.at("energy_accum");
        row["energy_other"] = tot.at("energy_other");
        row["energy_total"] = tot.at("energy_total");
        row["latency"] = tot.at("latency");
        row["utilization_high"] = tot.at("utilization_high");
        row["utilization_low"] = tot.at("utilization_low");
        row["tiles_high"] = tot.at("tiles_high");
        row["tiles_low"] = tot.at("tiles_low");
        row["source"] = src;
        rows.push_back(row);
        csv += format_double(row["cr"].get<double>()) + "," +
               format_double(row["accuracy"].get<double>()) + "," +
               format_double(tot.at("energy_adc").get<double>()) + "," +
               format_double(tot.at("energy_accum").get<double>()) + "," +
               format_double(tot.at("energy_other").get<double>()) + "," +
               format_double(tot.at("energy_total").get<double>()) + "," +
               format_double(tot.at("latency").get<double>()) + "," +
               format_double(tot.at("utilization_high").get<double>()) + "," +
               format_double(tot.at("utilization_low").get<double>()) + "," +
               std::to_string(tot.at("tiles_high").get<size_t>()) + "," +
               std::to_string(tot.at("tiles_low").get<size_t>()) + "," + src + "\n";
    }
    write_json_file(ctx.cfg.out_dir / "report.json", nlohmann::json{{"rows", rows}});
    write_text(ctx.cfg.out_dir / "report.csv", csv);
    std::cout << "report: " << runs.size() << " run(s)\n";
}

}  // namespace

void run_stage(StageContext& ctx, const std::string& stage) {
    ctx.current_stage = stage;
    std::filesystem::create_directories(ctx.cfg.out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    if (stage == "score") stage_score(ctx);
    else if (stage == "optimize") stage_optimize(ctx);
    else if (stage == "compress") stage_compress(ctx);
    else if (stage == "place") stage_place(ctx);
    else if (stage == "simulate") stage_simulate(ctx);
    else if (stage == "report") stage_report(ctx);
    else throw PipelineError("unknown stage '" + stage + "'");
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    record_stage(ctx, stage, secs, false);
}

void run_pipeline(StageContext& ctx, const std::vector<std::string>& only_stages) {
    for (const auto& s : only_stages) stage_files(s);  // validate names up front
    bool upstream_ran = false;
    for (const auto& stage : kStageOrder) {
        const bool selected = only_stages.empty() ||
                              std::find(only_stages.begin(), only_stages.end(), stage) !=
                                  only_stages.end();
        if (!selected) continue;
        if (only_stages.empty() && !upstream_ran) {
            // full run: a stage with its artifacts already in place is skipped,
            // but once anything upstream re-executes every later stage must too
            const auto files = stage_files(stage);
            bool have_all = !files.outputs.empty();
            for (const auto& a : files.outputs) {
                if (!std::filesystem::exists(ctx.cfg.out_dir / a)) have_all = false;
            }
            if (have_all) {
                ctx.current_stage = stage;
                record_stage(ctx, stage, 0.0, true);
                std::cout << stage << ": outputs present, skipped\n";
                continue;
            }
        }
        run_stage(ctx, stage);
        upstream_ran = true;
    }
}

}  // namespace cimq
