#pragma once

#include <optional>

#include "cimq/crossbar.hpp"
#include "cimq/fixtures.hpp"
#include "cimq/model_io.hpp"
#include "cimq/threshold.hpp"

namespace cimq {

enum class AlignMode { PerLayer, Global, None };

struct CalibrationConfig {
    size_t samples = 256;  // or the whole set when smaller
    uint64_t seed = 1;
};

struct ThresholdStageConfig {
    ThresholdOptConfig opt;
    // pins the threshold to this quantile of the score distribution and skips
    // the descent entirely; used for CR sweeps
    std::optional<double> fixed_quantile;
    AlignMode align = AlignMode::PerLayer;
};

struct PipelineConfig {
    std::filesystem::path config_path;
    std::filesystem::path model_manifest;
    std::filesystem::path train_inputs, train_labels;
    std::filesystem::path eval_inputs, eval_labels;
    std::filesystem::path out_dir;
    CalibrationConfig calibration;
    HutchinsonConfig hutchinson;
    ThresholdStageConfig threshold;
    HardwareConfig hardware;
    uint64_t workload_vectors = 0;  // 0 -> eval sample count
};

// Parses the JSON config; paths resolve relative to the config file. Overrides
// are applied before validation. Throws ConfigError on any problem.
PipelineConfig load_pipeline_config(const std::filesystem::path& path,
                                    const std::optional<std::filesystem::path>& out_override,
                                    const std::optional<uint64_t>& seed_override,
                                    const std::vector<std::string>& hw_overrides);

// "key=value" with a HardwareConfig field name as key
void apply_hw_override(HardwareConfig& hw, const std::string& spec);

// canonical serialized form; its digest identifies the run
nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);

extern const std::vector<std::string> kStageOrder;  // score..report

// Loaded inputs plus everything stages share. Stage functions append to the run
// manifest and write artifacts under cfg.out_dir.
struct StageContext {
    PipelineConfig cfg;
    ModelGraph model;
    Dataset train, eval, calibration;
    std::string current_stage;  // set by run_stage; lets error reporters name it

    static StageContext load(PipelineConfig cfg);
};

void run_stage(StageContext& ctx, const std::string& stage);

// Runs the selected stages in pipeline order (all of them when the list is
// empty). A stage whose outputs already exist is skipped, which is what makes
// interrupted runs restartable; explicitly selected stages always run.
void run_pipeline(StageContext& ctx, const std::vector<std::string>& only_stages);

// software-forward classification accuracy, percent
double dataset_accuracy(const ModelGraph& model, const Dataset& data);

}  // namespace cimq
