#pragma once

#include <filesystem>

#include "cimq/quantizer.hpp"

namespace cimq {

// diagonal empirical Fisher information over the canonical flat parameter order
struct FisherDiag {
    std::vector<double> values;
    size_t sample_count = 0;
};

// entry i = (1/n) sum over samples of g_i^2, g the per-sample loss gradient
FisherDiag fisher_diag(const ModelGraph& model, const Dataset& data);

// sum of squared entry differences (squared Frobenius norm of the diagonal)
double fim_distance(const FisherDiag& f, const FisherDiag& f0);

struct ThresholdOptConfig {
    double t0_quantile = 1.0;  // 1.0 = everything LOW, maximum compression
    double eta = 1.0;          // ranks moved per unit of normalized gradient
    double eps_tol = -1.0;     // Frobenius tolerance; < 0 -> 1e-3 * initial L
    int max_iter = 50;
    double fd_step = 1.0;      // gradient probe distance in rank units
};

struct ThresholdIterRow {
    int iter = 0;
    double t_rank = 0.0;
    double t_score = 0.0;
    size_t q = 0;
    size_t p_low = 0;
    double loss = 0.0;  // ||F - F0||_F^2 at this iterate
    double grad = 0.0;  // central finite difference over ranks
};

struct ThresholdOptResult {
    double t_star = 0.0;       // score-valued threshold of the best iterate
    double t_star_rank = 0.0;  // rank (LOW count) of the best iterate
    double best_loss = 0.0;
    double initial_loss = 0.0;
    bool converged = false;
    std::vector<ThresholdIterRow> trace;
};

// Descent over the quantile/rank parameterization of T, loss = Fisher drift of
// the compressed model against the original. Returns the best L observed across
// every evaluation, probes included; ties prefer more compression.
ThresholdOptResult optimize_threshold(const ModelGraph& model,
                                      const std::vector<SensitivityRecord>& records,
                                      const Dataset& data, const ThresholdOptConfig& cfg);

struct CapacityConfig {
    size_t capacity = 32;  // strips per HIGH tile: array_cols / cells_per_weight(8)
    bool per_layer = true;
};

struct AlignResult {
    double t_prime = 0.0;                    // effective threshold, global mode
    std::map<int, double> per_layer_t;       // effective thresholds, per-layer mode
    std::vector<StripId> demoted;            // strips moved HIGH -> LOW
    size_t q_before = 0;
    size_t q_after = 0;
};

// Demotion-only: drops the (q mod C) lowest-scoring HIGH strips (per layer by
// default) so the HIGH count divides the tile capacity exactly. Ties at the
// demotion boundary are resolved by rank order, which keeps q' == C*floor(q/C)
// even when a single score value straddles the cut.
AlignResult align_to_capacity(const std::vector<SensitivityRecord>& records, double T,
                              const CapacityConfig& cap);

// assignment from T plus the alignment's demotions applied on top
BitwidthMap make_aligned_map(const std::vector<SensitivityRecord>& records, double T,
                             const AlignResult& align);

// columns: iter,T_rank,T_score,q,p_low,L,g
void write_iteration_log_csv(const std::filesystem::path& path,
                             const std::vector<ThresholdIterRow>& trace);

}  // namespace cimq
