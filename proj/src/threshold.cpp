#include "cimq/threshold.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace cimq {

FisherDiag fisher_diag(const ModelGraph& model, const Dataset& data) {
    if (data.n() == 0) throw ArgumentError("fisher_diag: empty dataset");
    const auto order = model.param_order();
    FisherDiag f;
    f.values.assign(model.param_count(), 0.0);
    f.sample_count = data.n();
    for_each_sample_grad(model, data, [&](size_t, double, const ParamMap& g) {
        size_t at = 0;
        for (const auto& name : order) {
            const Tensor& t = g.at(name);
            for (double v : t.data) {
                f.values[at++] += v * v;
            }
        }
    });
    const double inv = 1.0 / static_cast<double>(data.n());
    for (double& v : f.values) v *= inv;
    return f;
}

double fim_distance(const FisherDiag& f, const FisherDiag& f0) {
    if (f.values.size() != f0.values.size()) {
        throw ArgumentError("fim_distance: length " + std::to_string(f.values.size()) + " vs " +
                            std::to_string(f0.values.size()));
    }
    double acc = 0.0;
    for (size_t i = 0; i < f.values.size(); ++i) {
        const double d = f.values[i] - f0.values[i];
        acc += d * d;
    }
    return acc;
}

namespace {

struct RankEval {
    double loss = 0.0;
    double t_score = 0.0;
    size_t q = 0;
    size_t p_low = 0;
};

}  // namespace

ThresholdOptResult optimize_threshold(const ModelGraph& model,
                                      const std::vector<SensitivityRecord>& records,
                                      const Dataset& data, const ThresholdOptConfig& cfg) {
    if (records.empty()) throw ArgumentError("optimize_threshold: no records");
    if (cfg.eta <= 0.0) throw ArgumentError("optimize_threshold: eta must be > 0");
    if (cfg.max_iter < 1) throw ArgumentError("optimize_threshold: max_iter must be >= 1");
    if (cfg.fd_step < 1.0) throw ArgumentError("optimize_threshold: fd_step must be >= 1 rank");

    const auto ranked = rank_strips(records);
    const long long R = static_cast<long long>(ranked.size());
    // ascending scores; rank r (LOW count) maps to threshold ascending[r-1]
    std::vector<double> ascending(ranked.size());
    for (size_t i = 0; i < ranked.size(); ++i) ascending[i] = ranked[ranked.size() - 1 - i].score;

    auto threshold_at = [&](long long r) {
        // r == 0 means every strip HIGH; any value below the minimum score works
        return r == 0 ? ascending.front() - 1.0 : ascending[static_cast<size_t>(r - 1)];
    };

    const FisherDiag f0 = fisher_diag(model, data);

    std::map<long long, RankEval> memo;
    long long best_rank = -1;
    auto evaluate = [&](long long r) -> const RankEval& {
        auto it = memo.find(r);
        if (it != memo.end()) return it->second;
        RankEval e;
        e.t_score = threshold_at(r);
        auto [model_c, m] = compress(model, records, e.t_score);
        e.q = m.q;
        e.p_low = m.p_low;
        e.loss = fim_distance(fisher_diag(model_c, data), f0);
        auto pos = memo.emplace(r, e).first;
        // best over every evaluation; ties keep the higher rank (more compression)
        if (best_rank < 0 || e.loss < memo.at(best_rank).loss ||
            (e.loss == memo.at(best_rank).loss && r > best_rank)) {
            best_rank = r;
        }
        return pos->second;
    };

    const long long fd = std::max(1ll, std::llround(cfg.fd_step));
    double t = std::clamp(cfg.t0_quantile, 0.0, 1.0) * static_cast<double>(R);

    ThresholdOptResult res;
    res.initial_loss = evaluate(std::llround(t)).loss;
    const double eps = cfg.eps_tol >= 0.0 ? cfg.eps_tol : 1e-3 * res.initial_loss;

    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        const long long r = std::clamp(std::llround(t), 0ll, R);
        const RankEval cur = evaluate(r);

        const long long rp = std::min(R, r + fd);
        const long long rm = std::max(0ll, r - fd);
        double g = 0.0;
        if (rp > rm) g = (evaluate(rp).loss - evaluate(rm).loss) / static_cast<double>(rp - rm);

        res.trace.push_back({iter, static_cast<double>(r), cur.t_score, cur.q, cur.p_low, cur.loss, g});

        if (std::sqrt(cur.loss) <= eps) {
            res.converged = true;
            break;
        }
        if (g == 0.0) break;  // flat within the probe window: stationary

        const double step = cfg.eta * (g > 0.0 ? 1.0 : -1.0);
        const double t_next = std::clamp(t - step, 0.0, static_cast<double>(R));
        // pinned at a boundary with the gradient pointing outward: the projected
        // step is zero, which is as stationary as a flat window
        if (t_next == t) break;
        t = t_next;
    }

    const RankEval& best = memo.at(best_rank);
    res.t_star = best.t_score;
    res.t_star_rank = static_cast<double>(best_rank);
    res.best_loss = best.loss;
    return res;
}

AlignResult align_to_capacity(const std::vector<SensitivityRecord>& records, double T,
                              const CapacityConfig& cap) {
    if (cap.capacity < 1) throw ArgumentError("align_to_capacity: capacity must be >= 1");
    const auto ranked = rank_strips(records);

    // HIGH strips in ascending-score order (rank order reversed) per layer bucket
    std::map<int, std::vector<const SensitivityRecord*>> high_by_layer;
    size_t q_before = 0;
    for (const auto& r : ranked) {
        if (r.score > T) {
            ++q_before;
            high_by_layer[cap.per_layer ? r.id.layer_id : 0].push_back(&r);
        }
    }

    AlignResult out;
    out.q_before = q_before;
    out.t_prime = T;
    for (auto& [layer, highs] : high_by_layer) {
        const size_t drop = highs.size() % cap.capacity;
        double t_layer = T;
        // ranked order is descending, so the demotion candidates sit at the tail
        for (size_t i = 0; i < drop; ++i) {
            const SensitivityRecord* victim = highs[highs.size() - 1 - i];
            out.demoted.push_back(victim->id);
            t_layer = std::max(t_layer, victim->score);
        }
        if (cap.per_layer) {
            out.per_layer_t[layer] = t_layer;
        } else {
            out.t_prime = t_layer;
        }
    }
    out.q_after = q_before - out.demoted.size();
    return out;
}

BitwidthMap make_aligned_map(const std::vector<SensitivityRecord>& records, double T,
                             const AlignResult& align) {
    BitwidthMap map = assign_clusters(records, T);
    for (const auto& id : align.demoted) {
        for (auto& a : map.strips) {
            if (a.id == id && a.cluster == Cluster::High) {
                a.cluster = Cluster::Low;
                --map.q;
                ++map.p_low;
                break;
            }
        }
    }
    map.aligned = true;
    map.per_layer_threshold = align.per_layer_t;
    if (align.per_layer_t.empty()) map.threshold = align.t_prime;  // global mode
    return map;
}

void write_iteration_log_csv(const std::filesystem::path& path,
                             const std::vector<ThresholdIterRow>& trace) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << "iter,T_rank,T_score,q,p_low,L,g\n";
    for (const auto& row : trace) {
        out << row.iter << ',' << format_double(row.t_rank) << ',' << format_double(row.t_score)
            << ',' << row.q << ',' << row.p_low << ',' << format_double(row.loss) << ','
            << format_double(row.grad) << "\n";
    }
    if (!out) throw Error("short write: " + path.string());
}

}  // namespace cimq
