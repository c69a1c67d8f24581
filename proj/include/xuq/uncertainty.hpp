// Attribution ensembles and the uncertainty metrics computed over them:
// confidence-interval width (plain and bootstrap-of-median), per-feature
// standard deviation, Kendall's coefficient of concordance, Fleiss' kappa,
// and top-k feature/rank agreement. Concordance and agreement scores are
// reported as 1 - score so that every metric reads "higher = more uncertain".
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xuq/common.hpp"
#include "xuq/mvg.hpp"
#include "xuq/parallel.hpp"
#include "xuq/rng.hpp"

namespace xuq {

// Everything one explain call needs, for any explainer kind.
struct ExplainerSpec {
    ExplainerKind kind = ExplainerKind::lime;
    PerturbationConfig perturb;
    double gamma = 0.95;       // bayeslime credible level
    int num_coalitions = 2048; // kernelshap family
    int mask_draws = 16;       // mvg-kernelshap
    double k_mvg = 2.0;        // mvg family
    GrowingSpheresConfig gs;
    Matrix background;         // kernelshap family
};

inline Attribution explain_once(const BlackboxModel& model, std::span<const double> x,
                                const ExplainerSpec& spec, std::uint64_t seed) {
    switch (spec.kind) {
        case ExplainerKind::lime:
            return lime_explain(model, x, spec.perturb, seed);
        case ExplainerKind::kernelshap:
            return kernelshap_explain(model, x, spec.background, spec.num_coalitions, seed);
        case ExplainerKind::bayeslime:
            return bayeslime_mean_attribution(model, x, spec.perturb, spec.gamma, seed);
        case ExplainerKind::mvg_lime:
            return mvg_lime_explain(model, x, spec.k_mvg, spec.perturb, seed, spec.gs);
        case ExplainerKind::mvg_kernelshap:
            return mvg_kernelshap_explain(model, x, spec.k_mvg, spec.background,
                                          spec.num_coalitions, seed, spec.gs, spec.mask_draws);
        case ExplainerKind::random_baseline: {
            Rng rng(seed);
            Attribution a;
            a.weights.resize(x.size());
            for (auto& w : a.weights) w = rng.uniform(-1.0, 1.0);
            a.explainer = ExplainerKind::random_baseline;
            a.seed = seed;
            a.num_samples = 1;
            return a;
        }
    }
    throw config_error("explain_once: unknown explainer");
}

struct AttributionEnsemble {
    std::vector<Attribution> runs;
    std::vector<double> instance;
    std::uint64_t root_seed = 0;
    ExplainerKind explainer = ExplainerKind::lime;

    std::size_t num_runs() const { return runs.size(); }
    std::size_t dim() const { return runs.empty() ? 0 : runs.front().weights.size(); }
};

// M independent runs; run i uses seed mix64(root_seed ^ i). Slot-per-run
// writes keep the result identical for any thread count.
inline AttributionEnsemble run_ensemble(const BlackboxModel& model, std::span<const double> x,
                                        const ExplainerSpec& spec, int m,
                                        std::uint64_t root_seed, int threads = 1) {
    if (m < 2) throw config_error("run_ensemble: M must be >= 2");
    AttributionEnsemble ens;
    ens.runs.resize(m);
    ens.instance.assign(x.begin(), x.end());
    ens.root_seed = root_seed;
    ens.explainer = spec.kind;
    try {
        parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t i) {
            ens.runs[i] = explain_once(model, x, spec, derive_seed(root_seed, i));
        });
    } catch (const std::exception& e) {
        throw domain_error(std::string("run_ensemble: a run failed: ") + e.what());
    }
    return ens;
}

// Weights drawn i.i.d. uniform in [-1, 1]: the control baseline.
inline AttributionEnsemble random_baseline_ensemble(std::size_t dims, int m,
                                                    std::uint64_t root_seed) {
    if (m < 2) throw config_error("random_baseline_ensemble: M must be >= 2");
    AttributionEnsemble ens;
    ens.instance.assign(dims, 0.0);
    ens.root_seed = root_seed;
    ens.explainer = ExplainerKind::random_baseline;
    ens.runs.resize(m);
    for (int i = 0; i < m; ++i) {
        const std::uint64_t seed = derive_seed(root_seed, static_cast<std::uint64_t>(i));
        Rng rng(seed);
        Attribution a;
        a.weights.resize(dims);
        for (auto& w : a.weights) w = rng.uniform(-1.0, 1.0);
        a.explainer = ExplainerKind::random_baseline;
        a.seed = seed;
        a.num_samples = 1;
        ens.runs[static_cast<std::size_t>(i)] = std::move(a);
    }
    return ens;
}

struct RankMatrix {
    std::size_t num_runs = 0;
    std::size_t dims = 0;
    std::vector<int> ranks;  // row-major, rank of feature d in run m (1 = most important)

    int at(std::size_t run, std::size_t feature) const { return ranks[run * dims + feature]; }
};

// Ranks by |weight| descending, ties broken toward the lower feature index.
inline std::vector<int> rank_single(std::span<const double> weights) {
    const std::size_t d = weights.size();
    std::vector<std::size_t> order(d);
    for (std::size_t j = 0; j < d; ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double wa = std::fabs(weights[a]), wb = std::fabs(weights[b]);
        if (wa != wb) return wa > wb;
        return a < b;
    });
    std::vector<int> ranks(d);
    for (std::size_t pos = 0; pos < d; ++pos) ranks[order[pos]] = static_cast<int>(pos) + 1;
    return ranks;
}

inline RankMatrix rank(const AttributionEnsemble& ens) {
    RankMatrix rm;
    rm.num_runs = ens.num_runs();
    rm.dims = ens.dim();
    rm.ranks.resize(rm.num_runs * rm.dims);
    for (std::size_t m = 0; m < rm.num_runs; ++m) {
        const auto r = rank_single(ens.runs[m].weights);
        std::copy(r.begin(), r.end(), rm.ranks.begin() + static_cast<std::ptrdiff_t>(m * rm.dims));
    }
    return rm;
}

namespace detail {

inline std::vector<double> feature_column(const AttributionEnsemble& ens, std::size_t j) {
    std::vector<double> col(ens.num_runs());
    for (std::size_t m = 0; m < col.size(); ++m) col[m] = ens.runs[m].weights[j];
    return col;
}

// ordered top-k feature lists per run, from the rank matrix
inline std::vector<std::vector<int>> topk_lists(const RankMatrix& rm, std::size_t k) {
    std::vector<std::vector<int>> lists(rm.num_runs, std::vector<int>(k));
    for (std::size_t m = 0; m < rm.num_runs; ++m)
        for (std::size_t j = 0; j < rm.dims; ++j) {
            const int r = rm.at(m, j);
            if (static_cast<std::size_t>(r) <= k) lists[m][r - 1] = static_cast<int>(j);
        }
    return lists;
}

}  // namespace detail

struct PerFeatureMetric {
    std::vector<double> per_feature;
    double mean = 0.0;
};

// Equal-tailed empirical interval width per feature at confidence gamma
// (type-7 quantiles).
inline PerFeatureMetric ci_width(const AttributionEnsemble& ens, double gamma) {
    if (ens.num_runs() < 10) throw config_error("ci_width: needs M >= 10");
    if (!(gamma > 0.0 && gamma < 1.0)) throw config_error("ci_width: gamma outside (0,1)");
    const double alpha = 1.0 - gamma;
    PerFeatureMetric out;
    out.per_feature.resize(ens.dim());
    for (std::size_t j = 0; j < ens.dim(); ++j) {
        auto col = detail::feature_column(ens, j);
        out.per_feature[j] = stats::quantile_type7(col, 1.0 - 0.5 * alpha) -
                             stats::quantile_type7(col, 0.5 * alpha);
    }
    out.mean = stats::mean(out.per_feature);
    return out;
}

// Bootstrap-of-median width: B resamples of the runs, elementwise median per
// resample, then the CI width of those medians, averaged over features.
inline double ci_bootstrap_width(const AttributionEnsemble& ens, int b, double gamma,
                                 std::uint64_t seed) {
    if (ens.num_runs() < 10) throw config_error("ci_bootstrap_width: needs M >= 10");
    if (b < 10) throw config_error("ci_bootstrap_width: needs B >= 10");
    if (!(gamma > 0.0 && gamma < 1.0)) throw config_error("ci_bootstrap_width: gamma outside (0,1)");
    const std::size_t m = ens.num_runs(), d = ens.dim();
    Rng rng(seed);
    Matrix medians(b, d);
    std::vector<double> vals(m);
    std::vector<std::size_t> pick(m);
    for (int t = 0; t < b; ++t) {
        for (auto& p : pick) p = static_cast<std::size_t>(rng.bounded(m));
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t i = 0; i < m; ++i) vals[i] = ens.runs[pick[i]].weights[j];
            medians(t, j) = stats::quantile_type7(vals, 0.5);
        }
    }
    const double alpha = 1.0 - gamma;
    double total = 0.0;
    std::vector<double> col(b);
    for (std::size_t j = 0; j < d; ++j) {
        for (int t = 0; t < b; ++t) col[t] = medians(t, j);
        total += stats::quantile_type7(col, 1.0 - 0.5 * alpha) -
                 stats::quantile_type7(col, 0.5 * alpha);
    }
    return total / static_cast<double>(d);
}

inline double ci_bootstrap(const BlackboxModel& model, std::span<const double> x,
                           const ExplainerSpec& spec, int m, int b, double gamma,
                           std::uint64_t root_seed, int threads = 1) {
    auto ens = run_ensemble(model, x, spec, m, root_seed, threads);
    return ci_bootstrap_width(ens, b, gamma, mix64(root_seed ^ seed_salt::kBootstrap));
}

// Sample standard deviation (M-1 denominator) per feature.
inline PerFeatureMetric stdev_uncertainty(const AttributionEnsemble& ens) {
    if (ens.num_runs() < 2) throw config_error("stdev_uncertainty: needs M >= 2");
    PerFeatureMetric out;
    out.per_feature.resize(ens.dim());
    for (std::size_t j = 0; j < ens.dim(); ++j)
        out.per_feature[j] = stats::sample_stdev(detail::feature_column(ens, j));
    out.mean = stats::mean(out.per_feature);
    return out;
}

// 1 - W with W = 12 S / (M^2 (D^3 - D)), S the squared deviation of the
// per-feature rank sums from their mean.
inline double kendall_w_uncertainty(const RankMatrix& rm) {
    if (rm.num_runs < 2) throw config_error("kendall_w_uncertainty: needs M >= 2");
    if (rm.dims < 2) throw config_error("kendall_w_uncertainty: needs D >= 2");
    const double m = static_cast<double>(rm.num_runs), d = static_cast<double>(rm.dims);
    std::vector<double> cr(rm.dims, 0.0);
    for (std::size_t run = 0; run < rm.num_runs; ++run)
        for (std::size_t j = 0; j < rm.dims; ++j) cr[j] += rm.at(run, j);
    const double mean_cr = stats::mean(cr);
    double s = 0.0;
    for (double c : cr) s += (c - mean_cr) * (c - mean_cr);
    const double w = 12.0 * s / (m * m * (d * d * d - d));
    return 1.0 - w;
}

struct FleissResult {
    double uncertainty = 0.0;
    bool degenerate = false;    // chance agreement was 1; uncertainty forced to 0
    bool out_of_range = false;  // kappa below 0, so 1 - kappa exceeds 1 (reported raw)
};

// Ranks treated as categories; T[i][j] counts runs assigning feature i rank j.
inline FleissResult fleiss_kappa_uncertainty(const RankMatrix& rm) {
    if (rm.num_runs < 2) throw config_error("fleiss_kappa_uncertainty: needs M >= 2");
    if (rm.dims < 2) throw config_error("fleiss_kappa_uncertainty: needs D >= 2");
    const std::size_t d = rm.dims;
    const double m = static_cast<double>(rm.num_runs);
    Matrix t(d, d, 0.0);
    for (std::size_t run = 0; run < rm.num_runs; ++run)
        for (std::size_t i = 0; i < d; ++i) t(i, rm.at(run, i) - 1) += 1.0;

    double p_bar = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < d; ++j) row += t(i, j) * t(i, j);
        p_bar += (row - m) / (m * m - m);
    }
    p_bar /= static_cast<double>(d);

    double pe = 0.0;
    const double total = m * static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < d; ++i) col += t(i, j);
        const double pj = col / total;
        pe += pj * pj;
    }

    FleissResult out;
    if (std::fabs(1.0 - pe) < 1e-12) {
        out.degenerate = true;
        return out;
    }
    const double kappa = (p_bar - pe) / (1.0 - pe);
    out.uncertainty = 1.0 - kappa;
    out.out_of_range = out.uncertainty < 0.0 || out.uncertainty > 1.0;
    return out;
}

// 1 - mean over run pairs of |topk(a) & topk(b)| / k.
inline double topk_feature_agreement_uncertainty(const AttributionEnsemble& ens, std::size_t k) {
    const RankMatrix rm = rank(ens);
    if (k < 1 || k > rm.dims) throw config_error("topk: k outside [1, D]");
    if (rm.num_runs < 2) throw config_error("topk: needs M >= 2");
    std::vector<std::vector<bool>> members(rm.num_runs, std::vector<bool>(rm.dims, false));
    for (std::size_t m = 0; m < rm.num_runs; ++m)
        for (std::size_t j = 0; j < rm.dims; ++j)
            if (static_cast<std::size_t>(rm.at(m, j)) <= k) members[m][j] = true;
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < rm.num_runs; ++a)
        for (std::size_t b = a + 1; b < rm.num_runs; ++b) {
            std::size_t inter = 0;
            for (std::size_t j = 0; j < rm.dims; ++j)
                if (members[a][j] && members[b][j]) ++inter;
            acc += static_cast<double>(inter) / static_cast<double>(k);
            ++pairs;
        }
    return 1.0 - acc / static_cast<double>(pairs);
}

// 1 - mean over run pairs of the fraction of the first k rank positions
// holding the same feature.
inline double topk_rank_agreement_uncertainty(const AttributionEnsemble& ens, std::size_t k) {
    const RankMatrix rm = rank(ens);
    if (k < 1 || k > rm.dims) throw config_error("topk: k outside [1, D]");
    if (rm.num_runs < 2) throw config_error("topk: needs M >= 2");
    const auto lists = detail::topk_lists(rm, k);
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < rm.num_runs; ++a)
        for (std::size_t b = a + 1; b < rm.num_runs; ++b) {
            std::size_t same = 0;
            for (std::size_t p = 0; p < k; ++p)
                if (lists[a][p] == lists[b][p]) ++same;
            acc += static_cast<double>(same) / static_cast<double>(k);
            ++pairs;
        }
    return 1.0 - acc / static_cast<double>(pairs);
}

// Pearson correlation between mean |weight| and per-feature stdev across the
// ensemble (the importance-vs-uncertainty relationship).
inline double feature_importance_uncertainty_correlation(const AttributionEnsemble& ens) {
    if (ens.dim() < 3)
        throw config_error("feature_importance_uncertainty_correlation: needs D >= 3");
    const auto u = stdev_uncertainty(ens);
    std::vector<double> w(ens.dim(), 0.0);
    for (const auto& run : ens.runs)
        for (std::size_t j = 0; j < w.size(); ++j) w[j] += std::fabs(run.weights[j]);
    for (auto& v : w) v /= static_cast<double>(ens.num_runs());
    return stats::pearson(w, u.per_feature);
}

struct UncertaintyReport {
    std::map<std::string, double> per_metric;
    std::vector<double> per_feature_stdev;
    std::vector<double> per_feature_ci_width;
    int m_runs = 0;
    double gamma = 0.95;
    int top_k = 0;
    bool fleiss_degenerate = false;
    bool fleiss_out_of_range = false;
};

inline UncertaintyReport uncertainty_report(const AttributionEnsemble& ens, double gamma,
                                            std::size_t top_k, int bootstrap_b,
                                            std::uint64_t bootstrap_seed) {
    UncertaintyReport rep;
    const auto rm = rank(ens);
    const auto ci = ci_width(ens, gamma);
    const auto sd = stdev_uncertainty(ens);
    const auto fk = fleiss_kappa_uncertainty(rm);
    rep.per_metric["ci"] = ci.mean;
    rep.per_metric["ci_bootstrap"] = ci_bootstrap_width(ens, bootstrap_b, gamma, bootstrap_seed);
    rep.per_metric["stdev"] = sd.mean;
    rep.per_metric["kendall_w"] = kendall_w_uncertainty(rm);
    rep.per_metric["fleiss_kappa"] = fk.uncertainty;
    rep.per_metric["topk_fa"] = topk_feature_agreement_uncertainty(ens, top_k);
    rep.per_metric["topk_ra"] = topk_rank_agreement_uncertainty(ens, top_k);
    rep.per_feature_stdev = sd.per_feature;
    rep.per_feature_ci_width = ci.per_feature;
    rep.m_runs = static_cast<int>(ens.num_runs());
    rep.gamma = gamma;
    rep.top_k = static_cast<int>(top_k);
    rep.fleiss_degenerate = fk.degenerate;
    rep.fleiss_out_of_range = fk.out_of_range;
    return rep;
}

inline nlohmann::ordered_json to_json(const UncertaintyReport& rep) {
    nlohmann::ordered_json j;
    j["m_runs"] = rep.m_runs;
    j["gamma"] = rep.gamma;
    j["top_k"] = rep.top_k;
    j["metrics"] = rep.per_metric;
    j["per_feature_stdev"] = rep.per_feature_stdev;
    j["per_feature_ci_width"] = rep.per_feature_ci_width;
    j["fleiss_degenerate"] = rep.fleiss_degenerate;
    j["fleiss_out_of_range"] = rep.fleiss_out_of_range;
    return j;
}

}  // namespace xuq
