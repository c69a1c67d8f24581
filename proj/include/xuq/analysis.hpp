// Study pipelines over the library primitives: stable-instance mining with
// its confusion-matrix evaluation, blackbox complexity estimation from
// near-equidistant boundary-point counts, and the benchmark grids comparing
// explainers across uncertainty metrics.
#pragma once

#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xuq/common.hpp"
#include "xuq/dataset.hpp"
#include "xuq/geometry.hpp"
#include "xuq/parallel.hpp"
#include "xuq/uncertainty.hpp"

namespace xuq {

// Axis-aligned bounding box of the training rows; instances for the feature
// space studies are drawn uniformly from it.
inline Matrix sample_feature_space(const Dataset& ds, std::size_t n, std::uint64_t seed) {
    if (ds.train_idx.empty()) throw config_error("sample_feature_space: empty training split");
    const std::size_t d = ds.dim();
    std::vector<double> lo(d, std::numeric_limits<double>::infinity());
    std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
    for (std::size_t i : ds.train_idx) {
        const auto row = ds.features.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            lo[j] = std::min(lo[j], row[j]);
            hi[j] = std::max(hi[j], row[j]);
        }
    }
    Rng rng(seed);
    Matrix out(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = out.row(i);
        for (std::size_t j = 0; j < d; ++j) row[j] = rng.uniform(lo[j], hi[j]);
    }
    return out;
}

// n distinct rows of the test split, as a matrix.
inline Matrix sample_test_rows(const Dataset& ds, std::size_t n, std::uint64_t seed) {
    if (ds.test_idx.empty()) throw config_error("sample_test_rows: empty test split");
    Rng rng(seed);
    auto pick = rng.sample_without_replacement(ds.test_idx.size(), n);
    Matrix out(pick.size(), ds.dim());
    for (std::size_t i = 0; i < pick.size(); ++i) {
        const auto row = ds.features.row(ds.test_idx[pick[i]]);
        std::copy(row.begin(), row.end(), out.row(i).begin());
    }
    return out;
}

struct StabilityVerdict {
    std::vector<double> instance;
    double l1 = 0.0;
    std::optional<double> l2;  // absent when only one boundary cluster was found
    std::optional<double> ratio;
    bool predicted_stable = false;
    std::optional<double> measured_uncertainty;
    std::optional<bool> truth_stable;
};

inline nlohmann::ordered_json to_json(const StabilityVerdict& v) {
    nlohmann::ordered_json j;
    j["instance"] = v.instance;
    j["l1"] = v.l1;
    j["l2"] = v.l2 ? nlohmann::ordered_json(*v.l2) : nlohmann::ordered_json(nullptr);
    j["ratio"] = v.ratio ? nlohmann::ordered_json(*v.ratio) : nlohmann::ordered_json(nullptr);
    j["predicted_stable"] = v.predicted_stable;
    j["measured_uncertainty"] = v.measured_uncertainty
                                    ? nlohmann::ordered_json(*v.measured_uncertainty)
                                    : nlohmann::ordered_json(nullptr);
    j["truth_stable"] =
        v.truth_stable ? nlohmann::ordered_json(*v.truth_stable) : nlohmann::ordered_json(nullptr);
    return j;
}

// An instance is predicted stable when its second-nearest distinct boundary
// cluster is at least (1 + margin) times farther than the nearest one. The
// search shell is widened past the margin so a second cluster slightly above
// the threshold is still observable.
inline StabilityVerdict stability_predict(const BlackboxModel& model, std::span<const double> x,
                                          const GrowingSpheresConfig& gs, double stability_margin,
                                          std::uint64_t seed) {
    if (!(stability_margin > 0.0))
        throw config_error("stability_predict: stability_margin must be > 0");
    const double shell_m = std::max(20.0, 100.0 * stability_margin + 10.0);
    const auto set = k_nearest_dbps(model, x, gs, 2, shell_m, seed);

    StabilityVerdict v;
    v.instance.assign(x.begin(), x.end());
    v.l1 = set.dbps.front().distance;
    if (set.dbps.size() >= 2) {
        v.l2 = set.dbps[1].distance;
        v.ratio = *v.l2 / v.l1;
        v.predicted_stable = *v.l2 >= (1.0 + stability_margin) * v.l1;
    } else {
        v.predicted_stable = true;
    }
    return v;
}

struct ConfusionReport {
    // [predicted stable][truth low-uncertainty], cells normalized to sum 1
    double cells[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
    double precision = 0.0;
    double recall = 0.0;
    std::size_t n_instances = 0;
    double truth_threshold = 0.0;
    std::vector<StabilityVerdict> verdicts;
};

inline nlohmann::ordered_json to_json(const ConfusionReport& r, bool include_verdicts = true) {
    nlohmann::ordered_json j;
    j["n_instances"] = r.n_instances;
    j["truth_threshold"] = r.truth_threshold;
    j["cells"] = {{"stable_low", r.cells[1][1]},
                  {"stable_high", r.cells[1][0]},
                  {"not_stable_low", r.cells[0][1]},
                  {"not_stable_high", r.cells[0][0]}};
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    if (include_verdicts) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& v : r.verdicts) arr.push_back(to_json(v));
        j["verdicts"] = std::move(arr);
    }
    return j;
}

// Truth label: Kendall uncertainty of an M-run ensemble below the threshold.
// Positive class = stable.
inline ConfusionReport stability_evaluate(const BlackboxModel& model, const Dataset& ds,
                                          std::size_t n_instances, const ExplainerSpec& spec,
                                          int m_runs, double low_uncertainty_threshold,
                                          const GrowingSpheresConfig& gs, double stability_margin,
                                          std::uint64_t root_seed, int threads = 1) {
    if (!(low_uncertainty_threshold > 0.0))
        throw config_error("stability_evaluate: threshold must be > 0");
    const Matrix pts = sample_feature_space(ds, n_instances,
                                            mix64(root_seed ^ seed_salt::kInstanceSampling));
    ConfusionReport rep;
    rep.n_instances = n_instances;
    rep.truth_threshold = low_uncertainty_threshold;
    rep.verdicts.resize(n_instances);

    parallel_for(n_instances, threads, [&](std::size_t i) {
        const auto x = pts.row(i);
        auto ens = run_ensemble(model, x, spec, m_runs,
                                mix64(root_seed ^ seed_salt::kTruthEnsemble ^ i));
        const double unc = kendall_w_uncertainty(rank(ens));
        auto v = stability_predict(model, x, gs, stability_margin,
                                   mix64(root_seed ^ seed_salt::kGrowingSpheres ^ i));
        v.measured_uncertainty = unc;
        v.truth_stable = unc < low_uncertainty_threshold;
        rep.verdicts[i] = std::move(v);
    });

    double counts[2][2] = {{0, 0}, {0, 0}};
    for (const auto& v : rep.verdicts)
        counts[v.predicted_stable ? 1 : 0][*v.truth_stable ? 1 : 0] += 1.0;
    const double total = static_cast<double>(n_instances);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) rep.cells[a][b] = counts[a][b] / total;
    const double tp = counts[1][1], fp = counts[1][0], fn = counts[0][1];
    rep.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
    rep.recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
    return rep;
}

struct ComplexityReport {
    std::vector<int> per_instance_cardinality;
    double average = 0.0;
    ModelKind model_kind = ModelKind::logistic;
    double m_percent = 5.0;
    std::size_t n_instances = 0;
    std::size_t skipped = 0;  // instances with no reachable boundary
};

inline nlohmann::ordered_json to_json(const ComplexityReport& r) {
    nlohmann::ordered_json j;
    j["model_kind"] = to_string(r.model_kind);
    j["m_percent"] = r.m_percent;
    j["n_instances"] = r.n_instances;
    j["skipped"] = r.skipped;
    j["average"] = r.average;
    j["per_instance_cardinality"] = r.per_instance_cardinality;
    return j;
}

// Average count of distinct boundary clusters within (1 + m/100) of the
// nearest one, over instances sampled uniformly from the feature space.
inline ComplexityReport model_complexity(const BlackboxModel& model, const Dataset& ds,
                                         std::size_t n_instances, double m_percent,
                                         const GrowingSpheresConfig& gs, std::uint64_t seed,
                                         int threads = 1, std::size_t k_max = 10000) {
    if (n_instances < 1) throw config_error("model_complexity: n_instances must be >= 1");
    if (!(m_percent > 0.0)) throw config_error("model_complexity: m_percent must be > 0");
    const Matrix pts = sample_feature_space(ds, n_instances,
                                            mix64(seed ^ seed_salt::kInstanceSampling));
    std::vector<int> cards(n_instances, -1);
    parallel_for(n_instances, threads, [&](std::size_t i) {
        try {
            const auto set = k_nearest_dbps(model, pts.row(i), gs, k_max, m_percent,
                                            mix64(seed ^ seed_salt::kGrowingSpheres ^ i));
            cards[i] = static_cast<int>(set.dbps.size());
        } catch (const boundary_not_found&) {
            cards[i] = -1;
        }
    });
    ComplexityReport rep;
    rep.model_kind = model.kind();
    rep.m_percent = m_percent;
    rep.n_instances = n_instances;
    for (int c : cards) {
        if (c < 0)
            ++rep.skipped;
        else
            rep.per_instance_cardinality.push_back(c);
    }
    if (rep.per_instance_cardinality.empty())
        throw boundary_not_found("model_complexity: no instance reached a boundary");
    double sum = 0.0;
    for (int c : rep.per_instance_cardinality) sum += c;
    rep.average = sum / static_cast<double>(rep.per_instance_cardinality.size());
    return rep;
}

// Pearson correlation between per-model average complexity and per-model mean
// Kendall uncertainty.
inline double complexity_uncertainty_correlation(const std::vector<ModelPtr>& models,
                                                 const Dataset& ds, std::size_t n_instances,
                                                 int m_runs, const ExplainerSpec& spec,
                                                 double m_percent, const GrowingSpheresConfig& gs,
                                                 std::uint64_t root_seed, int threads = 1) {
    if (models.size() < 3)
        throw config_error("complexity_uncertainty_correlation: needs at least 3 models");
    std::vector<double> complexity, uncertainty;
    const Matrix pts = sample_feature_space(ds, n_instances,
                                            mix64(root_seed ^ seed_salt::kInstanceSampling));
    for (const auto& model : models) {
        auto rep = model_complexity(*model, ds, n_instances, m_percent, gs, root_seed, threads);
        complexity.push_back(rep.average);
        std::vector<double> uncs(n_instances, 0.0);
        parallel_for(n_instances, threads, [&](std::size_t i) {
            auto ens = run_ensemble(*model, pts.row(i), spec, m_runs,
                                    mix64(root_seed ^ seed_salt::kTruthEnsemble ^ i));
            uncs[i] = kendall_w_uncertainty(rank(ens));
        });
        uncertainty.push_back(stats::mean(uncs));
    }
    return stats::pearson(complexity, uncertainty);
}

// ---- benchmark grids ----

struct BenchmarkCase {
    std::string name;
    const Dataset* dataset = nullptr;
    ModelPtr model;
};

struct Table1Report {
    std::vector<std::string> metric_names;
    // per case, per explainer: metric values averaged over instances
    std::vector<std::string> case_names;
    std::vector<std::vector<std::string>> explainer_names;
    std::vector<std::vector<std::vector<double>>> values;
};

inline const std::vector<std::string>& all_metric_names() {
    static const std::vector<std::string> names = {
        "ci", "ci_bootstrap", "stdev", "kendall_w", "fleiss_kappa", "topk_fa", "topk_ra"};
    return names;
}

inline nlohmann::ordered_json to_json(const Table1Report& r) {
    nlohmann::ordered_json j;
    j["metrics"] = r.metric_names;
    auto cases = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < r.case_names.size(); ++c) {
        nlohmann::ordered_json jc;
        jc["case"] = r.case_names[c];
        auto rows = nlohmann::ordered_json::array();
        for (std::size_t e = 0; e < r.explainer_names[c].size(); ++e)
            rows.push_back({{"explainer", r.explainer_names[c][e]},
                            {"values", r.values[c][e]}});
        jc["rows"] = std::move(rows);
        cases.push_back(std::move(jc));
    }
    j["cases"] = std::move(cases);
    return j;
}

inline std::string to_csv(const Table1Report& r) {
    std::string out = "case,explainer";
    for (const auto& m : r.metric_names) out += "," + m;
    out += "\n";
    char buf[64];
    for (std::size_t c = 0; c < r.case_names.size(); ++c)
        for (std::size_t e = 0; e < r.explainer_names[c].size(); ++e) {
            out += r.case_names[c] + "," + r.explainer_names[c][e];
            for (double v : r.values[c][e]) {
                std::snprintf(buf, sizeof(buf), ",%.9g", v);
                out += buf;
            }
            out += "\n";
        }
    return out;
}

// The explainer x metric grid of mean uncertainty over sampled test
// instances, one block per (dataset, model) case.
inline Table1Report benchmark_table1(const std::vector<BenchmarkCase>& cases,
                                     const std::vector<std::pair<std::string, ExplainerSpec>>&
                                         explainers,
                                     const std::vector<std::string>& metrics,
                                     std::size_t n_instances, int m_runs, double gamma,
                                     std::size_t top_k, int bootstrap_b, std::uint64_t root_seed,
                                     int threads = 1) {
    for (const auto& m : metrics) {
        const auto& known = all_metric_names();
        if (std::find(known.begin(), known.end(), m) == known.end())
            throw config_error("benchmark_table1: unknown metric " + m);
    }
    Table1Report rep;
    rep.metric_names = metrics;
    for (const auto& bc : cases) {
        const Matrix pts = sample_test_rows(*bc.dataset, n_instances,
                                            mix64(root_seed ^ seed_salt::kInstanceSampling));
        rep.case_names.push_back(bc.name);
        std::vector<std::string> enames;
        std::vector<std::vector<double>> rows;
        for (const auto& [ename, spec] : explainers) {
            std::vector<std::map<std::string, double>> per_instance(pts.rows());
            parallel_for(pts.rows(), threads, [&](std::size_t i) {
                AttributionEnsemble ens;
                const auto seed = mix64(root_seed ^ seed_salt::kTruthEnsemble ^ i);
                if (spec.kind == ExplainerKind::random_baseline)
                    ens = random_baseline_ensemble(bc.dataset->dim(), m_runs, seed);
                else
                    ens = run_ensemble(*bc.model, pts.row(i), spec, m_runs, seed);
                auto r = uncertainty_report(ens, gamma, top_k, bootstrap_b,
                                            mix64(seed ^ seed_salt::kBootstrap));
                per_instance[i] = std::move(r.per_metric);
            });
            std::vector<double> row;
            for (const auto& metric : metrics) {
                double acc = 0.0;
                for (const auto& pm : per_instance) acc += pm.at(metric);
                row.push_back(acc / static_cast<double>(per_instance.size()));
            }
            enames.push_back(ename);
            rows.push_back(std::move(row));
        }
        rep.explainer_names.push_back(std::move(enames));
        rep.values.push_back(std::move(rows));
    }
    return rep;
}

struct Table2Report {
    std::vector<std::string> explainer_names;
    std::vector<std::size_t> top_sizes;  // e.g. {1, 2, 5}
    // [explainer][top_size]: mean stdev of those features' weights
    std::vector<std::vector<double>> top_stdev;
    std::vector<double> kendall;  // all-feature Kendall uncertainty per explainer
    double k_mvg = 0.0;
};

inline nlohmann::ordered_json to_json(const Table2Report& r) {
    nlohmann::ordered_json j;
    j["k_mvg"] = r.k_mvg;
    j["top_sizes"] = r.top_sizes;
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t e = 0; e < r.explainer_names.size(); ++e)
        rows.push_back({{"explainer", r.explainer_names[e]},
                        {"top_stdev", r.top_stdev[e]},
                        {"kendall_w", r.kendall[e]}});
    j["rows"] = std::move(rows);
    return j;
}

inline std::string to_csv(const Table2Report& r) {
    std::string out = "explainer";
    for (auto t : r.top_sizes) out += ",top" + std::to_string(t) + "_stdev";
    out += ",kendall_w\n";
    char buf[64];
    for (std::size_t e = 0; e < r.explainer_names.size(); ++e) {
        out += r.explainer_names[e];
        for (double v : r.top_stdev[e]) {
            std::snprintf(buf, sizeof(buf), ",%.9g", v);
            out += buf;
        }
        std::snprintf(buf, sizeof(buf), ",%.9g", r.kendall[e]);
        out += buf;
        out += "\n";
    }
    return out;
}

// Per instance, the compared feature sets are fixed by the plain-LIME
// ensemble's mean |weight| ranking, so every explainer is measured on the
// same features.
inline Table2Report benchmark_table2(const BlackboxModel& model, const Dataset& ds, double k_mvg,
                                     std::size_t n_instances, int m_runs,
                                     const PerturbationConfig& lime_cfg, int num_coalitions,
                                     const Matrix& background, const GrowingSpheresConfig& gs,
                                     std::vector<std::size_t> top_sizes, std::uint64_t root_seed,
                                     int threads = 1) {
    const Matrix pts = sample_test_rows(ds, n_instances,
                                        mix64(root_seed ^ seed_salt::kInstanceSampling));
    std::vector<std::pair<std::string, ExplainerSpec>> specs;
    {
        ExplainerSpec lime;
        lime.kind = ExplainerKind::lime;
        lime.perturb = lime_cfg;
        ExplainerSpec mvg = lime;
        mvg.kind = ExplainerKind::mvg_lime;
        mvg.k_mvg = k_mvg;
        mvg.gs = gs;
        ExplainerSpec ks;
        ks.kind = ExplainerKind::kernelshap;
        ks.num_coalitions = num_coalitions;
        ks.background = background;
        ExplainerSpec mvgks = ks;
        mvgks.kind = ExplainerKind::mvg_kernelshap;
        mvgks.k_mvg = k_mvg;
        mvgks.gs = gs;
        specs = {{"lime", lime}, {"mvg-lime", mvg}, {"kernelshap", ks}, {"mvg-ks", mvgks}};
    }

    std::sort(top_sizes.begin(), top_sizes.end());
    Table2Report rep;
    rep.k_mvg = k_mvg;
    rep.top_sizes = top_sizes;

    const std::size_t d = ds.dim();
    // [explainer][instance] -> (top stdevs, kendall)
    std::vector<std::vector<std::vector<double>>> tops(
        specs.size(), std::vector<std::vector<double>>(pts.rows()));
    std::vector<std::vector<double>> kend(specs.size(), std::vector<double>(pts.rows(), 0.0));

    parallel_for(pts.rows(), threads, [&](std::size_t i) {
        const auto x = pts.row(i);
        const auto base_seed = mix64(root_seed ^ seed_salt::kTruthEnsemble ^ i);
        auto lime_ens = run_ensemble(model, x, specs[0].second, m_runs, base_seed, 1);

        // reference ranking from the plain-LIME ensemble mean |weight|
        std::vector<double> mean_abs(d, 0.0);
        for (const auto& run : lime_ens.runs)
            for (std::size_t j = 0; j < d; ++j) mean_abs[j] += std::fabs(run.weights[j]);
        const auto ref_rank = rank_single(mean_abs);
        std::vector<std::size_t> order(d);
        for (std::size_t j = 0; j < d; ++j) order[ref_rank[j] - 1] = j;

        for (std::size_t e = 0; e < specs.size(); ++e) {
            AttributionEnsemble ens;
            if (e == 0)
                ens = std::move(lime_ens);
            else
                ens = run_ensemble(model, x, specs[e].second, m_runs,
                                   mix64(base_seed ^ (0x1000 + e)), 1);
            const auto sd = stdev_uncertainty(ens);
            std::vector<double> per_top;
            for (std::size_t t : top_sizes) {
                double acc = 0.0;
                for (std::size_t p = 0; p < t && p < d; ++p) acc += sd.per_feature[order[p]];
                per_top.push_back(acc / static_cast<double>(std::min(t, d)));
            }
            tops[e][i] = std::move(per_top);
            kend[e][i] = kendall_w_uncertainty(rank(ens));
        }
    });

    for (std::size_t e = 0; e < specs.size(); ++e) {
        rep.explainer_names.push_back(specs[e].first);
        std::vector<double> mean_tops(top_sizes.size(), 0.0);
        for (std::size_t i = 0; i < pts.rows(); ++i)
            for (std::size_t t = 0; t < top_sizes.size(); ++t) mean_tops[t] += tops[e][i][t];
        for (auto& v : mean_tops) v /= static_cast<double>(pts.rows());
        rep.top_stdev.push_back(std::move(mean_tops));
        rep.kendall.push_back(stats::mean(kend[e]));
    }
    return rep;
}

}  // namespace xuq
