#include <catch2/catch_amalgamated.hpp>

#include "xuq/uncertainty.hpp"

using namespace xuq;
using Catch::Approx;

namespace {

AttributionEnsemble make_ensemble(std::vector<std::vector<double>> runs) {
    AttributionEnsemble ens;
    ens.instance.assign(runs.front().size(), 0.0);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        Attribution a;
        a.weights = std::move(runs[i]);
        a.seed = i;
        a.num_samples = 1;
        ens.runs.push_back(std::move(a));
    }
    return ens;
}

RankMatrix make_ranks(std::vector<std::vector<int>> rows) {
    RankMatrix rm;
    rm.num_runs = rows.size();
    rm.dims = rows.front().size();
    for (const auto& r : rows) rm.ranks.insert(rm.ranks.end(), r.begin(), r.end());
    return rm;
}

}  // namespace

TEST_CASE("ranking by absolute weight with index tie-break") {
    REQUIRE(rank_single(std::vector<double>{0.5, -0.9, 0.1}) == std::vector<int>{2, 1, 3});
    REQUIRE(rank_single(std::vector<double>{0.3, 0.3}) == std::vector<int>{1, 2});
    REQUIRE(rank_single(std::vector<double>{0.0, 0.0, 0.0, 0.0}) ==
            std::vector<int>{1, 2, 3, 4});
}

TEST_CASE("kendall uncertainty on hand fixtures") {
    // identical rankings: perfect concordance
    const auto same = make_ranks({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
    REQUIRE(kendall_w_uncertainty(same) == Approx(0.0).margin(1e-12));

    // opposite rankings: CR = (4,4,4), S = 0, W = 0
    const auto opp = make_ranks({{1, 2, 3}, {3, 2, 1}});
    REQUIRE(kendall_w_uncertainty(opp) == Approx(1.0).margin(1e-12));

    // M=3, D=3 mixed fixture: CR=(4,5,9), S=14, W=7/9
    const auto mixed = make_ranks({{1, 2, 3}, {2, 1, 3}, {1, 2, 3}});
    REQUIRE(kendall_w_uncertainty(mixed) == Approx(2.0 / 9.0).margin(1e-12));
}

TEST_CASE("random rankings show near-total kendall uncertainty") {
    auto ens = random_baseline_ensemble(8, 100, 7);
    REQUIRE(kendall_w_uncertainty(rank(ens)) >= 0.9);
}

TEST_CASE("fleiss kappa on hand fixtures") {
    const auto same = make_ranks({{2, 1, 3}, {2, 1, 3}, {2, 1, 3}});
    const auto r0 = fleiss_kappa_uncertainty(same);
    REQUIRE(r0.uncertainty == Approx(0.0).margin(1e-12));
    REQUIRE_FALSE(r0.out_of_range);

    // M=2, D=2 swap: P=0, Pe=1/2, kappa=-1, uncertainty 2 reported raw
    const auto swap2 = make_ranks({{1, 2}, {2, 1}});
    const auto r1 = fleiss_kappa_uncertainty(swap2);
    REQUIRE(r1.uncertainty == Approx(2.0).margin(1e-12));
    REQUIRE(r1.out_of_range);

    // M=3, D=3 mixed fixture: P=5/9, Pe=1/3, kappa=1/3
    const auto mixed = make_ranks({{1, 2, 3}, {2, 1, 3}, {1, 2, 3}});
    const auto r2 = fleiss_kappa_uncertainty(mixed);
    REQUIRE(r2.uncertainty == Approx(2.0 / 3.0).margin(1e-12));
}

TEST_CASE("fleiss kappa approaches one for uniform random rankings") {
    auto ens = random_baseline_ensemble(5, 10000, 3);
    const auto r = fleiss_kappa_uncertainty(rank(ens));
    REQUIRE(r.uncertainty == Approx(1.0).margin(0.05));
}

TEST_CASE("top-k agreements on hand fixtures") {
    // runs: |w| orders f0>f1>f2, f1>f0>f2, f0>f1>f2
    auto ens = make_ensemble({{0.9, 0.5, 0.1}, {0.5, 0.9, 0.1}, {0.9, 0.5, 0.1}});

    // identical ensembles: zero uncertainty
    auto same = make_ensemble({{0.9, 0.5, 0.1}, {0.9, 0.5, 0.1}});
    REQUIRE(topk_feature_agreement_uncertainty(same, 2) == Approx(0.0));
    REQUIRE(topk_rank_agreement_uncertainty(same, 2) == Approx(0.0));

    // top-1 FA: pairs agree 0, 1, 0 -> uncertainty 2/3
    REQUIRE(topk_feature_agreement_uncertainty(ens, 1) == Approx(2.0 / 3.0));
    // top-2 RA: same positions 0, 2, 0 of k=2 -> mean 1/3 -> uncertainty 2/3
    REQUIRE(topk_rank_agreement_uncertainty(ens, 2) == Approx(2.0 / 3.0));
    // top-2 FA: the sets coincide in every run
    REQUIRE(topk_feature_agreement_uncertainty(ens, 2) == Approx(0.0));

    // k = 1 rank agreement equals top-1 feature agreement
    REQUIRE(topk_rank_agreement_uncertainty(ens, 1) ==
            Approx(topk_feature_agreement_uncertainty(ens, 1)));

    // disjoint top-k across two runs: uncertainty 1
    auto disjoint = make_ensemble({{0.9, 0.8, 0.1, 0.0}, {0.1, 0.0, 0.9, 0.8}});
    REQUIRE(topk_feature_agreement_uncertainty(disjoint, 2) == Approx(1.0));

    // k = D: the top-D sets are always identical
    REQUIRE(topk_feature_agreement_uncertainty(disjoint, 4) == Approx(0.0));

    // reversed top-k orders with k even: rank agreement zero
    auto reversed = make_ensemble({{0.9, 0.8, 0.1}, {0.8, 0.9, 0.1}});
    REQUIRE(topk_rank_agreement_uncertainty(reversed, 2) == Approx(1.0));
}

TEST_CASE("ci width from the stated quantile rule") {
    // constant weights: zero width
    std::vector<std::vector<double>> constant(12, {0.4, -0.2});
    REQUIRE(ci_width(make_ensemble(constant), 0.95).mean == Approx(0.0).margin(1e-12));

    // feature 0 takes values 1..100: width = q(.975) - q(.025) = 94.05
    std::vector<std::vector<double>> runs;
    for (int i = 1; i <= 100; ++i) runs.push_back({static_cast<double>(i), 1.0});
    const auto ci = ci_width(make_ensemble(runs), 0.95);
    REQUIRE(ci.per_feature[0] == Approx(94.05).margin(1e-9));
    REQUIRE(ci.per_feature[1] == Approx(0.0).margin(1e-12));

    // narrower confidence gives narrower intervals
    const auto ci50 = ci_width(make_ensemble(runs), 0.5);
    REQUIRE(ci50.per_feature[0] < ci.per_feature[0]);

    // M too small
    std::vector<std::vector<double>> tiny(5, {1.0});
    REQUIRE_THROWS_AS(ci_width(make_ensemble(tiny), 0.95), config_error);
}

TEST_CASE("bootstrap-of-median width") {
    // identical runs collapse to zero
    std::vector<std::vector<double>> constant(20, {0.3, 0.7});
    REQUIRE(ci_bootstrap_width(make_ensemble(constant), 50, 0.95, 1) ==
            Approx(0.0).margin(1e-12));

    // B too small
    REQUIRE_THROWS_AS(ci_bootstrap_width(make_ensemble(constant), 1, 0.95, 1), config_error);

    // medians concentrate: bootstrap width below the raw width on unimodal data
    Rng rng(5);
    int wins = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::vector<double>> runs;
        for (int i = 0; i < 40; ++i) runs.push_back({rng.normal()});
        auto ens = make_ensemble(runs);
        const double raw = ci_width(ens, 0.95).mean;
        const double boot = ci_bootstrap_width(ens, 200, 0.95, 100 + trial);
        if (boot <= raw) ++wins;
    }
    REQUIRE(wins == 50);
}

TEST_CASE("stdev uncertainty") {
    auto ens = make_ensemble({{0.0, 0.0, 0.0}, {2.0, 2.0, 2.0}});
    const auto sd = stdev_uncertainty(ens);
    for (double v : sd.per_feature) REQUIRE(v == Approx(std::sqrt(2.0)));
    REQUIRE(sd.mean == Approx(std::sqrt(2.0)));

    auto same = make_ensemble({{0.5, 0.1}, {0.5, 0.1}, {0.5, 0.1}});
    REQUIRE(stdev_uncertainty(same).mean == Approx(0.0).margin(1e-12));
}

TEST_CASE("stdev of noisy attributions matches the generating sigma") {
    Rng rng(11);
    std::vector<std::vector<double>> runs;
    for (int i = 0; i < 10000; ++i) runs.push_back({0.1 * rng.normal(), 0.1 * rng.normal()});
    const auto sd = stdev_uncertainty(make_ensemble(runs));
    REQUIRE(sd.mean == Approx(0.1).margin(0.005));
}

TEST_CASE("random baseline stdev matches the uniform moment") {
    auto ens = random_baseline_ensemble(6, 20000, 17);
    const auto sd = stdev_uncertainty(ens);
    REQUIRE(sd.mean == Approx(1.0 / std::sqrt(3.0)).margin(0.01));
    REQUIRE(topk_feature_agreement_uncertainty(ens, 6) == Approx(0.0));
}

TEST_CASE("importance-uncertainty correlation") {
    // equal stdev across features: undefined correlation
    auto flat = make_ensemble({{1.0, 2.0, 3.0}, {2.0, 3.0, 4.0}});
    REQUIRE_THROWS_AS(feature_importance_uncertainty_correlation(flat), domain_error);

    // independent importance and noise scale: near-zero correlation
    Rng rng(23);
    const std::size_t d = 10000;
    std::vector<double> a(d), b(d);
    for (std::size_t j = 0; j < d; ++j) {
        a[j] = 5.0 + rng.uniform01();       // mean magnitude, independent of b
        b[j] = 0.1 + 0.09 * rng.uniform01();  // noise scale
    }
    std::vector<double> r1(d), r2(d);
    for (std::size_t j = 0; j < d; ++j) {
        r1[j] = a[j] + b[j];
        r2[j] = a[j] - b[j];
    }
    auto ens = make_ensemble({r1, r2});
    REQUIRE(std::fabs(feature_importance_uncertainty_correlation(ens)) < 0.03);
}

TEST_CASE("ensembles are deterministic and thread invariant") {
    auto model = std::make_shared<LinearModel>(ModelKind::logistic,
                                               std::vector<double>{1.0, -2.0}, 0.3, false);
    std::vector<double> x{0.5, 0.5};
    ExplainerSpec spec;
    spec.perturb.num_samples = 200;

    auto a = run_ensemble(*model, x, spec, 16, 99, 1);
    auto b = run_ensemble(*model, x, spec, 16, 99, 4);
    REQUIRE(a.num_runs() == b.num_runs());
    for (std::size_t i = 0; i < a.num_runs(); ++i) {
        REQUIRE(a.runs[i].weights == b.runs[i].weights);
        REQUIRE(a.runs[i].seed == derive_seed(99, i));
    }
    auto c = run_ensemble(*model, x, spec, 16, 100, 1);
    bool differs = false;
    for (std::size_t i = 0; i < a.num_runs(); ++i)
        differs = differs || a.runs[i].weights != c.runs[i].weights;
    REQUIRE(differs);
}

TEST_CASE("duplicate runs have zero spread everywhere") {
    auto dup = make_ensemble({{0.25, -0.5, 0.75}, {0.25, -0.5, 0.75}});
    REQUIRE(stdev_uncertainty(dup).mean == Approx(0.0).margin(1e-15));
    REQUIRE(kendall_w_uncertainty(rank(dup)) == Approx(0.0).margin(1e-12));
}

TEST_CASE("uncertainty report carries all seven metrics") {
    std::vector<std::vector<double>> runs;
    Rng rng(31);
    for (int i = 0; i < 25; ++i) runs.push_back({rng.normal(), rng.normal(), rng.normal()});
    const auto rep = uncertainty_report(make_ensemble(runs), 0.95, 2, 50, 7);
    for (const char* key :
         {"ci", "ci_bootstrap", "stdev", "kendall_w", "fleiss_kappa", "topk_fa", "topk_ra"})
        REQUIRE(rep.per_metric.count(key) == 1);
    REQUIRE(rep.per_feature_stdev.size() == 3);
    REQUIRE(rep.per_feature_ci_width.size() == 3);
    REQUIRE(rep.m_runs == 25);
}
