// Randomized property checks over the metric and geometry invariants.
#include <catch2/catch_amalgamated.hpp>

#include "xuq/analysis.hpp"

using namespace xuq;
using Catch::Approx;

namespace {

AttributionEnsemble random_ensemble(Rng& rng, std::size_t d, std::size_t m) {
    AttributionEnsemble ens;
    ens.instance.assign(d, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        Attribution a;
        a.weights.resize(d);
        for (auto& w : a.weights) w = rng.normal();
        a.num_samples = 1;
        ens.runs.push_back(std::move(a));
    }
    return ens;
}

class HyperplaneModel final : public BlackboxModel {
public:
    HyperplaneModel(std::vector<double> w, double b) : w_(std::move(w)), b_(b) {}
    std::size_t input_dim() const override { return w_.size(); }
    ModelKind kind() const override { return ModelKind::linear_margin; }
    nlohmann::ordered_json to_json() const override { return json_header(); }

protected:
    double proba_unchecked(std::span<const double> x) const override {
        return stats::dot(w_, x) + b_ >= 0.0 ? 1.0 : 0.0;
    }

private:
    std::vector<double> w_;
    double b_;
};

}  // namespace

TEST_CASE("rank metrics are invariant under positive rescaling") {
    Rng rng(101);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t d = 2 + rng.bounded(5);
        const std::size_t m = 2 + rng.bounded(6);
        auto ens = random_ensemble(rng, d, m);
        const double c = std::exp(rng.uniform(-3.0, 3.0));
        auto scaled = ens;
        for (auto& run : scaled.runs)
            for (auto& w : run.weights) w *= c;

        const auto ra = rank(ens), rb = rank(scaled);
        REQUIRE(ra.ranks == rb.ranks);
        REQUIRE(kendall_w_uncertainty(ra) == kendall_w_uncertainty(rb));
        REQUIRE(fleiss_kappa_uncertainty(ra).uncertainty ==
                fleiss_kappa_uncertainty(rb).uncertainty);
        const std::size_t k = 1 + rng.bounded(d);
        REQUIRE(topk_feature_agreement_uncertainty(ens, k) ==
                topk_feature_agreement_uncertainty(scaled, k));
        REQUIRE(topk_rank_agreement_uncertainty(ens, k) ==
                topk_rank_agreement_uncertainty(scaled, k));
    }
}

TEST_CASE("scalar metrics are equivariant under feature permutation") {
    Rng rng(103);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t d = 3 + rng.bounded(4);
        const std::size_t m = 12 + rng.bounded(4);
        auto ens = random_ensemble(rng, d, m);

        std::vector<std::size_t> perm(d);
        for (std::size_t j = 0; j < d; ++j) perm[j] = j;
        rng.shuffle(perm);
        auto permuted = ens;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j)
                permuted.runs[i].weights[j] = ens.runs[i].weights[perm[j]];

        const std::size_t k = 1 + rng.bounded(d);
        REQUIRE(kendall_w_uncertainty(rank(ens)) ==
                Approx(kendall_w_uncertainty(rank(permuted))).margin(1e-12));
        REQUIRE(fleiss_kappa_uncertainty(rank(ens)).uncertainty ==
                Approx(fleiss_kappa_uncertainty(rank(permuted)).uncertainty).margin(1e-12));
        REQUIRE(topk_feature_agreement_uncertainty(ens, k) ==
                Approx(topk_feature_agreement_uncertainty(permuted, k)).margin(1e-12));
        REQUIRE(topk_rank_agreement_uncertainty(ens, k) ==
                Approx(topk_rank_agreement_uncertainty(permuted, k)).margin(1e-12));
        REQUIRE(stdev_uncertainty(ens).mean ==
                Approx(stdev_uncertainty(permuted).mean).margin(1e-12));
        REQUIRE(ci_width(ens, 0.9).mean == Approx(ci_width(permuted, 0.9).mean).margin(1e-12));
    }
}

TEST_CASE("metric bounds hold on random ensembles") {
    Rng rng(107);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t d = 2 + rng.bounded(5);
        const std::size_t m = 10 + rng.bounded(8);
        auto ens = random_ensemble(rng, d, m);
        const auto rm = rank(ens);
        const double kw = kendall_w_uncertainty(rm);
        REQUIRE(kw >= -1e-12);
        REQUIRE(kw <= 1.0 + 1e-12);
        const std::size_t k = 1 + rng.bounded(d);
        const double fa = topk_feature_agreement_uncertainty(ens, k);
        const double ra = topk_rank_agreement_uncertainty(ens, k);
        REQUIRE(fa >= -1e-12);
        REQUIRE(fa <= 1.0 + 1e-12);
        REQUIRE(ra >= -1e-12);
        REQUIRE(ra <= 1.0 + 1e-12);
        REQUIRE(ra >= fa - 1e-12);  // rank agreement is the stricter score
        REQUIRE(stdev_uncertainty(ens).mean >= 0.0);
        REQUIRE(ci_width(ens, 0.9).mean >= 0.0);
    }
}

TEST_CASE("probability bounds hold for arbitrary finite inputs") {
    Rng rng(109);
    std::vector<ModelPtr> models;
    models.push_back(std::make_shared<LinearModel>(ModelKind::logistic,
                                                   std::vector<double>{2.0, -3.0, 0.5}, 1.0,
                                                   false));
    {
        nlohmann::json j;
        j["kind"] = "mlp";
        j["input_dim"] = 3;
        j["layer_dims"] = {3, 4, 1};
        j["weights"] = {std::vector<double>{0.5, -1, 2, 0.1, 1, 1, -2, 0.3, 0.7, -0.4, 0.2, 0.9},
                        std::vector<double>{1.0, -1.0, 0.5, 2.0}};
        j["biases"] = {std::vector<double>{0.1, -0.2, 0.0, 0.3}, std::vector<double>{-0.1}};
        models.push_back(model_from_json(j));
    }
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> x{rng.uniform(-100.0, 100.0), rng.uniform(-100.0, 100.0),
                              rng.uniform(-100.0, 100.0)};
        for (const auto& m : models) {
            const double p = m->predict_proba(x);
            REQUIRE(p >= 0.0);
            REQUIRE(p <= 1.0);
        }
    }
}

TEST_CASE("every returned dbp flips the label") {
    Rng rng(113);
    GrowingSpheresConfig cfg;
    cfg.n_samples = 2000;
    int done = 0;
    while (done < 1000) {
        const std::size_t d = 2 + rng.bounded(2);
        std::vector<double> w(d);
        for (auto& v : w) v = rng.normal();
        if (std::sqrt(stats::dot(w, w)) < 0.1) continue;
        const HyperplaneModel model(w, rng.uniform(-1.0, 1.0));
        std::vector<double> x(d);
        for (auto& v : x) v = rng.normal();
        const auto dbp = nearest_dbp(model, x, cfg, rng.next_u64());
        REQUIRE(model.decision_label(dbp.point) != model.decision_label(x));
        REQUIRE(dbp.distance == Approx(stats::l2_distance(dbp.point, x)));
        ++done;
    }
}

TEST_CASE("mvg covariance entries stay above the floor") {
    Rng rng(127);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t d = 1 + rng.bounded(12);
        std::vector<double> w(d);
        for (auto& v : w) v = rng.uniform01() < 0.2 ? 0.0 : rng.normal();
        const double l = std::exp(rng.uniform(-3.0, 2.0));
        const double k = std::exp(rng.uniform(-2.0, 4.0));
        const auto cov = mvg_cov_diagonal(w, l, k);
        for (double v : cov) REQUIRE(v >= kMvgVarianceFloor);
    }
}

namespace {

double mean_pairwise_tau_distance(const RankMatrix& rm) {
    double tau = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a1 = 0; a1 < rm.num_runs; ++a1)
        for (std::size_t a2 = a1 + 1; a2 < rm.num_runs; ++a2) {
            std::size_t discord = 0;
            for (std::size_t j1 = 0; j1 < rm.dims; ++j1)
                for (std::size_t j2 = j1 + 1; j2 < rm.dims; ++j2) {
                    const bool o1 = rm.at(a1, j1) < rm.at(a1, j2);
                    const bool o2 = rm.at(a2, j1) < rm.at(a2, j2);
                    if (o1 != o2) ++discord;
                }
            tau += static_cast<double>(discord);
            ++pairs;
        }
    return tau / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("more rank disorder never lowers kendall uncertainty") {
    // nested shuffling family: level t applies t cumulative random
    // transpositions per run on top of a shared base ranking. Individual
    // (tau, uncertainty) pairs can wiggle at nearby disorder levels because
    // tau distance and rank-sum concordance weigh discordance differently,
    // so the check compares per-level means and the clearly separated pairs.
    Rng rng(131);
    const int levels = 6, trials = 150;
    const std::size_t d = 6, m = 8;
    std::vector<double> mean_tau(levels, 0.0), mean_unc(levels, 0.0);
    int pointwise = 0;

    for (int trial = 0; trial < trials; ++trial) {
        std::vector<std::vector<int>> order(m);  // permutation of features per run
        for (std::size_t i = 0; i < m; ++i) {
            order[i].resize(d);
            for (std::size_t j = 0; j < d; ++j) order[i][j] = static_cast<int>(j);
        }
        std::vector<double> taus(levels), uncs(levels);
        for (int lv = 0; lv < levels; ++lv) {
            if (lv > 0) {
                for (std::size_t i = 0; i < m; ++i) {
                    const auto a = rng.bounded(d), b = rng.bounded(d);
                    std::swap(order[i][a], order[i][b]);
                }
            }
            RankMatrix rm;
            rm.num_runs = m;
            rm.dims = d;
            rm.ranks.resize(m * d);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t pos = 0; pos < d; ++pos)
                    rm.ranks[i * d + order[i][pos]] = static_cast<int>(pos) + 1;
            taus[lv] = mean_pairwise_tau_distance(rm);
            uncs[lv] = kendall_w_uncertainty(rm);
            mean_tau[lv] += taus[lv];
            mean_unc[lv] += uncs[lv];
        }
        // pointwise: clearly separated disorder gaps
        for (int a = 0; a < levels; ++a)
            for (int b = a + 1; b < levels; ++b)
                if (taus[b] > taus[a] + 0.15 * (d * (d - 1) / 2.0)) {
                    REQUIRE(uncs[b] >= uncs[a] - 1e-9);
                    ++pointwise;
                }
    }
    REQUIRE(pointwise >= 1000);
    for (int lv = 0; lv + 1 < levels; ++lv) {
        REQUIRE(mean_tau[lv + 1] / trials > mean_tau[lv] / trials);
        REQUIRE(mean_unc[lv + 1] / trials >= mean_unc[lv] / trials - 0.005);
    }
}
