// KernelSHAP against a brute-force exact Shapley oracle.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <bit>
#include <functional>
#include <vector>

#include "xuq/explainers.hpp"
#include "xuq/mvg.hpp"
#include "xuq/models.hpp"

using namespace xuq;
using Catch::Approx;

namespace {

class LinearScoreModel final : public BlackboxModel {
public:
    LinearScoreModel(std::vector<double> w, double b) : w_(std::move(w)), b_(b) {}
    std::size_t input_dim() const override { return w_.size(); }
    ModelKind kind() const override { return ModelKind::linear_margin; }
    nlohmann::ordered_json to_json() const override { return json_header(); }

protected:
    double proba_unchecked(std::span<const double> x) const override {
        return stats::dot(w_, x) + b_;
    }

private:
    std::vector<double> w_;
    double b_;
};

// exact Shapley values of v(S) = f(x with features outside S set to mu),
// by direct enumeration of all subsets
std::vector<double> exact_shapley(const BlackboxModel& f, std::span<const double> x,
                                  std::span<const double> mu) {
    const std::size_t d = x.size();
    std::vector<double> fact(d + 1, 1.0);
    for (std::size_t i = 1; i <= d; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);

    std::vector<double> value(1ULL << d);
    std::vector<double> buf(d);
    for (std::uint64_t mask = 0; mask < (1ULL << d); ++mask) {
        for (std::size_t j = 0; j < d; ++j) buf[j] = ((mask >> j) & 1) ? x[j] : mu[j];
        value[mask] = f.predict_proba(buf);
    }

    std::vector<double> phi(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::uint64_t mask = 0; mask < (1ULL << d); ++mask) {
            if ((mask >> j) & 1) continue;
            const auto s = static_cast<std::size_t>(std::popcount(mask));
            const double coeff = fact[s] * fact[d - s - 1] / fact[d];
            phi[j] += coeff * (value[mask | (1ULL << j)] - value[mask]);
        }
    }
    return phi;
}

Matrix gaussian_background(std::size_t rows, std::size_t d, std::uint64_t seed) {
    Matrix bg(rows, d);
    Rng rng(seed);
    for (auto& v : bg.data()) v = rng.normal();
    return bg;
}

}  // namespace

TEST_CASE("full enumeration reproduces exact Shapley values on a linear model") {
    const std::size_t d = 4;
    const LinearScoreModel model({0.8, -1.2, 0.5, 2.0}, 0.3);
    std::vector<double> x{1.0, -0.5, 0.25, 0.75};
    const auto bg = gaussian_background(64, d, 7);

    const auto attr = kernelshap_explain(model, x, bg, 1 << d, 11);
    const auto mu = detail::column_means(bg);
    const auto oracle = exact_shapley(model, x, mu);
    const std::vector<double> b{0.8, -1.2, 0.5, 2.0};
    for (std::size_t j = 0; j < d; ++j) {
        REQUIRE(attr.weights[j] == Approx(oracle[j]).margin(1e-6));
        // linear closed form: b_j * (x_j - mu_j)
        REQUIRE(attr.weights[j] == Approx(b[j] * (x[j] - mu[j])).margin(1e-6));
    }
}

TEST_CASE("full enumeration matches the oracle on a nonlinear model") {
    // sigmoid model makes v(S) genuinely non-additive
    for (std::size_t d : {4, 6, 8}) {
        std::vector<double> w(d);
        Rng rng(d);
        for (auto& v : w) v = rng.normal();
        auto model = std::make_shared<LinearModel>(ModelKind::logistic, w, 0.2, false);
        std::vector<double> x(d);
        for (auto& v : x) v = rng.normal();
        const auto bg = gaussian_background(32, d, 100 + d);

        const auto attr = kernelshap_explain(*model, x, bg, 1 << d, 13);
        const auto oracle = exact_shapley(*model, x, detail::column_means(bg));
        for (std::size_t j = 0; j < d; ++j)
            REQUIRE(attr.weights[j] == Approx(oracle[j]).margin(1e-6));
    }
}

TEST_CASE("efficiency holds exactly under full enumeration") {
    const std::size_t d = 6;
    std::vector<double> w(d, 0.0);
    Rng rng(3);
    for (auto& v : w) v = rng.normal();
    auto model = std::make_shared<LinearModel>(ModelKind::logistic, w, -0.1, false);
    std::vector<double> x(d);
    for (auto& v : x) v = rng.normal();
    const auto bg = gaussian_background(16, d, 5);

    const auto attr = kernelshap_explain(*model, x, bg, 1 << d, 17);
    double total = attr.intercept;
    for (double v : attr.weights) total += v;
    REQUIRE(std::fabs(total - model->predict_proba(x)) <= 1e-6);
}

TEST_CASE("symmetric features receive equal weights") {
    // features 0 and 1 enter identically; x holds them at the same value
    const std::size_t d = 4;
    auto model = std::make_shared<LinearModel>(ModelKind::logistic,
                                               std::vector<double>{1.0, 1.0, 3.0, -2.0}, 0.0,
                                               false);
    std::vector<double> x{0.6, 0.6, -0.3, 0.9};
    Matrix bg(1, d);  // single background row keeps the masked values symmetric too
    bg(0, 0) = -0.2;
    bg(0, 1) = -0.2;
    bg(0, 2) = 0.5;
    bg(0, 3) = 0.1;
    const auto attr = kernelshap_explain(*model, x, bg, 1 << d, 19);
    REQUIRE(attr.weights[0] == Approx(attr.weights[1]).margin(1e-6));
}

TEST_CASE("a budget covering all coalitions routes to full enumeration") {
    const std::size_t d = 8;
    std::vector<double> w(d);
    Rng rng(21);
    for (auto& v : w) v = rng.normal();
    const LinearScoreModel model(w, 0.0);
    std::vector<double> x(d);
    for (auto& v : x) v = rng.normal();
    const auto bg = gaussian_background(8, d, 23);

    const auto a = kernelshap_explain(model, x, bg, 1 << d, 29);       // 256
    const auto b = kernelshap_explain(model, x, bg, (1 << d) - 2, 31); // exactly 2^D - 2
    for (std::size_t j = 0; j < d; ++j)
        REQUIRE(a.weights[j] == Approx(b.weights[j]).margin(1e-9));
}

TEST_CASE("sampled coalitions approximate the exact values") {
    const std::size_t d = 8;
    std::vector<double> w(d);
    Rng rng(33);
    for (auto& v : w) v = rng.normal();
    auto model = std::make_shared<LinearModel>(ModelKind::logistic, w, 0.0, false);
    std::vector<double> x(d);
    for (auto& v : x) v = rng.normal();
    const auto bg = gaussian_background(16, d, 35);

    const auto exact = kernelshap_explain(*model, x, bg, 1 << d, 37);
    const auto sampled = kernelshap_explain(*model, x, bg, 120, 37);
    for (std::size_t j = 0; j < d; ++j)
        REQUIRE(sampled.weights[j] == Approx(exact.weights[j]).margin(0.05));

    // efficiency is preserved by construction even when sampling
    double total = sampled.intercept;
    for (double v : sampled.weights) total += v;
    REQUIRE(std::fabs(total - model->predict_proba(x)) <= 1e-9);
}

TEST_CASE("insufficient coalition budget is rejected") {
    const std::size_t d = 5;
    const LinearScoreModel model(std::vector<double>(d, 1.0), 0.0);
    std::vector<double> x(d, 0.5);
    const auto bg = gaussian_background(4, d, 1);
    REQUIRE_THROWS_AS(kernelshap_explain(model, x, bg, static_cast<int>(d) + 1, 1),
                      config_error);
    REQUIRE_NOTHROW(kernelshap_explain(model, x, bg, static_cast<int>(d) + 2, 1));
}

TEST_CASE("mvg masking preserves linear-model attributions within 5%") {
    // exactly linear score: masking draws shift only the variance of v(S),
    // not its mean, so full enumeration with many draws lands near plain
    // kernelshap
    const std::size_t d = 4;
    const LinearScoreModel model({1.0, -0.7, 0.4, 0.9}, 0.0);
    std::vector<double> x{0.9, -0.6, 0.5, 0.4};
    const auto bg = gaussian_background(64, d, 41);

    GrowingSpheresConfig gs;
    gs.n_samples = 20000;
    const auto plain = kernelshap_explain(model, x, bg, 1 << d, 43);
    const auto mvg = mvg_kernelshap_explain(model, x, 2.0, bg, 1 << d, 43, gs, 4096);
    for (std::size_t j = 0; j < d; ++j) {
        const double scale = std::max(std::fabs(plain.weights[j]), 0.05);
        REQUIRE(std::fabs(mvg.weights[j] - plain.weights[j]) / scale < 0.05);
    }
}

TEST_CASE("mvg masking with unit covariance matches plain kernelshap distributionally") {
    // linear target + standard-normal background: mean imputation and
    // unit-variance gaussian draws agree in expectation, so weight samples
    // over many seeds share their means (Welch t-test per feature)
    const std::size_t d = 3;
    const LinearScoreModel model({0.8, -0.5, 0.3}, 0.1);
    std::vector<double> x{0.4, 0.7, -0.2};
    const auto bg = gaussian_background(512, d, 47);

    GrowingSpheresConfig gs;
    gs.n_samples = 20000;
    const int seeds = 50;
    std::vector<std::vector<double>> plain_w(d), mvg_w(d);
    for (int s = 0; s < seeds; ++s) {
        // sampled (not enumerated) coalition budget keeps per-seed variation alive
        const auto p = kernelshap_explain(model, x, bg, d + 2, 1000 + s);
        const auto m = mvg_kernelshap_explain(model, x, 1.0, bg, d + 2, 1000 + s, gs, 16);
        for (std::size_t j = 0; j < d; ++j) {
            plain_w[j].push_back(p.weights[j]);
            mvg_w[j].push_back(m.weights[j]);
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        const double ma = stats::mean(plain_w[j]), mb = stats::mean(mvg_w[j]);
        const double va = std::pow(stats::sample_stdev(plain_w[j]), 2);
        const double vb = std::pow(stats::sample_stdev(mvg_w[j]), 2);
        const double se = std::sqrt(va / seeds + vb / seeds);
        if (se == 0.0) {
            REQUIRE(ma == Approx(mb).margin(1e-12));
            continue;
        }
        const double t = (ma - mb) / se;
        const double nu = std::pow(va / seeds + vb / seeds, 2) /
                          (std::pow(va / seeds, 2) / (seeds - 1) +
                           std::pow(vb / seeds, 2) / (seeds - 1));
        const double p_two_sided = 2.0 * (1.0 - stats::student_t_cdf(std::fabs(t), nu));
        REQUIRE(p_two_sided > 0.01);
    }
}
