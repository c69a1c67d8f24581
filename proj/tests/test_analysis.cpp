#include <catch2/catch_amalgamated.hpp>

#include "xuq/analysis.hpp"

using namespace xuq;
using Catch::Approx;

namespace {

class TwoSheetModel final : public BlackboxModel {
public:
    TwoSheetModel(std::size_t dim, double pos, double neg) : dim_(dim), pos_(pos), neg_(neg) {}
    std::size_t input_dim() const override { return dim_; }
    ModelKind kind() const override { return ModelKind::mlp; }
    nlohmann::ordered_json to_json() const override { return json_header(); }

protected:
    double proba_unchecked(std::span<const double> x) const override {
        return (x[0] > pos_ || x[0] < -neg_) ? 1.0 : 0.0;
    }

private:
    std::size_t dim_;
    double pos_, neg_;
};

// flips the classes of an inner model; the boundary is unchanged
class LabelFlipped final : public BlackboxModel {
public:
    explicit LabelFlipped(ModelPtr inner) : inner_(std::move(inner)) {}
    std::size_t input_dim() const override { return inner_->input_dim(); }
    ModelKind kind() const override { return inner_->kind(); }
    nlohmann::ordered_json to_json() const override { return inner_->to_json(); }

protected:
    double proba_unchecked(std::span<const double> x) const override {
        return 1.0 - inner_->predict_proba(x);
    }

private:
    ModelPtr inner_;
};

Dataset tiny_dataset(std::size_t d, std::size_t n, std::uint64_t seed) {
    auto spec = make_synthetic_spec(d, n, seed);
    auto [ds, rec] = standardize(generate_synthetic(spec));
    return std::move(ds);
}

}  // namespace

TEST_CASE("stability threshold arithmetic") {
    GrowingSpheresConfig gs;
    gs.n_samples = 30000;
    std::vector<double> x{0.0, 0.0};

    // sheets at 1.0 and 1.06: ratio just above the default margin
    const TwoSheetModel stable(2, 1.0, 1.06);
    const auto v1 = stability_predict(stable, x, gs, 0.05, 3);
    REQUIRE(v1.l1 == Approx(1.0).epsilon(0.02));
    REQUIRE(v1.l2.has_value());
    REQUIRE(*v1.l2 == Approx(1.06).epsilon(0.02));
    REQUIRE(v1.predicted_stable);

    // sheets at 1.0 and 1.02: inside the margin
    const TwoSheetModel unstable(2, 1.0, 1.02);
    const auto v2 = stability_predict(unstable, x, gs, 0.05, 3);
    REQUIRE_FALSE(v2.predicted_stable);
}

TEST_CASE("a single flat boundary is a stable instance") {
    auto model = std::make_shared<LinearModel>(ModelKind::logistic,
                                               std::vector<double>{1.0, 1.0}, -1.5, false);
    GrowingSpheresConfig gs;
    gs.n_samples = 30000;
    std::vector<double> x{0.0, 0.0};
    const auto v = stability_predict(*model, x, gs, 0.05, 9);
    REQUIRE(v.predicted_stable);
}

TEST_CASE("stability margin is monotone") {
    const TwoSheetModel model(2, 1.0, 1.07);
    GrowingSpheresConfig gs;
    gs.n_samples = 20000;
    std::vector<double> x{0.0, 0.0};
    bool was_stable = true;
    for (double margin : {0.01, 0.05, 0.10, 0.20}) {
        const auto v = stability_predict(model, x, gs, margin, 5);
        if (!was_stable) REQUIRE_FALSE(v.predicted_stable);
        was_stable = v.predicted_stable;
    }
}

TEST_CASE("always-stable predictor: recall one, precision equals the base rate") {
    // logistic model: single hyperplane, so the predictor always says stable
    const auto ds = tiny_dataset(3, 600, 5);
    TrainConfig tc;
    tc.epochs = 150;
    auto model = train(ds, tc, ModelKind::logistic);

    ExplainerSpec spec;
    spec.perturb.num_samples = 300;
    GrowingSpheresConfig gs;
    gs.n_samples = 10000;
    const auto rep = stability_evaluate(*model, ds, 24, spec, 10, 0.5, gs, 0.05, 77, 2);

    double sum = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) sum += rep.cells[a][b];
    REQUIRE(sum == Approx(1.0).margin(1e-9));

    bool all_stable = true;
    for (const auto& v : rep.verdicts) all_stable = all_stable && v.predicted_stable;
    if (all_stable) {
        const double base_rate = rep.cells[1][1] + rep.cells[0][1];
        if (base_rate > 0.0) {
            REQUIRE(rep.recall == Approx(1.0));
            REQUIRE(rep.precision == Approx(base_rate).margin(1e-9));
        }
    }
}

TEST_CASE("model complexity separates one sheet from two") {
    // dataset box pinned to the midline strip so every sampled instance sits
    // nearly equidistant from the two sheets at x0 = +-0.8
    Dataset ds;
    ds.features = Matrix(40, 2);
    Rng rng(7);
    for (std::size_t i = 0; i < 40; ++i) {
        ds.features(i, 0) = rng.uniform(-0.01, 0.01);
        ds.features(i, 1) = rng.uniform(-3.0, 3.0);
        ds.labels.push_back(static_cast<int>(i % 2));
        (i < 30 ? ds.train_idx : ds.test_idx).push_back(i);
    }
    ds.feature_names = {"x0", "x1"};

    GrowingSpheresConfig gs;
    gs.n_samples = 20000;

    auto linear = std::make_shared<LinearModel>(ModelKind::logistic,
                                                std::vector<double>{1.0, 0.0}, 0.8, false);
    const auto rep1 = model_complexity(*linear, ds, 12, 5.0, gs, 11, 2);
    REQUIRE(rep1.average <= 1.5);

    auto two = std::make_shared<TwoSheetModel>(2, 0.8, 0.8);
    const auto rep2 = model_complexity(*two, ds, 12, 5.0, gs, 11, 2);
    REQUIRE(rep2.average == Approx(2.0).margin(0.35));
    REQUIRE(rep2.average > rep1.average);
}

TEST_CASE("complexity is invariant under class relabeling") {
    const auto ds = tiny_dataset(3, 400, 9);
    GrowingSpheresConfig gs;
    gs.n_samples = 10000;
    auto inner = std::make_shared<LinearModel>(ModelKind::logistic,
                                               std::vector<double>{1.0, 0.3, -0.7}, 0.1, false);
    auto flipped = std::make_shared<LabelFlipped>(inner);
    const auto a = model_complexity(*inner, ds, 10, 5.0, gs, 13, 2);
    const auto b = model_complexity(*flipped, ds, 10, 5.0, gs, 13, 2);
    REQUIRE(a.per_instance_cardinality == b.per_instance_cardinality);
    REQUIRE(a.average == Approx(b.average));
}

TEST_CASE("correlation rejects degenerate model sets") {
    const auto ds = tiny_dataset(3, 400, 15);
    auto m = std::make_shared<LinearModel>(ModelKind::logistic,
                                           std::vector<double>{1.0, 0.0, 0.0}, 0.0, false);
    std::vector<ModelPtr> dup{m, m, m};
    ExplainerSpec spec;
    spec.perturb.num_samples = 200;
    GrowingSpheresConfig gs;
    gs.n_samples = 5000;
    REQUIRE_THROWS_AS(
        complexity_uncertainty_correlation(dup, ds, 6, 4, spec, 5.0, gs, 3, 2),
        domain_error);
}

TEST_CASE("table 1 smoke: random baseline dominates kendall") {
    const auto ds = tiny_dataset(4, 800, 21);
    TrainConfig tc;
    tc.epochs = 200;
    auto model = train(ds, tc, ModelKind::logistic);

    ExplainerSpec lime_spec;
    lime_spec.perturb.num_samples = 500;
    ExplainerSpec random_spec;
    random_spec.kind = ExplainerKind::random_baseline;

    std::vector<BenchmarkCase> cases{{"synthetic", &ds, model}};
    std::vector<std::pair<std::string, ExplainerSpec>> explainers{
        {"lime", lime_spec}, {"random", random_spec}};
    const auto rep = benchmark_table1(cases, explainers, {"kendall_w", "stdev"}, 4, 12, 0.95, 4,
                                      20, 5, 2);
    REQUIRE(rep.case_names.size() == 1);
    REQUIRE(rep.values[0].size() == 2);
    const double lime_kendall = rep.values[0][0][0];
    const double random_kendall = rep.values[0][1][0];
    REQUIRE(random_kendall > lime_kendall);

    // single-cell subset benchmark serializes
    const auto rep2 = benchmark_table1(cases, {{"lime", lime_spec}}, {"kendall_w"}, 2, 10, 0.95,
                                       4, 20, 5, 1);
    REQUIRE(to_json(rep2).dump().size() > 0);
    REQUIRE(to_csv(rep2).find("kendall_w") != std::string::npos);
}

TEST_CASE("table 2 smoke at minimal scale") {
    const auto ds = tiny_dataset(3, 500, 23);
    TrainConfig tc;
    tc.epochs = 150;
    auto model = train(ds, tc, ModelKind::logistic);

    PerturbationConfig pc;
    pc.num_samples = 200;
    GrowingSpheresConfig gs;
    gs.n_samples = 5000;
    Matrix bg(16, 3);
    Rng rng(1);
    for (auto& v : bg.data()) v = rng.normal();

    const auto rep = benchmark_table2(*model, ds, 2.0, 2, 2, pc, 64, bg, gs, {1, 2}, 31, 2);
    REQUIRE(rep.explainer_names.size() == 4);
    REQUIRE(rep.top_stdev[0].size() == 2);
    REQUIRE(to_csv(rep).find("mvg-lime") != std::string::npos);
}

TEST_CASE("benchmarks are deterministic given the seed bundle") {
    const auto ds = tiny_dataset(3, 400, 29);
    TrainConfig tc;
    tc.epochs = 100;
    auto model = train(ds, tc, ModelKind::logistic);
    ExplainerSpec spec;
    spec.perturb.num_samples = 200;
    std::vector<BenchmarkCase> cases{{"d", &ds, model}};
    std::vector<std::pair<std::string, ExplainerSpec>> explainers{{"lime", spec}};
    const auto a =
        benchmark_table1(cases, explainers, {"kendall_w"}, 3, 10, 0.95, 3, 20, 11, 1);
    const auto b =
        benchmark_table1(cases, explainers, {"kendall_w"}, 3, 10, 0.95, 3, 20, 11, 4);
    REQUIRE(to_json(a).dump() == to_json(b).dump());
}
