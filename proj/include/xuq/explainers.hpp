// Additive feature attributions for a blackbox classifier: LIME (weighted
// ridge surrogate on Gaussian perturbations), KernelSHAP (Shapley-kernel
// weighted regression over masked coalitions), and BayesLIME (conjugate
// Bayesian surrogate with credible intervals).
#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xuq/common.hpp"
#include "xuq/linalg.hpp"
#include "xuq/models.hpp"
#include "xuq/rng.hpp"

namespace xuq {

enum class ExplainerKind { lime, kernelshap, bayeslime, mvg_lime, mvg_kernelshap, random_baseline };

inline const char* to_string(ExplainerKind k) {
    switch (k) {
        case ExplainerKind::lime: return "lime";
        case ExplainerKind::kernelshap: return "kernelshap";
        case ExplainerKind::bayeslime: return "bayeslime";
        case ExplainerKind::mvg_lime: return "mvg-lime";
        case ExplainerKind::mvg_kernelshap: return "mvg-kernelshap";
        case ExplainerKind::random_baseline: return "random";
    }
    return "?";
}

inline ExplainerKind explainer_from_string(const std::string& s) {
    if (s == "lime") return ExplainerKind::lime;
    if (s == "kernelshap") return ExplainerKind::kernelshap;
    if (s == "bayeslime") return ExplainerKind::bayeslime;
    if (s == "mvg-lime") return ExplainerKind::mvg_lime;
    if (s == "mvg-kernelshap") return ExplainerKind::mvg_kernelshap;
    if (s == "random") return ExplainerKind::random_baseline;
    throw config_error("unknown explainer: " + s);
}

struct PerturbationConfig {
    int num_samples = 5000;
    double kernel_width = 0.0;  // 0 resolves to sqrt(D) * 0.75
    std::optional<std::vector<double>> cov_diagonal;  // variances; absent = isotropic unit
    double ridge_lambda = 1e-3;

    double resolved_kernel_width(std::size_t dim) const {
        return kernel_width > 0.0 ? kernel_width
                                  : std::sqrt(static_cast<double>(dim)) * 0.75;
    }

    void validate(std::size_t dim) const {
        if (num_samples < 1) throw config_error("PerturbationConfig: num_samples must be >= 1");
        if (kernel_width < 0.0) throw config_error("PerturbationConfig: kernel_width must be > 0");
        if (ridge_lambda < 0.0) throw config_error("PerturbationConfig: ridge_lambda must be >= 0");
        if (cov_diagonal) {
            if (cov_diagonal->size() != dim)
                throw config_error("PerturbationConfig: cov_diagonal length must equal dims");
            for (double v : *cov_diagonal)
                if (!(v > 0.0)) throw config_error("PerturbationConfig: cov_diagonal entries must be > 0");
        }
    }
};

namespace attribution_flag {
inline constexpr unsigned kRidgeFloored = 1u << 0;
inline constexpr unsigned kDegenerateSampling = 1u << 1;
}  // namespace attribution_flag

struct Attribution {
    std::vector<double> weights;
    double intercept = 0.0;
    ExplainerKind explainer = ExplainerKind::lime;
    std::uint64_t seed = 0;
    int num_samples = 0;
    unsigned flags = 0;
};

inline nlohmann::ordered_json to_json(const Attribution& a,
                                      const std::vector<std::string>& feature_names = {}) {
    nlohmann::ordered_json j;
    j["explainer"] = to_string(a.explainer);
    j["seed"] = a.seed;
    j["num_samples"] = a.num_samples;
    j["intercept"] = a.intercept;
    j["weights"] = a.weights;
    if (!feature_names.empty()) j["feature_names"] = feature_names;
    return j;
}

struct CredibleAttribution {
    std::vector<double> mean_weights;
    std::vector<double> interval_low;
    std::vector<double> interval_high;
    double confidence = 0.95;
    double intercept = 0.0;
    std::uint64_t seed = 0;
    int num_samples = 0;
    unsigned flags = 0;
};

inline nlohmann::ordered_json to_json(const CredibleAttribution& a,
                                      const std::vector<std::string>& feature_names = {}) {
    nlohmann::ordered_json j;
    j["explainer"] = "bayeslime";
    j["seed"] = a.seed;
    j["num_samples"] = a.num_samples;
    j["confidence"] = a.confidence;
    j["intercept"] = a.intercept;
    j["mean_weights"] = a.mean_weights;
    j["interval_low"] = a.interval_low;
    j["interval_high"] = a.interval_high;
    if (!feature_names.empty()) j["feature_names"] = feature_names;
    return j;
}

// Row i = x + eps_i with eps_i ~ N(0, diag). Deterministic for a given seed.
inline Matrix sample_perturbations(std::span<const double> x, const PerturbationConfig& cfg,
                                   std::uint64_t seed) {
    cfg.validate(x.size());
    const std::size_t n = static_cast<std::size_t>(cfg.num_samples), d = x.size();
    Matrix z(n, d);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = z.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double sd = cfg.cov_diagonal ? std::sqrt((*cfg.cov_diagonal)[j]) : 1.0;
            row[j] = x[j] + sd * rng.normal();
        }
    }
    return z;
}

namespace detail {

struct WeightedFit {
    std::vector<double> weights;
    double intercept = 0.0;
    bool ridge_floored = false;
};

// pi-weighted ridge regression with an unpenalized intercept, via centered
// normal equations. lambda = 0 plus a singular system falls back to a 1e-8
// diagonal floor.
inline WeightedFit weighted_ridge(const Matrix& z, std::span<const double> y,
                                  std::span<const double> pi, double lambda) {
    const std::size_t n = z.rows(), d = z.cols();
    double sw = 0.0;
    for (double p : pi) sw += p;

    std::vector<double> zm(d, 0.0);
    double ym = 0.0;
    if (sw > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = z.row(i);
            for (std::size_t j = 0; j < d; ++j) zm[j] += pi[i] * row[j];
            ym += pi[i] * y[i];
        }
        for (auto& v : zm) v /= sw;
        ym /= sw;
    }

    Matrix a(d, d);
    std::vector<double> b(d, 0.0);
    std::vector<double> zc(d);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = pi[i];
        if (p <= 0.0) continue;
        const auto row = z.row(i);
        for (std::size_t j = 0; j < d; ++j) zc[j] = row[j] - zm[j];
        const double yc = y[i] - ym;
        for (std::size_t j = 0; j < d; ++j) {
            const double pj = p * zc[j];
            for (std::size_t k = 0; k <= j; ++k) a(j, k) += pj * zc[k];
            b[j] += pj * yc;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = j + 1; k < d; ++k) a(j, k) = a(k, j);
        a(j, j) += lambda;
    }
    auto solved = linalg::solve_spd(std::move(a), b);
    WeightedFit fit;
    fit.weights = std::move(solved.x);
    fit.intercept = ym - stats::dot(fit.weights, zm);
    fit.ridge_floored = solved.ridge_floored;
    return fit;
}

inline std::vector<double> kernel_weights(const Matrix& z, std::span<const double> x,
                                          double sigma) {
    std::vector<double> pi(z.rows());
    const double inv = 1.0 / (sigma * sigma);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const auto row = z.row(i);
        double d2 = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double d = row[j] - x[j];
            d2 += d * d;
        }
        pi[i] = std::exp(-d2 * inv);
    }
    return pi;
}

}  // namespace detail

// LIME: perturb, query the model's probability, fit an exponential-kernel
// weighted ridge surrogate. The attribution is the surrogate's coefficient
// vector.
inline Attribution lime_explain(const BlackboxModel& model, std::span<const double> x,
                                const PerturbationConfig& cfg, std::uint64_t seed,
                                ExplainerKind reported_kind = ExplainerKind::lime) {
    if (x.size() != model.input_dim()) throw config_error("lime_explain: dimension mismatch");
    cfg.validate(x.size());
    const Matrix z = sample_perturbations(x, cfg, seed);
    std::vector<double> y(z.rows());
    model.predict_proba_batch(z, y);
    const auto pi = detail::kernel_weights(z, x, cfg.resolved_kernel_width(x.size()));
    auto fit = detail::weighted_ridge(z, y, pi, cfg.ridge_lambda);

    Attribution out;
    out.weights = std::move(fit.weights);
    out.intercept = fit.intercept;
    out.explainer = reported_kind;
    out.seed = seed;
    out.num_samples = cfg.num_samples;
    if (fit.ridge_floored) out.flags |= attribution_flag::kRidgeFloored;
    if (static_cast<std::size_t>(cfg.num_samples) < x.size() + 1)
        out.flags |= attribution_flag::kDegenerateSampling;
    return out;
}

namespace detail {

inline double shapley_kernel_weight(std::size_t d, std::size_t s) {
    // (D-1) / (C(D,s) * s * (D-s))
    double comb = 1.0;
    for (std::size_t i = 1; i <= s; ++i)
        comb *= static_cast<double>(d - i + 1) / static_cast<double>(i);
    return static_cast<double>(d - 1) /
           (comb * static_cast<double>(s) * static_cast<double>(d - s));
}

struct Coalition {
    std::uint64_t mask = 0;
    double weight = 0.0;
};

// Coalition plan: full enumeration when the budget covers all 2^D - 2
// non-trivial subsets; otherwise paired size-by-size enumeration from the
// extremes inward, with the leftover budget sampled proportionally to the
// remaining Shapley kernel mass.
inline std::vector<Coalition> plan_coalitions(std::size_t d, int num_coalitions, Rng& rng) {
    std::vector<Coalition> out;
    const double full_count = std::pow(2.0, static_cast<double>(d)) - 2.0;
    if (d <= 62 && static_cast<double>(num_coalitions) >= full_count) {
        const std::uint64_t lim = (1ULL << d) - 1;
        out.reserve(static_cast<std::size_t>(full_count));
        for (std::uint64_t m = 1; m < lim; ++m)
            out.push_back({m, shapley_kernel_weight(d, static_cast<std::size_t>(std::popcount(m)))});
        return out;
    }

    std::vector<double> subsets_of_size(d, 0.0);  // index s-1: C(D,s)
    {
        double c = static_cast<double>(d);
        for (std::size_t s = 1; s < d; ++s) {
            subsets_of_size[s - 1] = c;
            c *= static_cast<double>(d - s) / static_cast<double>(s + 1);
        }
    }
    std::vector<bool> size_done(d, false);  // index s-1
    long long budget = num_coalitions;

    auto enumerate_size = [&](std::size_t s) {
        const double w = shapley_kernel_weight(d, s);
        std::vector<std::size_t> members(s);
        for (std::size_t i = 0; i < s; ++i) members[i] = i;
        for (;;) {
            std::uint64_t mask = 0;
            for (std::size_t m : members) mask |= 1ULL << m;
            out.push_back({mask, w});
            // next combination
            std::size_t i = s;
            while (i > 0) {
                --i;
                if (members[i] != i + d - s) {
                    ++members[i];
                    for (std::size_t j = i + 1; j < s; ++j) members[j] = members[j - 1] + 1;
                    break;
                }
                if (i == 0) return;
            }
        }
    };

    for (std::size_t s = 1; s <= (d - 1) / 2 + ((d - 1) % 2); ++s) {
        const std::size_t s2 = d - s;
        double need = subsets_of_size[s - 1];
        if (s2 != s) need += subsets_of_size[s2 - 1];
        if (static_cast<double>(budget) < need) break;
        enumerate_size(s);
        size_done[s - 1] = true;
        budget -= static_cast<long long>(subsets_of_size[s - 1]);
        if (s2 != s) {
            enumerate_size(s2);
            size_done[s2 - 1] = true;
            budget -= static_cast<long long>(subsets_of_size[s2 - 1]);
        }
    }
    if (budget <= 0) return out;

    // leftover kernel mass over the un-enumerated sizes
    std::vector<double> mass(d, 0.0);
    double total_mass = 0.0;
    for (std::size_t s = 1; s < d; ++s) {
        if (size_done[s - 1]) continue;
        mass[s - 1] = shapley_kernel_weight(d, s) * subsets_of_size[s - 1];
        total_mass += mass[s - 1];
    }
    if (total_mass <= 0.0) return out;

    const double per_draw = total_mass / static_cast<double>(budget);
    std::vector<std::size_t> scratch;
    for (long long t = 0; t < budget; ++t) {
        double u = rng.uniform01() * total_mass;
        std::size_t s = 1;
        for (; s < d; ++s) {
            if (size_done[s - 1]) continue;
            if (u < mass[s - 1]) break;
            u -= mass[s - 1];
        }
        if (s >= d) s = d - 1;
        scratch = rng.sample_without_replacement(d, s);
        std::uint64_t mask = 0;
        for (std::size_t m : scratch) mask |= 1ULL << m;
        out.push_back({mask, per_draw});
    }
    return out;
}

// Shapley-kernel weighted regression with the efficiency constraint
// eliminated analytically. `value_of` maps a coalition mask to the model
// value with absent features masked.
template <typename ValueFn>
Attribution kernelshap_core(std::size_t d, double v_empty, double v_full,
                            const std::vector<Coalition>& coalitions, ValueFn&& value_of) {
    const std::size_t p = d - 1;  // last weight comes from the constraint
    Matrix a(p, p);
    std::vector<double> rhs(p, 0.0);
    const double span_v = v_full - v_empty;
    std::vector<double> row(p);
    for (const auto& c : coalitions) {
        const double v = value_of(c.mask);
        const bool has_last = (c.mask >> (d - 1)) & 1;
        for (std::size_t j = 0; j < p; ++j)
            row[j] = static_cast<double>((c.mask >> j) & 1) - static_cast<double>(has_last);
        const double target = v - v_empty - (has_last ? span_v : 0.0);
        for (std::size_t j = 0; j < p; ++j) {
            const double wj = c.weight * row[j];
            for (std::size_t k = 0; k <= j; ++k) a(j, k) += wj * row[k];
            rhs[j] += wj * target;
        }
    }
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t k = j + 1; k < p; ++k) a(j, k) = a(k, j);

    auto solved = linalg::solve_spd(std::move(a), rhs);
    Attribution out;
    out.weights.assign(d, 0.0);
    double sum = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        out.weights[j] = solved.x[j];
        sum += solved.x[j];
    }
    out.weights[d - 1] = span_v - sum;
    out.intercept = v_empty;
    if (solved.ridge_floored) out.flags |= attribution_flag::kRidgeFloored;
    return out;
}

inline std::vector<double> column_means(const Matrix& m) {
    std::vector<double> mu(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto row = m.row(i);
        for (std::size_t j = 0; j < mu.size(); ++j) mu[j] += row[j];
    }
    for (auto& v : mu) v /= static_cast<double>(m.rows());
    return mu;
}

}  // namespace detail

// KernelSHAP with background-mean imputation of masked features. Under full
// coalition enumeration the weights are the exact Shapley values of the
// mean-masked value function, and intercept + sum(weights) = f(x) by
// construction.
inline Attribution kernelshap_explain(const BlackboxModel& model, std::span<const double> x,
                                      const Matrix& background, int num_coalitions,
                                      std::uint64_t seed) {
    const std::size_t d = model.input_dim();
    if (x.size() != d) throw config_error("kernelshap_explain: dimension mismatch");
    if (d < 2) throw config_error("kernelshap_explain: needs at least 2 features");
    if (background.rows() == 0 || background.cols() != d)
        throw config_error("kernelshap_explain: background is empty or mismatched");
    if (num_coalitions < static_cast<int>(d) + 2)
        throw config_error("kernelshap_explain: insufficient coalitions (need at least D+2)");

    const auto mu = detail::column_means(background);
    Rng rng(seed);
    const auto coalitions = detail::plan_coalitions(d, num_coalitions, rng);

    std::vector<double> buf(d);
    auto value_of = [&](std::uint64_t mask) {
        for (std::size_t j = 0; j < d; ++j) buf[j] = ((mask >> j) & 1) ? x[j] : mu[j];
        return model.predict_proba(buf);
    };
    const double v_empty = value_of(0);
    const double v_full = model.predict_proba(x);

    Attribution out = detail::kernelshap_core(d, v_empty, v_full, coalitions, value_of);
    out.explainer = ExplainerKind::kernelshap;
    out.seed = seed;
    out.num_samples = num_coalitions;
    return out;
}

// BayesLIME: normal-inverse-gamma conjugate regression on the same weighted
// perturbation data as LIME; per-feature equal-tailed credible intervals from
// the posterior marginal t distributions.
inline CredibleAttribution bayeslime_explain(const BlackboxModel& model,
                                             std::span<const double> x,
                                             const PerturbationConfig& cfg, double gamma,
                                             std::uint64_t seed) {
    if (x.size() != model.input_dim()) throw config_error("bayeslime_explain: dimension mismatch");
    if (!(gamma > 0.0 && gamma < 1.0)) throw config_error("bayeslime_explain: gamma outside (0,1)");
    cfg.validate(x.size());

    const std::size_t d = x.size();
    const Matrix z = sample_perturbations(x, cfg, seed);
    const std::size_t n = z.rows();
    std::vector<double> y(n);
    model.predict_proba_batch(z, y);
    const auto pi = detail::kernel_weights(z, x, cfg.resolved_kernel_width(d));

    // design with intercept column; prior precision lambda0 * I over all
    // coefficients, a0 = b0 = 1e-3
    const double lambda0 = std::max(cfg.ridge_lambda, 1e-8);
    const double a0 = 1e-3, b0 = 1e-3;
    const std::size_t p = d + 1;
    Matrix lam(p, p);
    std::vector<double> rhs(p, 0.0);
    double ypy = 0.0;
    std::vector<double> row(p);
    for (std::size_t i = 0; i < n; ++i) {
        const auto zi = z.row(i);
        for (std::size_t j = 0; j < d; ++j) row[j] = zi[j];
        row[d] = 1.0;
        for (std::size_t j = 0; j < p; ++j) {
            const double pj = pi[i] * row[j];
            for (std::size_t k = 0; k <= j; ++k) lam(j, k) += pj * row[k];
            rhs[j] += pj * y[i];
        }
        ypy += pi[i] * y[i] * y[i];
    }
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t k = j + 1; k < p; ++k) lam(j, k) = lam(k, j);
        lam(j, j) += lambda0;
    }

    Matrix chol = lam;
    unsigned flags = 0;
    if (!linalg::cholesky(chol)) {
        for (std::size_t j = 0; j < p; ++j) lam(j, j) += 1e-8;
        chol = lam;
        if (!linalg::cholesky(chol)) throw domain_error("bayeslime_explain: posterior not SPD");
        flags |= attribution_flag::kRidgeFloored;
    }
    const auto mu_n = linalg::cholesky_solve(chol, rhs);
    const auto inv_diag = linalg::spd_inverse_diagonal(chol);

    double quad = 0.0;  // mu' Lambda_n mu  ==  mu' rhs (since Lambda_n mu = rhs)
    for (std::size_t j = 0; j < p; ++j) quad += mu_n[j] * rhs[j];
    const double a_n = a0 + 0.5 * static_cast<double>(n);
    const double b_n = std::max(b0 + 0.5 * (ypy - quad), 1e-300);
    const double nu = 2.0 * a_n;
    const double tq = stats::student_t_quantile(0.5 * (1.0 + gamma), nu);

    CredibleAttribution out;
    out.mean_weights.assign(mu_n.begin(), mu_n.begin() + d);
    out.interval_low.resize(d);
    out.interval_high.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        const double scale = std::sqrt(std::max(b_n / a_n * inv_diag[j], 0.0));
        out.interval_low[j] = out.mean_weights[j] - tq * scale;
        out.interval_high[j] = out.mean_weights[j] + tq * scale;
    }
    out.confidence = gamma;
    out.intercept = mu_n[d];
    out.seed = seed;
    out.num_samples = cfg.num_samples;
    if (static_cast<std::size_t>(cfg.num_samples) < p) flags |= attribution_flag::kDegenerateSampling;
    out.flags = flags;
    return out;
}

// The BayesLIME posterior mean as a plain attribution (what ensembles of the
// bayeslime explainer aggregate).
inline Attribution bayeslime_mean_attribution(const BlackboxModel& model,
                                              std::span<const double> x,
                                              const PerturbationConfig& cfg, double gamma,
                                              std::uint64_t seed) {
    auto cred = bayeslime_explain(model, x, cfg, gamma, seed);
    Attribution out;
    out.weights = std::move(cred.mean_weights);
    out.intercept = cred.intercept;
    out.explainer = ExplainerKind::bayeslime;
    out.seed = seed;
    out.num_samples = cred.num_samples;
    out.flags = cred.flags;
    return out;
}

}  // namespace xuq
