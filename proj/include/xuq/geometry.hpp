// Decision-boundary search. The layer scheme follows the growing-spheres
// procedure: shrink the sampling ball until no flipped labels remain, then
// expand in spherical shells of width eta until a flipped point appears.
// Raw flipped samples overestimate the boundary distance badly in higher
// dimensions, so every candidate is refined by bisecting along its ray from
// the query point; the refined point stays on the flipped side.
#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "xuq/common.hpp"
#include "xuq/explainers.hpp"
#include "xuq/models.hpp"
#include "xuq/rng.hpp"

namespace xuq {

struct boundary_not_found : domain_error {
    using domain_error::domain_error;
};

struct GrowingSpheresConfig {
    double eta = 1.0;
    int n_samples = 100000;
    int max_layers = 200;
    double dedupe_radius_fraction = 0.5;
    int max_refine_per_layer = 512;  // bisection budget per layer
    int bisect_iters = 60;

    void validate() const {
        if (eta <= 0.0) throw config_error("GrowingSpheresConfig: eta must be > 0");
        if (n_samples < 1) throw config_error("GrowingSpheresConfig: n_samples must be >= 1");
        if (max_layers < 1) throw config_error("GrowingSpheresConfig: max_layers must be >= 1");
        if (!(dedupe_radius_fraction > 0.0 && dedupe_radius_fraction < 2.0))
            throw config_error("GrowingSpheresConfig: dedupe_radius_fraction out of range");
    }
};

struct DbpResult {
    std::vector<double> point;
    double distance = 0.0;
    int label = 0;
};

struct DbpSet {
    std::vector<DbpResult> dbps;
};

inline nlohmann::ordered_json to_json(const DbpSet& s, std::span<const double> query) {
    nlohmann::ordered_json j;
    j["query"] = std::vector<double>(query.begin(), query.end());
    auto arr = nlohmann::ordered_json::array();
    for (const auto& d : s.dbps)
        arr.push_back({{"point", d.point}, {"distance", d.distance}, {"label", d.label}});
    j["dbps"] = std::move(arr);
    return j;
}

namespace detail {

// Uniform sample in the spherical layer a0 < |z - x| <= a1: direction from a
// normalized Gaussian, radius by inverse CDF of the r^(D-1) density. The
// (a0/a1)^D ratio keeps the computation stable in high dimension.
inline void sample_spherical_layer(std::span<const double> x, double a0, double a1, Matrix& out,
                                   Rng& rng) {
    const std::size_t n = out.rows(), d = out.cols();
    const double frac = a0 > 0.0 ? std::pow(a0 / a1, static_cast<double>(d)) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto row = out.row(i);
        double norm2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            row[j] = rng.normal();
            norm2 += row[j] * row[j];
        }
        double norm = std::sqrt(norm2);
        if (norm == 0.0) {
            row[0] = 1.0;
            norm = 1.0;
        }
        const double u = rng.uniform01();
        const double r = a1 * std::pow(frac + u * (1.0 - frac), 1.0 / static_cast<double>(d));
        for (std::size_t j = 0; j < d; ++j) row[j] = x[j] + row[j] * (r / norm);
    }
}

// Bisect along the segment x -> z (z flipped); returns the flipped endpoint
// of the final bracket.
inline std::vector<double> bisect_to_boundary(const BlackboxModel& model,
                                              std::span<const double> x,
                                              std::span<const double> z, int fx, int iters) {
    double lo = 0.0, hi = 1.0;
    std::vector<double> p(x.size());
    for (int it = 0; it < iters; ++it) {
        const double mid = 0.5 * (lo + hi);
        for (std::size_t j = 0; j < p.size(); ++j) p[j] = x[j] + mid * (z[j] - x[j]);
        if (model.decision_label(p) != fx)
            hi = mid;
        else
            lo = mid;
    }
    for (std::size_t j = 0; j < p.size(); ++j) p[j] = x[j] + hi * (z[j] - x[j]);
    return p;
}

struct BoundaryScan {
    std::vector<DbpResult> refined;  // sorted by distance ascending
    int query_label = 0;
};

// Shared search core. With shell_percent < 0 the scan stops at the first
// flipped layer (nearest-DBP mode); otherwise it keeps expanding until the
// layer start exceeds (1 + shell_percent/100) * l1.
inline BoundaryScan scan_boundary(const BlackboxModel& model, std::span<const double> x,
                                  const GrowingSpheresConfig& cfg, double shell_percent,
                                  std::uint64_t seed) {
    cfg.validate();
    if (x.size() != model.input_dim()) throw config_error("growing spheres: dimension mismatch");
    Rng rng(seed);
    const std::size_t n = static_cast<std::size_t>(cfg.n_samples), d = x.size();
    const int fx = model.decision_label(x);

    Matrix z(n, d);
    std::vector<double> proba(n);
    std::vector<std::size_t> flips;
    auto scan_layer = [&](double a0, double a1) {
        sample_spherical_layer(x, a0, a1, z, rng);
        model.predict_proba_batch(z, proba);
        flips.clear();
        for (std::size_t i = 0; i < n; ++i) {
            const int lab = proba[i] >= 0.5 ? 1 : 0;
            if (lab != fx) flips.push_back(i);
        }
    };

    BoundaryScan scan;
    scan.query_label = fx;
    double eta = cfg.eta;

    // shrink until the ball is flip-free; an instance sitting on the boundary
    // would shrink forever, so cap and fall through with whatever is in hand
    scan_layer(0.0, eta);
    int halvings = 0;
    while (!flips.empty() && halvings < 100) {
        eta *= 0.5;
        ++halvings;
        scan_layer(0.0, eta);
    }

    auto refine_current_flips = [&](std::vector<DbpResult>& sink) {
        std::sort(flips.begin(), flips.end(), [&](std::size_t a, std::size_t b) {
            return stats::l2_distance(z.row(a), x) < stats::l2_distance(z.row(b), x);
        });
        const std::size_t budget =
            std::min<std::size_t>(flips.size(), static_cast<std::size_t>(cfg.max_refine_per_layer));
        for (std::size_t i = 0; i < budget; ++i) {
            auto p = bisect_to_boundary(model, x, z.row(flips[i]), fx, cfg.bisect_iters);
            DbpResult r;
            r.distance = stats::l2_distance(p, x);
            r.label = 1 - fx;
            r.point = std::move(p);
            sink.push_back(std::move(r));
        }
    };

    if (!flips.empty()) {
        // cap reached with flips still present: the boundary is essentially at
        // the query point
        refine_current_flips(scan.refined);
    } else {
        double a0 = eta, a1 = 2.0 * eta;
        double l1 = std::numeric_limits<double>::infinity();
        bool found = false;
        for (int layer = 0; layer < cfg.max_layers; ++layer) {
            if (found) {
                const double shell = (1.0 + shell_percent / 100.0) * l1;
                if (shell_percent < 0.0 || a0 > shell) break;
            }
            scan_layer(a0, a1);
            if (!flips.empty()) {
                refine_current_flips(scan.refined);
                found = true;
                for (const auto& r : scan.refined) l1 = std::min(l1, r.distance);
            }
            a0 = a1;
            a1 += eta;
        }
        if (!found)
            throw boundary_not_found("growing spheres: no label flip within max_layers");
    }

    std::sort(scan.refined.begin(), scan.refined.end(),
              [](const DbpResult& a, const DbpResult& b) {
                  if (a.distance != b.distance) return a.distance < b.distance;
                  return a.point < b.point;
              });
    return scan;
}

}  // namespace detail

// Nearest decision-boundary point.
inline DbpResult nearest_dbp(const BlackboxModel& model, std::span<const double> x,
                             const GrowingSpheresConfig& cfg, std::uint64_t seed) {
    auto scan = detail::scan_boundary(model, x, cfg, -1.0, seed);
    return scan.refined.front();
}

// All distinct boundary points within (1 + m/100) of the nearest one.
// Distinctness is greedy nearest-first clustering at separation
// dedupe_radius_fraction * l1; that clustering rule is the library's
// definition of DBP cardinality.
inline DbpSet k_nearest_dbps(const BlackboxModel& model, std::span<const double> x,
                             const GrowingSpheresConfig& cfg, std::size_t k_max,
                             double m_percent, std::uint64_t seed) {
    if (k_max == 0) throw config_error("k_nearest_dbps: k_max must be >= 1");
    if (m_percent <= 0.0) throw config_error("k_nearest_dbps: m_percent must be > 0");
    auto scan = detail::scan_boundary(model, x, cfg, m_percent, seed);

    const double l1 = scan.refined.front().distance;
    const double shell = (1.0 + m_percent / 100.0) * l1;
    const double min_sep = cfg.dedupe_radius_fraction * l1;

    DbpSet out;
    for (auto& cand : scan.refined) {
        if (l1 > 0.0 && cand.distance >= shell) break;
        bool distinct = true;
        for (const auto& rep : out.dbps) {
            if (stats::l2_distance(cand.point, rep.point) < min_sep) {
                distinct = false;
                break;
            }
        }
        if (distinct) out.dbps.push_back(std::move(cand));
        if (out.dbps.size() >= k_max) break;
    }
    return out;
}

// Normalized magnitude of a LIME fit at the boundary point: the direction
// profile of the local tangent.
inline std::vector<double> tangent_attribution(const BlackboxModel& model, const DbpResult& dbp,
                                               const PerturbationConfig& cfg,
                                               std::uint64_t seed) {
    auto attr = lime_explain(model, dbp.point, cfg, seed);
    double sum = 0.0;
    for (auto& w : attr.weights) {
        w = std::fabs(w);
        sum += w;
    }
    if (sum <= 0.0) throw domain_error("tangent_attribution: degenerate zero tangent");
    for (auto& w : attr.weights) w /= sum;
    return attr.weights;
}

}  // namespace xuq
