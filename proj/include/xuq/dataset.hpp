// Tabular binary-classification data: synthetic generation from a Gaussian
// mixture with per-feature labeling functions, CSV ingestion, train/test
// splits, and standardization.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xuq/common.hpp"
#include "xuq/linalg.hpp"
#include "xuq/rng.hpp"

namespace xuq {

struct Dataset {
    Matrix features;  // N x D
    std::vector<int> labels;
    std::vector<std::string> feature_names;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }

    void validate() const {
        if (labels.size() != features.rows())
            throw config_error("Dataset: label count does not match row count");
        if (feature_names.size() != features.cols())
            throw config_error("Dataset: feature name count does not match column count");
        for (int y : labels)
            if (y != 0 && y != 1) throw config_error("Dataset: labels must be 0 or 1");
        require_finite(features.data(), "Dataset features");
        std::vector<char> seen(size(), 0);
        for (std::size_t i : train_idx) {
            if (i >= size() || seen[i]) throw config_error("Dataset: bad train index partition");
            seen[i] = 1;
        }
        for (std::size_t i : test_idx) {
            if (i >= size() || seen[i]) throw config_error("Dataset: bad test index partition");
            seen[i] = 1;
        }
        for (char c : seen)
            if (!c) throw config_error("Dataset: split does not cover all rows");
    }
};

enum class PsiKind {
    linear,
    piecewise_constant,
    absolute,
    sine,
    cosine,
    exponent,
    piecewise_linear,
};

inline const char* to_string(PsiKind k) {
    switch (k) {
        case PsiKind::linear: return "linear";
        case PsiKind::piecewise_constant: return "piecewise-constant";
        case PsiKind::absolute: return "absolute";
        case PsiKind::sine: return "sine";
        case PsiKind::cosine: return "cosine";
        case PsiKind::exponent: return "exponent";
        case PsiKind::piecewise_linear: return "piecewise-linear";
    }
    return "?";
}

inline PsiKind psi_from_string(const std::string& s) {
    if (s == "linear") return PsiKind::linear;
    if (s == "piecewise-constant") return PsiKind::piecewise_constant;
    if (s == "absolute") return PsiKind::absolute;
    if (s == "sine") return PsiKind::sine;
    if (s == "cosine") return PsiKind::cosine;
    if (s == "exponent") return PsiKind::exponent;
    if (s == "piecewise-linear") return PsiKind::piecewise_linear;
    throw config_error("unknown psi kind: " + s);
}

// Labeling functions applied to standardized features. Piecewise variants
// break at {-1, 0, 1}; the exponent clamps its argument at 3.
inline double psi_apply(PsiKind k, double x) {
    switch (k) {
        case PsiKind::linear: return x;
        case PsiKind::absolute: return std::fabs(x);
        case PsiKind::sine: return std::sin(x);
        case PsiKind::cosine: return std::cos(x);
        case PsiKind::exponent: return std::exp(std::min(x, 3.0));
        case PsiKind::piecewise_constant:
            if (x < -1.0) return -1.5;
            if (x < 0.0) return -0.5;
            if (x < 1.0) return 0.5;
            return 1.5;
        case PsiKind::piecewise_linear:
            if (x < -1.0) return 0.5 * (x + 1.0) - 0.5;
            if (x < 0.0) return -0.5 + 2.0 * (x + 1.0);
            if (x < 1.0) return 1.5 + 0.5 * x;
            return 2.0 + 2.0 * (x - 1.0);
    }
    return 0.0;
}

struct MixtureComponent {
    std::vector<double> mean;
    Matrix covariance;  // D x D, PSD
    double weight = 1.0;
};

struct SyntheticSpec {
    std::size_t dims = 0;
    std::size_t count = 0;
    std::vector<MixtureComponent> mixture;
    std::vector<PsiKind> psi_assignments;
    double train_fraction = 0.75;
    std::uint64_t seed = 0;
};

// Default mixture: 3 components, means uniform in [-2,2]^D, diagonal
// covariances uniform in [0.5,1.5], equal weights.
inline std::vector<MixtureComponent> default_mixture(std::size_t dims, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x6d697874));
    std::vector<MixtureComponent> comps(3);
    for (auto& c : comps) {
        c.mean.resize(dims);
        for (auto& m : c.mean) m = rng.uniform(-2.0, 2.0);
        c.covariance = Matrix(dims, dims, 0.0);
        for (std::size_t j = 0; j < dims; ++j) c.covariance(j, j) = rng.uniform(0.5, 1.5);
        c.weight = 1.0 / 3.0;
    }
    return comps;
}

inline std::vector<PsiKind> default_psi_assignment(std::size_t dims) {
    static constexpr PsiKind cycle[] = {
        PsiKind::linear,        PsiKind::piecewise_constant, PsiKind::absolute,
        PsiKind::sine,          PsiKind::cosine,             PsiKind::exponent,
        PsiKind::piecewise_linear,
    };
    std::vector<PsiKind> out(dims);
    for (std::size_t i = 0; i < dims; ++i) out[i] = cycle[i % 7];
    return out;
}

inline SyntheticSpec make_synthetic_spec(std::size_t dims, std::size_t count, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.dims = dims;
    spec.count = count;
    spec.seed = seed;
    spec.mixture = default_mixture(dims, seed);
    spec.psi_assignments = default_psi_assignment(dims);
    return spec;
}

namespace detail {

inline void validate_spec(const SyntheticSpec& spec) {
    if (spec.dims == 0 || spec.count == 0)
        throw config_error("SyntheticSpec: dims and count must be positive");
    if (spec.mixture.empty()) throw config_error("SyntheticSpec: empty mixture");
    if (spec.psi_assignments.size() != spec.dims)
        throw config_error("SyntheticSpec: psi assignment count must equal dims");
    double wsum = 0.0;
    for (const auto& c : spec.mixture) {
        if (c.weight <= 0.0) throw config_error("SyntheticSpec: mixture weights must be positive");
        wsum += c.weight;
        if (c.mean.size() != spec.dims || c.covariance.rows() != spec.dims ||
            c.covariance.cols() != spec.dims)
            throw config_error("SyntheticSpec: component dimension mismatch");
        for (std::size_t i = 0; i < spec.dims; ++i)
            for (std::size_t j = i + 1; j < spec.dims; ++j)
                if (std::fabs(c.covariance(i, j) - c.covariance(j, i)) > 1e-12)
                    throw config_error("SyntheticSpec: covariance not symmetric");
    }
    if (std::fabs(wsum - 1.0) > 1e-9)
        throw config_error("SyntheticSpec: mixture weights must sum to 1");
}

// Lower factor for sampling; rejects non-PSD input. Semi-definite matrices
// pass with zeroed pivot columns.
inline Matrix psd_factor(const Matrix& cov) {
    Matrix a = cov;
    const std::size_t n = a.rows();
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
        if (d < -1e-9) throw config_error("SyntheticSpec: covariance not positive semi-definite");
        const double l = d > 1e-12 ? std::sqrt(d) : 0.0;
        a(j, j) = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
            a(i, j) = l > 0.0 ? s / l : 0.0;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) a(i, j) = 0.0;
    return a;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    return idx;
}

}  // namespace detail

// Draws N instances from the mixture, scores them with the per-feature psi
// functions applied to dataset-standardized features, and thresholds the
// normalized score at zero (its mean). Deterministic for a given seed.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
    detail::validate_spec(spec);
    const std::size_t n = spec.count, d = spec.dims;

    std::vector<Matrix> factors;
    factors.reserve(spec.mixture.size());
    for (const auto& c : spec.mixture) factors.push_back(detail::psd_factor(c.covariance));

    Rng rng(derive_seed(spec.seed, 0x67656e00));
    Matrix x(n, d);
    std::vector<double> z(d);
    for (std::size_t i = 0; i < n; ++i) {
        // pick component by weight
        double u = rng.uniform01();
        std::size_t ci = 0;
        for (; ci + 1 < spec.mixture.size(); ++ci) {
            if (u < spec.mixture[ci].weight) break;
            u -= spec.mixture[ci].weight;
        }
        rng.normal_fill(z);
        const auto& mean = spec.mixture[ci].mean;
        const auto& fac = factors[ci];
        for (std::size_t r = 0; r < d; ++r) {
            double v = mean[r];
            for (std::size_t k = 0; k <= r; ++k) v += fac(r, k) * z[k];
            x(i, r) = v;
        }
    }

    // standardize per feature (dataset-wide) before applying psi
    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x(i, j);
        mu[j] = s / n;
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dd = x(i, j) - mu[j];
            v += dd * dd;
        }
        sd[j] = std::sqrt(v / n);
        if (sd[j] <= 0.0) sd[j] = 1.0;
    }

    std::vector<double> y_raw(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j)
            s += psi_apply(spec.psi_assignments[j], (x(i, j) - mu[j]) / sd[j]);
        y_raw[i] = s;
    }
    const double ym = stats::mean(y_raw);
    const double ys = stats::pop_stdev(y_raw);
    const double denom = ys > 0.0 ? ys : 1.0;

    Dataset ds;
    ds.features = std::move(x);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = (y_raw[i] - ym) / denom > 0.0 ? 1 : 0;
    ds.feature_names.resize(d);
    for (std::size_t j = 0; j < d; ++j) ds.feature_names[j] = "f" + std::to_string(j);

    auto idx = detail::shuffled_indices(n, rng);
    const auto ntrain = static_cast<std::size_t>(spec.train_fraction * static_cast<double>(n));
    ds.train_idx.assign(idx.begin(), idx.begin() + ntrain);
    ds.test_idx.assign(idx.begin() + ntrain, idx.end());
    return ds;
}

// CSV ingestion: comma-separated, UTF-8, mandatory header, label column
// restricted to {0,1}. Split is sampled uniformly with the given seed;
// the train side gets floor(ratio * N) rows.
inline Dataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                        double split_ratio, std::uint64_t seed) {
    if (split_ratio < 0.0 || split_ratio > 1.0)
        throw config_error("load_csv: split_ratio outside [0,1]");
    std::ifstream in(path);
    if (!in) throw io_error("load_csv: cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw io_error("load_csv: missing header row in " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    std::ptrdiff_t label_col = -1;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == label_column) label_col = static_cast<std::ptrdiff_t>(j);
    if (label_col < 0)
        throw io_error("load_csv: label column '" + label_column + "' not found");

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t nrows = 0;
    const std::size_t ncols = header.size();
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++nrows;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            if (col >= ncols)
                throw io_error("load_csv: row " + std::to_string(nrows) + " has extra columns");
            if (cell.empty())
                throw io_error("load_csv: missing value at row " + std::to_string(nrows) +
                               ", column '" + header[col] + "'");
            std::size_t pos = 0;
            double v;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                throw io_error("load_csv: unparsable value '" + cell + "' at row " +
                               std::to_string(nrows) + ", column '" + header[col] + "'");
            }
            if (pos != cell.size())
                throw io_error("load_csv: unparsable value '" + cell + "' at row " +
                               std::to_string(nrows) + ", column '" + header[col] + "'");
            if (col == static_cast<std::size_t>(label_col)) {
                if (v != 0.0 && v != 1.0)
                    throw io_error("load_csv: non-binary label at row " + std::to_string(nrows));
                labels.push_back(static_cast<int>(v));
            } else {
                values.push_back(v);
            }
            ++col;
        }
        if (col != ncols)
            throw io_error("load_csv: row " + std::to_string(nrows) + " has " +
                           std::to_string(col) + " columns, expected " + std::to_string(ncols));
    }
    if (nrows == 0) throw io_error("load_csv: no data rows in " + path.string());

    const std::size_t d = ncols - 1;
    Dataset ds;
    ds.features = Matrix(nrows, d);
    std::copy(values.begin(), values.end(), ds.features.data().begin());
    ds.labels = std::move(labels);
    for (std::size_t j = 0; j < ncols; ++j)
        if (j != static_cast<std::size_t>(label_col)) ds.feature_names.push_back(header[j]);

    Rng rng(derive_seed(seed, 0x63737600));
    auto idx = detail::shuffled_indices(nrows, rng);
    const auto ntrain = static_cast<std::size_t>(split_ratio * static_cast<double>(nrows));
    ds.train_idx.assign(idx.begin(), idx.begin() + ntrain);
    ds.test_idx.assign(idx.begin() + ntrain, idx.end());
    ds.validate();
    return ds;
}

struct ScaleRecord {
    std::vector<double> mean;
    std::vector<double> scale;
    std::vector<bool> zero_variance;  // flagged features kept at scale 1

    std::vector<double> inverse(std::span<const double> z) const {
        std::vector<double> x(z.size());
        for (std::size_t j = 0; j < z.size(); ++j) x[j] = z[j] * scale[j] + mean[j];
        return x;
    }
};

// Rescales every feature to zero mean / unit variance over the training split.
inline std::pair<Dataset, ScaleRecord> standardize(const Dataset& ds) {
    if (ds.size() == 0) throw config_error("standardize: empty dataset");
    if (ds.train_idx.empty()) throw config_error("standardize: empty training split");
    const std::size_t d = ds.dim();
    ScaleRecord rec;
    rec.mean.assign(d, 0.0);
    rec.scale.assign(d, 1.0);
    rec.zero_variance.assign(d, false);
    const double ntr = static_cast<double>(ds.train_idx.size());
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i : ds.train_idx) s += ds.features(i, j);
        rec.mean[j] = s / ntr;
        double v = 0.0;
        for (std::size_t i : ds.train_idx) {
            const double dd = ds.features(i, j) - rec.mean[j];
            v += dd * dd;
        }
        const double sd = std::sqrt(v / ntr);
        if (sd > 0.0) {
            rec.scale[j] = sd;
        } else {
            rec.scale[j] = 1.0;
            rec.zero_variance[j] = true;
        }
    }
    Dataset out = ds;
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
            out.features(i, j) = (out.features(i, j) - rec.mean[j]) / rec.scale[j];
    return {std::move(out), std::move(rec)};
}

// ---- experiment bundle: CSV payload + JSON manifest ----

inline void save_bundle(const Dataset& ds, const std::filesystem::path& stem,
                        const ScaleRecord* scale = nullptr) {
    const auto csv_path = std::filesystem::path(stem).replace_extension(".csv");
    const auto json_path = std::filesystem::path(stem).replace_extension(".json");
    std::ofstream csv(csv_path);
    if (!csv) throw io_error("save_bundle: cannot write " + csv_path.string());
    for (const auto& name : ds.feature_names) csv << name << ',';
    csv << "label\n";
    csv.precision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) csv << ds.features(i, j) << ',';
        csv << ds.labels[i] << '\n';
    }
    nlohmann::ordered_json manifest;
    manifest["schema_version"] = 1;
    manifest["csv"] = csv_path.filename().string();
    manifest["feature_names"] = ds.feature_names;
    manifest["label_column"] = "label";
    manifest["train_idx"] = ds.train_idx;
    manifest["test_idx"] = ds.test_idx;
    if (scale != nullptr) {
        manifest["scale_record"] = {{"mean", scale->mean},
                                    {"scale", scale->scale},
                                    {"zero_variance", std::vector<int>(scale->zero_variance.begin(),
                                                                       scale->zero_variance.end())}};
    }
    std::ofstream js(json_path);
    if (!js) throw io_error("save_bundle: cannot write " + json_path.string());
    js << manifest.dump(2) << '\n';
}

inline Dataset load_bundle(const std::filesystem::path& stem,
                           ScaleRecord* scale_out = nullptr) {
    const auto json_path = std::filesystem::path(stem).replace_extension(".json");
    std::ifstream js(json_path);
    if (!js) throw io_error("load_bundle: cannot open " + json_path.string());
    nlohmann::json manifest = nlohmann::json::parse(js);
    const auto csv_path = json_path.parent_path() / manifest.at("csv").get<std::string>();

    // parse without re-splitting: the manifest owns the split
    Dataset ds = load_csv(csv_path, manifest.at("label_column").get<std::string>(), 1.0, 0);
    ds.train_idx = manifest.at("train_idx").get<std::vector<std::size_t>>();
    ds.test_idx = manifest.at("test_idx").get<std::vector<std::size_t>>();
    ds.feature_names = manifest.at("feature_names").get<std::vector<std::string>>();
    if (scale_out != nullptr && manifest.contains("scale_record")) {
        const auto& sr = manifest["scale_record"];
        scale_out->mean = sr.at("mean").get<std::vector<double>>();
        scale_out->scale = sr.at("scale").get<std::vector<double>>();
        const auto zv = sr.at("zero_variance").get<std::vector<int>>();
        scale_out->zero_variance.assign(zv.begin(), zv.end());
    }
    ds.validate();
    return ds;
}

}  // namespace xuq
