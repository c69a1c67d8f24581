// Blackbox binary classifiers trained in-repo: logistic regression, a
// hinge-loss linear model, RBF kernel ridge classification, and small MLPs.
// All of them sit behind the same predict-probability interface; explainers
// never see anything but that.
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xuq/common.hpp"
#include "xuq/dataset.hpp"
#include "xuq/linalg.hpp"
#include "xuq/rng.hpp"

namespace xuq {

enum class ModelKind { logistic, linear_margin, rbf_kernel, mlp };

inline const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::logistic: return "logistic";
        case ModelKind::linear_margin: return "linear-margin";
        case ModelKind::rbf_kernel: return "rbf-kernel";
        case ModelKind::mlp: return "mlp";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "logistic") return ModelKind::logistic;
    if (s == "linear-margin") return ModelKind::linear_margin;
    if (s == "rbf-kernel") return ModelKind::rbf_kernel;
    if (s == "mlp") return ModelKind::mlp;
    throw config_error("unknown model kind: " + s);
}

struct TrainConfig {
    double learning_rate = 0.5;
    int epochs = 400;
    std::vector<int> hidden_layers = {16};  // MLP only
    double rbf_gamma = 0.5;                 // kernel only
    double ridge_lambda = 1e-4;
    int rbf_max_rows = 400;                 // Gram size cap for the kernel model
    std::uint64_t seed = 0;

    void validate() const {
        if (learning_rate <= 0.0) throw config_error("TrainConfig: learning_rate must be > 0");
        if (epochs <= 0) throw config_error("TrainConfig: epochs must be > 0");
        if (rbf_gamma <= 0.0) throw config_error("TrainConfig: rbf_gamma must be > 0");
        if (ridge_lambda < 0.0) throw config_error("TrainConfig: ridge_lambda must be >= 0");
        if (rbf_max_rows <= 0) throw config_error("TrainConfig: rbf_max_rows must be > 0");
        for (int w : hidden_layers)
            if (w <= 0) throw config_error("TrainConfig: hidden layer widths must be > 0");
    }
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

class BlackboxModel {
public:
    virtual ~BlackboxModel() = default;

    virtual std::size_t input_dim() const = 0;
    virtual ModelKind kind() const = 0;

    double predict_proba(std::span<const double> x) const {
        if (x.size() != input_dim()) throw config_error("predict_proba: dimension mismatch");
        return proba_unchecked(x);
    }

    // Probability at or above 0.5 maps to label 1.
    int decision_label(std::span<const double> x) const {
        return predict_proba(x) >= 0.5 ? 1 : 0;
    }

    void predict_proba_batch(const Matrix& xs, std::span<double> out) const {
        if (xs.cols() != input_dim()) throw config_error("predict_proba_batch: dimension mismatch");
        for (std::size_t i = 0; i < xs.rows(); ++i) out[i] = proba_unchecked(xs.row(i));
    }

    bool training_warning() const { return training_warning_; }

    virtual nlohmann::ordered_json to_json() const = 0;

protected:
    virtual double proba_unchecked(std::span<const double> x) const = 0;
    bool training_warning_ = false;

    nlohmann::ordered_json json_header() const {
        nlohmann::ordered_json j;
        j["schema_version"] = 1;
        j["kind"] = to_string(kind());
        j["input_dim"] = input_dim();
        j["training_warning"] = training_warning_;
        return j;
    }
};

using ModelPtr = std::shared_ptr<const BlackboxModel>;

namespace detail {

inline void check_loss_finite(double loss) {
    if (!std::isfinite(loss)) throw domain_error("train: loss became non-finite");
}

// Cross-entropy over the training rows plus an L2 term on the weights
// (bias unpenalized). Shared by training and the gradient-check tests.
inline double logistic_loss(std::span<const double> w, double b, const Matrix& x,
                            std::span<const int> y, double lambda) {
    double loss = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double z = stats::dot(w, x.row(i)) + b;
        // log(1+exp(-z)) evaluated stably
        const double m = std::max(0.0, -z);
        const double log1pe = m + std::log(std::exp(-m) + std::exp(-z - m));
        loss += y[i] == 1 ? log1pe : log1pe + z;
    }
    loss /= static_cast<double>(x.rows());
    for (double wj : w) loss += 0.5 * lambda * wj * wj;
    return loss;
}

inline void logistic_gradient(std::span<const double> w, double b, const Matrix& x,
                              std::span<const int> y, double lambda,
                              std::span<double> gw, double& gb) {
    std::fill(gw.begin(), gw.end(), 0.0);
    gb = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double p = sigmoid(stats::dot(w, x.row(i)) + b);
        const double r = p - static_cast<double>(y[i]);
        const auto row = x.row(i);
        for (std::size_t j = 0; j < gw.size(); ++j) gw[j] += r * row[j];
        gb += r;
    }
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    for (std::size_t j = 0; j < gw.size(); ++j) gw[j] = gw[j] * inv_n + lambda * w[j];
    gb *= inv_n;
}

inline Matrix gather_rows(const Matrix& src, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), src.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto row = src.row(idx[i]);
        std::copy(row.begin(), row.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace detail

class LinearModel final : public BlackboxModel {
public:
    LinearModel(ModelKind kind, std::vector<double> weights, double bias, bool warning)
        : kind_(kind), weights_(std::move(weights)), bias_(bias) {
        training_warning_ = warning;
    }

    std::size_t input_dim() const override { return weights_.size(); }
    ModelKind kind() const override { return kind_; }

    std::span<const double> weights() const { return weights_; }
    double bias() const { return bias_; }

    nlohmann::ordered_json to_json() const override {
        auto j = json_header();
        j["weights"] = weights_;
        j["bias"] = bias_;
        return j;
    }

protected:
    double proba_unchecked(std::span<const double> x) const override {
        return sigmoid(stats::dot(weights_, x) + bias_);
    }

private:
    ModelKind kind_;
    std::vector<double> weights_;
    double bias_;
};

class RbfKernelModel final : public BlackboxModel {
public:
    RbfKernelModel(Matrix refs, std::vector<double> alphas, double gamma, double score_scale,
                   bool warning)
        : refs_(std::move(refs)), alphas_(std::move(alphas)), gamma_(gamma),
          score_scale_(score_scale) {
        training_warning_ = warning;
    }

    std::size_t input_dim() const override { return refs_.cols(); }
    ModelKind kind() const override { return ModelKind::rbf_kernel; }

    nlohmann::ordered_json to_json() const override {
        auto j = json_header();
        j["gamma"] = gamma_;
        j["score_scale"] = score_scale_;
        j["alphas"] = alphas_;
        j["ref_rows"] = refs_.rows();
        j["refs"] = refs_.data();
        return j;
    }

protected:
    double proba_unchecked(std::span<const double> x) const override {
        double s = 0.0;
        for (std::size_t i = 0; i < refs_.rows(); ++i) {
            const auto r = refs_.row(i);
            double d2 = 0.0;
            for (std::size_t j = 0; j < r.size(); ++j) {
                const double d = x[j] - r[j];
                d2 += d * d;
            }
            s += alphas_[i] * std::exp(-gamma_ * d2);
        }
        return sigmoid(score_scale_ * s);
    }

private:
    Matrix refs_;
    std::vector<double> alphas_;
    double gamma_;
    double score_scale_;
};

class MlpModel final : public BlackboxModel {
public:
    // layer_dims = {input, hidden..., 1}
    MlpModel(std::vector<int> layer_dims, std::vector<Matrix> weights,
             std::vector<std::vector<double>> biases, bool warning)
        : layer_dims_(std::move(layer_dims)), weights_(std::move(weights)),
          biases_(std::move(biases)) {
        training_warning_ = warning;
    }

    std::size_t input_dim() const override { return static_cast<std::size_t>(layer_dims_.front()); }
    ModelKind kind() const override { return ModelKind::mlp; }

    const std::vector<int>& layer_dims() const { return layer_dims_; }

    nlohmann::ordered_json to_json() const override {
        auto j = json_header();
        j["layer_dims"] = layer_dims_;
        auto ws = nlohmann::ordered_json::array();
        auto bs = nlohmann::ordered_json::array();
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            ws.push_back(weights_[l].data());
            bs.push_back(biases_[l]);
        }
        j["weights"] = std::move(ws);
        j["biases"] = std::move(bs);
        return j;
    }

protected:
    double proba_unchecked(std::span<const double> x) const override {
        std::vector<double> cur(x.begin(), x.end()), next;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            const Matrix& w = weights_[l];  // in x out
            next.assign(w.cols(), 0.0);
            for (std::size_t i = 0; i < w.rows(); ++i) {
                const double xi = cur[i];
                if (xi == 0.0) continue;
                const auto row = w.row(i);
                for (std::size_t o = 0; o < row.size(); ++o) next[o] += xi * row[o];
            }
            const bool last = l + 1 == weights_.size();
            for (std::size_t o = 0; o < next.size(); ++o) {
                next[o] += biases_[l][o];
                if (!last) next[o] = std::max(0.0, next[o]);
            }
            cur.swap(next);
        }
        return sigmoid(cur[0]);
    }

private:
    std::vector<int> layer_dims_;
    std::vector<Matrix> weights_;  // per layer, in x out
    std::vector<std::vector<double>> biases_;
};

namespace detail {

inline ModelPtr train_logistic_like(ModelKind kind, const Matrix& x, std::span<const int> y,
                                    const TrainConfig& cfg) {
    const std::size_t d = x.cols(), n = x.rows();
    std::vector<double> w(d, 0.0), gw(d, 0.0);
    double b = 0.0, gb = 0.0;
    for (int ep = 0; ep < cfg.epochs; ++ep) {
        if (kind == ModelKind::logistic) {
            logistic_gradient(w, b, x, y, cfg.ridge_lambda, gw, gb);
        } else {
            // hinge subgradient on +-1 targets
            std::fill(gw.begin(), gw.end(), 0.0);
            gb = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double t = y[i] == 1 ? 1.0 : -1.0;
                if (t * (stats::dot(w, x.row(i)) + b) < 1.0) {
                    const auto row = x.row(i);
                    for (std::size_t j = 0; j < d; ++j) gw[j] -= t * row[j];
                    gb -= t;
                }
            }
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t j = 0; j < d; ++j) gw[j] = gw[j] * inv_n + cfg.ridge_lambda * w[j];
            gb *= inv_n;
        }
        double gnorm = std::fabs(gb);
        for (std::size_t j = 0; j < d; ++j) {
            w[j] -= cfg.learning_rate * gw[j];
            gnorm = std::max(gnorm, std::fabs(gw[j]));
        }
        b -= cfg.learning_rate * gb;
        check_loss_finite(b);
        if (gnorm < 1e-7) break;
    }
    require_finite(w, "trained weights");
    // convergence signal: gradient still large at the epoch budget
    logistic_gradient(w, b, x, y, cfg.ridge_lambda, gw, gb);
    double gnorm = std::fabs(gb);
    for (double g : gw) gnorm = std::max(gnorm, std::fabs(g));
    const bool warning = kind == ModelKind::logistic && gnorm > 1e-2;
    return std::make_shared<LinearModel>(kind, std::move(w), b, warning);
}

inline ModelPtr train_rbf(const Matrix& x, std::span<const int> y, const TrainConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, 0x72626600));
    const std::size_t keep = std::min<std::size_t>(cfg.rbf_max_rows, x.rows());
    auto pick = rng.sample_without_replacement(x.rows(), keep);
    std::sort(pick.begin(), pick.end());
    Matrix refs = gather_rows(x, pick);

    Matrix gram(keep, keep);
    for (std::size_t i = 0; i < keep; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double d2 = [&] {
                double s = 0.0;
                const auto a = refs.row(i), b = refs.row(j);
                for (std::size_t k = 0; k < a.size(); ++k) {
                    const double d = a[k] - b[k];
                    s += d * d;
                }
                return s;
            }();
            const double v = std::exp(-cfg.rbf_gamma * d2);
            gram(i, j) = v;
            gram(j, i) = v;
        }
        gram(i, i) += std::max(cfg.ridge_lambda, 1e-8);
    }
    std::vector<double> t(keep);
    for (std::size_t i = 0; i < keep; ++i) t[i] = y[pick[i]] == 1 ? 1.0 : -1.0;
    auto solved = linalg::solve_spd(std::move(gram), t);
    return std::make_shared<RbfKernelModel>(std::move(refs), std::move(solved.x), cfg.rbf_gamma,
                                            3.0, solved.ridge_floored);
}

inline ModelPtr train_mlp(const Matrix& x, std::span<const int> y, const TrainConfig& cfg) {
    if (cfg.hidden_layers.empty())
        throw config_error("train: mlp requires at least one hidden layer (use logistic instead)");
    const std::size_t n = x.rows();
    std::vector<int> dims;
    dims.push_back(static_cast<int>(x.cols()));
    for (int h : cfg.hidden_layers) dims.push_back(h);
    dims.push_back(1);

    Rng rng(derive_seed(cfg.seed, 0x6d6c7000));
    const std::size_t nlayers = dims.size() - 1;
    std::vector<Matrix> w(nlayers);
    std::vector<std::vector<double>> bias(nlayers);
    for (std::size_t l = 0; l < nlayers; ++l) {
        w[l] = Matrix(dims[l], dims[l + 1]);
        const double lim = std::sqrt(6.0 / (dims[l] + dims[l + 1]));
        for (auto& v : w[l].data()) v = rng.uniform(-lim, lim);
        bias[l].assign(dims[l + 1], 0.0);
    }

    // full-batch gradient descent on cross-entropy
    std::vector<Matrix> acts(nlayers + 1);
    acts[0] = x;
    std::vector<Matrix> grad_w(nlayers);
    std::vector<std::vector<double>> grad_b(nlayers);
    for (int ep = 0; ep < cfg.epochs; ++ep) {
        for (std::size_t l = 0; l < nlayers; ++l) {
            const Matrix& in = acts[l];
            Matrix out(n, dims[l + 1]);
            for (std::size_t i = 0; i < n; ++i) {
                const auto ri = in.row(i);
                auto ro = out.row(i);
                std::copy(bias[l].begin(), bias[l].end(), ro.begin());
                for (std::size_t k = 0; k < ri.size(); ++k) {
                    const double v = ri[k];
                    if (v == 0.0) continue;
                    const auto wr = w[l].row(k);
                    for (std::size_t o = 0; o < wr.size(); ++o) ro[o] += v * wr[o];
                }
                if (l + 1 < nlayers)
                    for (auto& v : ro) v = std::max(0.0, v);
            }
            acts[l + 1] = std::move(out);
        }
        // delta at the output; propagate back
        Matrix delta(n, 1);
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = acts[nlayers](i, 0);
            const double p = sigmoid(z);
            delta(i, 0) = (p - static_cast<double>(y[i])) / static_cast<double>(n);
            const double m = std::max(0.0, -z);
            const double log1pe = m + std::log(std::exp(-m) + std::exp(-z - m));
            loss += y[i] == 1 ? log1pe : log1pe + z;
        }
        check_loss_finite(loss);
        for (std::size_t li = nlayers; li > 0; --li) {
            const std::size_t l = li - 1;
            const Matrix& in = acts[l];
            grad_w[l] = Matrix(dims[l], dims[l + 1]);
            grad_b[l].assign(dims[l + 1], 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const auto di = delta.row(i);
                const auto ri = in.row(i);
                for (std::size_t k = 0; k < ri.size(); ++k) {
                    if (ri[k] == 0.0) continue;
                    auto gr = grad_w[l].row(k);
                    for (std::size_t o = 0; o < di.size(); ++o) gr[o] += ri[k] * di[o];
                }
                for (std::size_t o = 0; o < di.size(); ++o) grad_b[l][o] += di[o];
            }
            if (l > 0) {
                Matrix next_delta(n, dims[l]);
                for (std::size_t i = 0; i < n; ++i) {
                    const auto di = delta.row(i);
                    auto nd = next_delta.row(i);
                    const auto ai = acts[l].row(i);
                    for (std::size_t k = 0; k < nd.size(); ++k) {
                        if (ai[k] <= 0.0) {
                            nd[k] = 0.0;
                            continue;
                        }
                        nd[k] = stats::dot(w[l].row(k), di);
                    }
                }
                delta = std::move(next_delta);
            }
        }
        for (std::size_t l = 0; l < nlayers; ++l) {
            auto& wd = w[l].data();
            const auto& gd = grad_w[l].data();
            for (std::size_t k = 0; k < wd.size(); ++k) wd[k] -= cfg.learning_rate * gd[k];
            for (std::size_t o = 0; o < bias[l].size(); ++o)
                bias[l][o] -= cfg.learning_rate * grad_b[l][o];
        }
    }
    for (const auto& lw : w) require_finite(lw.data(), "trained mlp weights");
    return std::make_shared<MlpModel>(std::move(dims), std::move(w), std::move(bias), false);
}

}  // namespace detail

// Trains on the dataset's training split. Expects standardized features.
inline ModelPtr train(const Dataset& ds, const TrainConfig& cfg, ModelKind kind) {
    cfg.validate();
    if (ds.train_idx.empty()) throw config_error("train: empty training split");
    Matrix x = detail::gather_rows(ds.features, ds.train_idx);
    std::vector<int> y(ds.train_idx.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = ds.labels[ds.train_idx[i]];
    switch (kind) {
        case ModelKind::logistic:
        case ModelKind::linear_margin:
            return detail::train_logistic_like(kind, x, y, cfg);
        case ModelKind::rbf_kernel:
            return detail::train_rbf(x, y, cfg);
        case ModelKind::mlp:
            return detail::train_mlp(x, y, cfg);
    }
    throw config_error("train: unknown model kind");
}

inline ModelPtr model_from_json(const nlohmann::json& j) {
    const auto kind = model_kind_from_string(j.at("kind").get<std::string>());
    const bool warning = j.value("training_warning", false);
    if (kind == ModelKind::logistic || kind == ModelKind::linear_margin) {
        return std::make_shared<LinearModel>(kind, j.at("weights").get<std::vector<double>>(),
                                             j.at("bias").get<double>(), warning);
    }
    if (kind == ModelKind::rbf_kernel) {
        const auto rows = j.at("ref_rows").get<std::size_t>();
        const auto flat = j.at("refs").get<std::vector<double>>();
        const auto dim = j.at("input_dim").get<std::size_t>();
        Matrix refs(rows, dim);
        refs.data() = flat;
        return std::make_shared<RbfKernelModel>(std::move(refs),
                                                j.at("alphas").get<std::vector<double>>(),
                                                j.at("gamma").get<double>(),
                                                j.at("score_scale").get<double>(), warning);
    }
    auto dims = j.at("layer_dims").get<std::vector<int>>();
    std::vector<Matrix> w;
    std::vector<std::vector<double>> b;
    const auto& ws = j.at("weights");
    const auto& bs = j.at("biases");
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Matrix m(dims[l], dims[l + 1]);
        m.data() = ws.at(l).get<std::vector<double>>();
        w.push_back(std::move(m));
        b.push_back(bs.at(l).get<std::vector<double>>());
    }
    return std::make_shared<MlpModel>(std::move(dims), std::move(w), std::move(b), warning);
}

inline double accuracy(const BlackboxModel& model, const Dataset& ds,
                       std::span<const std::size_t> idx) {
    if (idx.empty()) throw config_error("accuracy: empty index set");
    std::size_t hit = 0;
    for (std::size_t i : idx)
        if (model.decision_label(ds.features.row(i)) == ds.labels[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(idx.size());
}

}  // namespace xuq
