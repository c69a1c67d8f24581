// Command-line front end: dataset generation, model training, single
// explanations, uncertainty reports, benchmark grids, stable-instance
// mining, and model-complexity estimation. Every output embeds the
// effective config and root seed, and reruns byte-identically for a given
// config, independent of --threads.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xuq/xuq.hpp"

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIo = 4;
constexpr int kExitDomain = 5;

struct GlobalOpts {
    std::uint64_t seed = 0;
    int threads = 1;
    std::string config_path;
    std::string out = "";
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw xuq::io_error("cannot open config file " + path);
    return json::parse(in);
}

// flag > config value > default
template <typename T>
void cfg_override(const CLI::App* cmd, const json& cfg, const std::string& flag,
                  const std::string& key, T& target) {
    if (cmd->count(flag) > 0) return;
    if (cfg.contains(key)) target = cfg.at(key).get<T>();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw xuq::io_error("cannot write " + path);
    out << text;
}

void emit_report(const GlobalOpts& g, const std::string& command, ordered_json effective_config,
                 ordered_json payload) {
    ordered_json envelope;
    envelope["schema_version"] = 1;
    envelope["command"] = command;
    envelope["seed"] = g.seed;
    envelope["config"] = std::move(effective_config);
    envelope["output"] = std::move(payload);
    const std::string text = envelope.dump(2) + "\n";
    if (g.out.empty())
        std::cout << text;
    else
        write_text(g.out, text);
}

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// ---- shared option blocks ----

struct DataModelOpts {
    std::string data_stem;
    std::string model_path;
};

struct LoadedCase {
    xuq::Dataset dataset;       // standardized
    xuq::ScaleRecord scale;
    xuq::ModelPtr model;
};

LoadedCase load_case(const DataModelOpts& dm) {
    LoadedCase lc;
    xuq::Dataset raw = xuq::load_bundle(dm.data_stem);
    auto [std_ds, rec] = xuq::standardize(raw);
    lc.dataset = std::move(std_ds);
    lc.scale = std::move(rec);

    std::ifstream in(dm.model_path);
    if (!in) throw xuq::io_error("cannot open model file " + dm.model_path);
    json mj = json::parse(in);
    lc.model = xuq::model_from_json(mj);
    if (lc.model->input_dim() != lc.dataset.dim())
        throw xuq::config_error("model/data dimension mismatch");
    return lc;
}

struct ExplainerOpts {
    std::string explainer = "lime";
    int num_samples = 5000;
    double kernel_width = 0.0;
    double ridge_lambda = 1e-3;
    double gamma = 0.95;
    int num_coalitions = 2048;
    int mask_draws = 16;
    double k_mvg = 2.0;
    int background_rows = 100;
    double gs_eta = 1.0;
    int gs_n = 100000;
    int gs_max_layers = 200;
    double gs_dedupe = 0.5;

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--explainer", explainer, "lime|kernelshap|bayeslime|mvg-lime|mvg-kernelshap|random");
        cmd->add_option("--num-samples", num_samples, "perturbation count per run");
        cmd->add_option("--kernel-width", kernel_width, "LIME kernel width (0 = sqrt(D)*0.75)");
        cmd->add_option("--ridge-lambda", ridge_lambda, "surrogate ridge penalty");
        cmd->add_option("--gamma", gamma, "credible/confidence level");
        cmd->add_option("--num-coalitions", num_coalitions, "KernelSHAP coalition budget");
        cmd->add_option("--mask-draws", mask_draws, "MVG-KS draws per coalition");
        cmd->add_option("--k-mvg", k_mvg, "MVG covariance scale k");
        cmd->add_option("--background-rows", background_rows, "KernelSHAP background sample size");
        cmd->add_option("--gs-eta", gs_eta, "growing spheres initial radius");
        cmd->add_option("--gs-n", gs_n, "growing spheres samples per layer");
        cmd->add_option("--gs-max-layers", gs_max_layers, "growing spheres layer budget");
        cmd->add_option("--gs-dedupe", gs_dedupe, "DBP dedupe radius fraction");
    }

    void apply_config(const CLI::App* cmd, const json& cfg) {
        cfg_override(cmd, cfg, "--explainer", "explainer", explainer);
        cfg_override(cmd, cfg, "--num-samples", "num_samples", num_samples);
        cfg_override(cmd, cfg, "--kernel-width", "kernel_width", kernel_width);
        cfg_override(cmd, cfg, "--ridge-lambda", "ridge_lambda", ridge_lambda);
        cfg_override(cmd, cfg, "--gamma", "gamma", gamma);
        cfg_override(cmd, cfg, "--num-coalitions", "num_coalitions", num_coalitions);
        cfg_override(cmd, cfg, "--mask-draws", "mask_draws", mask_draws);
        cfg_override(cmd, cfg, "--k-mvg", "k_mvg", k_mvg);
        cfg_override(cmd, cfg, "--background-rows", "background_rows", background_rows);
        cfg_override(cmd, cfg, "--gs-eta", "gs_eta", gs_eta);
        cfg_override(cmd, cfg, "--gs-n", "gs_n", gs_n);
        cfg_override(cmd, cfg, "--gs-max-layers", "gs_max_layers", gs_max_layers);
        cfg_override(cmd, cfg, "--gs-dedupe", "gs_dedupe", gs_dedupe);
    }

    ordered_json to_json() const {
        return {{"explainer", explainer},
                {"num_samples", num_samples},
                {"kernel_width", kernel_width},
                {"ridge_lambda", ridge_lambda},
                {"gamma", gamma},
                {"num_coalitions", num_coalitions},
                {"mask_draws", mask_draws},
                {"k_mvg", k_mvg},
                {"background_rows", background_rows},
                {"gs_eta", gs_eta},
                {"gs_n", gs_n},
                {"gs_max_layers", gs_max_layers},
                {"gs_dedupe", gs_dedupe}};
    }

    xuq::ExplainerSpec build(const LoadedCase& lc, std::uint64_t seed) const {
        xuq::ExplainerSpec spec;
        spec.kind = xuq::explainer_from_string(explainer);
        spec.perturb.num_samples = num_samples;
        spec.perturb.kernel_width = kernel_width;
        spec.perturb.ridge_lambda = ridge_lambda;
        spec.gamma = gamma;
        spec.num_coalitions = num_coalitions;
        spec.mask_draws = mask_draws;
        spec.k_mvg = k_mvg;
        spec.gs.eta = gs_eta;
        spec.gs.n_samples = gs_n;
        spec.gs.max_layers = gs_max_layers;
        spec.gs.dedupe_radius_fraction = gs_dedupe;
        if (spec.kind == xuq::ExplainerKind::kernelshap ||
            spec.kind == xuq::ExplainerKind::mvg_kernelshap) {
            const auto n = std::min<std::size_t>(background_rows, lc.dataset.train_idx.size());
            xuq::Rng rng(xuq::mix64(seed ^ 0x6267726f77730000ULL));
            auto pick = rng.sample_without_replacement(lc.dataset.train_idx.size(), n);
            spec.background = xuq::Matrix(n, lc.dataset.dim());
            for (std::size_t i = 0; i < n; ++i) {
                const auto row = lc.dataset.features.row(lc.dataset.train_idx[pick[i]]);
                std::copy(row.begin(), row.end(), spec.background.row(i).begin());
            }
        }
        return spec;
    }
};

std::vector<double> resolve_instance(const LoadedCase& lc, int index,
                                     const std::string& instance_csv) {
    if (!instance_csv.empty()) {
        std::vector<double> raw;
        for (const auto& tok : split_csv_list(instance_csv)) raw.push_back(std::stod(tok));
        if (raw.size() != lc.dataset.dim())
            throw xuq::config_error("--instance has wrong dimension");
        // raw-space vector; map through the scale record
        std::vector<double> z(raw.size());
        for (std::size_t j = 0; j < raw.size(); ++j)
            z[j] = (raw[j] - lc.scale.mean[j]) / lc.scale.scale[j];
        return z;
    }
    if (index < 0 || static_cast<std::size_t>(index) >= lc.dataset.test_idx.size())
        throw xuq::config_error("--index outside the test split");
    const auto row = lc.dataset.features.row(lc.dataset.test_idx[index]);
    return {row.begin(), row.end()};
}

// ---- subcommand payloads ----

int run_cli(int argc, char** argv) {
    CLI::App app{"uncertainty toolkit for additive feature attributions"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags remain valid after the subcommand name
    GlobalOpts g;
    app.add_option("--seed", g.seed, "root seed")->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads")->capture_default_str();
    app.add_option("--config", g.config_path, "JSON config file (flags take precedence)");
    app.add_option("--out", g.out, "output path (default: stdout)");

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic dataset bundle");
    struct {
        int dims = 8;
        int count = 4000;
        double train_fraction = 0.75;
        std::string psi = "default";
    } gen_o;
    gen->add_option("--dims", gen_o.dims);
    gen->add_option("--count", gen_o.count);
    gen->add_option("--train-fraction", gen_o.train_fraction);
    gen->add_option("--psi", gen_o.psi,
                    "default | all-linear | comma list of psi kinds (length dims)");

    // train
    auto* tr = app.add_subcommand("train", "train a blackbox model on a bundle");
    struct {
        std::string data;
        std::string kind = "logistic";
        double lr = 0.5;
        int epochs = 400;
        std::string hidden = "16";
        double rbf_gamma = 0.5;
        double ridge_lambda = 1e-4;
        int rbf_max_rows = 400;
    } tr_o;
    tr->add_option("--data", tr_o.data)->required();
    tr->add_option("--kind", tr_o.kind, "logistic|linear-margin|rbf-kernel|mlp");
    tr->add_option("--lr", tr_o.lr);
    tr->add_option("--epochs", tr_o.epochs);
    tr->add_option("--hidden", tr_o.hidden, "comma list of MLP widths");
    tr->add_option("--rbf-gamma", tr_o.rbf_gamma);
    tr->add_option("--ridge-lambda", tr_o.ridge_lambda);
    tr->add_option("--rbf-max-rows", tr_o.rbf_max_rows);

    // explain
    auto* ex = app.add_subcommand("explain", "one attribution for one instance");
    DataModelOpts ex_dm;
    ExplainerOpts ex_e;
    int ex_index = 0;
    std::string ex_instance;
    ex->add_option("--data", ex_dm.data_stem)->required();
    ex->add_option("--model", ex_dm.model_path)->required();
    ex->add_option("--index", ex_index, "test-split row index");
    ex->add_option("--instance", ex_instance, "comma list of raw feature values");
    ex_e.add_flags(ex);

    // uncertainty
    auto* un = app.add_subcommand("uncertainty", "full uncertainty report for one instance");
    DataModelOpts un_dm;
    ExplainerOpts un_e;
    struct {
        int index = 0;
        std::string instance;
        int runs = 100;
        int topk = 0;  // 0 = D
        int bootstrap = 100;
    } un_o;
    un->add_option("--data", un_dm.data_stem)->required();
    un->add_option("--model", un_dm.model_path)->required();
    un->add_option("--index", un_o.index);
    un->add_option("--instance", un_o.instance);
    un->add_option("--runs", un_o.runs, "ensemble size M");
    un->add_option("--topk", un_o.topk, "k for agreement metrics (0 = D)");
    un->add_option("--bootstrap", un_o.bootstrap, "bootstrap resamples B");
    un_e.add_flags(un);

    // benchmark
    auto* be = app.add_subcommand("benchmark", "explainer x metric benchmark grids");
    DataModelOpts be_dm;
    ExplainerOpts be_e;
    struct {
        int table = 1;
        std::string explainers = "lime,kernelshap,bayeslime,random";
        std::string metrics = "ci,ci_bootstrap,stdev,kendall_w,fleiss_kappa,topk_fa,topk_ra";
        int instances = 30;
        int runs = 30;
        int topk = 0;
        int bootstrap = 50;
        std::string top_sizes = "1,2,5";
    } be_o;
    be->add_option("--data", be_dm.data_stem)->required();
    be->add_option("--model", be_dm.model_path)->required();
    be->add_option("--table", be_o.table, "1 or 2");
    be->add_option("--explainers", be_o.explainers, "comma list for table 1");
    be->add_option("--metrics", be_o.metrics, "comma list for table 1");
    be->add_option("--instances", be_o.instances);
    be->add_option("--runs", be_o.runs);
    be->add_option("--topk", be_o.topk);
    be->add_option("--bootstrap", be_o.bootstrap);
    be->add_option("--top-sizes", be_o.top_sizes, "comma list for table 2");
    be_e.add_flags(be);

    // stability
    auto* st = app.add_subcommand("stability", "stable-instance mining + confusion matrix");
    DataModelOpts st_dm;
    ExplainerOpts st_e;
    struct {
        int instances = 200;
        int runs = 30;
        double threshold = 0.2;
        double margin = 0.05;
        bool no_verdicts = false;
    } st_o;
    st->add_option("--data", st_dm.data_stem)->required();
    st->add_option("--model", st_dm.model_path)->required();
    st->add_option("--instances", st_o.instances);
    st->add_option("--runs", st_o.runs);
    st->add_option("--threshold", st_o.threshold, "truth: kendall uncertainty below this");
    st->add_option("--margin", st_o.margin, "stability margin on l2/l1");
    st->add_flag("--no-verdicts", st_o.no_verdicts, "omit per-instance verdicts");
    st_e.add_flags(st);

    // complexity
    auto* cx = app.add_subcommand("complexity", "blackbox complexity cardinality");
    DataModelOpts cx_dm;
    ExplainerOpts cx_e;
    struct {
        int instances = 100;
        double m_percent = 5.0;
    } cx_o;
    cx->add_option("--data", cx_dm.data_stem)->required();
    cx->add_option("--model", cx_dm.model_path)->required();
    cx->add_option("--instances", cx_o.instances);
    cx->add_option("--m-percent", cx_o.m_percent);
    cx_e.add_flags(cx);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    const json cfg = load_config(g.config_path);
    cfg_override(&app, cfg, "--seed", "seed", g.seed);
    cfg_override(&app, cfg, "--threads", "threads", g.threads);
    cfg_override(&app, cfg, "--out", "out", g.out);

    if (gen->parsed()) {
        cfg_override(gen, cfg, "--dims", "dims", gen_o.dims);
        cfg_override(gen, cfg, "--count", "count", gen_o.count);
        cfg_override(gen, cfg, "--train-fraction", "train_fraction", gen_o.train_fraction);
        cfg_override(gen, cfg, "--psi", "psi", gen_o.psi);
        if (g.out.empty()) throw xuq::config_error("generate: --out bundle stem is required");

        auto spec = xuq::make_synthetic_spec(gen_o.dims, gen_o.count, g.seed);
        spec.train_fraction = gen_o.train_fraction;
        if (gen_o.psi == "all-linear") {
            spec.psi_assignments.assign(gen_o.dims, xuq::PsiKind::linear);
        } else if (gen_o.psi != "default") {
            const auto kinds = split_csv_list(gen_o.psi);
            if (kinds.size() != static_cast<std::size_t>(gen_o.dims))
                throw xuq::config_error("generate: --psi list length must equal dims");
            spec.psi_assignments.clear();
            for (const auto& k : kinds) spec.psi_assignments.push_back(xuq::psi_from_string(k));
        }
        auto ds = xuq::generate_synthetic(spec);
        xuq::save_bundle(ds, g.out);

        ordered_json config{{"dims", gen_o.dims},
                            {"count", gen_o.count},
                            {"train_fraction", gen_o.train_fraction},
                            {"psi", gen_o.psi}};
        double balance = 0.0;
        for (int y : ds.labels) balance += y;
        balance /= static_cast<double>(ds.labels.size());
        ordered_json payload{{"bundle", g.out},
                             {"rows", ds.size()},
                             {"train_rows", ds.train_idx.size()},
                             {"test_rows", ds.test_idx.size()},
                             {"label_balance", balance}};
        // the bundle itself is the artifact; the envelope goes to stdout
        GlobalOpts g2 = g;
        g2.out.clear();
        emit_report(g2, "generate", std::move(config), std::move(payload));
        return kExitOk;
    }

    if (tr->parsed()) {
        cfg_override(tr, cfg, "--data", "data", tr_o.data);
        cfg_override(tr, cfg, "--kind", "kind", tr_o.kind);
        cfg_override(tr, cfg, "--lr", "lr", tr_o.lr);
        cfg_override(tr, cfg, "--epochs", "epochs", tr_o.epochs);
        cfg_override(tr, cfg, "--hidden", "hidden", tr_o.hidden);
        cfg_override(tr, cfg, "--rbf-gamma", "rbf_gamma", tr_o.rbf_gamma);
        cfg_override(tr, cfg, "--ridge-lambda", "ridge_lambda", tr_o.ridge_lambda);
        cfg_override(tr, cfg, "--rbf-max-rows", "rbf_max_rows", tr_o.rbf_max_rows);
        if (g.out.empty()) throw xuq::config_error("train: --out model path is required");

        xuq::Dataset raw = xuq::load_bundle(tr_o.data);
        auto [ds, rec] = xuq::standardize(raw);
        xuq::TrainConfig tc;
        tc.learning_rate = tr_o.lr;
        tc.epochs = tr_o.epochs;
        tc.rbf_gamma = tr_o.rbf_gamma;
        tc.ridge_lambda = tr_o.ridge_lambda;
        tc.rbf_max_rows = tr_o.rbf_max_rows;
        tc.seed = g.seed;
        tc.hidden_layers.clear();
        for (const auto& tok : split_csv_list(tr_o.hidden))
            tc.hidden_layers.push_back(std::stoi(tok));
        const auto kind = xuq::model_kind_from_string(tr_o.kind);
        auto model = xuq::train(ds, tc, kind);

        ordered_json mj = model->to_json();
        mj["train_config"] = {{"lr", tc.learning_rate},
                              {"epochs", tc.epochs},
                              {"hidden", tc.hidden_layers},
                              {"rbf_gamma", tc.rbf_gamma},
                              {"ridge_lambda", tc.ridge_lambda},
                              {"rbf_max_rows", tc.rbf_max_rows},
                              {"seed", tc.seed}};
        write_text(g.out, mj.dump(2) + "\n");

        ordered_json config{{"data", tr_o.data}, {"kind", tr_o.kind}};
        ordered_json payload{{"model", g.out},
                             {"train_accuracy", xuq::accuracy(*model, ds, ds.train_idx)},
                             {"test_accuracy", xuq::accuracy(*model, ds, ds.test_idx)},
                             {"training_warning", model->training_warning()}};
        GlobalOpts g2 = g;
        g2.out.clear();
        emit_report(g2, "train", std::move(config), std::move(payload));
        return kExitOk;
    }

    if (ex->parsed()) {
        cfg_override(ex, cfg, "--data", "data", ex_dm.data_stem);
        cfg_override(ex, cfg, "--model", "model", ex_dm.model_path);
        cfg_override(ex, cfg, "--index", "index", ex_index);
        cfg_override(ex, cfg, "--instance", "instance", ex_instance);
        ex_e.apply_config(ex, cfg);

        auto lc = load_case(ex_dm);
        const auto x = resolve_instance(lc, ex_index, ex_instance);
        const auto spec = ex_e.build(lc, g.seed);
        ordered_json payload;
        if (spec.kind == xuq::ExplainerKind::bayeslime) {
            auto cred = xuq::bayeslime_explain(*lc.model, x, spec.perturb, spec.gamma, g.seed);
            payload = xuq::to_json(cred, lc.dataset.feature_names);
        } else {
            auto attr = xuq::explain_once(*lc.model, x, spec, g.seed);
            payload = xuq::to_json(attr, lc.dataset.feature_names);
        }
        ordered_json config = ex_e.to_json();
        config["data"] = ex_dm.data_stem;
        config["model"] = ex_dm.model_path;
        config["index"] = ex_index;
        emit_report(g, "explain", std::move(config), std::move(payload));
        return kExitOk;
    }

    if (un->parsed()) {
        cfg_override(un, cfg, "--data", "data", un_dm.data_stem);
        cfg_override(un, cfg, "--model", "model", un_dm.model_path);
        cfg_override(un, cfg, "--index", "index", un_o.index);
        cfg_override(un, cfg, "--instance", "instance", un_o.instance);
        cfg_override(un, cfg, "--runs", "runs", un_o.runs);
        cfg_override(un, cfg, "--topk", "topk", un_o.topk);
        cfg_override(un, cfg, "--bootstrap", "bootstrap", un_o.bootstrap);
        un_e.apply_config(un, cfg);

        auto lc = load_case(un_dm);
        const auto x = resolve_instance(lc, un_o.index, un_o.instance);
        const auto spec = un_e.build(lc, g.seed);
        const std::size_t topk =
            un_o.topk > 0 ? static_cast<std::size_t>(un_o.topk) : lc.dataset.dim();
        auto ens = xuq::run_ensemble(*lc.model, x, spec, un_o.runs, g.seed, g.threads);
        auto rep = xuq::uncertainty_report(ens, un_e.gamma, topk, un_o.bootstrap,
                                           xuq::mix64(g.seed ^ xuq::seed_salt::kBootstrap));
        ordered_json config = un_e.to_json();
        config["data"] = un_dm.data_stem;
        config["model"] = un_dm.model_path;
        config["index"] = un_o.index;
        config["runs"] = un_o.runs;
        config["topk"] = static_cast<int>(topk);
        config["bootstrap"] = un_o.bootstrap;
        emit_report(g, "uncertainty", std::move(config), xuq::to_json(rep));
        return kExitOk;
    }

    if (be->parsed()) {
        cfg_override(be, cfg, "--data", "data", be_dm.data_stem);
        cfg_override(be, cfg, "--model", "model", be_dm.model_path);
        cfg_override(be, cfg, "--table", "table", be_o.table);
        cfg_override(be, cfg, "--explainers", "explainers", be_o.explainers);
        cfg_override(be, cfg, "--metrics", "metrics", be_o.metrics);
        cfg_override(be, cfg, "--instances", "instances", be_o.instances);
        cfg_override(be, cfg, "--runs", "runs", be_o.runs);
        cfg_override(be, cfg, "--topk", "topk", be_o.topk);
        cfg_override(be, cfg, "--bootstrap", "bootstrap", be_o.bootstrap);
        cfg_override(be, cfg, "--top-sizes", "top_sizes", be_o.top_sizes);
        be_e.apply_config(be, cfg);

        auto lc = load_case(be_dm);
        ordered_json config = be_e.to_json();
        config["data"] = be_dm.data_stem;
        config["model"] = be_dm.model_path;
        config["table"] = be_o.table;
        config["instances"] = be_o.instances;
        config["runs"] = be_o.runs;

        if (be_o.table == 1) {
            const std::size_t topk =
                be_o.topk > 0 ? static_cast<std::size_t>(be_o.topk) : lc.dataset.dim();
            std::vector<std::pair<std::string, xuq::ExplainerSpec>> specs;
            for (const auto& name : split_csv_list(be_o.explainers)) {
                ExplainerOpts eo = be_e;
                eo.explainer = name;
                specs.emplace_back(name, eo.build(lc, g.seed));
            }
            std::vector<xuq::BenchmarkCase> cases{{be_dm.data_stem, &lc.dataset, lc.model}};
            auto rep = xuq::benchmark_table1(cases, specs, split_csv_list(be_o.metrics),
                                             be_o.instances, be_o.runs, be_e.gamma, topk,
                                             be_o.bootstrap, g.seed, g.threads);
            config["explainers"] = be_o.explainers;
            config["metrics"] = be_o.metrics;
            config["topk"] = static_cast<int>(topk);
            config["bootstrap"] = be_o.bootstrap;
            if (!g.out.empty()) write_text(g.out + ".csv", xuq::to_csv(rep));
            emit_report(g, "benchmark", std::move(config), xuq::to_json(rep));
        } else if (be_o.table == 2) {
            std::vector<std::size_t> tops;
            for (const auto& tok : split_csv_list(be_o.top_sizes))
                tops.push_back(static_cast<std::size_t>(std::stoul(tok)));
            xuq::PerturbationConfig pc;
            pc.num_samples = be_e.num_samples;
            pc.kernel_width = be_e.kernel_width;
            pc.ridge_lambda = be_e.ridge_lambda;
            xuq::GrowingSpheresConfig gs;
            gs.eta = be_e.gs_eta;
            gs.n_samples = be_e.gs_n;
            gs.max_layers = be_e.gs_max_layers;
            gs.dedupe_radius_fraction = be_e.gs_dedupe;
            ExplainerOpts bg = be_e;
            bg.explainer = "kernelshap";
            const auto ks_spec = bg.build(lc, g.seed);
            auto rep = xuq::benchmark_table2(*lc.model, lc.dataset, be_e.k_mvg, be_o.instances,
                                             be_o.runs, pc, be_e.num_coalitions,
                                             ks_spec.background, gs, tops, g.seed, g.threads);
            config["top_sizes"] = be_o.top_sizes;
            if (!g.out.empty()) write_text(g.out + ".csv", xuq::to_csv(rep));
            emit_report(g, "benchmark", std::move(config), xuq::to_json(rep));
        } else {
            throw xuq::config_error("benchmark: --table must be 1 or 2");
        }
        return kExitOk;
    }

    if (st->parsed()) {
        cfg_override(st, cfg, "--data", "data", st_dm.data_stem);
        cfg_override(st, cfg, "--model", "model", st_dm.model_path);
        cfg_override(st, cfg, "--instances", "instances", st_o.instances);
        cfg_override(st, cfg, "--runs", "runs", st_o.runs);
        cfg_override(st, cfg, "--threshold", "threshold", st_o.threshold);
        cfg_override(st, cfg, "--margin", "margin", st_o.margin);
        st_e.apply_config(st, cfg);

        auto lc = load_case(st_dm);
        auto spec = st_e.build(lc, g.seed);
        auto rep = xuq::stability_evaluate(*lc.model, lc.dataset, st_o.instances, spec,
                                           st_o.runs, st_o.threshold, spec.gs, st_o.margin,
                                           g.seed, g.threads);
        ordered_json config = st_e.to_json();
        config["data"] = st_dm.data_stem;
        config["model"] = st_dm.model_path;
        config["instances"] = st_o.instances;
        config["runs"] = st_o.runs;
        config["threshold"] = st_o.threshold;
        config["margin"] = st_o.margin;
        emit_report(g, "stability", std::move(config), xuq::to_json(rep, !st_o.no_verdicts));
        return kExitOk;
    }

    if (cx->parsed()) {
        cfg_override(cx, cfg, "--data", "data", cx_dm.data_stem);
        cfg_override(cx, cfg, "--model", "model", cx_dm.model_path);
        cfg_override(cx, cfg, "--instances", "instances", cx_o.instances);
        cfg_override(cx, cfg, "--m-percent", "m_percent", cx_o.m_percent);
        cx_e.apply_config(cx, cfg);

        auto lc = load_case(cx_dm);
        xuq::GrowingSpheresConfig gs;
        gs.eta = cx_e.gs_eta;
        gs.n_samples = cx_e.gs_n;
        gs.max_layers = cx_e.gs_max_layers;
        gs.dedupe_radius_fraction = cx_e.gs_dedupe;
        auto rep = xuq::model_complexity(*lc.model, lc.dataset, cx_o.instances, cx_o.m_percent,
                                         gs, g.seed, g.threads);
        ordered_json config = cx_e.to_json();
        config["data"] = cx_dm.data_stem;
        config["model"] = cx_dm.model_path;
        config["instances"] = cx_o.instances;
        config["m_percent"] = cx_o.m_percent;
        emit_report(g, "complexity", std::move(config), xuq::to_json(rep));
        return kExitOk;
    }

    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const xuq::config_error& e) {
        std::cerr << json{{"error", {{"type", "config"}, {"message", e.what()}}}}.dump() << "\n";
        return kExitConfig;
    } catch (const xuq::io_error& e) {
        std::cerr << json{{"error", {{"type", "io"}, {"message", e.what()}}}}.dump() << "\n";
        return kExitIo;
    } catch (const xuq::domain_error& e) {
        std::cerr << json{{"error", {{"type", "domain"}, {"message", e.what()}}}}.dump() << "\n";
        return kExitDomain;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"type", "internal"}, {"message", e.what()}}}}.dump() << "\n";
        return 1;
    }
}
