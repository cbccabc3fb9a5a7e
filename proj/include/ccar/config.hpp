#pragma once

// Experiment configuration: one INI file per experiment, sections
// [experiment] [dataset] [train] [sweep] [probe] [attacks] [diagnostics]
// [theory]. Unknown sections and keys are hard errors.

#include "ccar/dataset.hpp"
#include "ccar/diagnostics.hpp"
#include "ccar/error.hpp"
#include "ccar/probe.hpp"
#include "ccar/regularizers.hpp"
#include "ccar/robustness.hpp"
#include "ccar/training.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace ccar {

inline constexpr const char* kOutputDirEnv = "CCAR_OUTPUT_DIR";

struct DatasetConfig {
    std::string source = "blobs"; // blobs | idx
    BlobSpec blobs{};
    std::string train_images, train_labels, test_images, test_labels;
    long long limit = 0;
};

struct SweepConfig {
    std::vector<double> noise_rates = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<std::string> methods = {"ce", "ccar_l2"};
};

struct ProbeSection {
    std::vector<ProbeKind> kinds = {ProbeKind::Linear};
    ProbeConfig base{};
    int retrieval_k = 10;
};

struct AttackSection {
    std::vector<AttackSpec> specs;
};

struct DiagnosticsSection {
    DiagnosticsOptions options{};
    bool heatmap = true;
};

struct TheorySection {
    int trace_dim = 20;
    int trace_classes = 4;
    long long trace_samples = 100000;
    double trace_tolerance = 0.02;
    int certified_dim = 20;
    int certified_classes = 4;
    long long certified_trials = 100000;
    std::vector<int> tail_dims = {50, 100, 200};
    std::vector<int> tail_classes = {5, 10};
    std::vector<double> tail_ratios = {0.8, 1.5, 2.718281828459045, 4.0};
    double tail_sigma2 = 1.0;
    long long tail_trials = 100000;
    std::uint64_t seed = 0;
};

struct ExperimentConfig {
    std::string output_dir;
    std::vector<std::uint64_t> seeds = {0};
    int workers = 1;
    std::string checkpoint;
    DatasetConfig dataset;
    TrainConfig train;
    SweepConfig sweep;
    ProbeSection probe;
    AttackSection attacks;
    DiagnosticsSection diagnostics;
    TheorySection theory;
};

inline std::vector<AttackSpec> default_attacks() {
    std::vector<AttackSpec> out;
    for (double e : {2.0 / 255, 4.0 / 255, 8.0 / 255}) out.push_back({AttackKind::Fgsm, e, 1, e, 1});
    for (double e : {2.0 / 255, 4.0 / 255, 8.0 / 255}) out.push_back(pgd_spec(e, 20));
    for (double s : {0.05, 0.1, 0.2}) out.push_back({AttackKind::Gaussian, s, 1, s, 5});
    return out;
}

// ---------------------------------------------------------------------------
// Value parsing

namespace cfg {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] inline void bad(const std::string& key, const std::string& value, const std::string& what) {
    throw Error(Errc::Config, key + " = '" + value + "': " + what);
}

inline double parse_real(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    auto one = [&](const std::string& s) {
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(s, &used);
        } catch (const std::exception&) {
            bad(key, raw, "expected a number");
        }
        if (trim(s.substr(used)).size() != 0 || !std::isfinite(x)) bad(key, raw, "expected a finite number");
        return x;
    };
    const auto slash = v.find('/');
    if (slash == std::string::npos) return one(v);
    const double den = one(v.substr(slash + 1));
    if (den == 0.0) bad(key, raw, "zero denominator");
    return one(v.substr(0, slash)) / den;
}

inline long long parse_int(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    std::size_t used = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &used);
    } catch (const std::exception&) {
        bad(key, raw, "expected an integer");
    }
    if (used != v.size()) bad(key, raw, "expected an integer");
    return x;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    if (v.empty() || v[0] == '-') bad(key, raw, "expected a non-negative integer");
    std::size_t used = 0;
    unsigned long long x = 0;
    try {
        x = std::stoull(v, &used);
    } catch (const std::exception&) {
        bad(key, raw, "expected a non-negative integer");
    }
    if (used != v.size()) bad(key, raw, "expected a non-negative integer");
    return x;
}

inline bool parse_bool(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad(key, raw, "expected true/false");
}

inline std::vector<std::string> split_list(const std::string& raw) {
    std::vector<std::string> out;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename F>
auto parse_list(const std::string& key, const std::string& raw, F one) {
    std::vector<decltype(one(key, raw))> out;
    for (const auto& item : split_list(raw)) out.push_back(one(key, item));
    return out;
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F f) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ", ";
        out += f(xs[i]);
    }
    return out;
}

inline std::string attack_text(const AttackSpec& a) {
    std::string s = std::string(attack_name(a.kind)) + ":" + fmt(a.epsilon);
    if (a.kind == AttackKind::Pgd) s += ":" + std::to_string(a.steps) + ":" + fmt(a.alpha);
    if (a.kind == AttackKind::Gaussian) s += ":" + std::to_string(a.trials);
    return s;
}

/// kind:epsilon[:steps[:alpha]] for pgd, kind:sigma[:trials] for gaussian.
inline AttackSpec parse_attack_spec(const std::string& key, const std::string& raw) {
    std::vector<std::string> parts;
    std::stringstream ss(raw);
    std::string p;
    while (std::getline(ss, p, ':')) parts.push_back(trim(p));
    if (parts.size() < 2) bad(key, raw, "expected kind:epsilon[...]");
    const auto kind = parse_attack(parts[0]);
    if (!kind) bad(key, raw, "unknown attack kind '" + parts[0] + "'");
    AttackSpec a;
    a.kind = *kind;
    a.epsilon = parse_real(key, parts[1]);
    switch (a.kind) {
    case AttackKind::Fgsm:
        if (parts.size() != 2) bad(key, raw, "fgsm takes fgsm:epsilon");
        a.alpha = a.epsilon;
        a.steps = 1;
        break;
    case AttackKind::Pgd:
        if (parts.size() > 4) bad(key, raw, "pgd takes pgd:epsilon[:steps[:alpha]]");
        a.steps = parts.size() > 2 ? static_cast<int>(parse_int(key, parts[2])) : 20;
        a.alpha = parts.size() > 3 ? parse_real(key, parts[3]) : a.epsilon / 4.0;
        break;
    case AttackKind::Gaussian:
        if (parts.size() > 3) bad(key, raw, "gaussian takes gaussian:sigma[:trials]");
        a.trials = parts.size() > 2 ? static_cast<int>(parse_int(key, parts[2])) : 5;
        a.alpha = a.epsilon;
        break;
    }
    if (a.kind == AttackKind::Pgd && a.epsilon == 0.0) a.alpha = 0.0;
    try {
        a.validate();
    } catch (const Error& e) {
        bad(key, raw, e.what());
    }
    return a;
}

} // namespace cfg

// ---------------------------------------------------------------------------
// Loading

namespace detail {

using Ptree = boost::property_tree::ptree;

struct SectionReader {
    std::string section;
    const Ptree* tree = nullptr;
    std::set<std::string> seen;

    const Ptree::value_type* find(const std::string& key) {
        seen.insert(key);
        if (tree == nullptr) return nullptr;
        auto it = tree->find(key);
        return it == tree->not_found() ? nullptr : &*it;
    }

    template <typename F>
    void get(const std::string& key, F apply) {
        if (const auto* kv = find(key)) {
            const std::string full = section + "." + key;
            apply(full, kv->second.data());
        }
    }

    void finish() const {
        if (tree == nullptr) return;
        for (const auto& kv : *tree)
            if (!seen.count(kv.first))
                throw Error(Errc::Config, "unknown key '" + kv.first + "' in [" + section + "]");
    }
};

} // namespace detail

inline void validate(const ExperimentConfig& c) {
    require(!c.seeds.empty(), Errc::Config, "experiment.seeds must not be empty");
    require(c.workers >= 1, Errc::Config, "experiment.workers must be >= 1");
    const auto& d = c.dataset;
    require(d.source == "blobs" || d.source == "idx", Errc::Config,
            "dataset.source must be 'blobs' or 'idx', got '" + d.source + "'");
    if (d.source == "idx") {
        for (const auto* p : {&d.train_images, &d.train_labels, &d.test_images, &d.test_labels}) {
            require(!p->empty(), Errc::Config, "idx dataset needs train/test image and label paths");
            require(std::filesystem::exists(*p), Errc::Config, "dataset path not found: " + *p);
        }
    } else {
        require(d.blobs.num_classes >= 2 && d.blobs.input_dim >= 1 && d.blobs.n_per_class >= 2, Errc::Config,
                "blobs need >= 2 classes, input_dim >= 1, n_per_class >= 2");
        require(d.blobs.separation >= 0.0 && d.blobs.within_sigma > 0.0, Errc::Config,
                "blobs need separation >= 0 and within_sigma > 0");
    }
    c.train.validate();
    const int classes = d.source == "blobs" ? d.blobs.num_classes : c.train.num_classes;
    require(c.train.num_classes == classes, Errc::Config, "train.num_classes must match dataset.num_classes");
    require(c.train.feature_dim >= c.train.num_classes, Errc::Config, "train.feature_dim must be >= num_classes");
    for (int w : c.train.hidden) require(w >= 1, Errc::Config, "train.hidden widths must be >= 1");
    for (double r : c.sweep.noise_rates)
        require(r >= 0.0 && r <= 1.0, Errc::Config, "sweep.noise_rates must lie in [0,1]");
    require(!c.sweep.methods.empty(), Errc::Config, "sweep.methods must not be empty");
    for (const auto& m : c.sweep.methods)
        require(m == "ce" || parse_regularizer(m).has_value(), Errc::Config, "unknown method '" + m + "'");
    c.probe.base.validate();
    require(!c.probe.kinds.empty(), Errc::Config, "probe.kinds must not be empty");
    require(c.probe.retrieval_k >= 1, Errc::Config, "probe.retrieval_k must be >= 1");
    require(c.diagnostics.options.ccr_top_k >= 1 && c.diagnostics.options.spectrum_top_k >= 1, Errc::Config,
            "diagnostics top-k values must be >= 1");
    const auto& t = c.theory;
    require(t.trace_samples >= 1 && t.certified_trials >= 1, Errc::Config, "theory sample counts must be >= 1");
    require(t.tail_sigma2 > 0.0, Errc::Config, "theory.tail_sigma2 must be > 0");
    require(t.tail_trials >= kMinTailTrials, Errc::MinTrials,
            "theory.tail_trials must be >= " + std::to_string(kMinTailTrials));
}

/// Parses INI text. `base_dir` resolves relative paths named in the file.
inline ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
    detail::Ptree root;
    try {
        std::istringstream in(text);
        boost::property_tree::ini_parser::read_ini(in, root);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw Error(Errc::Config, std::string("config syntax: ") + e.what());
    }

    static const std::set<std::string> sections = {"experiment", "dataset", "train",       "sweep",
                                                   "probe",      "attacks", "diagnostics", "theory"};
    for (const auto& kv : root) {
        if (kv.second.empty() && !kv.second.data().empty())
            throw Error(Errc::Config, "key '" + kv.first + "' outside any section");
        require(sections.count(kv.first) > 0, Errc::Config, "unknown section [" + kv.first + "]");
    }
    auto section = [&](const std::string& name) {
        auto it = root.find(name);
        return detail::SectionReader{name, it == root.not_found() ? nullptr : &it->second, {}};
    };
    auto resolve = [&](const std::string& p) {
        if (p.empty() || base_dir.empty()) return p;
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? p : (base_dir / fp).string();
    };

    using namespace cfg;
    ExperimentConfig c;
    c.attacks.specs = default_attacks();

    auto ex = section("experiment");
    ex.get("output_dir", [&](auto&, auto& v) { c.output_dir = resolve(trim(v)); });
    ex.get("seeds", [&](auto& k, auto& v) { c.seeds = parse_list(k, v, parse_u64); });
    ex.get("workers", [&](auto& k, auto& v) { c.workers = static_cast<int>(parse_int(k, v)); });
    ex.get("checkpoint", [&](auto&, auto& v) { c.checkpoint = resolve(trim(v)); });
    ex.finish();

    auto ds = section("dataset");
    auto& b = c.dataset.blobs;
    ds.get("source", [&](auto&, auto& v) { c.dataset.source = trim(v); });
    ds.get("num_classes", [&](auto& k, auto& v) { b.num_classes = static_cast<int>(parse_int(k, v)); });
    ds.get("input_dim", [&](auto& k, auto& v) { b.input_dim = static_cast<int>(parse_int(k, v)); });
    ds.get("n_per_class", [&](auto& k, auto& v) { b.n_per_class = static_cast<int>(parse_int(k, v)); });
    ds.get("separation", [&](auto& k, auto& v) { b.separation = parse_real(k, v); });
    ds.get("within_sigma", [&](auto& k, auto& v) { b.within_sigma = parse_real(k, v); });
    ds.get("seed", [&](auto& k, auto& v) { b.seed = parse_u64(k, v); });
    ds.get("train_images", [&](auto&, auto& v) { c.dataset.train_images = resolve(trim(v)); });
    ds.get("train_labels", [&](auto&, auto& v) { c.dataset.train_labels = resolve(trim(v)); });
    ds.get("test_images", [&](auto&, auto& v) { c.dataset.test_images = resolve(trim(v)); });
    ds.get("test_labels", [&](auto&, auto& v) { c.dataset.test_labels = resolve(trim(v)); });
    ds.get("limit", [&](auto& k, auto& v) { c.dataset.limit = parse_int(k, v); });
    ds.finish();
    c.train.num_classes = b.num_classes;

    auto tr = section("train");
    auto& t = c.train;
    tr.get("lambda", [&](auto& k, auto& v) { t.lambda = parse_real(k, v); });
    tr.get("regularizer", [&](auto& k, auto& v) {
        const auto tag = parse_regularizer(trim(v));
        if (!tag) bad(k, v, "unknown regularizer");
        t.regularizer.tag = *tag;
    });
    tr.get("margin", [&](auto& k, auto& v) { t.regularizer.margin = parse_real(k, v); });
    tr.get("eps", [&](auto& k, auto& v) { t.regularizer.eps = parse_real(k, v); });
    tr.get("epochs", [&](auto& k, auto& v) { t.epochs = static_cast<int>(parse_int(k, v)); });
    tr.get("batch_size", [&](auto& k, auto& v) { t.batch_size = static_cast<int>(parse_int(k, v)); });
    tr.get("lr0", [&](auto& k, auto& v) { t.lr0 = parse_real(k, v); });
    tr.get("weight_decay", [&](auto& k, auto& v) { t.weight_decay = parse_real(k, v); });
    tr.get("noise_rate", [&](auto& k, auto& v) { t.noise_rate = parse_real(k, v); });
    tr.get("seed", [&](auto& k, auto& v) { t.seed = parse_u64(k, v); });
    tr.get("feature_dim", [&](auto& k, auto& v) { t.feature_dim = static_cast<int>(parse_int(k, v)); });
    tr.get("num_classes", [&](auto& k, auto& v) { t.num_classes = static_cast<int>(parse_int(k, v)); });
    tr.get("hidden", [&](auto& k, auto& v) {
        t.hidden.clear();
        for (long long w : parse_list(k, v, parse_int)) t.hidden.push_back(static_cast<int>(w));
    });
    tr.get("centroid_momentum", [&](auto& k, auto& v) { t.centroid_momentum = parse_real(k, v); });
    tr.finish();

    auto sw = section("sweep");
    sw.get("noise_rates", [&](auto& k, auto& v) { c.sweep.noise_rates = parse_list(k, v, parse_real); });
    sw.get("methods", [&](auto&, auto& v) { c.sweep.methods = split_list(v); });
    sw.finish();

    auto pr = section("probe");
    pr.get("kinds", [&](auto& k, auto& v) {
        c.probe.kinds.clear();
        for (const auto& s : split_list(v)) {
            const auto kind = parse_probe(s);
            if (!kind) bad(k, v, "unknown probe kind '" + s + "'");
            c.probe.kinds.push_back(*kind);
        }
    });
    pr.get("hidden", [&](auto& k, auto& v) { c.probe.base.hidden = static_cast<int>(parse_int(k, v)); });
    pr.get("epochs", [&](auto& k, auto& v) { c.probe.base.epochs = static_cast<int>(parse_int(k, v)); });
    pr.get("lr0", [&](auto& k, auto& v) { c.probe.base.lr0 = parse_real(k, v); });
    pr.get("batch_size", [&](auto& k, auto& v) { c.probe.base.batch_size = static_cast<int>(parse_int(k, v)); });
    pr.get("retrieval_k", [&](auto& k, auto& v) { c.probe.retrieval_k = static_cast<int>(parse_int(k, v)); });
    pr.finish();

    auto at = section("attacks");
    at.get("specs", [&](auto& k, auto& v) { c.attacks.specs = parse_list(k, v, parse_attack_spec); });
    at.finish();

    auto dg = section("diagnostics");
    dg.get("ccr_top_k", [&](auto& k, auto& v) { c.diagnostics.options.ccr_top_k = static_cast<int>(parse_int(k, v)); });
    dg.get("spectrum_top_k",
           [&](auto& k, auto& v) { c.diagnostics.options.spectrum_top_k = static_cast<int>(parse_int(k, v)); });
    dg.get("heatmap", [&](auto& k, auto& v) { c.diagnostics.heatmap = parse_bool(k, v); });
    dg.finish();

    auto th = section("theory");
    auto& y = c.theory;
    th.get("trace_dim", [&](auto& k, auto& v) { y.trace_dim = static_cast<int>(parse_int(k, v)); });
    th.get("trace_classes", [&](auto& k, auto& v) { y.trace_classes = static_cast<int>(parse_int(k, v)); });
    th.get("trace_samples", [&](auto& k, auto& v) { y.trace_samples = parse_int(k, v); });
    th.get("trace_tolerance", [&](auto& k, auto& v) { y.trace_tolerance = parse_real(k, v); });
    th.get("certified_dim", [&](auto& k, auto& v) { y.certified_dim = static_cast<int>(parse_int(k, v)); });
    th.get("certified_classes", [&](auto& k, auto& v) { y.certified_classes = static_cast<int>(parse_int(k, v)); });
    th.get("certified_trials", [&](auto& k, auto& v) { y.certified_trials = parse_int(k, v); });
    th.get("tail_dims", [&](auto& k, auto& v) {
        y.tail_dims.clear();
        for (long long d : parse_list(k, v, parse_int)) y.tail_dims.push_back(static_cast<int>(d));
    });
    th.get("tail_classes", [&](auto& k, auto& v) {
        y.tail_classes.clear();
        for (long long d : parse_list(k, v, parse_int)) y.tail_classes.push_back(static_cast<int>(d));
    });
    th.get("tail_ratios", [&](auto& k, auto& v) { y.tail_ratios = parse_list(k, v, parse_real); });
    th.get("tail_sigma2", [&](auto& k, auto& v) { y.tail_sigma2 = parse_real(k, v); });
    th.get("tail_trials", [&](auto& k, auto& v) { y.tail_trials = parse_int(k, v); });
    th.get("seed", [&](auto& k, auto& v) { y.seed = parse_u64(k, v); });
    th.finish();

    if (c.output_dir.empty()) {
        const char* env = std::getenv(kOutputDirEnv);
        c.output_dir = env != nullptr && *env != '\0' ? env : "ccar_out";
    }
    validate(c);
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), Errc::Config, "cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::filesystem::path(path).parent_path());
}

/// Applies the two permitted command-line overrides.
inline void apply_overrides(ExperimentConfig& c, const std::optional<std::uint64_t>& seed,
                            const std::optional<std::string>& output_dir) {
    if (seed) {
        c.seeds = {*seed};
        c.train.seed = *seed;
    }
    if (output_dir) c.output_dir = *output_dir;
}

/// Canonical INI echo of the effective configuration; re-parsing it yields
/// the same experiment.
inline std::string config_echo(const ExperimentConfig& c) {
    using cfg::fmt;
    using cfg::join;
    auto num = [](auto v) { return std::to_string(v); };
    std::ostringstream os;
    os << "[experiment]\n"
       << "output_dir = " << c.output_dir << "\n"
       << "seeds = " << join(c.seeds, num) << "\n"
       << "workers = " << c.workers << "\n";
    if (!c.checkpoint.empty()) os << "checkpoint = " << c.checkpoint << "\n";
    const auto& d = c.dataset;
    os << "\n[dataset]\nsource = " << d.source << "\n";
    if (d.source == "blobs") {
        os << "num_classes = " << d.blobs.num_classes << "\ninput_dim = " << d.blobs.input_dim
           << "\nn_per_class = " << d.blobs.n_per_class << "\nseparation = " << fmt(d.blobs.separation)
           << "\nwithin_sigma = " << fmt(d.blobs.within_sigma) << "\nseed = " << d.blobs.seed << "\n";
    } else {
        os << "train_images = " << d.train_images << "\ntrain_labels = " << d.train_labels
           << "\ntest_images = " << d.test_images << "\ntest_labels = " << d.test_labels << "\nlimit = " << d.limit
           << "\n";
    }
    const auto& t = c.train;
    os << "\n[train]\nlambda = " << fmt(t.lambda) << "\nregularizer = " << regularizer_name(t.regularizer.tag)
       << "\nmargin = " << fmt(t.regularizer.margin) << "\neps = " << fmt(t.regularizer.eps)
       << "\nepochs = " << t.epochs << "\nbatch_size = " << t.batch_size << "\nlr0 = " << fmt(t.lr0)
       << "\nweight_decay = " << fmt(t.weight_decay) << "\nnoise_rate = " << fmt(t.noise_rate)
       << "\nseed = " << t.seed << "\nfeature_dim = " << t.feature_dim << "\nnum_classes = " << t.num_classes
       << "\nhidden = " << join(t.hidden, num) << "\ncentroid_momentum = " << fmt(t.centroid_momentum) << "\n";
    os << "\n[sweep]\nnoise_rates = " << join(c.sweep.noise_rates, fmt)
       << "\nmethods = " << join(c.sweep.methods, [](const std::string& s) { return s; }) << "\n";
    os << "\n[probe]\nkinds = " << join(c.probe.kinds, [](ProbeKind k) { return std::string(probe_name(k)); })
       << "\nhidden = " << c.probe.base.hidden << "\nepochs = " << c.probe.base.epochs
       << "\nlr0 = " << fmt(c.probe.base.lr0) << "\nbatch_size = " << c.probe.base.batch_size
       << "\nretrieval_k = " << c.probe.retrieval_k << "\n";
    os << "\n[attacks]\nspecs = " << join(c.attacks.specs, cfg::attack_text) << "\n";
    os << "\n[diagnostics]\nccr_top_k = " << c.diagnostics.options.ccr_top_k
       << "\nspectrum_top_k = " << c.diagnostics.options.spectrum_top_k
       << "\nheatmap = " << (c.diagnostics.heatmap ? "true" : "false") << "\n";
    const auto& y = c.theory;
    os << "\n[theory]\ntrace_dim = " << y.trace_dim << "\ntrace_classes = " << y.trace_classes
       << "\ntrace_samples = " << y.trace_samples << "\ntrace_tolerance = " << fmt(y.trace_tolerance)
       << "\ncertified_dim = " << y.certified_dim << "\ncertified_classes = " << y.certified_classes
       << "\ncertified_trials = " << y.certified_trials << "\ntail_dims = " << join(y.tail_dims, num)
       << "\ntail_classes = " << join(y.tail_classes, num) << "\ntail_ratios = " << join(y.tail_ratios, fmt)
       << "\ntail_sigma2 = " << fmt(y.tail_sigma2) << "\ntail_trials = " << y.tail_trials << "\nseed = " << y.seed
       << "\n";
    return os.str();
}

} // namespace ccar
