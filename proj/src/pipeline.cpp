#include "stvsa/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string_view>

#include "stvsa/checkpoint.hpp"
#include "stvsa/errors.hpp"
#include "stvsa/gan.hpp"
#include "stvsa/metrics.hpp"
#include "stvsa/nn.hpp"
#include "stvsa/resample.hpp"
#include "stvsa/tensor.hpp"

namespace stvsa::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using ad::Tensor;

namespace {

constexpr const char* kManifestFile = "manifest.json";

std::uint64_t fnv1a_bytes(std::string_view s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ConfigError("manifest: malformed hash '" + s + "'");
    return v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

std::string fmt(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, p};
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, std::string_view text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
    out.flush();
    if (!out) throw ConfigError("cannot write " + p.string());
}

void write_json(const fs::path& p, const json& j) {
    write_file(p, j.dump(2) + "\n");
}

json parse_json(const fs::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::exception& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

// ---- config value parsing ----------------------------------------------

double to_double(const std::string& key, std::string_view raw) {
    raw = trim(raw);
    double v = 0.0;
    auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
    if (ec != std::errc{} || p != raw.data() + raw.size())
        throw ConfigError(key + ": expected a number, got '" + std::string(raw) +
                          "'");
    return v;
}

std::uint64_t to_u64(const std::string& key, std::string_view raw) {
    raw = trim(raw);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
    if (ec != std::errc{} || p != raw.data() + raw.size())
        throw ConfigError(key + ": expected a non-negative integer, got '" +
                          std::string(raw) + "'");
    return v;
}

std::size_t to_count(const std::string& key, std::string_view raw) {
    return static_cast<std::size_t>(to_u64(key, raw));
}

bool to_bool(const std::string& key, std::string_view raw) {
    auto t = trim(raw);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + std::string(t) +
                      "'");
}

std::vector<std::string> split_list(std::string_view raw) {
    std::vector<std::string> out;
    while (!raw.empty()) {
        auto comma = raw.find(',');
        out.emplace_back(trim(raw.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        raw.remove_prefix(comma + 1);
    }
    return out;
}

std::vector<double> to_double_list(const std::string& key,
                                   std::string_view raw) {
    std::vector<double> out;
    for (const auto& item : split_list(raw)) out.push_back(to_double(key, item));
    if (out.empty()) throw ConfigError(key + ": needs at least one value");
    return out;
}

// Accepts "none", a plain number, or the a:b ratio shorthand.
std::optional<double> to_ratio(const std::string& key, std::string_view raw) {
    auto t = trim(raw);
    if (t == "none") return std::nullopt;
    auto colon = t.find(':');
    if (colon == std::string_view::npos) return to_double(key, t);
    double num = to_double(key, t.substr(0, colon));
    double den = to_double(key, t.substr(colon + 1));
    if (!(den > 0.0)) throw ConfigError(key + ": ratio denominator must be > 0");
    return num / den;
}

std::optional<double> to_opt_double(const std::string& key,
                                    std::string_view raw) {
    if (trim(raw) == "none") return std::nullopt;
    return to_double(key, raw);
}

const std::set<std::string>& known_metrics() {
    static const std::set<std::string> k{"acc", "mcc", "f1",
                                         "gmean", "mis", "fal"};
    return k;
}

void apply_key(ExperimentConfig& c, const std::string& key,
               const std::string& value) {
    auto& d = c.dataset;
    auto& l = c.labeling;
    auto& b = c.balancing;
    auto& m = c.model;
    auto& e = c.evaluation;
    if (key == "seed") {
        c.seed = to_u64(key, value);
        c.seed_set = true;
    } else if (key == "dataset.load_levels") {
        d.load_levels = to_double_list(key, value);
    } else if (key == "dataset.motor_ratios") {
        d.motor_ratios = to_double_list(key, value);
    } else if (key == "dataset.fault_locations") {
        d.fault_locations = to_double_list(key, value);
    } else if (key == "dataset.clearing_times") {
        d.clearing_times = to_double_list(key, value);
    } else if (key == "dataset.target_count") {
        d.target_count = to_count(key, value);
    } else if (key == "dataset.buses") {
        d.buses = to_count(key, value);
    } else if (key == "dataset.otw") {
        d.otw = to_double(key, value);
    } else if (key == "dataset.test_fraction") {
        d.test_fraction = to_double(key, value);
    } else if (key == "dataset.imbalance_ratio") {
        d.imbalance_ratio = to_ratio(key, value);
    } else if (key == "dataset.snr_db") {
        d.snr_db = to_opt_double(key, value);
    } else if (key == "dataset.write_trajectories") {
        d.write_trajectories = to_bool(key, value);
    } else if (key == "labeling.stable_floor") {
        l.stable_floor = to_double(key, value);
    } else if (key == "labeling.unstable_ceiling") {
        l.unstable_ceiling = to_double(key, value);
    } else if (key == "labeling.fuzziness") {
        l.fuzziness = to_double(key, value);
    } else if (key == "labeling.tolerance") {
        l.tolerance = to_double(key, value);
    } else if (key == "labeling.max_iterations") {
        l.max_iterations = to_count(key, value);
    } else if (key == "balancing.method") {
        b.method = balance_method_from(std::string(trim(value)));
    } else if (key == "balancing.target_ratio") {
        b.target_ratio = to_double(key, value);
    } else if (key == "balancing.k") {
        b.k = to_count(key, value);
    } else if (key == "balancing.epochs") {
        b.epochs = to_count(key, value);
    } else if (key == "balancing.batch") {
        b.batch = to_count(key, value);
    } else if (key == "balancing.lambda") {
        b.lambda = to_double(key, value);
    } else if (key == "balancing.lr") {
        b.lr = to_double(key, value);
    } else if (key == "balancing.n_critic") {
        b.n_critic = to_count(key, value);
    } else if (key == "balancing.noise_dim") {
        b.noise_dim = to_count(key, value);
    } else if (key == "model.classifier") {
        m.classifier = classifier_from(std::string(trim(value)));
    } else if (key == "model.d_model") {
        m.d_model = to_count(key, value);
    } else if (key == "model.heads") {
        m.heads = to_count(key, value);
    } else if (key == "model.layers") {
        m.layers = to_count(key, value);
    } else if (key == "model.ffn_hidden") {
        m.ffn_hidden = to_count(key, value);
    } else if (key == "model.dropout") {
        m.dropout = to_double(key, value);
    } else if (key == "model.hidden") {
        m.hidden = to_count(key, value);
    } else if (key == "model.epochs") {
        m.epochs = to_count(key, value);
    } else if (key == "model.batch") {
        m.batch = to_count(key, value);
    } else if (key == "model.lr") {
        m.lr = to_double(key, value);
    } else if (key == "evaluation.metrics") {
        e.metrics = split_list(value);
        if (e.metrics.empty() || e.metrics.front().empty())
            throw ConfigError(key + ": needs at least one metric");
        for (const auto& name : e.metrics)
            if (!known_metrics().count(name))
                throw ConfigError(key + ": unknown metric '" + name + "'");
    } else if (key == "evaluation.latency_repeats") {
        e.latency_repeats = to_count(key, value);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

std::string join(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += fmt(v[i]);
    }
    return out;
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += v[i];
    }
    return out;
}

std::string opt_text(const std::optional<double>& v) {
    return v ? fmt(*v) : "none";
}

// ---- config validation shared by every stage ---------------------------

void validate(const ExperimentConfig& c) {
    if (!c.seed_set)
        throw ConfigError("a seed is required; set 'seed = N' or pass --seed");
    if (c.dataset.buses == 0) throw ConfigError("dataset.buses must be >= 1");
    if (c.dataset.imbalance_ratio && !(*c.dataset.imbalance_ratio >= 1.0))
        throw ConfigError("dataset.imbalance_ratio must be >= 1");
    if (!(c.labeling.fuzziness > 1.0))
        throw ConfigError("labeling.fuzziness must be > 1");
    if (!(c.labeling.tolerance > 0.0))
        throw ConfigError("labeling.tolerance must be > 0");
    if (c.labeling.max_iterations == 0)
        throw ConfigError("labeling.max_iterations must be >= 1");
    if (!(c.balancing.target_ratio > 0.0) || c.balancing.target_ratio > 1.0)
        throw ConfigError("balancing.target_ratio must lie in (0, 1]");
    if (c.balancing.k == 0 || c.balancing.epochs == 0 ||
        c.balancing.batch == 0 || c.balancing.n_critic == 0 ||
        c.balancing.noise_dim == 0)
        throw ConfigError("balancing counts must all be >= 1");
    if (!(c.balancing.lr > 0.0) || !(c.balancing.lambda >= 0.0))
        throw ConfigError("balancing.lr must be > 0 and lambda >= 0");
    if (c.model.d_model == 0 || c.model.heads == 0 || c.model.layers == 0 ||
        c.model.ffn_hidden == 0 || c.model.hidden == 0 ||
        c.model.epochs == 0 || c.model.batch == 0)
        throw ConfigError("model sizes and schedule must all be >= 1");
    if (c.model.d_model % c.model.heads != 0)
        throw ConfigError("model.d_model must be divisible by model.heads");
    if (!(c.model.lr > 0.0)) throw ConfigError("model.lr must be > 0");
    if (!(c.model.dropout >= 0.0) || c.model.dropout >= 1.0)
        throw ConfigError("model.dropout must lie in [0, 1)");
    if (c.evaluation.latency_repeats == 0)
        throw ConfigError("evaluation.latency_repeats must be >= 1");
}

sim::DatagenConfig to_datagen(const ExperimentConfig& c) {
    sim::DatagenConfig dc;
    dc.load_levels = c.dataset.load_levels;
    dc.motor_ratios = c.dataset.motor_ratios;
    dc.fault_locations = c.dataset.fault_locations;
    dc.clearing_times = c.dataset.clearing_times;
    dc.target_count = c.dataset.target_count;
    dc.otw = c.dataset.otw;
    dc.imbalance_ratio = c.dataset.imbalance_ratio;
    dc.test_fraction = c.dataset.test_fraction;
    dc.seed = c.seed;
    dc.rules.stable_floor = c.labeling.stable_floor;
    dc.rules.unstable_ceiling = c.labeling.unstable_ceiling;
    dc.sim.buses = c.dataset.buses;
    return dc;
}

// ---- manifest helpers ---------------------------------------------------

std::uint64_t hash_path(const fs::path& abs) {
    if (fs::is_directory(abs)) {
        std::vector<std::pair<std::string, std::uint64_t>> entries;
        for (const auto& f : fs::recursive_directory_iterator(abs))
            if (f.is_regular_file())
                entries.emplace_back(
                    f.path().lexically_relative(abs).generic_string(),
                    data::fnv1a_file(f.path()));
        std::sort(entries.begin(), entries.end());
        std::string acc;
        for (const auto& [name, h] : entries)
            acc += name + ':' + hex64(h) + '\n';
        return fnv1a_bytes(acc);
    }
    return data::fnv1a_file(abs);
}

void register_artifact(RunManifest& m, const fs::path& dir,
                       const std::string& name, const std::string& rel) {
    m.artifacts[name] = rel;
    m.artifact_hash[name] = hash_path(dir / rel);
}

void check_config(const RunManifest& m, const ExperimentConfig& cfg) {
    if (m.config_hash != config_hash(cfg))
        throw ConfigError(
            "the output directory holds results for a different "
            "configuration; rerun the simulate stage");
}

fs::path input_path(const RunManifest& m, const fs::path& dir,
                    const std::string& name, const std::string& stage_hint) {
    auto it = m.artifacts.find(name);
    if (it == m.artifacts.end() || !fs::exists(dir / it->second))
        throw ConfigError("no '" + name + "' artifact in " + dir.string() +
                          "; run the " + stage_hint + " stage first");
    return dir / it->second;
}

// Everything a pipeline stage may have produced; a fresh simulate wipes
// these so stale artifacts cannot outlive the manifest that listed them.
void clean_run_dir(const fs::path& out) {
    static const char* files[] = {
        kManifestFile,     "dataset.csv",   "norm.json",
        "build_log.txt",   "config.txt",    "labeled.csv",
        "sc_report.json",  "balanced.csv",  "distance_report.json",
        "gan_generator.ckpt", "model.ckpt", "loss.csv",
        "eval_report.json", "confusion.csv", "latency.json",
        "report.json"};
    for (const char* f : files) fs::remove(out / f);
    fs::remove_all(out / "trajectories");
}

class StageTimer {
public:
    double ms() const {
        return std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - t0_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point t0_ =
        std::chrono::steady_clock::now();
};

// ---- dataset helpers ----------------------------------------------------

std::vector<std::size_t> split_indices(const data::Dataset& d,
                                       std::string_view split) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < d.samples.size(); ++i)
        if (split.empty() || d.samples[i].split == split) idx.push_back(i);
    return idx;
}

Matrix features_of(const data::Dataset& d,
                   const std::vector<std::size_t>& idx) {
    Matrix m(idx.size(), d.feature_dim);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto& f = d.samples[idx[r]].features;
        std::copy(f.begin(), f.end(), m.v.begin() + r * d.feature_dim);
    }
    return m;
}

std::vector<int> labels_of(const data::Dataset& d,
                           const std::vector<std::size_t>& idx) {
    std::vector<int> y;
    y.reserve(idx.size());
    for (auto i : idx) y.push_back(d.samples[i].label);
    return y;
}

// ---- baseline classifiers ----------------------------------------------
// Two deliberately small reference models sharing the transformer's data
// path: a single-layer sigmoid recurrence and a 1-D convolution over the
// per-timestep channel blocks with mean pooling.

struct BaselineNet {
    ClassifierKind kind = ClassifierKind::recurrent;
    std::size_t input_dim = 0, seq_len = 0, hidden = 0, kernel = 1;
    nn::LinearLayer in_map;  // recurrent: input->hidden; conv: window->hidden
    Tensor wh;               // {hidden, hidden}, recurrent only
    nn::LinearLayer head;    // hidden -> 2
};

BaselineNet make_baseline(ClassifierKind kind, std::size_t input_dim,
                          std::size_t seq_len, std::size_t hidden,
                          std::mt19937_64& rng) {
    BaselineNet n;
    n.kind = kind;
    n.input_dim = input_dim;
    n.seq_len = seq_len;
    n.hidden = hidden;
    if (kind == ClassifierKind::recurrent) {
        n.in_map = nn::make_linear(input_dim, hidden, rng);
        n.wh = nn::make_linear(hidden, hidden, rng).weight;
    } else {
        n.kernel = std::min<std::size_t>(5, seq_len);
        n.in_map = nn::make_linear(n.kernel * input_dim, hidden, rng);
    }
    n.head = nn::make_linear(hidden, 2, rng);
    return n;
}

std::vector<std::pair<std::string, Tensor*>> baseline_parameters(
    BaselineNet& n) {
    std::vector<std::pair<std::string, Tensor*>> out{
        {"in.weight", &n.in_map.weight}, {"in.bias", &n.in_map.bias}};
    if (n.kind == ClassifierKind::recurrent)
        out.emplace_back("recur.weight", &n.wh);
    out.emplace_back("head.weight", &n.head.weight);
    out.emplace_back("head.bias", &n.head.bias);
    return out;
}

Tensor sigmoid(const Tensor& x) {
    auto one = Tensor::ones({x.rows(), x.cols()});
    return ad::div(one, ad::add(one, ad::exp(ad::neg(x))));
}

Tensor baseline_logits(const BaselineNet& n, const Tensor& batch) {
    if (n.kind == ClassifierKind::recurrent) {
        Tensor h = Tensor::zeros({batch.rows(), n.hidden});
        for (std::size_t t = 0; t < n.seq_len; ++t) {
            auto xt = ad::slice_cols(batch, t * n.input_dim, n.input_dim);
            h = sigmoid(ad::add(n.in_map.forward(xt), ad::matmul(h, n.wh)));
        }
        return n.head.forward(h);
    }
    const std::size_t npos = n.seq_len - n.kernel + 1;
    Tensor acc;
    for (std::size_t p = 0; p < npos; ++p) {
        auto win = ad::slice_cols(batch, p * n.input_dim,
                                  n.kernel * n.input_dim);
        auto a = ad::leaky_relu(n.in_map.forward(win), 0.01);
        acc = p == 0 ? a : ad::add(acc, a);
    }
    auto pooled =
        ad::mul(acc, Tensor::scalar(1.0 / static_cast<double>(npos)));
    return n.head.forward(pooled);
}

std::vector<double> train_baseline(BaselineNet& net, const Matrix& x,
                                   const std::vector<int>& y,
                                   const nn::TrainConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    nn::Adam opt(nn::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    std::vector<std::size_t> order(x.rows);
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> history;
    history.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < x.rows; start += cfg.batch) {
            const std::size_t bs = std::min(cfg.batch, x.rows - start);
            std::vector<double> bx(bs * x.cols);
            std::vector<int> by(bs);
            for (std::size_t i = 0; i < bs; ++i) {
                const std::size_t src = order[start + i];
                std::copy_n(
                    x.v.begin() + static_cast<std::ptrdiff_t>(src * x.cols),
                    x.cols,
                    bx.begin() + static_cast<std::ptrdiff_t>(i * x.cols));
                by[i] = y[src];
            }

            ad::Tape tape;
            auto step_net = net;
            auto named = baseline_parameters(step_net);
            std::vector<Tensor> leaves;
            leaves.reserve(named.size());
            for (auto& [name, p] : named) {
                *p = tape.leaf(*p);
                leaves.push_back(*p);
            }
            auto logits =
                baseline_logits(step_net, Tensor({bs, x.cols}, std::move(bx)));
            auto loss = nn::cross_entropy_loss(logits, by);
            epoch_loss += loss.value();
            ++batches;

            auto grads = tape.gradients(loss, leaves);
            auto live = baseline_parameters(net);
            opt.step(live, grads);
        }
        history.push_back(epoch_loss / static_cast<double>(batches));
    }
    return history;
}

std::vector<int> predict_baseline(const BaselineNet& net, const Matrix& x) {
    std::vector<int> out(x.rows);
    const std::size_t chunk = 256;
    for (std::size_t start = 0; start < x.rows; start += chunk) {
        const std::size_t bs = std::min(chunk, x.rows - start);
        std::vector<double> bx(
            x.v.begin() + static_cast<std::ptrdiff_t>(start * x.cols),
            x.v.begin() + static_cast<std::ptrdiff_t>((start + bs) * x.cols));
        auto logits = baseline_logits(net, Tensor({bs, x.cols}, std::move(bx)));
        for (std::size_t i = 0; i < bs; ++i)
            out[start + i] =
                logits.values()[i * 2 + 1] > logits.values()[i * 2] ? 1 : 0;
    }
    return out;
}

io::Checkpoint baseline_checkpoint(const BaselineNet& net) {
    io::Checkpoint ck;
    ck.kind = to_string(net.kind);
    ck.meta = {{"input_dim", net.input_dim},
               {"seq_len", net.seq_len},
               {"hidden", net.hidden},
               {"kernel", net.kernel}};
    auto& mut = const_cast<BaselineNet&>(net);
    for (auto& [name, p] : baseline_parameters(mut))
        ck.params.emplace_back(name, p->detached());
    return ck;
}

BaselineNet load_baseline(const io::Checkpoint& ck) {
    auto kind = classifier_from(ck.kind);
    std::mt19937_64 rng(0);  // shapes only; every value is overwritten below
    auto net = make_baseline(kind, ck.meta.at("input_dim").get<std::size_t>(),
                             ck.meta.at("seq_len").get<std::size_t>(),
                             ck.meta.at("hidden").get<std::size_t>(), rng);
    auto named = baseline_parameters(net);
    if (named.size() != ck.params.size())
        throw ConfigError("checkpoint: parameter count mismatch for kind '" +
                          ck.kind + "'");
    for (std::size_t i = 0; i < named.size(); ++i) {
        if (named[i].first != ck.params[i].first)
            throw ConfigError("checkpoint: unexpected parameter '" +
                              ck.params[i].first + "'");
        *named[i].second = ck.params[i].second.detached();
    }
    return net;
}

// ---- balancing ----------------------------------------------------------

struct BalanceArtifacts {
    data::Dataset balanced;
    std::optional<io::Checkpoint> generator;
    json distances;  // null unless a generative method ran
};

json distance_report(const ExperimentConfig& cfg, const data::Dataset& real,
                     const data::Dataset& balanced) {
    std::size_t n_st = data::count_label(real, data::label_stable);
    std::size_t n_un = data::count_label(real, data::label_unstable);
    const int minority =
        n_un <= n_st ? data::label_unstable : data::label_stable;

    std::vector<std::size_t> min_idx, gen_idx;
    for (std::size_t i = 0; i < real.samples.size(); ++i)
        if (real.samples[i].label == minority) min_idx.push_back(i);
    for (std::size_t i = 0; i < balanced.samples.size(); ++i)
        if (balanced.samples[i].synthetic) gen_idx.push_back(i);

    json rep{{"n_real_minority", min_idx.size()},
             {"n_generated", gen_idx.size()}};
    if (gen_idx.empty() || min_idx.size() < 2) {
        rep["wd"] = nullptr;
        rep["mmd"] = nullptr;
        rep["fid"] = nullptr;
        return rep;
    }

    // The exact matching behind WD is cubic, so both sides are subsampled
    // to a common bounded count with a seeded shuffle.
    std::mt19937_64 rng(cfg.seed ^ 0xd157a9ceULL);
    const std::size_t n =
        std::min({min_idx.size(), gen_idx.size(), std::size_t{256}});
    std::shuffle(min_idx.begin(), min_idx.end(), rng);
    std::shuffle(gen_idx.begin(), gen_idx.end(), rng);
    std::vector<std::size_t> min_n(min_idx.begin(), min_idx.begin() + n);
    std::vector<std::size_t> gen_n(gen_idx.begin(), gen_idx.begin() + n);
    auto real_m = features_of(real, min_n);
    auto gen_m = features_of(balanced, gen_n);

    double bw = metrics::median_pairwise_bandwidth(gen_m, real_m);
    rep["wd"] = metrics::wasserstein_empirical(gen_m, real_m);
    rep["mmd"] = metrics::mmd_rbf(gen_m, real_m, bw);
    rep["bandwidth"] = bw;

    auto real_all = features_of(real, min_idx);
    auto gen_all = features_of(balanced, gen_idx);
    rep["fid"] = metrics::fid_gaussian(gen_all, real_all);
    rep["n_matched"] = n;
    return rep;
}

BalanceArtifacts balance_artifacts(const ExperimentConfig& cfg,
                                   const data::Dataset& train) {
    for (const auto& s : train.samples)
        if (s.split != "train")
            throw ConfigError(
                "balancing is restricted to the training split; sample " +
                std::to_string(s.id) + " belongs to '" + s.split + "'");

    BalanceArtifacts out;
    switch (cfg.balancing.method) {
        case BalanceMethod::none:
            out.balanced = train;
            break;
        case BalanceMethod::ros:
        case BalanceMethod::smote:
        case BalanceMethod::adasyn: {
            resample::ResamplePlan plan;
            plan.method = cfg.balancing.method == BalanceMethod::ros
                              ? resample::Method::ros
                          : cfg.balancing.method == BalanceMethod::smote
                              ? resample::Method::smote
                              : resample::Method::adasyn;
            plan.k = cfg.balancing.k;
            plan.seed = cfg.seed ^ 0xba1a9cedULL;
            plan.target_ratio = cfg.balancing.target_ratio;
            out.balanced = resample::resample(train, plan);
            break;
        }
        case BalanceMethod::cwgan_gp: {
            gan::GanTrainConfig gc;
            gc.lambda = cfg.balancing.lambda;
            gc.lr = cfg.balancing.lr;
            gc.batch = cfg.balancing.batch;
            gc.n_critic = cfg.balancing.n_critic;
            gc.epochs = cfg.balancing.epochs;
            gc.noise_dim = cfg.balancing.noise_dim;
            gc.seed = cfg.seed ^ 0x9a41ab5ULL;
            auto res = gan::train_cwgan_gp(train, gc);
            out.balanced =
                gan::balance_dataset(res.generator, train,
                                     cfg.balancing.target_ratio,
                                     cfg.seed ^ 0xba1a9ce2ULL);
            out.generator = gan::generator_checkpoint(res.generator);
            out.distances = distance_report(cfg, train, out.balanced);
            break;
        }
    }
    return out;
}

// ---- evaluation helpers -------------------------------------------------

json metric_or_null(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

bool wants(const ExperimentConfig& cfg, std::string_view name) {
    for (const auto& m : cfg.evaluation.metrics)
        if (m == name) return true;
    return false;
}

struct LoadedModel {
    std::string kind;
    std::size_t expected_dim = 0;
    std::optional<nn::StaaTModel> staat;
    std::optional<BaselineNet> baseline;

    std::vector<int> predict(const Matrix& x) const {
        if (staat) return nn::predict(*staat, x);
        return predict_baseline(*baseline, x);
    }
};

LoadedModel load_model(const fs::path& path) {
    auto ck = io::load_checkpoint(path);
    LoadedModel m;
    m.kind = ck.kind;
    if (ck.kind == "staat") {
        m.staat = io::load_staat(path);
        m.expected_dim = m.staat->cfg.input_dim * m.staat->cfg.seq_len;
    } else {
        m.baseline = load_baseline(ck);
        m.expected_dim = m.baseline->input_dim * m.baseline->seq_len;
    }
    return m;
}

void mark_failed(const fs::path& out, RunManifest man,
                 const std::string& reason) {
    man.status = "failed: " + reason;
    save_manifest(out, man);
    throw NumericFault(reason);
}

}  // namespace

// ---- enum names ---------------------------------------------------------

BalanceMethod balance_method_from(const std::string& name) {
    if (name == "none") return BalanceMethod::none;
    if (name == "ros") return BalanceMethod::ros;
    if (name == "smote") return BalanceMethod::smote;
    if (name == "adasyn") return BalanceMethod::adasyn;
    if (name == "cwgan_gp") return BalanceMethod::cwgan_gp;
    throw ConfigError("unknown balancing method '" + name +
                      "'; choose none, ros, smote, adasyn or cwgan_gp");
}

std::string to_string(BalanceMethod m) {
    switch (m) {
        case BalanceMethod::none: return "none";
        case BalanceMethod::ros: return "ros";
        case BalanceMethod::smote: return "smote";
        case BalanceMethod::adasyn: return "adasyn";
        case BalanceMethod::cwgan_gp: return "cwgan_gp";
    }
    throw ContractError("unreachable balancing method");
}

ClassifierKind classifier_from(const std::string& name) {
    if (name == "staat") return ClassifierKind::staat;
    if (name == "recurrent") return ClassifierKind::recurrent;
    if (name == "conv") return ClassifierKind::conv;
    throw ConfigError("unknown classifier '" + name +
                      "'; choose staat, recurrent or conv");
}

std::string to_string(ClassifierKind k) {
    switch (k) {
        case ClassifierKind::staat: return "staat";
        case ClassifierKind::recurrent: return "recurrent";
        case ClassifierKind::conv: return "conv";
    }
    throw ContractError("unreachable classifier kind");
}

// ---- config -------------------------------------------------------------

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.resize(hash_pos);
        auto body = trim(line);
        if (body.empty()) continue;
        auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("expected 'key = value', got '" +
                              std::string(body) + "'");
        std::string key{trim(body.substr(0, eq))};
        std::string value{trim(body.substr(eq + 1))};
        if (key.empty())
            throw ConfigError("missing key before '=' in '" +
                              std::string(body) + "'");
        apply_key(cfg, key, value);
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    return parse_config_text(read_file(path));
}

std::string canonical_config_text(const ExperimentConfig& c) {
    std::string t;
    t += "seed = " + std::to_string(c.seed) + "\n";
    t += "dataset.load_levels = " + join(c.dataset.load_levels) + "\n";
    t += "dataset.motor_ratios = " + join(c.dataset.motor_ratios) + "\n";
    t += "dataset.fault_locations = " + join(c.dataset.fault_locations) + "\n";
    t += "dataset.clearing_times = " + join(c.dataset.clearing_times) + "\n";
    t += "dataset.target_count = " + std::to_string(c.dataset.target_count) +
         "\n";
    t += "dataset.buses = " + std::to_string(c.dataset.buses) + "\n";
    t += "dataset.otw = " + fmt(c.dataset.otw) + "\n";
    t += "dataset.test_fraction = " + fmt(c.dataset.test_fraction) + "\n";
    t += "dataset.imbalance_ratio = " + opt_text(c.dataset.imbalance_ratio) +
         "\n";
    t += "dataset.snr_db = " + opt_text(c.dataset.snr_db) + "\n";
    t += std::string("dataset.write_trajectories = ") +
         (c.dataset.write_trajectories ? "true" : "false") + "\n";
    t += "labeling.stable_floor = " + fmt(c.labeling.stable_floor) + "\n";
    t += "labeling.unstable_ceiling = " + fmt(c.labeling.unstable_ceiling) +
         "\n";
    t += "labeling.fuzziness = " + fmt(c.labeling.fuzziness) + "\n";
    t += "labeling.tolerance = " + fmt(c.labeling.tolerance) + "\n";
    t += "labeling.max_iterations = " +
         std::to_string(c.labeling.max_iterations) + "\n";
    t += "balancing.method = " + to_string(c.balancing.method) + "\n";
    t += "balancing.target_ratio = " + fmt(c.balancing.target_ratio) + "\n";
    t += "balancing.k = " + std::to_string(c.balancing.k) + "\n";
    t += "balancing.epochs = " + std::to_string(c.balancing.epochs) + "\n";
    t += "balancing.batch = " + std::to_string(c.balancing.batch) + "\n";
    t += "balancing.lambda = " + fmt(c.balancing.lambda) + "\n";
    t += "balancing.lr = " + fmt(c.balancing.lr) + "\n";
    t += "balancing.n_critic = " + std::to_string(c.balancing.n_critic) + "\n";
    t += "balancing.noise_dim = " + std::to_string(c.balancing.noise_dim) +
         "\n";
    t += "model.classifier = " + to_string(c.model.classifier) + "\n";
    t += "model.d_model = " + std::to_string(c.model.d_model) + "\n";
    t += "model.heads = " + std::to_string(c.model.heads) + "\n";
    t += "model.layers = " + std::to_string(c.model.layers) + "\n";
    t += "model.ffn_hidden = " + std::to_string(c.model.ffn_hidden) + "\n";
    t += "model.dropout = " + fmt(c.model.dropout) + "\n";
    t += "model.hidden = " + std::to_string(c.model.hidden) + "\n";
    t += "model.epochs = " + std::to_string(c.model.epochs) + "\n";
    t += "model.batch = " + std::to_string(c.model.batch) + "\n";
    t += "model.lr = " + fmt(c.model.lr) + "\n";
    t += "evaluation.metrics = " + join(c.evaluation.metrics) + "\n";
    t += "evaluation.latency_repeats = " +
         std::to_string(c.evaluation.latency_repeats) + "\n";
    return t;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    return fnv1a_bytes(canonical_config_text(cfg));
}

// ---- manifest -----------------------------------------------------------

RunManifest load_manifest(const std::filesystem::path& dir) {
    auto j = parse_json(dir / kManifestFile);
    RunManifest m;
    try {
        m.format_version = j.at("format_version").get<int>();
        if (m.format_version != 1)
            throw ConfigError("manifest: unsupported format version " +
                              std::to_string(m.format_version));
        m.config_hash = parse_hex64(j.at("config_hash").get<std::string>());
        m.status = j.at("status").get<std::string>();
        for (const auto& [k, v] : j.at("artifacts").items())
            m.artifacts[k] = v.get<std::string>();
        for (const auto& [k, v] : j.at("artifact_hash").items())
            m.artifact_hash[k] = parse_hex64(v.get<std::string>());
        for (const auto& [k, v] : j.at("timings_ms").items())
            m.timings_ms[k] = v.get<double>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("manifest: ") + e.what());
    }
    return m;
}

void save_manifest(const std::filesystem::path& dir, const RunManifest& m) {
    json hashes = json::object();
    for (const auto& [k, v] : m.artifact_hash) hashes[k] = hex64(v);
    json j{{"format_version", m.format_version},
           {"config_hash", hex64(m.config_hash)},
           {"status", m.status},
           {"artifacts", m.artifacts},
           {"artifact_hash", hashes},
           {"timings_ms", m.timings_ms}};
    write_json(dir / kManifestFile, j);
}

void verify_manifest(const std::filesystem::path& dir, const RunManifest& m) {
    for (const auto& [name, rel] : m.artifacts) {
        fs::path p = dir / rel;
        if (!fs::exists(p))
            throw ContractError("artifact '" + name + "' is missing: " +
                                p.string());
        auto it = m.artifact_hash.find(name);
        if (it == m.artifact_hash.end() || it->second != hash_path(p))
            throw ContractError("artifact '" + name +
                                "' does not match its recorded hash");
    }
}

void assert_no_synthetic_test(const data::Dataset& d) {
    for (const auto& s : d.samples)
        if (s.synthetic && s.split == "test")
            throw ContractError("synthetic sample " + std::to_string(s.id) +
                                " sits in the test split");
}

// ---- stages -------------------------------------------------------------

StageOutcome run_simulate(const ExperimentConfig& cfg,
                          const std::filesystem::path& out) {
    validate(cfg);
    StageTimer timer;
    fs::create_directories(out);
    clean_run_dir(out);

    auto build = sim::build_dataset(to_datagen(cfg));
    data::Dataset ds = std::move(build.dataset);
    sim::ChannelNorm norm = build.norm;

    if (cfg.dataset.snr_db) {
        // Noise enters the raw physical channels; the min-max map is then
        // refit on the noisy training rows so stored features stay in [0, 1].
        data::Dataset raw = ds;
        for (std::size_t i = 0; i < raw.samples.size(); ++i) {
            auto row = build.raw_features.row(i);
            raw.samples[i].features.assign(row.begin(), row.end());
        }
        auto noisy = sim::inject_noise(raw, *cfg.dataset.snr_db,
                                       cfg.dataset.buses,
                                       cfg.seed ^ 0x6e015edbULL);
        std::vector<bool> in_train(noisy.samples.size());
        Matrix m(noisy.samples.size(), noisy.feature_dim);
        for (std::size_t i = 0; i < noisy.samples.size(); ++i) {
            in_train[i] = noisy.samples[i].split == "train";
            const auto& f = noisy.samples[i].features;
            std::copy(f.begin(), f.end(), m.v.begin() + i * noisy.feature_dim);
        }
        norm = sim::fit_channel_norm(m, in_train, cfg.dataset.buses);
        for (auto& s : noisy.samples)
            s.features = sim::apply_channel_norm(norm, s.features,
                                                 cfg.dataset.buses);
        ds = std::move(noisy);
    }

    RunManifest man;
    man.config_hash = config_hash(cfg);

    data::save_csv(ds, out / "dataset.csv");
    register_artifact(man, out, "dataset", "dataset.csv");

    write_json(out / "norm.json", json{{"u_min", norm.u_min},
                                       {"u_max", norm.u_max},
                                       {"p_min", norm.p_min},
                                       {"p_max", norm.p_max},
                                       {"q_min", norm.q_min},
                                       {"q_max", norm.q_max}});
    register_artifact(man, out, "norm", "norm.json");

    std::string log;
    for (const auto& line : build.log) log += line + "\n";
    log += "samples: " + std::to_string(ds.samples.size()) + "\n";
    log += "excluded scenarios: " + std::to_string(build.failed_scenarios) +
           "\n";
    log += "unstable fraction: " + fmt(build.unstable_fraction) + "\n";
    log += "unlabeled fraction: " + fmt(build.unlabeled_fraction) + "\n";
    write_file(out / "build_log.txt", log);
    register_artifact(man, out, "build_log", "build_log.txt");

    write_file(out / "config.txt", canonical_config_text(cfg));
    register_artifact(man, out, "config", "config.txt");

    if (cfg.dataset.write_trajectories) {
        fs::create_directories(out / "trajectories");
        for (std::size_t i = 0; i < ds.samples.size(); ++i) {
            const auto& traj = build.trajectories[i];
            std::string csv = "t";
            for (std::size_t b = 0; b < traj.cols; ++b)
                csv += ",bus_" + std::to_string(b);
            csv += "\n";
            for (std::size_t r = 0; r < traj.rows; ++r) {
                csv += fmt(static_cast<double>(r + 1) / 100.0);
                for (std::size_t b = 0; b < traj.cols; ++b)
                    csv += "," + fmt(traj.at(r, b));
                csv += "\n";
            }
            write_file(out / "trajectories" /
                           ("scenario_" +
                            std::to_string(ds.samples[i].scenario_id) + ".csv"),
                       csv);
        }
        register_artifact(man, out, "trajectories", "trajectories");
    }

    StageOutcome outcome;
    if (build.unstable_fraction < 0.01 || build.unstable_fraction > 0.5)
        outcome.warnings.push_back(
            "unstable fraction " + fmt(build.unstable_fraction) +
            " lies outside [0.01, 0.5]; the scenario grid may be degenerate");
    if (build.unlabeled_fraction > 0.9)
        outcome.warnings.push_back(
            "unlabeled fraction " + fmt(build.unlabeled_fraction) +
            " exceeds 0.9; the label rules barely apply to this grid");

    man.timings_ms["simulate"] = timer.ms();
    save_manifest(out, man);
    return outcome;
}

StageOutcome run_label(const ExperimentConfig& cfg,
                       const std::filesystem::path& out) {
    validate(cfg);
    StageTimer timer;
    auto man = load_manifest(out);
    check_config(man, cfg);
    auto ds = data::load_csv(input_path(man, out, "dataset", "simulate"));
    assert_no_synthetic_test(ds);

    std::vector<sfcm::SeedLabel> seeds(ds.samples.size());
    std::size_t n_st = 0, n_un = 0;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        switch (ds.samples[i].label) {
            case data::label_stable:
                seeds[i] = sfcm::SeedLabel::stable;
                ++n_st;
                break;
            case data::label_unstable:
                seeds[i] = sfcm::SeedLabel::unstable;
                ++n_un;
                break;
            default:
                seeds[i] = sfcm::SeedLabel::unlabeled;
        }
    }
    if (n_st == 0 || n_un == 0)
        throw ConfigError(
            "fuzzy labeling needs rule-labeled seeds of both classes; got " +
            std::to_string(n_st) + " stable and " + std::to_string(n_un) +
            " unstable");

    auto all = split_indices(ds, {});
    auto x = features_of(ds, all);
    sfcm::SfcmParams params;
    params.fuzziness = cfg.labeling.fuzziness;
    params.tolerance = cfg.labeling.tolerance;
    params.max_iterations = cfg.labeling.max_iterations;
    auto fit = sfcm::sfcm_fit(x, seeds, params);
    auto hard = sfcm::harden(fit.u);

    data::Dataset labeled = ds;
    for (std::size_t i = 0; i < labeled.samples.size(); ++i)
        if (seeds[i] == sfcm::SeedLabel::unlabeled)
            labeled.samples[i].label = hard[i];

    // Both label sets are scored over the full population. The engineering
    // set is the crisp collapse dichotomy an operator would apply: a row is
    // unstable when the rules say collapse, stable otherwise, with no
    // abstain class.
    double sc_sfcm = metrics::silhouette(x, labels_of(labeled, all));
    std::vector<int> crisp(ds.samples.size(), data::label_stable);
    std::size_t n_rule = 0;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        if (seeds[i] == sfcm::SeedLabel::unstable)
            crisp[i] = data::label_unstable;
        if (seeds[i] != sfcm::SeedLabel::unlabeled) ++n_rule;
    }
    double sc_eng = metrics::silhouette(x, crisp);

    // The requested class ratio is re-imposed now that every row has a
    // label; the fuzzy pass may have shifted the class counts.
    if (cfg.dataset.imbalance_ratio)
        labeled = sim::enforce_ratio(labeled, *cfg.dataset.imbalance_ratio,
                                     cfg.seed ^ 0x1abe1edULL);

    data::save_csv(labeled, out / "labeled.csv");
    register_artifact(man, out, "labeled", "labeled.csv");

    write_json(out / "sc_report.json",
               json{{"sc_sfcm", sc_sfcm},
                    {"sc_engineering", sc_eng},
                    {"n_rule_labeled", n_rule},
                    {"n_total", ds.samples.size()},
                    {"iterations", fit.iterations},
                    {"converged", fit.converged}});
    register_artifact(man, out, "sc_report", "sc_report.json");

    StageOutcome outcome;
    if (sc_sfcm < sc_eng)
        outcome.warnings.push_back(
            "fuzzy labels score below the rule labels (SC " + fmt(sc_sfcm) +
            " vs " + fmt(sc_eng) + ")");
    man.timings_ms["label"] = timer.ms();
    save_manifest(out, man);
    return outcome;
}

data::Dataset balance_training_split(const ExperimentConfig& cfg,
                                     const data::Dataset& train_only,
                                     nlohmann::json* distance_out) {
    auto art = balance_artifacts(cfg, train_only);
    if (distance_out) *distance_out = art.distances;
    return art.balanced;
}

StageOutcome run_balance(const ExperimentConfig& cfg,
                         const std::filesystem::path& out) {
    validate(cfg);
    StageTimer timer;
    auto man = load_manifest(out);
    check_config(man, cfg);
    auto labeled_path = input_path(man, out, "labeled", "label");

    if (cfg.balancing.method == BalanceMethod::none) {
        fs::copy_file(labeled_path, out / "balanced.csv",
                      fs::copy_options::overwrite_existing);
        register_artifact(man, out, "balanced", "balanced.csv");
        man.timings_ms["balance"] = timer.ms();
        save_manifest(out, man);
        return {};
    }

    auto labeled = data::load_csv(labeled_path);
    assert_no_synthetic_test(labeled);

    data::Dataset train;
    train.feature_dim = labeled.feature_dim;
    std::vector<data::Sample> test_rows;
    for (const auto& s : labeled.samples)
        (s.split == "train" ? train.samples : test_rows).push_back(s);

    auto art = balance_artifacts(cfg, train);

    data::Dataset merged;
    merged.feature_dim = labeled.feature_dim;
    merged.samples = std::move(art.balanced.samples);
    merged.samples.insert(merged.samples.end(), test_rows.begin(),
                          test_rows.end());
    // Synthetic ids were assigned against the train subset alone and can
    // collide with test ids; renumber them against the merged set.
    std::int64_t next = 0;
    for (const auto& s : merged.samples)
        if (!s.synthetic) next = std::max(next, s.id + 1);
    for (auto& s : merged.samples)
        if (s.synthetic) s.id = next++;
    assert_no_synthetic_test(merged);

    data::save_csv(merged, out / "balanced.csv");
    register_artifact(man, out, "balanced", "balanced.csv");

    if (art.generator) {
        io::save_checkpoint(out / "gan_generator.ckpt", *art.generator);
        register_artifact(man, out, "gan_generator", "gan_generator.ckpt");
    }
    if (!art.distances.is_null()) {
        write_json(out / "distance_report.json", art.distances);
        register_artifact(man, out, "distance_report", "distance_report.json");
    }

    man.timings_ms["balance"] = timer.ms();
    save_manifest(out, man);
    return {};
}

StageOutcome run_train(const ExperimentConfig& cfg,
                       const std::filesystem::path& out) {
    validate(cfg);
    StageTimer timer;
    auto man = load_manifest(out);
    check_config(man, cfg);
    auto balanced = data::load_csv(input_path(man, out, "balanced", "balance"));
    assert_no_synthetic_test(balanced);

    auto train_idx = split_indices(balanced, "train");
    if (train_idx.empty()) throw ConfigError("no training rows to fit on");
    for (auto i : train_idx)
        if (balanced.samples[i].label != data::label_stable &&
            balanced.samples[i].label != data::label_unstable)
            throw ContractError("unlabeled sample " +
                                std::to_string(balanced.samples[i].id) +
                                " in the training split; run the label stage");
    auto x = features_of(balanced, train_idx);
    auto y = labels_of(balanced, train_idx);
    for (double v : x.v)
        if (!std::isfinite(v))
            mark_failed(out, man, "non-finite feature in the training data");

    const std::size_t in_dim = 3 * cfg.dataset.buses;
    if (balanced.feature_dim % in_dim != 0)
        throw ShapeError("feature dim " + std::to_string(balanced.feature_dim) +
                         " is not a multiple of the per-step width " +
                         std::to_string(in_dim));
    const std::size_t seq = balanced.feature_dim / in_dim;

    nn::TrainConfig tc;
    tc.epochs = cfg.model.epochs;
    tc.batch = cfg.model.batch;
    tc.lr = cfg.model.lr;
    tc.seed = cfg.seed ^ 0x7a11ab5dULL;

    std::vector<double> losses;
    if (cfg.model.classifier == ClassifierKind::staat) {
        nn::StaaTConfig sc;
        sc.input_dim = in_dim;
        sc.seq_len = seq;
        sc.d_model = cfg.model.d_model;
        sc.heads = cfg.model.heads;
        sc.encoder_layers = cfg.model.layers;
        sc.ffn_hidden = cfg.model.ffn_hidden;
        sc.dropout = cfg.model.dropout;
        std::mt19937_64 rng(cfg.seed ^ 0x57aa70f0ULL);
        auto model = nn::make_staat(sc, rng);
        losses = nn::train_classifier(model, x, y, tc);
        for (std::size_t e = 0; e < losses.size(); ++e)
            if (!std::isfinite(losses[e]))
                mark_failed(out, man, "non-finite training loss at epoch " +
                                          std::to_string(e + 1));
        io::save_staat(out / "model.ckpt", model);
    } else {
        std::mt19937_64 rng(cfg.seed ^ 0x57aa70f0ULL);
        auto net = make_baseline(cfg.model.classifier, in_dim, seq,
                                 cfg.model.hidden, rng);
        losses = train_baseline(net, x, y, tc);
        for (std::size_t e = 0; e < losses.size(); ++e)
            if (!std::isfinite(losses[e]))
                mark_failed(out, man, "non-finite training loss at epoch " +
                                          std::to_string(e + 1));
        io::save_checkpoint(out / "model.ckpt", baseline_checkpoint(net));
    }
    register_artifact(man, out, "model", "model.ckpt");

    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < losses.size(); ++e)
        csv += std::to_string(e + 1) + "," + fmt(losses[e]) + "\n";
    write_file(out / "loss.csv", csv);
    register_artifact(man, out, "loss", "loss.csv");

    man.status = "ok";
    man.timings_ms["train"] = timer.ms();
    save_manifest(out, man);
    return {};
}

StageOutcome run_evaluate(const ExperimentConfig& cfg,
                          const std::filesystem::path& out) {
    validate(cfg);
    StageTimer timer;
    auto man = load_manifest(out);
    check_config(man, cfg);

    // Balanced data when the balance stage ran, labeled data otherwise; the
    // test rows are identical either way since balancing never touches them.
    fs::path data_path;
    if (man.artifacts.count("balanced"))
        data_path = input_path(man, out, "balanced", "balance");
    else
        data_path = input_path(man, out, "labeled", "label");
    auto ds = data::load_csv(data_path);
    assert_no_synthetic_test(ds);

    fs::path model_path = man.artifacts.count("model")
                              ? input_path(man, out, "model", "train")
                              : out / "model.ckpt";
    if (!fs::exists(model_path))
        throw ConfigError("no model checkpoint in " + out.string() +
                          "; run the train stage first");
    auto model = load_model(model_path);
    if (model.kind != to_string(cfg.model.classifier))
        throw ConfigError("checkpoint holds a '" + model.kind +
                          "' model but the config asks for '" +
                          to_string(cfg.model.classifier) + "'");
    if (model.expected_dim != ds.feature_dim)
        throw ShapeError(
            "model checkpoint expects " + std::to_string(model.expected_dim) +
            " feature values per sample but the dataset provides " +
            std::to_string(ds.feature_dim) +
            "; observation window and bus count must match the training run");

    auto test_idx = split_indices(ds, "test");
    auto train_idx = split_indices(ds, "train");
    if (test_idx.empty()) throw ConfigError("no test rows to evaluate on");
    auto x_test = features_of(ds, test_idx);
    auto y_test = labels_of(ds, test_idx);
    auto x_train = features_of(ds, train_idx);
    auto y_train = labels_of(ds, train_idx);

    auto pred = model.predict(x_test);
    metrics::ConfusionMatrix cm;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == 0)
            (y_test[i] == 0 ? cm.n_ss : cm.n_su) += 1;
        else
            (y_test[i] == 0 ? cm.n_us : cm.n_uu) += 1;
    }
    auto mets = metrics::classification_metrics(cm);

    auto train_pred = model.predict(x_train);
    std::size_t train_hits = 0;
    for (std::size_t i = 0; i < train_pred.size(); ++i)
        if (train_pred[i] == y_train[i]) ++train_hits;
    double train_acc = train_idx.empty()
                           ? 0.0
                           : static_cast<double>(train_hits) /
                                 static_cast<double>(train_idx.size());

    json rep{{"classifier", model.kind},
             {"acc", mets.acc},
             {"mis", mets.mis},
             {"fal", mets.fal},
             {"confusion",
              json{{"predicted_stable_actual_stable", cm.n_ss},
                   {"predicted_stable_actual_unstable", cm.n_su},
                   {"predicted_unstable_actual_stable", cm.n_us},
                   {"predicted_unstable_actual_unstable", cm.n_uu}}},
             {"n_test", test_idx.size()},
             {"n_train", train_idx.size()},
             {"train_acc", train_acc}};
    if (wants(cfg, "mcc")) rep["mcc"] = metric_or_null(mets.mcc);
    if (wants(cfg, "f1")) rep["f1"] = metric_or_null(mets.f1);
    if (wants(cfg, "gmean")) rep["gmean"] = metric_or_null(mets.gmean);
    write_json(out / "eval_report.json", rep);
    register_artifact(man, out, "eval_report", "eval_report.json");

    std::string csv = "predicted,actual,count\n";
    csv += "stable,stable," + std::to_string(cm.n_ss) + "\n";
    csv += "stable,unstable," + std::to_string(cm.n_su) + "\n";
    csv += "unstable,stable," + std::to_string(cm.n_us) + "\n";
    csv += "unstable,unstable," + std::to_string(cm.n_uu) + "\n";
    write_file(out / "confusion.csv", csv);
    register_artifact(man, out, "confusion", "confusion.csv");

    StageTimer lat;
    for (std::size_t r = 0; r < cfg.evaluation.latency_repeats; ++r)
        (void)model.predict(x_test);
    double per_sample =
        lat.ms() / static_cast<double>(cfg.evaluation.latency_repeats *
                                       test_idx.size());
    write_json(out / "latency.json",
               json{{"latency_ms_per_sample", per_sample},
                    {"repeats", cfg.evaluation.latency_repeats},
                    {"n_test", test_idx.size()}});
    register_artifact(man, out, "latency", "latency.json");

    man.timings_ms["evaluate"] = timer.ms();
    save_manifest(out, man);
    return {};
}

// ---- sweep and report ---------------------------------------------------

namespace {

ExperimentConfig derive_row(const ExperimentConfig& base,
                            const std::string& axis,
                            const std::string& value) {
    ExperimentConfig c = base;
    if (axis == "imbalance")
        c.dataset.imbalance_ratio = to_ratio("imbalance", value);
    else if (axis == "otw")
        c.dataset.otw = to_double("otw", value);
    else if (axis == "snr")
        c.dataset.snr_db = to_opt_double("snr", value);
    else if (axis == "resampler")
        c.balancing.method = balance_method_from(value);
    else if (axis == "classifier")
        c.model.classifier = classifier_from(value);
    else
        throw ConfigError("unknown sweep axis '" + axis +
                          "'; choose imbalance, otw, snr, resampler or "
                          "classifier");
    return c;
}

std::string sanitize(const std::string& v) {
    std::string out;
    for (char c : v)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
                c == '-' || c == '_')
                   ? c
                   : '-';
    return out;
}

bool row_complete(const ExperimentConfig& c, const fs::path& dir,
                  json* report) {
    try {
        auto m = load_manifest(dir);
        if (m.config_hash != config_hash(c) || m.status != "ok") return false;
        if (!m.artifacts.count("eval_report")) return false;
        verify_manifest(dir, m);
        *report = parse_json(dir / m.artifacts.at("eval_report"));
        return true;
    } catch (...) {
        return false;
    }
}

std::string csv_metric(const json& rep, const char* key) {
    if (!rep.contains(key) || rep.at(key).is_null()) return "";
    return fmt(rep.at(key).get<double>());
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& base, const std::string& axis,
                      const std::vector<std::string>& values,
                      const std::filesystem::path& out) {
    validate(base);
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    fs::create_directories(out);

    SweepResult res;
    for (const auto& value : values) {
        auto cfg = derive_row(base, axis, value);
        fs::path dir = out / (axis + "_" + sanitize(value));
        SweepRow row;
        row.value = value;
        if (row_complete(cfg, dir, &row.report)) {
            row.ok = true;
            row.skipped = true;
        } else {
            try {
                run_simulate(cfg, dir);
                run_label(cfg, dir);
                run_balance(cfg, dir);
                run_train(cfg, dir);
                run_evaluate(cfg, dir);
                auto man = load_manifest(dir);
                row.report = parse_json(dir / man.artifacts.at("eval_report"));
                row.ok = true;
            } catch (const std::exception& e) {
                row.ok = false;
                row.error = e.what();
                res.any_failed = true;
            }
        }
        res.rows.push_back(std::move(row));
    }

    std::string csv = "axis,value,status,acc,mcc,f1,gmean,mis,fal,error\n";
    for (const auto& row : res.rows) {
        std::string error = row.error;
        std::replace(error.begin(), error.end(), '"', '\'');
        std::replace(error.begin(), error.end(), '\n', ' ');
        csv += axis + "," + row.value + "," + (row.ok ? "ok" : "failed") + ",";
        csv += csv_metric(row.report, "acc") + ",";
        csv += csv_metric(row.report, "mcc") + ",";
        csv += csv_metric(row.report, "f1") + ",";
        csv += csv_metric(row.report, "gmean") + ",";
        csv += csv_metric(row.report, "mis") + ",";
        csv += csv_metric(row.report, "fal") + ",";
        csv += error.empty() ? "" : "\"" + error + "\"";
        csv += "\n";
    }
    write_file(out / ("sweep_" + axis + ".csv"), csv);
    return res;
}

nlohmann::json run_report(const std::filesystem::path& out) {
    auto man = load_manifest(out);
    verify_manifest(out, man);
    json rep{{"format_version", man.format_version},
             {"config_hash", hex64(man.config_hash)},
             {"status", man.status},
             {"timings_ms", man.timings_ms},
             {"artifacts", man.artifacts}};
    const std::pair<const char*, const char*> embeds[] = {
        {"eval", "eval_report"},
        {"silhouette", "sc_report"},
        {"distances", "distance_report"},
        {"latency", "latency"}};
    for (const auto& [key, name] : embeds)
        if (man.artifacts.count(name))
            rep[key] = parse_json(out / man.artifacts.at(name));
    write_json(out / "report.json", rep);
    return rep;
}

}  // namespace stvsa::pipeline
