#include "kgcrs/eval.hpp"

#include "kgcrs/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

namespace kgcrs {

namespace {

void check_args(std::span<const int> gold, int k) {
    if (k < 1) throw Error("metric: k must be >= 1");
    if (gold.empty()) throw Error("metric: empty gold set");
}

bool contains(std::span<const int> gold, int item) { return std::find(gold.begin(), gold.end(), item) != gold.end(); }

std::size_t cutoff(std::span<const int> ranked, int k) {
    return std::min(ranked.size(), static_cast<std::size_t>(k));
}

std::vector<std::vector<std::string>> ngrams(const std::string& text, int n) {
    const auto w = words(text);
    std::vector<std::vector<std::string>> out;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= w.size(); ++i) {
        out.emplace_back(w.begin() + static_cast<std::ptrdiff_t>(i), w.begin() + static_cast<std::ptrdiff_t>(i) + n);
    }
    return out;
}

std::string backbone_key(const RunConfig& cfg) {
    nlohmann::json j = cfg.to_json();
    return nlohmann::json{{"encoder", j["encoder"]}, {"backbone", j["backbone"]}, {"init", cfg.seeds.init},
                          {"split", cfg.seeds.split}}
        .dump();
}

std::string format_number(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << std::fixed << v;
    return os.str();
}

}  // namespace

std::vector<int> rank_items(const Eigen::Ref<const Eigen::RowVectorXd>& scores) {
    std::vector<int> idx(static_cast<std::size_t>(scores.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores(a) > scores(b); });
    return idx;
}

double recall_at_k(std::span<const int> ranked, std::span<const int> gold, int k) {
    check_args(gold, k);
    std::set<int> g(gold.begin(), gold.end());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < cutoff(ranked, k); ++i) hits += g.count(ranked[i]);
    return static_cast<double>(hits) / static_cast<double>(g.size());
}

double ndcg_at_k(std::span<const int> ranked, std::span<const int> gold, int k) {
    check_args(gold, k);
    std::set<int> g(gold.begin(), gold.end());
    double dcg = 0.0;
    for (std::size_t i = 0; i < cutoff(ranked, k); ++i) {
        if (g.count(ranked[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    double idcg = 0.0;
    const auto ideal = std::min(g.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return dcg / idcg;
}

double mrr_at_k(std::span<const int> ranked, std::span<const int> gold, int k) {
    check_args(gold, k);
    for (std::size_t i = 0; i < cutoff(ranked, k); ++i) {
        if (contains(gold, ranked[i])) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
}

std::vector<std::string> words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

double distinct_n(std::span<const std::string> responses, int n) {
    if (n < 1) throw Error("distinct_n: n must be >= 1");
    std::set<std::vector<std::string>> unique;
    std::size_t total = 0;
    for (const auto& r : responses) {
        for (auto& g : ngrams(r, n)) {
            unique.insert(std::move(g));
            ++total;
        }
    }
    if (total == 0) {
        std::cerr << "warning: distinct_n: no response has " << n << " words, returning 0\n";
        return 0.0;
    }
    return static_cast<double>(unique.size()) / static_cast<double>(total);
}

double distinct_n_per_response(std::span<const std::string> responses, int n) {
    if (n < 1) throw Error("distinct_n: n must be >= 1");
    double sum = 0.0;
    int counted = 0;
    for (const auto& r : responses) {
        auto g = ngrams(r, n);
        if (g.empty()) continue;
        std::set<std::vector<std::string>> unique(g.begin(), g.end());
        sum += static_cast<double>(unique.size()) / static_cast<double>(g.size());
        ++counted;
    }
    if (counted == 0) {
        std::cerr << "warning: distinct_n: no response has " << n << " words, returning 0\n";
        return 0.0;
    }
    return sum / counted;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    j["split"] = split;
    j["task"] = to_string(task);
    j["metrics"] = metrics;
    j["counts"] = counts;
    j["seed"] = seed;
    j["input_hash"] = input_hash;
    j["config"] = config;
    return j;
}

std::string MetricsReport::dump() const { return to_json().dump(2) + "\n"; }

MetricsReport evaluate(CrsModel& model, std::span<const PreparedExample> examples, Task task,
                       const std::string& split_name) {
    const auto& cfg = model.config();
    MetricsReport r;
    r.split = split_name;
    r.task = task;
    r.config = cfg.to_json();
    r.seed = cfg.seeds.init;
    r.counts["examples"] = static_cast<long>(examples.size());
    const auto graph_emb = model.frozen_graph_embeddings();

    if (task == Task::rec) {
        static constexpr std::array<int, 3> ks{1, 10, 50};
        std::map<std::string, double> sums;
        long n = 0;
        for (const auto& ex : examples) {
            if (ex.targets.empty()) continue;
            auto out = model.infer_recommendation(ex, graph_emb, cfg.eval.rec_response_source,
                                                  cfg.eval.max_new_tokens, cfg.variant);
            const auto ranked = rank_items(out.scores.value().row(0));
            for (int k : ks) {
                const auto suffix = "@" + std::to_string(k);
                sums["recall" + suffix] += recall_at_k(ranked, ex.targets, k);
                if (k == 1) continue;
                sums["ndcg" + suffix] += ndcg_at_k(ranked, ex.targets, k);
                sums["mrr" + suffix] += mrr_at_k(ranked, ex.targets, k);
            }
            ++n;
        }
        r.counts["rec_examples"] = n;
        for (const auto& [name, s] : sums) r.metrics[name] = n > 0 ? s / static_cast<double>(n) : 0.0;
        if (n == 0) {
            for (const char* m : {"recall@1", "recall@10", "recall@50", "ndcg@10", "ndcg@50", "mrr@10", "mrr@50"}) {
                r.metrics[m] = 0.0;
            }
        }
        return r;
    }

    std::vector<std::string> generated;
    double nll = 0.0;
    long tokens = 0;
    ForwardOptions opt;
    opt.stage = Stage::two;
    opt.task = Task::conv;
    opt.variant = cfg.variant;
    for (const auto& ex : examples) {
        auto gen = model.infer_generation(ex, graph_emb, cfg.eval.max_new_tokens, cfg.variant);
        generated.push_back(gen.text);
        NoGradGuard guard(model.params());
        const PreparedExample* one[] = {&ex};
        nll += model.forward_batch(one, opt).conv.scalar();
        tokens += static_cast<long>(ex.response_tokens.size()) + 1;
    }
    const bool pooled = cfg.eval.distinct_mode == "corpus";
    for (int n : {2, 3, 4}) {
        r.metrics["distinct-" + std::to_string(n)] =
            pooled ? distinct_n(generated, n) : distinct_n_per_response(generated, n);
    }
    r.metrics["conv_nll_per_token"] = tokens > 0 ? nll / static_cast<double>(tokens) : 0.0;
    r.counts["generated_tokens"] = 0;
    for (const auto& g : generated) r.counts["generated_tokens"] += static_cast<long>(words(g).size());
    return r;
}

void prepare_backbone(CrsModel& model, const Dataset& data, std::span<const PreparedExample> train,
                      BackboneCache* cache, std::vector<nlohmann::json>* log) {
    const auto& cfg = model.config();
    const std::array<Group, 1> plm{Group::plm};
    if (!cfg.encoder.pretrained.empty()) {
        const auto vocab = CrsModel::load_vocab(cfg.encoder.pretrained);
        if (vocab.serialize() != model.vocab().serialize()) {
            throw Error("pretrained backbone at " + cfg.encoder.pretrained + " uses a different vocabulary");
        }
        model.load_groups(cfg.encoder.pretrained, plm);
        return;
    }
    const auto key = backbone_key(cfg) + data.input_hash;
    if (cache) {
        auto it = cache->plm.find(key);
        if (it != cache->plm.end()) {
            model.params().deserialize(Group::plm, it->second);
            model.clear_caches();
            return;
        }
    }
    pretrain_backbone(model, train, log);
    if (cache) cache->plm[key] = model.params().serialize(Group::plm);
}

ExperimentResult run_experiment(const RunConfig& cfg, const Dataset& data, BackboneCache* cache) {
    CrsModel model(cfg, data.graph, build_vocabulary(data));
    const auto train = model.prepare_all(data.train);
    const auto valid = model.prepare_all(data.valid);
    const auto test = model.prepare_all(data.test);
    ExperimentResult out;
    prepare_backbone(model, data, train, cache, nullptr);
    out.training = train_two_stage(model, train, valid);
    out.report = evaluate(model, test, cfg.task, "test");
    out.report.input_hash = data.input_hash;
    return out;
}

VariantConfig variant_from_name(std::string_view name) {
    VariantConfig v;
    if (name == "full") return v;
    if (name == "-tree") {
        v.tree = false;
    } else if (name == "-user") {
        v.user = false;
    } else if (name == "-align") {
        v.align = false;
    } else if (name == "-all") {
        v = {false, false, false};
    } else {
        throw Error("unknown variant '" + std::string(name) + "'");
    }
    return v;
}

std::pair<double, double> AblationReport::summary(const std::string& variant, const std::string& metric) const {
    const auto& rs = runs.at(variant);
    if (rs.empty()) throw Error("ablation: no runs for " + variant);
    std::vector<double> xs;
    for (const auto& r : rs) xs.push_back(r.metrics.at(metric));
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

std::vector<std::string> AblationReport::metric_names() const {
    std::vector<std::string> names;
    if (runs.empty() || runs.begin()->second.empty()) return names;
    for (const auto& [k, v] : runs.begin()->second.front().metrics) names.push_back(k);
    return names;
}

nlohmann::json AblationReport::to_json() const {
    nlohmann::json j;
    j["seeds"] = seeds;
    j["variants"] = variants;
    j["config"] = base_config;
    for (const auto& v : variants) {
        nlohmann::json entry;
        for (const auto& m : metric_names()) {
            auto [mean, se] = summary(v, m);
            entry["mean"][m] = mean;
            entry["stderr"][m] = se;
        }
        for (const auto& r : runs.at(v)) entry["runs"].push_back({{"seed", r.seed}, {"metrics", r.metrics}});
        j["results"][v] = entry;
    }
    return j;
}

std::string AblationReport::to_tsv() const {
    std::ostringstream os;
    const auto names = metric_names();
    os << "variant";
    for (const auto& m : names) os << '\t' << m << '\t' << m << "_se";
    os << '\n';
    for (const auto& v : variants) {
        os << v;
        for (const auto& m : names) {
            auto [mean, se] = summary(v, m);
            os << '\t' << format_number(mean) << '\t' << format_number(se);
        }
        os << '\n';
    }
    return os.str();
}

AblationReport run_ablation(const RunConfig& base, const Dataset& data, std::span<const std::uint64_t> seeds) {
    if (seeds.empty()) throw Error("run_ablation: no seeds");
    AblationReport rep;
    rep.base_config = base.to_json();
    rep.seeds.assign(seeds.begin(), seeds.end());
    BackboneCache cache;
    for (auto name : kVariantNames) rep.variants.emplace_back(name);
    for (auto seed : seeds) {
        for (const auto& name : rep.variants) {
            RunConfig cfg = base;
            cfg.variant = variant_from_name(name);
            cfg.seeds.init = seed;
            cfg.seeds.shuffle = base.seeds.shuffle + seed;
            rep.runs[name].push_back(run_experiment(cfg, data, &cache).report);
        }
    }
    return rep;
}

RunConfig apply_axis(const RunConfig& base, std::string_view axis, double value) {
    RunConfig cfg = base;
    auto as_int = [&](const char* what) {
        if (value != std::floor(value)) throw ConfigError(std::string(what) + " sweep values must be integers");
        return static_cast<int>(value);
    };
    if (axis == "tree_depth") {
        cfg.tree.depth = as_int("tree_depth");
    } else if (axis == "tree_degree") {
        cfg.tree.degree = as_int("tree_degree");
    } else if (axis == "alpha") {
        cfg.loss.alpha = value;
    } else if (axis == "beta") {
        cfg.loss.beta = value;
    } else {
        throw ConfigError("unknown sweep axis '" + std::string(axis) + "'");
    }
    cfg.validate();
    return cfg;
}

nlohmann::json SweepReport::to_json() const {
    nlohmann::json j;
    j["axis"] = axis;
    j["config"] = base_config;
    for (std::size_t i = 0; i < values.size(); ++i) {
        j["results"].push_back({{"value", values[i]}, {"metrics", runs[i].metrics}, {"counts", runs[i].counts}});
    }
    return j;
}

std::string SweepReport::to_tsv() const {
    std::ostringstream os;
    os << axis;
    if (!runs.empty()) {
        for (const auto& [m, v] : runs.front().metrics) os << '\t' << m;
    }
    os << '\n';
    for (std::size_t i = 0; i < values.size(); ++i) {
        os << values[i];
        for (const auto& [m, v] : runs[i].metrics) os << '\t' << format_number(v);
        os << '\n';
    }
    return os.str();
}

SweepReport run_sweep(const RunConfig& base, const Dataset& data, std::string_view axis, std::vector<double> values) {
    if (values.empty()) throw Error("run_sweep: no values");
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    SweepReport rep;
    rep.axis = std::string(axis);
    rep.base_config = base.to_json();
    BackboneCache cache;
    for (double v : values) {
        auto cfg = apply_axis(base, axis, v);
        rep.values.push_back(v);
        rep.runs.push_back(run_experiment(cfg, data, &cache).report);
    }
    return rep;
}

}  // namespace kgcrs
