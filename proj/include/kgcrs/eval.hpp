// Ranking and diversity metrics, split evaluation, and the ablation and
// hyperparameter sweep runners.

#pragma once

#include "kgcrs/config.hpp"
#include "kgcrs/crs_model.hpp"
#include "kgcrs/training.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kgcrs {

/// Item indices by descending score; ties go to the smaller index.
std::vector<int> rank_items(const Eigen::Ref<const Eigen::RowVectorXd>& scores);

/// |gold ∩ top-k| / |gold|. Throws on k < 1 or empty gold.
double recall_at_k(std::span<const int> ranked, std::span<const int> gold, int k);
/// Binary-relevance NDCG with a log2(rank + 1) discount.
double ndcg_at_k(std::span<const int> ranked, std::span<const int> gold, int k);
/// 1 / rank of the first gold item within the top k, else 0.
double mrr_at_k(std::span<const int> ranked, std::span<const int> gold, int k);

/// Lowercased whitespace words.
std::vector<std::string> words(std::string_view text);

/// Unique over total word n-grams pooled across the corpus. Returns 0 with a
/// warning when no response has n words. Throws on n < 1.
double distinct_n(std::span<const std::string> responses, int n);
/// Per-response distinct-n averaged over responses with at least n words.
double distinct_n_per_response(std::span<const std::string> responses, int n);

struct MetricsReport {
    std::string split;
    Task task = Task::rec;
    std::map<std::string, double> metrics;
    std::map<std::string, long> counts;
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::string input_hash;

    nlohmann::json to_json() const;
    std::string dump() const;
};

/// Rec: full-catalog ranking of R̂ over examples with gold items. Conv: greedy
/// generation for every example, distinct-{2,3,4} and the mean gold-response
/// negative log-likelihood.
MetricsReport evaluate(CrsModel& model, std::span<const PreparedExample> examples, Task task,
                       const std::string& split_name);

/// Pretrained Θ_plm text keyed by the settings that determine it.
struct BackboneCache {
    std::map<std::string, std::string> plm;
};

struct ExperimentResult {
    MetricsReport report;
    TrainReport training;
};

/// Builds a model, sets up the backbone (cached when possible), trains both
/// stages and evaluates on the test split.
ExperimentResult run_experiment(const RunConfig& cfg, const Dataset& data, BackboneCache* cache = nullptr);
/// Builds the model and its backbone only.
void prepare_backbone(CrsModel& model, const Dataset& data, std::span<const PreparedExample> train,
                      BackboneCache* cache, std::vector<nlohmann::json>* log);

inline constexpr std::array<std::string_view, 5> kVariantNames{"full", "-tree", "-user", "-align", "-all"};
VariantConfig variant_from_name(std::string_view name);

struct AblationReport {
    std::vector<std::string> variants;
    std::vector<std::uint64_t> seeds;
    std::map<std::string, std::vector<MetricsReport>> runs;  // per variant, one per seed
    nlohmann::json base_config;

    /// Mean and standard error (sample sd / sqrt(n)) of a metric for a variant.
    std::pair<double, double> summary(const std::string& variant, const std::string& metric) const;
    std::vector<std::string> metric_names() const;
    nlohmann::json to_json() const;
    std::string to_tsv() const;
};

/// Every variant trained and evaluated once per seed; seed s sets the init and
/// shuffle seeds, the data split is shared.
AblationReport run_ablation(const RunConfig& base, const Dataset& data, std::span<const std::uint64_t> seeds);

inline constexpr std::array<std::string_view, 4> kSweepAxes{"tree_depth", "tree_degree", "alpha", "beta"};
RunConfig apply_axis(const RunConfig& base, std::string_view axis, double value);

struct SweepReport {
    std::string axis;
    std::vector<double> values;  // ascending
    std::vector<MetricsReport> runs;
    nlohmann::json base_config;

    nlohmann::json to_json() const;
    std::string to_tsv() const;
};

SweepReport run_sweep(const RunConfig& base, const Dataset& data, std::string_view axis, std::vector<double> values);

}  // namespace kgcrs
