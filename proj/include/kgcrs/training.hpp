// Data pipeline, optimiser, backbone setup and the two-stage training loop.

#pragma once

#include "kgcrs/config.hpp"
#include "kgcrs/corpus.hpp"
#include "kgcrs/crs_model.hpp"
#include "kgcrs/kg_store.hpp"
#include "kgcrs/params.hpp"
#include "kgcrs/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <span>
#include <string>
#include <vector>

namespace kgcrs {

struct Dataset {
    KnowledgeGraph graph;
    std::vector<Dialogue> dialogues;
    Split split;
    std::vector<Example> train;
    std::vector<Example> valid;
    std::vector<Example> test;
    std::string input_hash;  // over the graph, item list and corpus files
};

Dataset load_dataset(const RunConfig& cfg);

/// Every token of the corpus, entity and relation names and the tree markers.
Vocabulary build_vocabulary(const Dataset& data);

/// Decoupled weight decay Adam. State is keyed by parameter name.
class AdamW {
public:
    AdamW(double beta1, double beta2, double eps, double weight_decay);

    /// Updates every parameter of `groups` that holds a gradient.
    void step(ParameterSet& ps, std::span<const Group> groups, double lr);
    int steps() const { return t_; }

private:
    struct Moments {
        ag::Matrix m;
        ag::Matrix v;
    };
    double beta1_, beta2_, eps_, wd_;
    int t_ = 0;
    std::map<std::string, Moments> state_;
};

/// Masked-token training of the text encoder and next-token training of the
/// decoder on the training split, after which Θ_plm is frozen.
void pretrain_backbone(CrsModel& model, std::span<const PreparedExample> train, std::vector<nlohmann::json>* log);

/// Masked-token loss of the text encoder on one sequence (mean over masked positions).
ag::Var masked_token_loss(const CrsModel& model, const std::vector<int>& ids, Rng& rng);
/// Next-token loss of the decoder on one sequence (mean over positions).
ag::Var next_token_loss(const CrsModel& model, const std::vector<int>& ids);

struct TrainReport {
    std::vector<nlohmann::json> log;
    std::string plm_hash_before;
    std::string plm_hash_after;
    std::string stage2_prompt_hash;
    int stage1_steps = 0;
    int stage2_steps = 0;
    double stage2_first_loss = 0.0;
    double stage2_last_loss = 0.0;
};

/// Stage 1 fits Θ_user and Θ_tree on response generation without soft
/// prompts; stage 2 reseeds Θ_prompt and fits Θ_user, Θ_tree and Θ_prompt on
/// the task objective. Θ_plm stays frozen throughout. Throws on a non-finite loss.
TrainReport train_two_stage(CrsModel& model, std::span<const PreparedExample> train,
                            std::span<const PreparedExample> valid);

/// Validation score used for early stopping: recall@50 for rec, negative
/// mean L_conv for conv (larger is better in both cases).
double validation_score(CrsModel& model, std::span<const PreparedExample> valid);

/// Loss averaged over fixed batches of `examples` without gradient tracking.
double mean_loss(CrsModel& model, std::span<const PreparedExample> examples, const ForwardOptions& opt,
                 int batch_size);

}  // namespace kgcrs
