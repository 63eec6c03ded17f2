// Knowledge-enhanced prompt model: per-example knowledge encoding (graph
// entities, user preference, knowledge trees), prompt assembly in front of a
// frozen causal decoder, recommendation and generation heads, and the batch
// objective used by both training stages.

#pragma once

#include "kgcrs/align.hpp"
#include "kgcrs/autograd.hpp"
#include "kgcrs/config.hpp"
#include "kgcrs/corpus.hpp"
#include "kgcrs/encoders.hpp"
#include "kgcrs/kg_store.hpp"
#include "kgcrs/ktree.hpp"
#include "kgcrs/nn.hpp"
#include "kgcrs/params.hpp"
#include "kgcrs/tokenizer.hpp"
#include "kgcrs/user_pref.hpp"

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace kgcrs {

enum class Stage { one, two };

/// An Example bound to the graph and vocabulary.
struct PreparedExample {
    std::string id;
    std::vector<EntityId> entities;   // mention order
    std::vector<int> targets;         // item indices
    ag::Matrix labels;                // 1 x |I|
    std::vector<int> encoder_tokens;  // dialogue tokens for the text encoder (most recent kept)
    std::vector<int> context_tokens;  // dialogue tokens for the decoder, speaker-tagged
    std::vector<int> response_tokens;
    std::vector<int> masked_response_tokens;  // item mentions replaced by [ITEM]
};

/// Prompt segments in decoder width; an absent segment is a null Var.
struct PromptBundle {
    ag::Var rgcn;  // n_E rows
    ag::Var tree;  // n_E + 1 rows, or the single null-tree row
    ag::Var user;  // 1 row
    ag::Var soft;  // task-specific soft prompt

    int length() const;
    /// Segments concatenated in the order rgcn, tree, user, soft; null if empty.
    ag::Var concat() const;
};

struct ExampleKnowledge {
    ag::Var context;         // dialogue encoding, n_C x d_text
    ag::Var entities;        // mentioned entity rows of the graph encoding
    ag::Var user;            // 1 x d_fusion
    ag::Var user_scores;     // 1 x |I|
    std::vector<KnowledgeTree> trees;
    std::vector<SerializedTree> serialized;
    ag::Var tree_rows;       // [t_1; ...; t_n; t_E] or the null tree row
    ag::Var entity_align;    // 1 x d_align
    ag::Var tree_align;      // 1 x d_align
};

struct DecoderInput {
    ag::Var embeddings;
    int prompt_length = 0;
    std::vector<int> tokens;  // non-prompt tokens
    int response_begin = -1;  // index into tokens, -1 when no response is appended
};

struct RecOutput {
    ag::Var pooled;
    ag::Var scores;  // 1 x |I| simplex
};

struct Generation {
    std::vector<int> tokens;  // emitted tokens, [EOS] included if produced
    std::string text;
};

struct BatchLosses {
    ag::Var total;
    ag::Var rec;
    ag::Var user;
    ag::Var align;
    ag::Var conv;
    int rec_rows = 0;
};

struct ForwardOptions {
    Stage stage = Stage::two;
    Task task = Task::rec;
    VariantConfig variant;
    std::string rec_response_source = "gold";
};

/// L_all = l_rec + alpha l_user + beta l_align. Throws on negative weights.
double total_loss(double l_rec, double l_user, double l_align, double alpha, double beta);
ag::Var total_loss(const ag::Var& l_rec, const ag::Var& l_user, const ag::Var& l_align, double alpha, double beta);

/// Token-level negative log-likelihood of `targets` under `logits` rows.
ag::Var sequence_nll(const ag::Var& logits, std::span<const int> targets);

class CrsModel {
public:
    CrsModel(const RunConfig& cfg, KnowledgeGraph graph, Vocabulary vocab);
    CrsModel(const CrsModel&) = delete;
    CrsModel& operator=(const CrsModel&) = delete;

    const RunConfig& config() const { return cfg_; }
    RunConfig& mutable_config() { return cfg_; }
    const KnowledgeGraph& graph() const { return graph_; }
    const Vocabulary& vocab() const { return vocab_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }
    const TextEncoder& text_encoder() const { return text_encoder_; }
    const nn::Transformer& decoder() const { return decoder_; }
    const RelationalGraphEncoder& graph_encoder() const { return rgcn_; }

    PreparedExample prepare(const Example& ex) const;
    std::vector<PreparedExample> prepare_all(std::span<const Example> examples) const;

    /// Graph encoding for the current weights.
    ag::Var graph_embeddings() const;
    ag::Var context_states(const PreparedExample& ex) const;

    ExampleKnowledge knowledge(const PreparedExample& ex, const ag::Var& graph_emb,
                               const VariantConfig& variant) const;
    PromptBundle prompts(const ExampleKnowledge& k, Task task, bool with_soft,
                         const VariantConfig& variant) const;

    /// Rec inputs append `response` after a [SEP]; null response means
    /// context only. Conv inputs always end with [SEP] followed by `response`
    /// when given (teacher forcing) or nothing (generation prefix).
    DecoderInput assemble_input(const PreparedExample& ex, const PromptBundle& prompts, Task task,
                                const std::vector<int>* response) const;

    RecOutput recommend(const DecoderInput& input, const ag::Var& graph_emb) const;
    ag::Var conv_loss(const DecoderInput& input, std::span<const int> response) const;
    Generation generate(const DecoderInput& prefix, int max_new_tokens) const;

    BatchLosses forward_batch(std::span<const PreparedExample* const> batch, const ForwardOptions& opt) const;

    /// Inference helpers; run without recording gradients.
    RecOutput infer_recommendation(const PreparedExample& ex, const ag::Var& graph_emb,
                                   const std::string& response_source, int max_new_tokens,
                                   const VariantConfig& variant, bool with_soft = true);
    Generation infer_generation(const PreparedExample& ex, const ag::Var& graph_emb, int max_new_tokens,
                                const VariantConfig& variant, bool with_soft = true);
    /// Graph encoding without gradient tracking.
    ag::Var frozen_graph_embeddings();

    std::vector<int> mask_items(std::span<const int> tokens) const;

    void set_backbone_trainable(bool on);
    bool backbone_trainable() const { return backbone_trainable_; }
    void clear_caches() const { encode_cache_.clear(); }
    void reinit_soft_prompts(std::uint64_t seed);

    void save(const std::string& dir) const;
    void load_groups(const std::string& dir, std::span<const Group> groups);
    static Vocabulary load_vocab(const std::string& dir);

private:
    ag::Var encode_cached(const std::vector<int>& ids, TextKind kind) const;
    ag::Var encode_tree_text(const std::string& text) const;

    RunConfig cfg_;
    KnowledgeGraph graph_;
    Vocabulary vocab_;
    ParameterSet params_;

    TextEncoder text_encoder_;
    nn::Transformer decoder_;
    RelationalGraphEncoder rgcn_;

    CrossInteractionParams cross_;
    AttentionSumParams user_sum_;
    ag::Var user_item_proj_;  // W_I, d_ent x d_fusion

    ag::Var sim_proj_;  // d_text x d_ent
    TreeAggregationParams tree_sum_;
    ag::Var null_tree_;  // 1 x d_text

    AttentionSumParams entity_align_sum_;
    ag::Var entity_align_proj_;  // d_ent x d_align
    ag::Var tree_align_proj_;    // d_text x d_align
    ag::Var null_entity_align_;  // 1 x d_align

    nn::Linear proj_rgcn_;
    nn::Linear proj_tree_;
    nn::Linear proj_user_;
    ag::Var rec_item_proj_;  // d_ent x d_model

    ag::Var soft_rec_;
    ag::Var soft_conv_;

    std::vector<std::vector<int>> item_token_seqs_;  // longest first
    mutable std::unordered_map<std::string, ag::Matrix> encode_cache_;
    bool backbone_trainable_ = false;
};

/// Disables gradient recording on every parameter for its lifetime.
class NoGradGuard {
public:
    explicit NoGradGuard(ParameterSet& ps);
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    ParameterSet& ps_;
    std::vector<bool> saved_;
};

}  // namespace kgcrs
