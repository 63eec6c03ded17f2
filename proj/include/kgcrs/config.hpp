// Run configuration. Every field has a default; a config file may override any
// subset, and unknown keys are rejected with their full key path.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>

namespace kgcrs {

enum class Task { rec, conv };
std::string to_string(Task t);
Task task_from_string(const std::string& s);

struct PathsConfig {
    std::string kg;
    std::string items;
    std::string corpus;
    std::string output_dir = "runs/default";
};

struct EncoderConfig {
    int d_text = 64;
    int d_ent = 64;
    int text_layers = 2;
    int text_heads = 2;
    int max_len = 512;
    int rgcn_layers = 1;
    int rgcn_bases = 8;
    std::string rgcn_activation = "relu";  // relu | identity
    std::string pretrained = "";           // checkpoint dir with theta_plm, empty = none
};

struct BackboneConfig {
    int d_model = 64;
    int layers = 2;
    int heads = 2;
    int max_positions = 1024;
    int encoder_pretrain_steps = 200;  // masked-token objective for the text encoder
    int decoder_pretrain_steps = 300;  // next-token objective for the decoder
    int pretrain_batch = 16;
    double pretrain_lr = 3e-3;
};

struct ModelConfig {
    int d_fusion = 64;  // shared dimension of cross-interaction and user embedding
    int d_align = 64;
    bool normalize_cross_attention = true;
    bool asum_mean = false;            // 1/n scaling of the attention double sum
    std::string context_pooling = "mean";  // mean | max | first
    std::string rec_pooling = "last";      // last | mean | max
    bool use_inverse_edges = true;
};

struct TreeConfig {
    int depth = 2;
    int degree = 3;
    std::string sim_source = "rgcn";  // rgcn | static
};

struct LossConfig {
    double alpha = 0.02;
    double beta = 0.002;
    double tau = 0.07;
    bool align_literal = false;
    bool align_normalize = true;
    std::string align_equality = "ordered";  // ordered | set
    std::string reduction = "sum";           // sum | mean
};

struct TrainConfig {
    double lr_stage1 = 5e-4;
    double lr_stage2 = 1e-4;
    double weight_decay = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 0.01;
    int batch_rec = 64;
    int batch_conv = 8;
    int prompt_len_rec = 10;
    int prompt_len_conv = 20;
    int stage1_steps = 200;
    int stage2_steps = 400;
    int eval_every = 0;  // steps between validation checks; 0 = once per epoch
    bool early_stopping = true;
    int patience = 3;
    std::string rec_response_source = "gold";  // gold | generated | none
};

struct EvalConfig {
    std::string rec_response_source = "generated";  // generated | gold | none
    int max_new_tokens = 24;
    std::string distinct_mode = "corpus";  // corpus | response
};

struct SeedConfig {
    std::uint64_t split = 1;
    std::uint64_t init = 2;
    std::uint64_t shuffle = 3;
};

/// Component switches; every ablation variant is one of these.
struct VariantConfig {
    bool tree = true;   // knowledge-tree prompts
    bool user = true;   // user-preference prompt and its loss
    bool align = true;  // contrastive alignment loss
};

struct RunConfig {
    PathsConfig paths;
    EncoderConfig encoder;
    BackboneConfig backbone;
    ModelConfig model;
    TreeConfig tree;
    LossConfig loss;
    TrainConfig train;
    EvalConfig eval;
    SeedConfig seeds;
    VariantConfig variant;
    Task task = Task::rec;

    void validate() const;
    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    /// Reads JSON; relative paths in `paths` resolve against the file's directory.
    static RunConfig load(const std::string& path);
};

}  // namespace kgcrs
