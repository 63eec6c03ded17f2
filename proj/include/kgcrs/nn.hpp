// Differentiable building blocks shared by the encoders and the decoder.

#pragma once

#include "kgcrs/autograd.hpp"
#include "kgcrs/params.hpp"

#include <span>
#include <string>
#include <vector>

namespace kgcrs::nn {

class Linear {
public:
    Linear() = default;
    Linear(ParameterSet& ps, const std::string& name, Group g, int in, int out, Rng& rng,
           bool bias = true);

    ag::Var operator()(const ag::Var& x) const;
    const ag::Var& weight() const { return weight_; }

private:
    ag::Var weight_;
    ag::Var bias_;
};

class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(ParameterSet& ps, const std::string& name, Group g, int dim);
    ag::Var operator()(const ag::Var& x) const;

private:
    ag::Var gamma_;
    ag::Var beta_;
};

struct TransformerConfig {
    int vocab_size = 0;
    int dim = 64;
    int heads = 2;
    int layers = 2;
    int max_positions = 512;
    bool causal = false;
};

/// Pre-LayerNorm transformer stack with learned token and position tables.
/// The token table doubles as the (tied) output projection.
class Transformer {
public:
    Transformer() = default;
    Transformer(ParameterSet& ps, const std::string& name, Group g, const TransformerConfig& cfg,
                Rng& rng);

    const TransformerConfig& config() const { return cfg_; }

    ag::Var embed_tokens(std::span<const int> ids) const;
    /// Runs the blocks over already-embedded inputs (position rows are added here).
    ag::Var forward_embeddings(const ag::Var& inputs) const;
    ag::Var forward_tokens(std::span<const int> ids) const;
    ag::Var lm_logits(const ag::Var& hidden) const;

private:
    struct Block {
        LayerNorm ln_attn;
        LayerNorm ln_ffn;
        Linear q, k, v, o;
        Linear up, down;
    };

    ag::Var attention(const Block& b, const ag::Var& x) const;

    TransformerConfig cfg_;
    ag::Var tokens_;
    ag::Var positions_;
    std::vector<Block> blocks_;
    LayerNorm final_ln_;
};

}  // namespace kgcrs::nn
