#include "kgcrs/nn.hpp"

#include "kgcrs/error.hpp"

#include <cmath>
#include <limits>

namespace kgcrs::nn {

Linear::Linear(ParameterSet& ps, const std::string& name, Group g, int in, int out, Rng& rng,
               bool bias) {
    weight_ = ps.add(name + ".weight", g, randn(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
    if (bias) bias_ = ps.add(name + ".bias", g, ag::Matrix::Zero(1, out));
}

ag::Var Linear::operator()(const ag::Var& x) const {
    auto y = ag::matmul(x, weight_);
    return bias_ ? ag::add_row(y, bias_) : y;
}

LayerNorm::LayerNorm(ParameterSet& ps, const std::string& name, Group g, int dim) {
    gamma_ = ps.add(name + ".gamma", g, ag::Matrix::Ones(1, dim));
    beta_ = ps.add(name + ".beta", g, ag::Matrix::Zero(1, dim));
}

ag::Var LayerNorm::operator()(const ag::Var& x) const { return ag::layer_norm(x, gamma_, beta_); }

Transformer::Transformer(ParameterSet& ps, const std::string& name, Group g,
                         const TransformerConfig& cfg, Rng& rng)
    : cfg_(cfg) {
    if (cfg.dim <= 0 || cfg.heads <= 0 || cfg.dim % cfg.heads != 0) {
        throw ConfigError(name + ": dim must be a positive multiple of heads");
    }
    if (cfg.vocab_size <= 0) throw ConfigError(name + ": empty vocabulary");
    tokens_ = ps.add(name + ".tokens", g, randn(cfg.vocab_size, cfg.dim, 0.5, rng));
    positions_ = ps.add(name + ".positions", g, randn(cfg.max_positions, cfg.dim, 0.1, rng));
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = name + ".layer" + std::to_string(l);
        Block b;
        b.ln_attn = LayerNorm(ps, p + ".ln_attn", g, cfg.dim);
        b.ln_ffn = LayerNorm(ps, p + ".ln_ffn", g, cfg.dim);
        b.q = Linear(ps, p + ".q", g, cfg.dim, cfg.dim, rng);
        b.k = Linear(ps, p + ".k", g, cfg.dim, cfg.dim, rng);
        b.v = Linear(ps, p + ".v", g, cfg.dim, cfg.dim, rng);
        b.o = Linear(ps, p + ".o", g, cfg.dim, cfg.dim, rng);
        b.up = Linear(ps, p + ".up", g, cfg.dim, 4 * cfg.dim, rng);
        b.down = Linear(ps, p + ".down", g, 4 * cfg.dim, cfg.dim, rng);
        blocks_.push_back(std::move(b));
    }
    final_ln_ = LayerNorm(ps, name + ".ln_final", g, cfg.dim);
}

ag::Var Transformer::embed_tokens(std::span<const int> ids) const {
    return ag::gather_rows(tokens_, ids);
}

ag::Var Transformer::attention(const Block& b, const ag::Var& x) const {
    const auto n = x.rows();
    const int dh = cfg_.dim / cfg_.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    auto q = b.q(x);
    auto k = b.k(x);
    auto v = b.v(x);
    ag::Matrix mask;
    if (cfg_.causal) {
        mask = ag::Matrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) mask(i, j) = -1e30;
        }
    }
    std::vector<ag::Var> heads;
    heads.reserve(static_cast<std::size_t>(cfg_.heads));
    for (int h = 0; h < cfg_.heads; ++h) {
        auto qh = ag::slice_cols(q, h * dh, dh);
        auto kh = ag::slice_cols(k, h * dh, dh);
        auto vh = ag::slice_cols(v, h * dh, dh);
        auto scores = ag::scale(ag::matmul_nt(qh, kh), inv_sqrt);
        if (cfg_.causal) scores = ag::add_const(scores, mask);
        heads.push_back(ag::matmul(ag::softmax_rows(scores), vh));
    }
    return b.o(cfg_.heads == 1 ? heads.front() : ag::concat_cols(heads));
}

ag::Var Transformer::forward_embeddings(const ag::Var& inputs) const {
    const auto n = inputs.rows();
    if (n == 0) throw Error("transformer: empty input");
    if (n > cfg_.max_positions) {
        throw Error("transformer: sequence of " + std::to_string(n) + " exceeds " +
                    std::to_string(cfg_.max_positions) + " positions");
    }
    if (inputs.cols() != cfg_.dim) throw Error("transformer: input width mismatch");
    auto x = ag::add(inputs, ag::slice_rows(positions_, 0, n));
    for (const auto& b : blocks_) {
        x = ag::add(x, attention(b, b.ln_attn(x)));
        x = ag::add(x, b.down(ag::gelu(b.up(b.ln_ffn(x)))));
    }
    return final_ln_(x);
}

ag::Var Transformer::forward_tokens(std::span<const int> ids) const {
    return forward_embeddings(embed_tokens(ids));
}

ag::Var Transformer::lm_logits(const ag::Var& hidden) const { return ag::matmul_nt(hidden, tokens_); }

}  // namespace kgcrs::nn
