#include "kgcrs/crs_model.hpp"

#include "kgcrs/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>

namespace kgcrs {

namespace {

constexpr double kSoftPromptStd = 0.5;

ag::Var zero_scalar() { return ag::constant(ag::Matrix::Zero(1, 1)); }

std::string cache_key(const std::vector<int>& ids, TextKind kind) {
    std::string key(1, kind == TextKind::tree ? 't' : 'd');
    key.append(reinterpret_cast<const char*>(ids.data()), ids.size() * sizeof(int));
    return key;
}

ag::Var pool_tail(const ag::Var& hidden, int begin, PoolMode mode) {
    return pool(ag::slice_rows(hidden, begin, hidden.rows() - begin), mode);
}

}  // namespace

int PromptBundle::length() const {
    int n = 0;
    for (const auto* v : {&rgcn, &tree, &user, &soft}) {
        if (*v) n += static_cast<int>(v->rows());
    }
    return n;
}

ag::Var PromptBundle::concat() const {
    std::vector<ag::Var> parts;
    for (const auto* v : {&rgcn, &tree, &user, &soft}) {
        if (*v && v->rows() > 0) parts.push_back(*v);
    }
    if (parts.empty()) return {};
    return parts.size() == 1 ? parts.front() : ag::concat_rows(parts);
}

double total_loss(double l_rec, double l_user, double l_align, double alpha, double beta) {
    if (alpha < 0 || beta < 0) throw Error("total_loss: alpha and beta must be >= 0");
    return l_rec + alpha * l_user + beta * l_align;
}

ag::Var total_loss(const ag::Var& l_rec, const ag::Var& l_user, const ag::Var& l_align, double alpha,
                   double beta) {
    if (alpha < 0 || beta < 0) throw Error("total_loss: alpha and beta must be >= 0");
    return ag::add(ag::add(l_rec, ag::scale(l_user, alpha)), ag::scale(l_align, beta));
}

ag::Var sequence_nll(const ag::Var& logits, std::span<const int> targets) {
    if (static_cast<std::size_t>(logits.rows()) != targets.size()) {
        throw Error("sequence_nll: one logits row per target expected");
    }
    ag::Matrix onehot = ag::Matrix::Zero(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] < 0 || targets[i] >= logits.cols()) throw Error("sequence_nll: target out of range");
        onehot(static_cast<Eigen::Index>(i), targets[i]) = 1.0;
    }
    return ag::scale(ag::weighted_sum(ag::log_softmax_rows(logits), onehot), -1.0);
}

CrsModel::CrsModel(const RunConfig& cfg, KnowledgeGraph graph, Vocabulary vocab)
    : cfg_(cfg), graph_(std::move(graph)), vocab_(std::move(vocab)) {
    cfg_.validate();
    if (graph_.items().size() < 2) throw Error("model needs at least two candidate items");
    Rng rng(cfg_.seeds.init);
    const int d_text = cfg_.encoder.d_text;
    const int d_ent = cfg_.encoder.d_ent;
    const int d_model = cfg_.backbone.d_model;
    const int d_fusion = cfg_.model.d_fusion;
    const int d_align = cfg_.model.d_align;

    text_encoder_ = TextEncoder(params_, vocab_, cfg_.encoder, rng);
    nn::TransformerConfig dec;
    dec.vocab_size = vocab_.size();
    dec.dim = d_model;
    dec.heads = cfg_.backbone.heads;
    dec.layers = cfg_.backbone.layers;
    dec.max_positions = cfg_.backbone.max_positions;
    dec.causal = true;
    decoder_ = nn::Transformer(params_, "decoder", Group::plm, dec, rng);

    rgcn_ = RelationalGraphEncoder(params_, graph_, cfg_.encoder, rng);
    cross_ = CrossInteractionParams::create(params_, "user.cross", Group::user, d_text, d_ent, d_fusion, rng);
    user_sum_ = AttentionSumParams::create(params_, "user.asum", Group::user, d_fusion, d_fusion, rng);
    user_item_proj_ = params_.add("user.item_proj", Group::user,
                                  randn(d_ent, d_fusion, 1.0 / std::sqrt(static_cast<double>(d_ent)), rng));

    sim_proj_ = params_.add("tree.sim_proj", Group::tree,
                            randn(d_text, d_ent, 1.0 / std::sqrt(static_cast<double>(d_text)), rng));
    tree_sum_.tokens = AttentionSumParams::create(params_, "tree.token_asum", Group::tree, d_text, d_text, rng);
    tree_sum_.trees = AttentionSumParams::create(params_, "tree.tree_asum", Group::tree, d_text, d_text, rng);
    null_tree_ = params_.add("tree.null", Group::tree, randn(1, d_text, 1.0, rng));

    entity_align_sum_ = AttentionSumParams::create(params_, "align.entity_asum", Group::user, d_ent, d_ent, rng);
    entity_align_proj_ = params_.add("align.entity_proj", Group::user,
                                     randn(d_ent, d_align, 1.0 / std::sqrt(static_cast<double>(d_ent)), rng));
    tree_align_proj_ = params_.add("align.tree_proj", Group::tree,
                                   randn(d_text, d_align, 1.0 / std::sqrt(static_cast<double>(d_text)), rng));
    null_entity_align_ = params_.add("align.null_entity", Group::user, randn(1, d_align, 1.0, rng));

    proj_rgcn_ = nn::Linear(params_, "prompt_proj.rgcn", Group::user, d_ent, d_model, rng);
    proj_tree_ = nn::Linear(params_, "prompt_proj.tree", Group::tree, d_text, d_model, rng);
    proj_user_ = nn::Linear(params_, "prompt_proj.user", Group::user, d_fusion, d_model, rng);
    rec_item_proj_ = params_.add("rec.item_proj", Group::user,
                                 randn(d_ent, d_model, 1.0 / std::sqrt(static_cast<double>(d_ent)), rng));

    soft_rec_ = params_.add("prompt.rec", Group::prompt, randn(cfg_.train.prompt_len_rec, d_model, kSoftPromptStd, rng));
    soft_conv_ =
        params_.add("prompt.conv", Group::prompt, randn(cfg_.train.prompt_len_conv, d_model, kSoftPromptStd, rng));

    for (EntityId item : graph_.items()) {
        auto ids = vocab_.encode(graph_.entities().name(item));
        if (!ids.empty()) item_token_seqs_.push_back(std::move(ids));
    }
    std::stable_sort(item_token_seqs_.begin(), item_token_seqs_.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    set_backbone_trainable(false);
}

std::vector<int> CrsModel::mask_items(std::span<const int> tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    std::size_t i = 0;
    while (i < tokens.size()) {
        bool matched = false;
        for (const auto& seq : item_token_seqs_) {
            if (i + seq.size() <= tokens.size() && std::equal(seq.begin(), seq.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
                out.push_back(tok::item);
                i += seq.size();
                matched = true;
                break;
            }
        }
        if (!matched) out.push_back(tokens[i++]);
    }
    return out;
}

PreparedExample CrsModel::prepare(const Example& ex) const {
    PreparedExample p;
    p.id = ex.id;
    for (const auto& name : ex.mentioned_entities) {
        auto id = graph_.entities().find(name);
        if (!id) throw Error("example " + ex.id + ": entity '" + name + "' is not in the graph");
        p.entities.push_back(*id);
    }
    p.targets = target_item_indices(ex, graph_);
    p.labels = ag::Matrix::Zero(1, static_cast<Eigen::Index>(graph_.items().size()));
    for (int t : p.targets) p.labels(0, t) = 1.0;
    for (const auto& u : ex.context) {
        p.context_tokens.push_back(u.speaker == Speaker::seeker ? tok::usr : tok::sys);
        auto ids = vocab_.encode(u.text);
        p.context_tokens.insert(p.context_tokens.end(), ids.begin(), ids.end());
    }
    p.encoder_tokens = truncate_tokens(p.context_tokens, text_encoder_.max_len(), TextKind::dialogue);
    p.response_tokens = vocab_.encode(ex.target_response);
    p.masked_response_tokens = mask_items(p.response_tokens);
    return p;
}

std::vector<PreparedExample> CrsModel::prepare_all(std::span<const Example> examples) const {
    std::vector<PreparedExample> out;
    out.reserve(examples.size());
    for (const auto& e : examples) out.push_back(prepare(e));
    return out;
}

ag::Var CrsModel::graph_embeddings() const { return rgcn_.encode(); }

ag::Var CrsModel::frozen_graph_embeddings() {
    NoGradGuard guard(params_);
    return ag::constant(rgcn_.encode().value());
}

ag::Var CrsModel::encode_cached(const std::vector<int>& ids, TextKind kind) const {
    if (backbone_trainable_) return text_encoder_.encode_ids(ids, kind).vectors;
    const auto key = cache_key(ids, kind);
    auto it = encode_cache_.find(key);
    if (it == encode_cache_.end()) {
        it = encode_cache_.emplace(key, text_encoder_.encode_ids(ids, kind).vectors.value()).first;
    }
    return ag::constant(it->second);
}

ag::Var CrsModel::context_states(const PreparedExample& ex) const {
    return encode_cached(ex.encoder_tokens, TextKind::dialogue);
}

ag::Var CrsModel::encode_tree_text(const std::string& text) const {
    auto ids = vocab_.encode(text);
    if (ids.empty()) throw Error("tree text has no tokens");
    return encode_cached(ids, TextKind::tree);
}

ExampleKnowledge CrsModel::knowledge(const PreparedExample& ex, const ag::Var& graph_emb,
                                     const VariantConfig& variant) const {
    ExampleKnowledge k;
    k.context = context_states(ex);
    const bool has_entities = !ex.entities.empty();
    if (has_entities) k.entities = retrieve(graph_emb, ex.entities);

    if (variant.user) {
        auto x = cross_interact(k.context, has_entities ? k.entities : ag::constant(ag::Matrix(0, cfg_.encoder.d_ent)),
                                cross_, cfg_.model.normalize_cross_attention);
        k.user = user_embedding(x, user_sum_, cfg_.model.asum_mean);
        k.user_scores = score_items(k.user, retrieve(graph_emb, graph_.items()), user_item_proj_);
    }

    if (variant.tree || variant.align) {
        ag::Var tree_aggregate;
        if (has_entities) {
            const auto mode = pool_mode_from_string(cfg_.model.context_pooling);
            Eigen::RowVectorXd c = (pool(k.context, mode).value() * sim_proj_.value()).row(0);
            const ag::Matrix& sim_space =
                cfg_.tree.sim_source == "static" ? rgcn_.entity_table().value() : graph_emb.value();
            std::vector<ag::Var> encoded;
            for (EntityId e : ex.entities) {
                k.trees.push_back(build_tree(graph_, sim_space, c, e, cfg_.tree.depth, cfg_.tree.degree));
                k.serialized.push_back(serialize_tree(k.trees.back(), graph_));
                encoded.push_back(encode_tree_text(k.serialized.back().text));
            }
            auto reps = aggregate_trees(encoded, tree_sum_, cfg_.model.asum_mean);
            k.tree_rows = ag::concat_rows(std::vector<ag::Var>{reps.stacked, reps.aggregate});
            tree_aggregate = reps.aggregate;
        } else {
            k.tree_rows = null_tree_;
            tree_aggregate = null_tree_;
        }
        if (variant.align) {
            k.entity_align = has_entities
                                 ? aggregate_entities(k.entities, entity_align_sum_, entity_align_proj_,
                                                      cfg_.model.asum_mean)
                                 : null_entity_align_;
            k.tree_align = ag::matmul(tree_aggregate, tree_align_proj_);
        }
    }
    return k;
}

PromptBundle CrsModel::prompts(const ExampleKnowledge& k, Task task, bool with_soft,
                               const VariantConfig& variant) const {
    PromptBundle b;
    if (k.entities && k.entities.rows() > 0) b.rgcn = proj_rgcn_(k.entities);
    if (variant.tree) {
        if (!k.tree_rows) throw Error("prompts: tree prompts requested but no trees were built");
        b.tree = proj_tree_(k.tree_rows);
    }
    if (variant.user) {
        if (!k.user) throw Error("prompts: user prompt requested but no user embedding was computed");
        b.user = proj_user_(k.user);
    }
    if (with_soft) b.soft = task == Task::rec ? soft_rec_ : soft_conv_;
    return b;
}

DecoderInput CrsModel::assemble_input(const PreparedExample& ex, const PromptBundle& prompts, Task task,
                                      const std::vector<int>* response) const {
    DecoderInput in;
    in.prompt_length = prompts.length();
    std::vector<int> tail;
    if (task == Task::conv || response) tail.push_back(tok::sep);
    if (response) tail.insert(tail.end(), response->begin(), response->end());
    // Generation prefixes keep room for the tokens still to come.
    const int reserve = (task == Task::conv && !response) ? cfg_.eval.max_new_tokens : 0;
    const long budget = static_cast<long>(cfg_.backbone.max_positions) - in.prompt_length -
                        static_cast<long>(tail.size()) - reserve;
    if (budget < 1) throw Error("example " + ex.id + ": prompts and response exceed the decoder length");
    auto ctx = truncate_tokens(ex.context_tokens, static_cast<int>(budget), TextKind::dialogue);
    in.tokens = std::move(ctx);
    if (response) in.response_begin = static_cast<int>(in.tokens.size()) + 1;
    in.tokens.insert(in.tokens.end(), tail.begin(), tail.end());
    if (in.tokens.empty()) throw Error("example " + ex.id + ": empty decoder input");

    auto tokens = decoder_.embed_tokens(in.tokens);
    auto p = prompts.concat();
    in.embeddings = p ? ag::concat_rows(std::vector<ag::Var>{p, tokens}) : tokens;
    return in;
}

RecOutput CrsModel::recommend(const DecoderInput& input, const ag::Var& graph_emb) const {
    auto hidden = decoder_.forward_embeddings(input.embeddings);
    RecOutput out;
    out.pooled = pool_tail(hidden, input.prompt_length, pool_mode_from_string(cfg_.model.rec_pooling));
    auto items = ag::matmul(retrieve(graph_emb, graph_.items()), rec_item_proj_);
    out.scores = ag::softmax_rows(ag::matmul_nt(out.pooled, items));
    return out;
}

ag::Var CrsModel::conv_loss(const DecoderInput& input, std::span<const int> response) const {
    if (input.response_begin < 0) throw Error("conv_loss: input carries no response");
    const auto n = response.size();
    if (static_cast<std::size_t>(input.response_begin) + n != input.tokens.size() ||
        !std::equal(response.begin(), response.end(), input.tokens.begin() + input.response_begin)) {
        throw Error("conv_loss: response does not match the assembled input");
    }
    auto hidden = decoder_.forward_embeddings(input.embeddings);
    // Row i predicts token i + 1; the last response row predicts [EOS].
    const Eigen::Index start = input.prompt_length + input.response_begin - 1;
    auto logits = decoder_.lm_logits(ag::slice_rows(hidden, start, static_cast<Eigen::Index>(n + 1)));
    std::vector<int> targets(response.begin(), response.end());
    targets.push_back(tok::eos);
    return sequence_nll(logits, targets);
}

Generation CrsModel::generate(const DecoderInput& prefix, int max_new_tokens) const {
    if (max_new_tokens <= 0) throw Error("generate: max_new_tokens must be > 0");
    Generation g;
    ag::Matrix emb = prefix.embeddings.value();
    const auto limit = static_cast<Eigen::Index>(cfg_.backbone.max_positions);
    for (int step = 0; step < max_new_tokens && emb.rows() < limit; ++step) {
        auto hidden = decoder_.forward_embeddings(ag::constant(emb));
        auto logits = decoder_.lm_logits(ag::slice_rows(hidden, hidden.rows() - 1, 1)).value();
        Eigen::Index best = 0;
        logits.row(0).maxCoeff(&best);  // first maximiser on ties
        const int t = static_cast<int>(best);
        g.tokens.push_back(t);
        if (t == tok::eos) break;
        const std::vector<int> one{t};
        emb.conservativeResize(emb.rows() + 1, Eigen::NoChange);
        emb.row(emb.rows() - 1) = decoder_.embed_tokens(one).value().row(0);
    }
    g.text = vocab_.decode(g.tokens);
    return g;
}

BatchLosses CrsModel::forward_batch(std::span<const PreparedExample* const> batch, const ForwardOptions& opt) const {
    if (batch.empty()) throw Error("forward_batch: empty batch");
    const auto graph_emb = graph_embeddings();
    const auto reduction = reduction_from_string(cfg_.loss.reduction);
    const bool stage_two = opt.stage == Stage::two;
    const double batch_scale = reduction == Reduction::mean ? 1.0 / static_cast<double>(batch.size()) : 1.0;

    std::vector<ag::Var> rec_rows, user_rows, entity_side, tree_side, conv_terms;
    std::vector<std::vector<EntityId>> sequences;
    ag::Matrix labels(0, static_cast<Eigen::Index>(graph_.items().size()));
    std::vector<ag::Matrix> label_rows;

    for (const auto* ex : batch) {
        const auto k = knowledge(*ex, graph_emb, opt.variant);
        if (!stage_two) {
            auto in = assemble_input(*ex, prompts(k, Task::conv, false, opt.variant), Task::conv, &ex->response_tokens);
            conv_terms.push_back(conv_loss(in, ex->response_tokens));
            continue;
        }
        const bool labelled = !ex->targets.empty();
        if (opt.variant.user && labelled) user_rows.push_back(k.user_scores);
        if (opt.variant.align) {
            entity_side.push_back(k.entity_align);
            tree_side.push_back(k.tree_align);
            sequences.push_back(ex->entities);
        }
        if (labelled) label_rows.push_back(ex->labels);
        if (opt.task == Task::rec) {
            if (!labelled) continue;
            const auto bundle = prompts(k, Task::rec, true, opt.variant);
            std::vector<int> response;
            const std::vector<int>* resp = nullptr;
            if (opt.rec_response_source == "gold") {
                resp = &ex->masked_response_tokens;
            } else if (opt.rec_response_source == "generated") {
                auto gen_prefix = assemble_input(*ex, prompts(k, Task::conv, true, opt.variant), Task::conv, nullptr);
                auto gen = generate(gen_prefix, cfg_.eval.max_new_tokens);
                if (!gen.tokens.empty() && gen.tokens.back() == tok::eos) gen.tokens.pop_back();
                response = mask_items(gen.tokens);
                resp = &response;
            }
            auto in = assemble_input(*ex, bundle, Task::rec, resp);
            rec_rows.push_back(recommend(in, graph_emb).scores);
        } else {
            auto in = assemble_input(*ex, prompts(k, Task::conv, true, opt.variant), Task::conv, &ex->response_tokens);
            conv_terms.push_back(conv_loss(in, ex->response_tokens));
        }
    }
    if (!label_rows.empty()) {
        labels.resize(static_cast<Eigen::Index>(label_rows.size()), labels.cols());
        for (std::size_t i = 0; i < label_rows.size(); ++i) labels.row(static_cast<Eigen::Index>(i)) = label_rows[i];
    }

    BatchLosses out;
    out.rec = zero_scalar();
    out.user = zero_scalar();
    out.align = zero_scalar();
    out.conv = zero_scalar();
    if (!conv_terms.empty()) {
        ag::Var sum = conv_terms.front();
        for (std::size_t i = 1; i < conv_terms.size(); ++i) sum = ag::add(sum, conv_terms[i]);
        out.conv = ag::scale(sum, batch_scale);
    }
    if (!stage_two) {
        out.total = out.conv;
        return out;
    }
    if (!rec_rows.empty()) {
        out.rec = preference_loss(ag::concat_rows(rec_rows), labels, reduction);
        out.rec_rows = static_cast<int>(rec_rows.size());
    }
    if (!user_rows.empty()) out.user = preference_loss(ag::concat_rows(user_rows), labels, reduction);
    if (!entity_side.empty()) {
        AlignOptions ao;
        ao.tau = cfg_.loss.tau;
        ao.normalize = cfg_.loss.align_normalize;
        ao.literal = cfg_.loss.align_literal;
        ao.equality = sequence_equality_from_string(cfg_.loss.align_equality);
        out.align = ag::scale(align_loss(ag::concat_rows(entity_side), ag::concat_rows(tree_side),
                                         contrast_mask(sequences, ao.equality), ao),
                              batch_scale);
    }
    const auto& main = opt.task == Task::rec ? out.rec : out.conv;
    out.total = total_loss(main, out.user, out.align, cfg_.loss.alpha, cfg_.loss.beta);
    return out;
}

RecOutput CrsModel::infer_recommendation(const PreparedExample& ex, const ag::Var& graph_emb,
                                         const std::string& response_source, int max_new_tokens,
                                         const VariantConfig& variant, bool with_soft) {
    NoGradGuard guard(params_);
    const auto k = knowledge(ex, graph_emb, variant);
    std::vector<int> response;
    const std::vector<int>* resp = nullptr;
    if (response_source == "gold") {
        resp = &ex.masked_response_tokens;
    } else if (response_source == "generated") {
        auto prefix = assemble_input(ex, prompts(k, Task::conv, with_soft, variant), Task::conv, nullptr);
        auto gen = generate(prefix, max_new_tokens);
        if (!gen.tokens.empty() && gen.tokens.back() == tok::eos) gen.tokens.pop_back();
        if (gen.tokens.empty()) {
            std::cerr << "warning: example " << ex.id << ": empty generated response, using context only\n";
        } else {
            response = mask_items(gen.tokens);
            resp = &response;
        }
    } else if (response_source != "none") {
        throw Error("unknown response source '" + response_source + "'");
    }
    auto in = assemble_input(ex, prompts(k, Task::rec, with_soft, variant), Task::rec, resp);
    return recommend(in, graph_emb);
}

Generation CrsModel::infer_generation(const PreparedExample& ex, const ag::Var& graph_emb, int max_new_tokens,
                                      const VariantConfig& variant, bool with_soft) {
    NoGradGuard guard(params_);
    const auto k = knowledge(ex, graph_emb, variant);
    auto prefix = assemble_input(ex, prompts(k, Task::conv, with_soft, variant), Task::conv, nullptr);
    return generate(prefix, max_new_tokens);
}

void CrsModel::set_backbone_trainable(bool on) {
    params_.set_trainable(Group::plm, on);
    backbone_trainable_ = on;
    encode_cache_.clear();
}

void CrsModel::reinit_soft_prompts(std::uint64_t seed) {
    Rng rng(seed);
    soft_rec_.mutable_value() = randn(soft_rec_.rows(), soft_rec_.cols(), kSoftPromptStd, rng);
    soft_conv_.mutable_value() = randn(soft_conv_.rows(), soft_conv_.cols(), kSoftPromptStd, rng);
}

void CrsModel::save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "kgcrs-checkpoint-v1";
    manifest["config"] = cfg_.to_json();
    manifest["graph_hash"] = graph_.content_hash();
    const auto vocab_text = vocab_.serialize();
    manifest["vocab_hash"] = git_blob_hash(vocab_text);
    write_file(dir + "/vocab.txt", vocab_text);
    for (Group g : kAllGroups) {
        const auto name = std::string(group_name(g));
        write_file(dir + "/" + name + ".params", params_.serialize(g));
        manifest["groups"][name] = params_.hash(g);
    }
    write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

void CrsModel::load_groups(const std::string& dir, std::span<const Group> groups) {
    for (Group g : groups) {
        const auto path = dir + "/" + std::string(group_name(g)) + ".params";
        params_.deserialize(g, read_file(path));
    }
    encode_cache_.clear();
}

Vocabulary CrsModel::load_vocab(const std::string& dir) { return Vocabulary::deserialize(read_file(dir + "/vocab.txt")); }

NoGradGuard::NoGradGuard(ParameterSet& ps) : ps_(ps) {
    for (const auto& e : ps_.entries()) {
        saved_.push_back(e.var.requires_grad());
        auto v = e.var;
        v.set_requires_grad(false);
    }
}

NoGradGuard::~NoGradGuard() {
    std::size_t i = 0;
    for (const auto& e : ps_.entries()) {
        auto v = e.var;
        v.set_requires_grad(saved_[i++]);
    }
}

}  // namespace kgcrs
