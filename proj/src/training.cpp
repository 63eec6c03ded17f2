#include "kgcrs/training.hpp"

#include "kgcrs/error.hpp"
#include "kgcrs/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace kgcrs {

namespace {

constexpr double kMaskRate = 0.15;
constexpr std::uint64_t kPromptSeedSalt = 0x5eed0002;
constexpr std::uint64_t kPretrainSeedSalt = 0x5eed0001;

std::vector<int> dialogue_sequence(const PreparedExample& ex, const std::vector<int>& response) {
    std::vector<int> s = ex.context_tokens;
    s.push_back(tok::sep);
    s.insert(s.end(), response.begin(), response.end());
    s.push_back(tok::eos);
    return s;
}

ag::Var add_all(const std::vector<ag::Var>& terms) {
    ag::Var sum = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) sum = ag::add(sum, terms[i]);
    return sum;
}

bool finite(double x) { return std::isfinite(x); }

struct Snapshot {
    std::vector<ag::Matrix> values;
};

Snapshot take_snapshot(const ParameterSet& ps) {
    Snapshot s;
    for (const auto& e : ps.entries()) s.values.push_back(e.var.value());
    return s;
}

void restore_snapshot(ParameterSet& ps, const Snapshot& s) {
    std::size_t i = 0;
    for (const auto& e : ps.entries()) {
        auto v = e.var;
        v.mutable_value() = s.values[i++];
    }
}

nlohmann::json step_record(int stage, int step, const BatchLosses& l, double lr) {
    return {{"stage", stage},
            {"step", step},
            {"loss", l.total.scalar()},
            {"l_rec", l.rec.scalar()},
            {"l_user", l.user.scalar()},
            {"l_align", l.align.scalar()},
            {"l_conv", l.conv.scalar()},
            {"lr", lr}};
}

/// Runs one training stage; returns the number of optimiser steps taken.
int run_stage(CrsModel& model, std::span<const PreparedExample> train, std::span<const PreparedExample> valid,
              const ForwardOptions& opt, std::span<const Group> groups, double lr, int max_steps, int batch_size,
              Rng& shuffle_rng, TrainReport& report) {
    const auto& cfg = model.config();
    const int stage_no = opt.stage == Stage::one ? 1 : 2;
    std::vector<const PreparedExample*> pool;
    for (const auto& ex : train) {
        if (opt.stage == Stage::two && opt.task == Task::rec && ex.targets.empty()) continue;
        pool.push_back(&ex);
    }
    if (pool.empty() || max_steps == 0) return 0;

    AdamW optimiser(cfg.train.adam_beta1, cfg.train.adam_beta2, cfg.train.adam_eps, cfg.train.weight_decay);
    const bool early = cfg.train.early_stopping && !valid.empty();
    double best = -std::numeric_limits<double>::infinity();
    int bad_checks = 0;
    Snapshot best_weights;
    const int per_epoch =
        static_cast<int>((pool.size() + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size));
    const int check_every = cfg.train.eval_every > 0 ? cfg.train.eval_every : per_epoch;

    auto check = [&](int step) {
        if (!early) return false;
        const double score = opt.stage == Stage::one
                                 ? -mean_loss(model, valid, opt, cfg.train.batch_conv)
                                 : validation_score(model, valid);
        report.log.push_back({{"stage", stage_no}, {"event", "validation"}, {"step", step}, {"score", score}});
        if (score > best) {
            best = score;
            bad_checks = 0;
            best_weights = take_snapshot(model.params());
            return false;
        }
        return ++bad_checks >= cfg.train.patience;
    };

    int step = 0;
    std::vector<const PreparedExample*> order;
    std::size_t cursor = 0;
    while (step < max_steps) {
        if (cursor >= order.size()) {
            order = pool;
            shuffle_rng.shuffle(order);
            cursor = 0;
        }
        const auto take = std::min<std::size_t>(static_cast<std::size_t>(batch_size), order.size() - cursor);
        std::span<const PreparedExample* const> batch(order.data() + cursor, take);
        cursor += take;

        model.params().zero_grad();
        auto losses = model.forward_batch(batch, opt);
        const double total = losses.total.scalar();
        if (!finite(total)) {
            throw Error("training diverged at stage " + std::to_string(stage_no) + " step " +
                        std::to_string(step + 1) + ": loss " + std::to_string(total) +
                        " (l_rec " + std::to_string(losses.rec.scalar()) + ", l_user " +
                        std::to_string(losses.user.scalar()) + ", l_align " + std::to_string(losses.align.scalar()) +
                        ", l_conv " + std::to_string(losses.conv.scalar()) + ")");
        }
        ag::backward(losses.total);
        optimiser.step(model.params(), groups, lr);
        ++step;
        report.log.push_back(step_record(stage_no, step, losses, lr));
        if (opt.stage == Stage::two) {
            if (step == 1) report.stage2_first_loss = total;
            report.stage2_last_loss = total;
        }
        if (step % check_every == 0 && check(step)) break;
    }
    if (early && !best_weights.values.empty()) {
        restore_snapshot(model.params(), best_weights);
        report.log.push_back({{"stage", stage_no}, {"event", "restore_best"}, {"score", best}});
    }
    return step;
}

}  // namespace

Dataset load_dataset(const RunConfig& cfg) {
    if (cfg.paths.kg.empty() || cfg.paths.items.empty() || cfg.paths.corpus.empty()) {
        throw ConfigError("paths.kg, paths.items and paths.corpus must be set");
    }
    Dataset d;
    const auto kg_text = read_file(cfg.paths.kg);
    const auto items_text = read_file(cfg.paths.items);
    const auto corpus_text = read_file(cfg.paths.corpus);
    d.graph = KnowledgeGraph::load_triples(cfg.paths.kg, cfg.model.use_inverse_edges)
                  .with_items(KnowledgeGraph::read_item_names(cfg.paths.items));
    d.dialogues = parse_dialogues(corpus_text);
    d.split = split_dialogues(d.dialogues, cfg.seeds.split);
    d.train = expand_all(d.split.train);
    d.valid = expand_all(d.split.valid);
    d.test = expand_all(d.split.test);
    d.input_hash = git_blob_hash("kg " + git_blob_hash(kg_text) + "\nitems " + git_blob_hash(items_text) +
                                 "\ncorpus " + git_blob_hash(corpus_text) + "\n");
    return d;
}

Vocabulary build_vocabulary(const Dataset& data) {
    std::vector<std::string> texts{"# $"};
    for (const auto& d : data.dialogues) {
        for (const auto& u : d.utterances) texts.push_back(u.text);
    }
    for (const auto& n : data.graph.entities().names()) texts.push_back(n);
    for (const auto& n : data.graph.relations().names()) texts.push_back(n);
    return Vocabulary::build(texts);
}

AdamW::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {}

void AdamW::step(ParameterSet& ps, std::span<const Group> groups, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    for (const auto& e : ps.entries()) {
        if (std::find(groups.begin(), groups.end(), e.group) == groups.end()) continue;
        auto v = e.var;
        if (!v.has_grad()) continue;
        auto& st = state_[e.name];
        if (st.m.size() == 0) {
            st.m = ag::Matrix::Zero(v.rows(), v.cols());
            st.v = ag::Matrix::Zero(v.rows(), v.cols());
        }
        const auto& g = v.grad();
        st.m = beta1_ * st.m + (1.0 - beta1_) * g;
        st.v = beta2_ * st.v + (1.0 - beta2_) * g.cwiseProduct(g);
        ag::Matrix update = (st.m / c1).array() / ((st.v / c2).array().sqrt() + eps_);
        v.mutable_value() = v.value() - lr * (update + wd_ * v.value());
    }
}

ag::Var masked_token_loss(const CrsModel& model, const std::vector<int>& ids, Rng& rng) {
    if (ids.empty()) throw Error("masked_token_loss: empty sequence");
    std::vector<int> input = ids;
    std::vector<int> positions;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (rng.uniform() < kMaskRate) positions.push_back(static_cast<int>(i));
    }
    if (positions.empty()) positions.push_back(static_cast<int>(rng.below(ids.size())));
    std::vector<int> targets;
    for (int p : positions) {
        targets.push_back(ids[static_cast<std::size_t>(p)]);
        input[static_cast<std::size_t>(p)] = tok::mask;
    }
    const auto& enc = model.text_encoder().transformer();
    auto hidden = enc.forward_tokens(input);
    auto logits = enc.lm_logits(ag::gather_rows(hidden, positions));
    return ag::scale(sequence_nll(logits, targets), 1.0 / static_cast<double>(targets.size()));
}

ag::Var next_token_loss(const CrsModel& model, const std::vector<int>& ids) {
    if (ids.size() < 2) throw Error("next_token_loss: need at least two tokens");
    const auto& dec = model.decoder();
    std::vector<int> input(ids.begin(), ids.end() - 1);
    std::vector<int> targets(ids.begin() + 1, ids.end());
    auto logits = dec.lm_logits(dec.forward_tokens(input));
    return ag::scale(sequence_nll(logits, targets), 1.0 / static_cast<double>(targets.size()));
}

void pretrain_backbone(CrsModel& model, std::span<const PreparedExample> train, std::vector<nlohmann::json>* log) {
    const auto& cfg = model.config();
    const auto& bb = cfg.backbone;
    if (train.empty()) throw Error("pretrain_backbone: no training examples");

    // Encoder sequences: dialogue contexts plus one-hop tree strings so the
    // encoder sees the depth markers it will read later.
    std::vector<std::vector<int>> enc_data;
    std::set<std::vector<int>> seen;
    for (const auto& ex : train) {
        auto s = truncate_tokens(dialogue_sequence(ex, ex.response_tokens), cfg.encoder.max_len, TextKind::dialogue);
        if (seen.insert(s).second) enc_data.push_back(std::move(s));
    }
    const auto& g = model.graph();
    for (const auto& t : g.triples()) {
        const auto text = "#" + g.entities().name(t.head) + " $$" + g.relations().name(t.relation) + " ##" +
                          g.entities().name(t.tail);
        auto s = truncate_tokens(model.vocab().encode(text), cfg.encoder.max_len, TextKind::tree);
        if (seen.insert(s).second) enc_data.push_back(std::move(s));
    }
    std::vector<std::vector<int>> dec_data;
    for (const auto& ex : train) {
        for (const auto* resp : {&ex.response_tokens, &ex.masked_response_tokens}) {
            auto s = truncate_tokens(dialogue_sequence(ex, *resp), bb.max_positions + 1, TextKind::dialogue);
            if (s.size() >= 2 && seen.insert(s).second) dec_data.push_back(std::move(s));
        }
    }

    Rng rng(cfg.seeds.init ^ kPretrainSeedSalt);
    const std::array<Group, 1> plm{Group::plm};
    model.set_backbone_trainable(true);
    auto run = [&](const std::vector<std::vector<int>>& data, int steps, const char* name, auto&& loss_fn) {
        AdamW opt(0.9, 0.999, 1e-8, 0.0);
        for (int step = 1; step <= steps; ++step) {
            model.params().zero_grad();
            std::vector<ag::Var> terms;
            for (int b = 0; b < bb.pretrain_batch; ++b) {
                terms.push_back(loss_fn(data[static_cast<std::size_t>(rng.below(data.size()))]));
            }
            auto loss = ag::scale(add_all(terms), 1.0 / static_cast<double>(terms.size()));
            if (!finite(loss.scalar())) throw Error(std::string("backbone pretraining diverged (") + name + ")");
            ag::backward(loss);
            opt.step(model.params(), plm, bb.pretrain_lr);
            if (log) log->push_back({{"stage", 0}, {"objective", name}, {"step", step}, {"loss", loss.scalar()}});
        }
    };
    run(enc_data, bb.encoder_pretrain_steps, "masked_token",
        [&](const std::vector<int>& s) { return masked_token_loss(model, s, rng); });
    run(dec_data, bb.decoder_pretrain_steps, "next_token",
        [&](const std::vector<int>& s) { return next_token_loss(model, s); });
    model.params().zero_grad();
    model.set_backbone_trainable(false);
}

double mean_loss(CrsModel& model, std::span<const PreparedExample> examples, const ForwardOptions& opt,
                 int batch_size) {
    if (examples.empty()) return 0.0;
    NoGradGuard guard(model.params());
    double total = 0.0;
    int batches = 0;
    for (std::size_t i = 0; i < examples.size(); i += static_cast<std::size_t>(batch_size)) {
        std::vector<const PreparedExample*> batch;
        for (std::size_t j = i; j < std::min(examples.size(), i + static_cast<std::size_t>(batch_size)); ++j) {
            batch.push_back(&examples[j]);
        }
        total += model.forward_batch(batch, opt).total.scalar();
        ++batches;
    }
    return total / batches;
}

double validation_score(CrsModel& model, std::span<const PreparedExample> valid) {
    const auto& cfg = model.config();
    if (cfg.task == Task::rec) {
        auto report = evaluate(model, valid, Task::rec, "valid");
        return report.metrics.at("recall@50");
    }
    ForwardOptions opt;
    opt.stage = Stage::two;
    opt.task = Task::conv;
    opt.variant = cfg.variant;
    return -mean_loss(model, valid, opt, cfg.train.batch_conv);
}

TrainReport train_two_stage(CrsModel& model, std::span<const PreparedExample> train,
                            std::span<const PreparedExample> valid) {
    const auto& cfg = model.config();
    TrainReport report;
    report.plm_hash_before = model.params().hash(Group::plm);
    model.set_backbone_trainable(false);
    model.params().set_trainable(Group::prompt, false);
    model.params().set_trainable(Group::user, true);
    model.params().set_trainable(Group::tree, true);
    Rng shuffle_rng(cfg.seeds.shuffle);

    ForwardOptions s1;
    s1.stage = Stage::one;
    s1.task = Task::conv;
    s1.variant = cfg.variant;
    const std::array<Group, 2> g1{Group::user, Group::tree};
    report.stage1_steps = run_stage(model, train, valid, s1, g1, cfg.train.lr_stage1, cfg.train.stage1_steps,
                                    cfg.train.batch_conv, shuffle_rng, report);

    model.reinit_soft_prompts(cfg.seeds.init ^ kPromptSeedSalt);
    model.params().set_trainable(Group::prompt, true);
    report.stage2_prompt_hash = model.params().hash(Group::prompt);
    report.log.push_back({{"stage", 2}, {"event", "prompt_init"}, {"seed", cfg.seeds.init ^ kPromptSeedSalt},
                          {"theta_prompt_hash", report.stage2_prompt_hash}});

    ForwardOptions s2;
    s2.stage = Stage::two;
    s2.task = cfg.task;
    s2.variant = cfg.variant;
    s2.rec_response_source = cfg.train.rec_response_source;
    const std::array<Group, 3> g2{Group::user, Group::tree, Group::prompt};
    const int batch = cfg.task == Task::rec ? cfg.train.batch_rec : cfg.train.batch_conv;
    report.stage2_steps = run_stage(model, train, valid, s2, g2, cfg.train.lr_stage2, cfg.train.stage2_steps, batch,
                                    shuffle_rng, report);
    model.params().zero_grad();
    report.plm_hash_after = model.params().hash(Group::plm);
    return report;
}

}  // namespace kgcrs
