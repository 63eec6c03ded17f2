#include "kgcrs/config.hpp"

#include "kgcrs/error.hpp"
#include "kgcrs/util.hpp"

#include <filesystem>
#include <set>

namespace kgcrs {

using nlohmann::json;

std::string to_string(Task t) { return t == Task::rec ? "rec" : "conv"; }

Task task_from_string(const std::string& s) {
    if (s == "rec") return Task::rec;
    if (s == "conv") return Task::conv;
    throw ConfigError("task must be 'rec' or 'conv', got '" + s + "'");
}

namespace {

// One field list per section drives both serialisation directions.
template <class F> void fields(PathsConfig& c, F&& f) {
    f("kg", c.kg);
    f("items", c.items);
    f("corpus", c.corpus);
    f("output_dir", c.output_dir);
}
template <class F> void fields(EncoderConfig& c, F&& f) {
    f("d_text", c.d_text);
    f("d_ent", c.d_ent);
    f("text_layers", c.text_layers);
    f("text_heads", c.text_heads);
    f("max_len", c.max_len);
    f("rgcn_layers", c.rgcn_layers);
    f("rgcn_bases", c.rgcn_bases);
    f("rgcn_activation", c.rgcn_activation);
    f("pretrained", c.pretrained);
}
template <class F> void fields(BackboneConfig& c, F&& f) {
    f("d_model", c.d_model);
    f("layers", c.layers);
    f("heads", c.heads);
    f("max_positions", c.max_positions);
    f("encoder_pretrain_steps", c.encoder_pretrain_steps);
    f("decoder_pretrain_steps", c.decoder_pretrain_steps);
    f("pretrain_batch", c.pretrain_batch);
    f("pretrain_lr", c.pretrain_lr);
}
template <class F> void fields(ModelConfig& c, F&& f) {
    f("d_fusion", c.d_fusion);
    f("d_align", c.d_align);
    f("normalize_cross_attention", c.normalize_cross_attention);
    f("asum_mean", c.asum_mean);
    f("context_pooling", c.context_pooling);
    f("rec_pooling", c.rec_pooling);
    f("use_inverse_edges", c.use_inverse_edges);
}
template <class F> void fields(TreeConfig& c, F&& f) {
    f("depth", c.depth);
    f("degree", c.degree);
    f("sim_source", c.sim_source);
}
template <class F> void fields(LossConfig& c, F&& f) {
    f("alpha", c.alpha);
    f("beta", c.beta);
    f("tau", c.tau);
    f("align_literal", c.align_literal);
    f("align_normalize", c.align_normalize);
    f("align_equality", c.align_equality);
    f("reduction", c.reduction);
}
template <class F> void fields(TrainConfig& c, F&& f) {
    f("lr_stage1", c.lr_stage1);
    f("lr_stage2", c.lr_stage2);
    f("weight_decay", c.weight_decay);
    f("adam_beta1", c.adam_beta1);
    f("adam_beta2", c.adam_beta2);
    f("adam_eps", c.adam_eps);
    f("batch_rec", c.batch_rec);
    f("batch_conv", c.batch_conv);
    f("prompt_len_rec", c.prompt_len_rec);
    f("prompt_len_conv", c.prompt_len_conv);
    f("stage1_steps", c.stage1_steps);
    f("stage2_steps", c.stage2_steps);
    f("eval_every", c.eval_every);
    f("early_stopping", c.early_stopping);
    f("patience", c.patience);
    f("rec_response_source", c.rec_response_source);
}
template <class F> void fields(EvalConfig& c, F&& f) {
    f("rec_response_source", c.rec_response_source);
    f("max_new_tokens", c.max_new_tokens);
    f("distinct_mode", c.distinct_mode);
}
template <class F> void fields(SeedConfig& c, F&& f) {
    f("split", c.split);
    f("init", c.init);
    f("shuffle", c.shuffle);
}
template <class F> void fields(VariantConfig& c, F&& f) {
    f("tree", c.tree);
    f("user", c.user);
    f("align", c.align);
}

template <class S> json section_to_json(const S& s) {
    json j = json::object();
    fields(const_cast<S&>(s), [&](const char* key, auto& v) { j[key] = v; });
    return j;
}

template <class T> void read_value(const json& j, const std::string& path, T& out) {
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!j.is_boolean()) throw ConfigError("");
        } else if constexpr (std::is_integral_v<T>) {
            if (!j.is_number_integer()) throw ConfigError("");
            if constexpr (std::is_unsigned_v<T>) {
                if (j.get<std::int64_t>() < 0) throw ConfigError("");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!j.is_number()) throw ConfigError("");
        } else {
            if (!j.is_string()) throw ConfigError("");
        }
        out = j.get<T>();
    } catch (const std::exception&) {
        throw ConfigError("config key '" + path + "' has the wrong type");
    }
}

template <class S> void section_from_json(const json& j, const std::string& name, S& s) {
    if (!j.is_object()) throw ConfigError("config key '" + name + "' must be an object");
    std::set<std::string> known;
    fields(s, [&](const char* key, auto& v) {
        known.insert(key);
        if (j.contains(key)) read_value(j.at(key), name + "." + key, v);
    });
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.contains(it.key())) throw ConfigError("unknown config key '" + name + "." + it.key() + "'");
    }
}

void require(bool ok, const std::string& key, const std::string& msg) {
    if (!ok) throw ConfigError("config key '" + key + "': " + msg);
}

bool one_of(const std::string& v, std::initializer_list<const char*> options) {
    for (const char* o : options) {
        if (v == o) return true;
    }
    return false;
}

}  // namespace

json RunConfig::to_json() const {
    json j;
    j["task"] = to_string(task);
    j["paths"] = section_to_json(paths);
    j["encoder"] = section_to_json(encoder);
    j["backbone"] = section_to_json(backbone);
    j["model"] = section_to_json(model);
    j["tree"] = section_to_json(tree);
    j["loss"] = section_to_json(loss);
    j["train"] = section_to_json(train);
    j["eval"] = section_to_json(eval);
    j["seeds"] = section_to_json(seeds);
    j["variant"] = section_to_json(variant);
    return j;
}

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be an object");
    RunConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& key = it.key();
        const auto& v = it.value();
        if (key == "task") {
            if (!v.is_string()) throw ConfigError("config key 'task' has the wrong type");
            c.task = task_from_string(v.get<std::string>());
        } else if (key == "paths") {
            section_from_json(v, key, c.paths);
        } else if (key == "encoder") {
            section_from_json(v, key, c.encoder);
        } else if (key == "backbone") {
            section_from_json(v, key, c.backbone);
        } else if (key == "model") {
            section_from_json(v, key, c.model);
        } else if (key == "tree") {
            section_from_json(v, key, c.tree);
        } else if (key == "loss") {
            section_from_json(v, key, c.loss);
        } else if (key == "train") {
            section_from_json(v, key, c.train);
        } else if (key == "eval") {
            section_from_json(v, key, c.eval);
        } else if (key == "seeds") {
            section_from_json(v, key, c.seeds);
        } else if (key == "variant") {
            section_from_json(v, key, c.variant);
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    auto c = from_json(j);
    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](std::string& p) {
        if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
    };
    resolve(c.paths.kg);
    resolve(c.paths.items);
    resolve(c.paths.corpus);
    resolve(c.encoder.pretrained);
    return c;
}

void RunConfig::validate() const {
    require(encoder.d_text > 0, "encoder.d_text", "must be > 0");
    require(encoder.d_ent > 0, "encoder.d_ent", "must be > 0");
    require(encoder.text_layers >= 0, "encoder.text_layers", "must be >= 0");
    require(encoder.text_heads > 0 && encoder.d_text % encoder.text_heads == 0, "encoder.text_heads",
            "must divide d_text");
    require(encoder.max_len > 0, "encoder.max_len", "must be > 0");
    require(encoder.rgcn_layers >= 0, "encoder.rgcn_layers", "must be >= 0");
    require(encoder.rgcn_bases > 0, "encoder.rgcn_bases", "must be > 0");
    require(one_of(encoder.rgcn_activation, {"relu", "identity"}), "encoder.rgcn_activation",
            "must be relu or identity");
    require(backbone.d_model > 0, "backbone.d_model", "must be > 0");
    require(backbone.heads > 0 && backbone.d_model % backbone.heads == 0, "backbone.heads",
            "must divide d_model");
    require(backbone.layers >= 0, "backbone.layers", "must be >= 0");
    require(backbone.max_positions > 0, "backbone.max_positions", "must be > 0");
    require(backbone.encoder_pretrain_steps >= 0, "backbone.encoder_pretrain_steps", "must be >= 0");
    require(backbone.decoder_pretrain_steps >= 0, "backbone.decoder_pretrain_steps", "must be >= 0");
    require(backbone.pretrain_batch > 0, "backbone.pretrain_batch", "must be > 0");
    require(backbone.pretrain_lr > 0, "backbone.pretrain_lr", "must be > 0");
    require(model.d_fusion > 0, "model.d_fusion", "must be > 0");
    require(model.d_align > 0, "model.d_align", "must be > 0");
    require(one_of(model.context_pooling, {"mean", "max", "first"}), "model.context_pooling",
            "must be mean, max or first");
    require(one_of(model.rec_pooling, {"last", "mean", "max"}), "model.rec_pooling",
            "must be last, mean or max");
    require(tree.depth >= 0, "tree.depth", "must be >= 0");
    require(tree.degree >= 1, "tree.degree", "must be >= 1");
    require(one_of(tree.sim_source, {"rgcn", "static"}), "tree.sim_source", "must be rgcn or static");
    require(loss.alpha >= 0, "loss.alpha", "must be >= 0");
    require(loss.beta >= 0, "loss.beta", "must be >= 0");
    require(loss.tau > 0, "loss.tau", "must be > 0");
    require(one_of(loss.align_equality, {"ordered", "set"}), "loss.align_equality", "must be ordered or set");
    require(one_of(loss.reduction, {"sum", "mean"}), "loss.reduction", "must be sum or mean");
    require(train.lr_stage1 > 0, "train.lr_stage1", "must be > 0");
    require(train.lr_stage2 > 0, "train.lr_stage2", "must be > 0");
    require(train.weight_decay >= 0, "train.weight_decay", "must be >= 0");
    require(train.adam_eps > 0, "train.adam_eps", "must be > 0");
    require(train.batch_rec > 0, "train.batch_rec", "must be > 0");
    require(train.batch_conv > 0, "train.batch_conv", "must be > 0");
    require(train.prompt_len_rec >= 0, "train.prompt_len_rec", "must be >= 0");
    require(train.prompt_len_conv >= 0, "train.prompt_len_conv", "must be >= 0");
    require(train.stage1_steps >= 0, "train.stage1_steps", "must be >= 0");
    require(train.stage2_steps >= 0, "train.stage2_steps", "must be >= 0");
    require(train.eval_every >= 0, "train.eval_every", "must be >= 0");
    require(train.patience >= 1, "train.patience", "must be >= 1");
    require(one_of(train.rec_response_source, {"gold", "generated", "none"}), "train.rec_response_source",
            "must be gold, generated or none");
    require(one_of(eval.rec_response_source, {"gold", "generated", "none"}), "eval.rec_response_source",
            "must be gold, generated or none");
    require(eval.max_new_tokens > 0, "eval.max_new_tokens", "must be > 0");
    require(one_of(eval.distinct_mode, {"corpus", "response"}), "eval.distinct_mode",
            "must be corpus or response");
}

}  // namespace kgcrs
