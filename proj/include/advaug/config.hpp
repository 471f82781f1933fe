#pragma once

#include "advaug/adversarial.hpp"
#include "advaug/losses.hpp"
#include "advaug/model.hpp"
#include "advaug/optimizer.hpp"
#include "advaug/synthetic.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

namespace advaug {

enum class LossConfig { kClean, kMixup, kAut, kCleanAdv, kAutAdv };

inline std::string to_string(LossConfig lc) {
    switch (lc) {
        case LossConfig::kClean: return "clean";
        case LossConfig::kMixup: return "mixup";
        case LossConfig::kAut: return "aut";
        case LossConfig::kCleanAdv: return "clean+adv";
        case LossConfig::kAutAdv: return "aut+adv";
    }
    throw std::logic_error("to_string(LossConfig): unreachable");
}

inline LossConfig parse_loss_config(const std::string& s) {
    if (s == "clean") return LossConfig::kClean;
    if (s == "mixup") return LossConfig::kMixup;
    if (s == "aut") return LossConfig::kAut;
    if (s == "clean+adv") return LossConfig::kCleanAdv;
    if (s == "aut+adv") return LossConfig::kAutAdv;
    throw std::invalid_argument("loss_config: unknown value '" + s +
                                "' (expected clean|mixup|aut|clean+adv|aut+adv)");
}

struct DataConfig {
    // Either a synthetic task or a pair of corpus files.
    bool synthetic = true;
    SynthTaskSpec task;
    int train_size = 2000;
    int valid_size = 200;
    std::string train_file, valid_file;
    int vocab_max_size = 32000;  // file mode only

    void validate() const {
        if (synthetic) {
            advaug::validate(task);
            if (train_size < 2) throw std::invalid_argument("data.train_size: must be >= 2");
            if (valid_size < 1) throw std::invalid_argument("data.valid_size: must be >= 1");
        } else {
            if (train_file.empty()) throw std::invalid_argument("data.train_file: required in file mode");
            if (valid_file.empty()) throw std::invalid_argument("data.valid_file: required in file mode");
        }
    }
};

struct TrainConfig {
    LossConfig loss_config = LossConfig::kAutAdv;
    std::uint64_t seed = 1;
    std::string precision = "float32";  // float32 | float64

    ModelConfig model;  // model.vocab_size filled from the data at run time

    // Vicinity and adversarial knobs.
    double alpha = 8.0;        // Beta shape for adversarial/authentic mixing
    double mixup_alpha = 0.2;  // Beta shape for the plain mixup loss
    double gamma_src = 0.25;
    double gamma_tgt = 0.5;
    int adv_k = 10;
    double adv_sim_threshold = -1.0;

    // Curriculum reweighting.
    double beta = 250000.0;
    double ema_decay = 0.9;

    double label_smoothing = 0.1;
    std::string token_reduction = "mean";  // mean | sum, per-position loss reduction

    int batch_size = 8;
    int max_steps = 100;
    int eval_every = 0;        // 0 → validate only at the end
    int checkpoint_every = 0;  // 0 → checkpoint only at the end
    int beam_width = 1;

    AdamConfig optimizer;
    DataConfig data;

    AdvParams adv_params(AdvSide side) const {
        AdvParams p;
        p.gamma = side == AdvSide::kSrc ? gamma_src : gamma_tgt;
        p.k = adv_k;
        p.sim_threshold = adv_sim_threshold;
        p.side = side;
        return p;
    }

    TokenReduction reduction() const {
        if (token_reduction == "mean") return TokenReduction::kMean;
        if (token_reduction == "sum") return TokenReduction::kSum;
        throw std::invalid_argument("token_reduction: unknown value '" + token_reduction + "'");
    }

    void validate() const {
        if (precision != "float32" && precision != "float64")
            throw std::invalid_argument("precision: must be float32 or float64");
        ModelConfig m = model;  // vocab_size is filled from the data at run time
        if (m.vocab_size == 0) m.vocab_size = Vocabulary::kNumSpecials + 1;
        m.validate();
        if (alpha <= 0) throw std::invalid_argument("alpha: must be > 0");
        if (mixup_alpha <= 0) throw std::invalid_argument("mixup_alpha: must be > 0");
        adv_params(AdvSide::kSrc).validate();
        adv_params(AdvSide::kTgt).validate();
        if (beta <= 0) throw std::invalid_argument("beta: must be > 0");
        if (ema_decay <= 0 || ema_decay >= 1) throw std::invalid_argument("ema_decay: must be in (0,1)");
        if (label_smoothing < 0 || label_smoothing >= 1)
            throw std::invalid_argument("label_smoothing: must be in [0,1)");
        reduction();
        if (batch_size < 2) throw std::invalid_argument("batch_size: must be >= 2");
        if (max_steps < 1) throw std::invalid_argument("max_steps: must be >= 1");
        if (eval_every < 0) throw std::invalid_argument("eval_every: must be >= 0");
        if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every: must be >= 0");
        if (beam_width < 1) throw std::invalid_argument("beam_width: must be >= 1");
        optimizer.validate();
        data.validate();
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& scope) {
    for (const auto& item : j.items())
        if (!known.count(item.key()))
            throw std::invalid_argument("config: unknown field '" + scope + item.key() + "'");
}

template <class T>
inline void maybe(const nlohmann::json& j, const char* key, T& out, const std::string& scope) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument("config: field '" + scope + key + "' has the wrong type");
    }
}

}  // namespace detail

inline TaskKind parse_task_kind(const std::string& s) {
    if (s == "copy") return TaskKind::kCopy;
    if (s == "reverse") return TaskKind::kReverse;
    if (s == "cipher") return TaskKind::kCipher;
    throw std::invalid_argument("data.task: unknown value '" + s + "' (expected copy|reverse|cipher)");
}

inline std::string to_string(TaskKind k) {
    switch (k) {
        case TaskKind::kCopy: return "copy";
        case TaskKind::kReverse: return "reverse";
        case TaskKind::kCipher: return "cipher";
    }
    throw std::logic_error("to_string(TaskKind): unreachable");
}

inline TrainConfig parse_train_config(const nlohmann::json& j) {
    TrainConfig c;
    detail::reject_unknown_keys(
        j,
        {"loss_config", "seed", "precision", "model", "alpha", "mixup_alpha", "gamma_src", "gamma_tgt",
         "adv_k", "adv_sim_threshold", "beta", "ema_decay", "label_smoothing", "token_reduction",
         "batch_size", "max_steps", "eval_every", "checkpoint_every", "beam_width", "optimizer", "data"},
        "");

    std::string lc = to_string(c.loss_config);
    detail::maybe(j, "loss_config", lc, "");
    c.loss_config = parse_loss_config(lc);
    detail::maybe(j, "seed", c.seed, "");
    detail::maybe(j, "precision", c.precision, "");
    detail::maybe(j, "alpha", c.alpha, "");
    detail::maybe(j, "mixup_alpha", c.mixup_alpha, "");
    detail::maybe(j, "gamma_src", c.gamma_src, "");
    detail::maybe(j, "gamma_tgt", c.gamma_tgt, "");
    detail::maybe(j, "adv_k", c.adv_k, "");
    detail::maybe(j, "adv_sim_threshold", c.adv_sim_threshold, "");
    detail::maybe(j, "beta", c.beta, "");
    detail::maybe(j, "ema_decay", c.ema_decay, "");
    detail::maybe(j, "label_smoothing", c.label_smoothing, "");
    detail::maybe(j, "token_reduction", c.token_reduction, "");
    detail::maybe(j, "batch_size", c.batch_size, "");
    detail::maybe(j, "max_steps", c.max_steps, "");
    detail::maybe(j, "eval_every", c.eval_every, "");
    detail::maybe(j, "checkpoint_every", c.checkpoint_every, "");
    detail::maybe(j, "beam_width", c.beam_width, "");

    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::reject_unknown_keys(
            m, {"d_model", "n_heads", "n_enc", "n_dec", "d_ff", "dropout", "shared_embeddings", "max_len"},
            "model.");
        detail::maybe(m, "d_model", c.model.d_model, "model.");
        detail::maybe(m, "n_heads", c.model.n_heads, "model.");
        detail::maybe(m, "n_enc", c.model.n_enc, "model.");
        detail::maybe(m, "n_dec", c.model.n_dec, "model.");
        detail::maybe(m, "d_ff", c.model.d_ff, "model.");
        detail::maybe(m, "dropout", c.model.dropout, "model.");
        detail::maybe(m, "shared_embeddings", c.model.shared_embeddings, "model.");
        detail::maybe(m, "max_len", c.model.max_len, "model.");
    }

    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        detail::reject_unknown_keys(o, {"beta1", "beta2", "eps", "lr_scale", "warmup_steps"}, "optimizer.");
        detail::maybe(o, "beta1", c.optimizer.beta1, "optimizer.");
        detail::maybe(o, "beta2", c.optimizer.beta2, "optimizer.");
        detail::maybe(o, "eps", c.optimizer.eps, "optimizer.");
        detail::maybe(o, "lr_scale", c.optimizer.lr_scale, "optimizer.");
        detail::maybe(o, "warmup_steps", c.optimizer.warmup_steps, "optimizer.");
    }

    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::reject_unknown_keys(d,
                                    {"task", "vocab_size", "min_len", "max_len", "class_size",
                                     "synonym_noise", "train_size", "valid_size", "train_file",
                                     "valid_file", "vocab_max_size"},
                                    "data.");
        c.data.synthetic = !(d.contains("train_file") || d.contains("valid_file"));
        if (!c.data.synthetic && d.contains("task"))
            throw std::invalid_argument("config: field 'data.task' conflicts with data.train_file");
        std::string task = to_string(c.data.task.kind);
        detail::maybe(d, "task", task, "data.");
        c.data.task.kind = parse_task_kind(task);
        detail::maybe(d, "vocab_size", c.data.task.vocab_size, "data.");
        detail::maybe(d, "min_len", c.data.task.min_len, "data.");
        detail::maybe(d, "max_len", c.data.task.max_len, "data.");
        detail::maybe(d, "class_size", c.data.task.class_size, "data.");
        detail::maybe(d, "synonym_noise", c.data.task.synonym_noise, "data.");
        detail::maybe(d, "train_size", c.data.train_size, "data.");
        detail::maybe(d, "valid_size", c.data.valid_size, "data.");
        detail::maybe(d, "train_file", c.data.train_file, "data.");
        detail::maybe(d, "valid_file", c.data.valid_file, "data.");
        detail::maybe(d, "vocab_max_size", c.data.vocab_max_size, "data.");
    }

    // The task's own seed stream follows the root seed unless set via files.
    c.data.task.seed = c.seed;
    c.validate();
    return c;
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_train_config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_train_config: malformed JSON in " + path + ": " + e.what());
    }
    return parse_train_config(j);
}

// Full round-trip serialization; the echo written into an experiment
// directory is sufficient to rerun the experiment.
inline nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["loss_config"] = to_string(c.loss_config);
    j["seed"] = c.seed;
    j["precision"] = c.precision;
    j["model"] = {{"d_model", c.model.d_model},
                  {"n_heads", c.model.n_heads},
                  {"n_enc", c.model.n_enc},
                  {"n_dec", c.model.n_dec},
                  {"d_ff", c.model.d_ff},
                  {"dropout", c.model.dropout},
                  {"shared_embeddings", c.model.shared_embeddings},
                  {"max_len", c.model.max_len}};
    j["alpha"] = c.alpha;
    j["mixup_alpha"] = c.mixup_alpha;
    j["gamma_src"] = c.gamma_src;
    j["gamma_tgt"] = c.gamma_tgt;
    j["adv_k"] = c.adv_k;
    j["adv_sim_threshold"] = c.adv_sim_threshold;
    j["beta"] = c.beta;
    j["ema_decay"] = c.ema_decay;
    j["label_smoothing"] = c.label_smoothing;
    j["token_reduction"] = c.token_reduction;
    j["batch_size"] = c.batch_size;
    j["max_steps"] = c.max_steps;
    j["eval_every"] = c.eval_every;
    j["checkpoint_every"] = c.checkpoint_every;
    j["beam_width"] = c.beam_width;
    j["optimizer"] = {{"beta1", c.optimizer.beta1},
                      {"beta2", c.optimizer.beta2},
                      {"eps", c.optimizer.eps},
                      {"lr_scale", c.optimizer.lr_scale},
                      {"warmup_steps", c.optimizer.warmup_steps}};
    if (c.data.synthetic) {
        j["data"] = {{"task", to_string(c.data.task.kind)},
                     {"vocab_size", c.data.task.vocab_size},
                     {"min_len", c.data.task.min_len},
                     {"max_len", c.data.task.max_len},
                     {"class_size", c.data.task.class_size},
                     {"synonym_noise", c.data.task.synonym_noise},
                     {"train_size", c.data.train_size},
                     {"valid_size", c.data.valid_size}};
    } else {
        j["data"] = {{"train_file", c.data.train_file},
                     {"valid_file", c.data.valid_file},
                     {"vocab_max_size", c.data.vocab_max_size}};
    }
    return j;
}

}  // namespace advaug
