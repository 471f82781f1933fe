#pragma once

#include "advaug/batching.hpp"
#include "advaug/bleu.hpp"
#include "advaug/checkpoint.hpp"
#include "advaug/config.hpp"
#include "advaug/corpus_io.hpp"
#include "advaug/decode.hpp"
#include "advaug/losses.hpp"
#include "advaug/metrics.hpp"
#include "advaug/model.hpp"
#include "advaug/optimizer.hpp"
#include "advaug/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace advaug {

// Corpus plus vocabulary as loaded for one run.
struct DataBundle {
    Vocabulary vocab;
    std::vector<SentencePair> train, valid;
};

// Synthetic corpora draw from seed-derived streams; file corpora read as-is
// with the vocabulary built from the training side.
inline DataBundle load_data(const TrainConfig& cfg) {
    DataBundle d;
    if (cfg.data.synthetic) {
        const SyntheticTask task(cfg.data.task);
        d.vocab = task.vocab();
        Rng train_rng = Rng::stream(cfg.seed, "corpus-train");
        Rng valid_rng = Rng::stream(cfg.seed, "corpus-valid");
        d.train = task.generate(cfg.data.train_size, train_rng);
        d.valid = task.generate(cfg.data.valid_size, valid_rng);
    } else {
        const auto train_text = read_string_corpus(cfg.data.train_file);
        d.vocab = build_vocab(train_text, cfg.data.vocab_max_size);
        d.train = encode_corpus(train_text, d.vocab);
        d.valid = read_corpus(cfg.data.valid_file, d.vocab);
    }
    if (d.train.size() < 2) throw std::runtime_error("load_data: training corpus needs >= 2 examples");
    if (d.valid.empty()) throw std::runtime_error("load_data: validation corpus is empty");
    return d;
}

struct ValSummary {
    double loss = 0.0;
    double bleu_score = 0.0;
    double seq_acc = 0.0;
};

template <class Real>
inline ValSummary validate_model(const Transformer<Real>& model,
                                 const std::vector<SentencePair>& valid, double label_smoothing,
                                 TokenReduction reduction, int beam_width) {
    LossEnv<Real> env;
    env.model = &model;
    env.label_smoothing = static_cast<Real>(label_smoothing);
    env.reduction = reduction;
    ValSummary out;
    out.loss = loss_clean(env, valid);
    std::vector<IdSeq> hyps, refs;
    hyps.reserve(valid.size());
    refs.reserve(valid.size());
    int exact = 0;
    for (const SentencePair& ex : valid) {
        hyps.push_back(decode(model, ex.src, beam_width));
        refs.push_back(ex.tgt);
        if (hyps.back() == ex.tgt) ++exact;
    }
    out.bleu_score = bleu(hyps, refs);
    out.seq_acc = static_cast<double>(exact) / static_cast<double>(valid.size());
    return out;
}

// Owns the model, optimizer, curriculum and the named random streams of one
// training run. All randomness fans out from the config seed: streams
// "init", "data", "adversarial", "lambda", "dropout", "shuffle"/epoch and
// "corpus-train"/"corpus-valid" are mutually independent, so e.g. the data
// order is unchanged when the adversarial knobs consume more draws.
template <class Real>
class Trainer {
  public:
    Trainer(const TrainConfig& cfg, DataBundle data)
        : cfg_(cfg),
          data_(std::move(data)),
          curriculum_(cfg.beta, cfg.ema_decay),
          data_rng_(Rng::stream(cfg.seed, "data")),
          adv_rng_(Rng::stream(cfg.seed, "adversarial")),
          lambda_rng_(Rng::stream(cfg.seed, "lambda")),
          dropout_rng_(Rng::stream(cfg.seed, "dropout")) {
        cfg_.validate();
        ModelConfig mc = cfg_.model;
        mc.vocab_size = data_.vocab.size();
        Rng init_rng = Rng::stream(cfg_.seed, "init");
        model_ = Transformer<Real>(mc, init_rng);
        opt_ = std::make_unique<Adam<Real>>(mc, cfg_.optimizer);
        grads_.init_zero(mc);
    }

    const Transformer<Real>& model() const { return model_; }
    Transformer<Real>& model() { return model_; }
    const Vocabulary& vocab() const { return data_.vocab; }
    const std::vector<SentencePair>& train_set() const { return data_.train; }
    const std::vector<SentencePair>& valid_set() const { return data_.valid; }
    const Curriculum& curriculum() const { return curriculum_; }
    int step() const { return step_; }
    const TrainConfig& config() const { return cfg_; }

    // Exposed so tests can replay the exact random streams.
    Rng& data_rng() { return data_rng_; }
    Rng& adv_rng() { return adv_rng_; }
    Rng& lambda_rng() { return lambda_rng_; }
    Rng& dropout_rng() { return dropout_rng_; }

    // Loss terms and their summed gradients for one batch; no update.
    StepRecord compute_step(const std::vector<SentencePair>& examples, TransformerParams<Real>& grads) {
        LossEnv<Real> env;
        env.model = &model_;
        env.grads = &grads;
        env.dropout_rng = &dropout_rng_;
        env.dropout = static_cast<Real>(cfg_.model.dropout);
        env.label_smoothing = static_cast<Real>(cfg_.label_smoothing);
        env.reduction = cfg_.reduction();

        StepRecord rec;
        const bool uses_adv =
            cfg_.loss_config == LossConfig::kCleanAdv || cfg_.loss_config == LossConfig::kAutAdv;
        if (uses_adv && curriculum_.seeded()) rec.eta = curriculum_.eta();
        if (uses_adv) rec.rate = curriculum_.rate();

        switch (cfg_.loss_config) {
            case LossConfig::kClean: {
                const double v = loss_clean(env, examples);
                rec.terms.emplace_back("clean", v);
                break;
            }
            case LossConfig::kMixup: {
                const LossResult<Real> r = loss_mixup(env, examples, cfg_.mixup_alpha, data_rng_, lambda_rng_);
                rec.terms.emplace_back("mixup", r.value);
                rec.lambdas = r.lambdas;
                break;
            }
            case LossConfig::kAut: {
                const LossResult<Real> r = loss_aut(env, examples, cfg_.alpha, data_rng_, lambda_rng_);
                rec.terms.emplace_back("aut", r.value);
                rec.lambdas = r.lambdas;
                break;
            }
            case LossConfig::kCleanAdv: {
                const double v = loss_clean(env, examples);
                const LossResult<Real> r = loss_adv(env, examples, cfg_.adv_params(AdvSide::kSrc),
                                                    cfg_.adv_params(AdvSide::kTgt), cfg_.alpha, curriculum_,
                                                    adv_rng_, lambda_rng_);
                rec.terms.emplace_back("clean", v);
                rec.terms.emplace_back("adv", r.value);
                rec.lambdas = r.lambdas;
                break;
            }
            case LossConfig::kAutAdv: {
                const LossResult<Real> ra = loss_aut(env, examples, cfg_.alpha, data_rng_, lambda_rng_);
                const LossResult<Real> rv = loss_adv(env, examples, cfg_.adv_params(AdvSide::kSrc),
                                                     cfg_.adv_params(AdvSide::kTgt), cfg_.alpha, curriculum_,
                                                     adv_rng_, lambda_rng_);
                rec.terms.emplace_back("aut", ra.value);
                rec.terms.emplace_back("adv", rv.value);
                rec.lambdas = ra.lambdas;
                rec.lambdas.insert(rec.lambdas.end(), rv.lambdas.begin(), rv.lambdas.end());
                break;
            }
        }
        for (const auto& [name, v] : rec.terms) rec.total += v;
        return rec;
    }

    // One combined optimizer update over all active loss terms. On a
    // non-finite loss the update is skipped and the record carries a
    // diagnostic note; train() surfaces that as an error.
    StepRecord advaug_step(const std::vector<SentencePair>& examples) {
        zero_grads();
        StepRecord rec = compute_step(examples, grads_);
        rec.t = step_ + 1;
        if (!std::isfinite(rec.total)) {
            rec.note = "non-finite loss; update skipped";
            ++step_;
            return rec;
        }
        opt_->step_scheduled(model_.params(), grads_);
        ++step_;
        return rec;
    }

    ValSummary validate() const {
        return validate_model(model_, data_.valid, cfg_.label_smoothing, cfg_.reduction(),
                              cfg_.beam_width);
    }

    CurriculumSnapshot curriculum_snapshot() const {
        return CurriculumSnapshot{curriculum_.step(), curriculum_.eta(), curriculum_.seeded()};
    }

    void save(const std::string& dir) const {
        save_checkpoint(dir, model_, data_.vocab, cfg_, step_, curriculum_snapshot());
    }

    // Full run: writes the experiment layout, trains max_steps, validates on
    // schedule and checkpoints. Returns the final validation summary.
    ValSummary train(const std::string& out_dir) {
        namespace fs = std::filesystem;
        fs::create_directories(fs::path(out_dir) / "corpus");
        fs::create_directories(fs::path(out_dir) / "checkpoints");
        fs::create_directories(fs::path(out_dir) / "reports");
        {
            // Config echo lands before any training so a crashed run is
            // still reproducible.
            std::ofstream cfg_out(out_dir + "/config.json");
            if (!cfg_out) throw std::runtime_error("train: cannot open " + out_dir + "/config.json");
            cfg_out << to_json(cfg_).dump(2) << "\n";
        }
        data_.vocab.save(out_dir + "/vocab.txt");
        write_corpus(out_dir + "/corpus/train.tsv", data_.train, data_.vocab);
        write_corpus(out_dir + "/corpus/valid.tsv", data_.valid, data_.vocab);

        MetricsWriter metrics(out_dir + "/metrics.jsonl");
        ValSummary last_val;
        for (int epoch = 0; step_ < cfg_.max_steps; ++epoch) {
            const std::uint64_t shuffle_seed = Rng::stream(cfg_.seed, "shuffle", epoch).u64();
            for (const Batch& b : make_batches(data_.train, cfg_.batch_size, shuffle_seed)) {
                if (step_ >= cfg_.max_steps) break;
                StepRecord rec = advaug_step(b.examples);
                const bool eval_now = (cfg_.eval_every > 0 && rec.t % cfg_.eval_every == 0) ||
                                      rec.t == cfg_.max_steps;
                if (eval_now && rec.note.empty()) {
                    last_val = validate();
                    rec.val_loss = last_val.loss;
                    rec.val_bleu = last_val.bleu_score;
                    rec.val_seq_acc = last_val.seq_acc;
                }
                metrics.write(rec);
                if (!rec.note.empty())
                    throw std::runtime_error("train: non-finite loss at step " + std::to_string(rec.t) +
                                             "; see " + out_dir + "/metrics.jsonl");
                if (cfg_.checkpoint_every > 0 && rec.t % cfg_.checkpoint_every == 0 &&
                    rec.t != cfg_.max_steps)
                    save(out_dir + "/checkpoints/" + std::to_string(rec.t));
            }
        }
        save(out_dir + "/checkpoints/" + std::to_string(step_));
        return last_val;
    }

  private:
    void zero_grads() {
        for (auto& ref : tensor_refs(grads_, model_.config())) std::fill_n(ref.data, ref.size(), Real(0));
    }

    TrainConfig cfg_;
    DataBundle data_;
    Transformer<Real> model_;
    std::unique_ptr<Adam<Real>> opt_;
    TransformerParams<Real> grads_;
    Curriculum curriculum_;
    Rng data_rng_, adv_rng_, lambda_rng_, dropout_rng_;
    int step_ = 0;
};

// Runs one training job at the configured precision; returns the final
// validation summary.
inline ValSummary run_training(const TrainConfig& cfg, const std::string& out_dir) {
    DataBundle data = load_data(cfg);
    if (cfg.precision == "float64") {
        Trainer<double> t(cfg, std::move(data));
        return t.train(out_dir);
    }
    Trainer<float> t(cfg, std::move(data));
    return t.train(out_dir);
}

}  // namespace advaug
