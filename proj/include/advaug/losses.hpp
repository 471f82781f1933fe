#pragma once

#include "advaug/adversarial.hpp"
#include "advaug/batching.hpp"
#include "advaug/model.hpp"
#include "advaug/rng.hpp"
#include "advaug/types.hpp"
#include "advaug/vicinity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace advaug {

// Per-example losses are summed over token positions by default; kMean
// divides by the number of real positions (recorded in config so both
// variants stay testable).
enum class TokenReduction { kSum, kMean };

template <class Real>
struct TokenLoss {
    Real value = Real(0);
    Mat<Real> dlogits;  // same shape as logits; zero rows at pad positions
};

template <class Real>
inline Real logsumexp_row(const Eigen::Ref<const Eigen::RowVectorX<Real>>& z) {
    const Real mx = z.maxCoeff();
    return mx + std::log((z.array() - mx).exp().sum());
}

// Cross entropy of predictions against fixed target rows (soft or one-hot):
// sum over real positions of lse(z) - t.z, gradient softmax(z) - t per row.
template <class Real>
inline TokenLoss<Real> ce_soft(const Mat<Real>& logits, const Mat<Real>& target, const Mask& real,
                               TokenReduction red) {
    if (logits.rows() != target.rows() || logits.cols() != target.cols())
        throw std::invalid_argument("ce_soft: shape mismatch");
    if (real.size() != static_cast<std::size_t>(logits.rows()))
        throw std::invalid_argument("ce_soft: mask length mismatch");
    TokenLoss<Real> out;
    out.dlogits = Mat<Real>::Zero(logits.rows(), logits.cols());
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        if (!real[static_cast<std::size_t>(i)]) continue;
        ++n;
        const Real lse = logsumexp_row<Real>(logits.row(i));
        out.value += lse - logits.row(i).dot(target.row(i));
        const Real mx = logits.row(i).maxCoeff();
        Eigen::RowVectorX<Real> p = (logits.row(i).array() - mx).exp();
        p /= p.sum();
        out.dlogits.row(i) = p - target.row(i);
    }
    if (n == 0) throw std::invalid_argument("ce_soft: no real positions");
    if (red == TokenReduction::kMean) {
        out.value /= static_cast<Real>(n);
        out.dlogits /= static_cast<Real>(n);
    }
    return out;
}

// KL(target || softmax(logits)). Same theta-gradient as ce_soft (the two
// differ by the target's entropy, constant in theta) but computed through
// the softmax Jacobian as an independent route: dz = p * (dp - sum(dp * p))
// with dp = -target/p.
template <class Real>
inline TokenLoss<Real> kl_frozen(const Mat<Real>& logits, const Mat<Real>& target, const Mask& real,
                                 TokenReduction red) {
    if (logits.rows() != target.rows() || logits.cols() != target.cols())
        throw std::invalid_argument("kl_frozen: shape mismatch");
    TokenLoss<Real> out;
    out.dlogits = Mat<Real>::Zero(logits.rows(), logits.cols());
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        if (!real[static_cast<std::size_t>(i)]) continue;
        ++n;
        const Real mx = logits.row(i).maxCoeff();
        Eigen::RowVectorX<Real> p = (logits.row(i).array() - mx).exp();
        p /= p.sum();
        Real kl = Real(0);
        Eigen::RowVectorX<Real> dp(p.size());
        for (Eigen::Index v = 0; v < p.size(); ++v) {
            const Real t = target(i, v);
            if (t > Real(0)) kl += t * (std::log(t) - std::log(p(v)));
            dp(v) = -t / p(v);
        }
        out.value += kl;
        const Real row_dot = dp.dot(p);
        out.dlogits.row(i) = p.array() * (dp.array() - row_dot);
    }
    if (n == 0) throw std::invalid_argument("kl_frozen: no real positions");
    if (red == TokenReduction::kMean) {
        out.value /= static_cast<Real>(n);
        out.dlogits /= static_cast<Real>(n);
    }
    return out;
}

template <class Real>
inline TokenLoss<Real> ce_labels(const Mat<Real>& logits, const IdSeq& labels, const Mask& real, Real label_smoothing,
                                 TokenReduction red) {
    const Mat<Real> target = one_hot_smoothed<Real>(labels, label_smoothing, static_cast<int>(logits.cols()));
    return ce_soft(logits, target, real, red);
}

template <class Real>
inline Real entropy_rows(const Mat<Real>& p, const Mask& real) {
    Real h = Real(0);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        if (!real[static_cast<std::size_t>(i)]) continue;
        for (Eigen::Index v = 0; v < p.cols(); ++v)
            if (p(i, v) > Real(0)) h -= p(i, v) * std::log(p(i, v));
    }
    return h;
}

// ---------------------------------------------------------------------------
// Curriculum threshold state
// ---------------------------------------------------------------------------

// Nearest-rank percentile: the value at 1-based rank ceil(p/100 * m) of the
// ascending-sorted list, clamped to [1, m].
inline double nearest_rank_percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("nearest_rank_percentile: empty list");
    std::sort(values.begin(), values.end());
    const auto m = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * m));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

// Tracks the selection threshold eta as an EMA of the p-th batch-loss
// percentile, with p = 100*(1 - 0.5^(t/beta)) annealing from 0 toward 100.
class Curriculum {
  public:
    Curriculum() = default;
    Curriculum(double beta, double ema_decay = 0.9) : beta_(beta), ema_decay_(ema_decay) {
        if (beta <= 0.0) throw std::invalid_argument("Curriculum: beta must be > 0");
        if (ema_decay <= 0.0 || ema_decay >= 1.0) throw std::invalid_argument("Curriculum: ema_decay must be in (0,1)");
    }

    long long step() const { return t_; }
    double beta() const { return beta_; }
    double rate() const { return std::pow(0.5, static_cast<double>(t_) / beta_); }
    double percentile_p() const { return 100.0 * (1.0 - rate()); }
    double eta() const { return eta_; }

    // EMA toward this batch's percentile; the first update seeds eta directly
    // (the paper's moving average has no defined start). Advances t.
    void update(const std::vector<double>& batch_losses) {
        const double pct = nearest_rank_percentile(batch_losses, percentile_p());
        eta_ = seeded_ ? ema_decay_ * eta_ + (1.0 - ema_decay_) * pct : pct;
        seeded_ = true;
        ++t_;
    }

    // Checkpoint support.
    void restore(long long t, double eta, bool seeded) {
        t_ = t;
        eta_ = eta;
        seeded_ = seeded;
    }
    bool seeded() const { return seeded_; }

  private:
    double beta_ = 250000.0;
    double ema_decay_ = 0.9;
    double eta_ = -std::numeric_limits<double>::infinity();
    long long t_ = 0;
    bool seeded_ = false;
};

struct Reweight {
    std::vector<double> weights;        // per example; zero when unselected
    std::vector<std::size_t> selected;  // indices with loss strictly above eta
    double value = 0.0;
};

// Mean of the losses strictly above eta; plain mean when none qualify (the
// zero-denominator case is undefined in the source formulation).
inline Reweight reweight(const std::vector<double>& losses, double eta) {
    if (losses.empty()) throw std::invalid_argument("reweight: empty loss list");
    Reweight rw;
    for (std::size_t i = 0; i < losses.size(); ++i)
        if (losses[i] > eta) rw.selected.push_back(i);
    const bool fallback = rw.selected.empty();
    if (fallback) {
        rw.selected.resize(losses.size());
        for (std::size_t i = 0; i < losses.size(); ++i) rw.selected[i] = i;
    }
    rw.weights.assign(losses.size(), 0.0);
    const double w = 1.0 / static_cast<double>(rw.selected.size());
    double sum = 0.0;
    for (std::size_t i : rw.selected) {
        rw.weights[i] = w;
        sum += losses[i];
    }
    rw.value = sum / static_cast<double>(rw.selected.size());
    return rw;
}

// ---------------------------------------------------------------------------
// Composite objectives
// ---------------------------------------------------------------------------

// Shared plumbing for one loss evaluation: where to accumulate parameter
// gradients (null = value only) and whether forwards use dropout.
template <class Real>
struct LossEnv {
    const Transformer<Real>* model = nullptr;
    TransformerParams<Real>* grads = nullptr;
    Rng* dropout_rng = nullptr;
    Real dropout = Real(0);
    Real label_smoothing = Real(0);
    TokenReduction reduction = TokenReduction::kSum;

    DropoutCtx<Real> drop() const { return DropoutCtx<Real>{dropout, dropout_rng}; }
};

template <class Real>
inline void add_src_table_grad(const Transformer<Real>& model, TransformerParams<Real>& g, const IdSeq& ids,
                               const Mat<Real>& grad, Real w) {
    scatter_embedding_grad(g.src_emb, ids, grad, w);
    (void)model;
}

template <class Real>
inline void add_tgt_table_grad(const Transformer<Real>& model, TransformerParams<Real>& g, const IdSeq& ids,
                               const Mat<Real>& grad, Real w) {
    Mat<Real>& table = model.config().shared_embeddings ? g.src_emb : g.tgt_emb;
    scatter_embedding_grad(table, ids, grad, w);
}

// Frozen-model soft target: the model's own prediction rows with gradient
// flow severed (an eval-mode forward whose output is used as data).
template <class Real>
inline Mat<Real> soft_target(const Transformer<Real>& model, const IdSeq& src, const IdSeq& tgt_in) {
    const FwdOut<Real> out = model.forward(model.embed_src(src), model.embed_tgt(tgt_in));
    return out.probs;
}

// Mean over examples of token-level cross entropy against smoothed one-hot
// labels; pad positions excluded.
template <class Real>
inline double loss_clean(const LossEnv<Real>& env, const std::vector<SentencePair>& examples) {
    if (examples.empty()) throw std::invalid_argument("loss_clean: empty batch");
    const auto& model = *env.model;
    const Real inv_b = Real(1) / static_cast<Real>(examples.size());
    double total = 0.0;
    for (const SentencePair& ex : examples) {
        const DecoderIo io = make_decoder_io(ex.tgt);
        FwdCache<Real> cache;
        const FwdOut<Real> out =
            model.forward(model.embed_src(ex.src), model.embed_tgt(io.input), &cache, env.drop());
        TokenLoss<Real> tl = ce_labels(out.logits, io.labels, io.real, env.label_smoothing, env.reduction);
        total += static_cast<double>(tl.value);
        if (env.grads) {
            tl.dlogits *= inv_b;
            const InputGrads<Real> g = model.backward(cache, tl.dlogits, env.grads);
            add_src_table_grad(model, *env.grads, ex.src, g.src, Real(1));
            add_tgt_table_grad(model, *env.grads, io.input, g.tgt, Real(1));
        }
    }
    return total / static_cast<double>(examples.size());
}

template <class Real>
struct LossResult {
    double value = 0.0;
    std::vector<double> lambdas;
    std::vector<double> example_losses;
};

// Test hooks: force the pairing permutation and/or lambda instead of
// sampling them.
struct MixHooks {
    const std::vector<std::size_t>* perm = nullptr;
    const double* lambda = nullptr;
};

// Embedding-space mixup: pair the batch against a shuffled copy, mix
// embeddings and smoothed one-hot labels with a shared per-pair lambda.
template <class Real>
inline LossResult<Real> loss_mixup(const LossEnv<Real>& env, const std::vector<SentencePair>& examples, double alpha,
                                   Rng& data_rng, Rng& lambda_rng, const MixHooks& hooks = {}) {
    if (examples.size() < 2) throw std::invalid_argument("loss_mixup: batch size must be >= 2");
    const auto& model = *env.model;
    const int vocab = model.config().vocab_size;
    const Real inv_b = Real(1) / static_cast<Real>(examples.size());
    const std::vector<std::size_t> perm = hooks.perm ? *hooks.perm : data_rng.permutation(examples.size());
    if (perm.size() != examples.size()) throw std::invalid_argument("loss_mixup: permutation size mismatch");

    LossResult<Real> res;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const double lam_d = hooks.lambda ? *hooks.lambda : sample_lambda(alpha, lambda_rng);
        const Real lam = static_cast<Real>(lam_d);
        res.lambdas.push_back(lam_d);
        const VirtualExample<Real> v = make_aut_virtual(model, examples[i], examples[perm[i]], lam);
        const Mat<Real> target = mix(one_hot_smoothed<Real>(v.labels_a, env.label_smoothing, vocab),
                                     one_hot_smoothed<Real>(v.labels_b, env.label_smoothing, vocab), lam);
        FwdCache<Real> cache;
        const FwdOut<Real> out = model.forward(v.src, v.tgt_in, &cache, env.drop());
        TokenLoss<Real> tl = ce_soft(out.logits, target, v.label_real, env.reduction);
        res.value += static_cast<double>(tl.value);
        res.example_losses.push_back(static_cast<double>(tl.value));
        if (env.grads) {
            tl.dlogits *= inv_b;
            const InputGrads<Real> g = model.backward(cache, tl.dlogits, env.grads);
            add_src_table_grad(model, *env.grads, v.src_a, g.src, lam);
            add_src_table_grad(model, *env.grads, v.src_b, g.src, Real(1) - lam);
            add_tgt_table_grad(model, *env.grads, v.tgt_in_a, g.tgt, lam);
            add_tgt_table_grad(model, *env.grads, v.tgt_in_b, g.tgt, Real(1) - lam);
        }
    }
    res.value /= static_cast<double>(examples.size());
    return res;
}

// Adversarial vicinity loss: per example, soft target omega from the frozen
// model at the origin, one virtual example interpolating two adversarial
// draws, cross entropy against omega, curriculum-reweighted mean. Selection
// uses the threshold as of the start of the step; the curriculum is updated
// afterwards with this batch's losses.
template <class Real>
inline LossResult<Real> loss_adv(const LossEnv<Real>& env, const std::vector<SentencePair>& examples,
                                 const AdvParams& xi_src, const AdvParams& xi_tgt, double alpha,
                                 Curriculum& curriculum, Rng& adv_rng, Rng& lambda_rng) {
    if (examples.empty()) throw std::invalid_argument("loss_adv: empty batch");
    const auto& model = *env.model;

    LossResult<Real> res;
    std::vector<FwdCache<Real>> caches(examples.size());
    std::vector<Mat<Real>> dlogits(examples.size());
    std::vector<VirtualExample<Real>> virtuals;
    virtuals.reserve(examples.size());
    std::vector<double> ell(examples.size());

    for (std::size_t i = 0; i < examples.size(); ++i) {
        const SentencePair& ex = examples[i];
        const OriginPass<Real> origin = origin_pass(model, ex, env.label_smoothing);
        VirtualExample<Real> v = sample_adv_virtual(model, ex, origin.src_grad, xi_src, xi_tgt, alpha, adv_rng,
                                                    lambda_rng, env.label_smoothing);
        res.lambdas.push_back(static_cast<double>(v.lambda));
        v.soft_target = origin.omega;  // both draws share the origin, so the mixed target is omega itself

        const FwdOut<Real> out = model.forward(v.src, v.tgt_in, &caches[i], env.drop());
        TokenLoss<Real> tl = ce_soft(out.logits, v.soft_target, v.label_real, env.reduction);
        ell[i] = static_cast<double>(tl.value);
        dlogits[i] = std::move(tl.dlogits);
        virtuals.push_back(std::move(v));
    }

    const Reweight rw = reweight(ell, curriculum.eta());
    if (env.grads) {
        for (std::size_t i = 0; i < examples.size(); ++i) {
            const Real w = static_cast<Real>(rw.weights[i]);
            if (w == Real(0)) continue;
            Mat<Real> dl = dlogits[i] * w;
            const InputGrads<Real> g = model.backward(caches[i], dl, env.grads);
            const VirtualExample<Real>& v = virtuals[i];
            add_src_table_grad(model, *env.grads, v.src_a, g.src, v.lambda);
            add_src_table_grad(model, *env.grads, v.src_b, g.src, Real(1) - v.lambda);
            add_tgt_table_grad(model, *env.grads, v.tgt_in_a, g.tgt, v.lambda);
            add_tgt_table_grad(model, *env.grads, v.tgt_in_b, g.tgt, Real(1) - v.lambda);
        }
    }
    curriculum.update(ell);
    res.value = rw.value;
    res.example_losses = std::move(ell);
    return res;
}

// Authentic vicinity loss: for each example, the sum of (a) cross entropy of
// the pair-mixed virtual example against the interpolated frozen targets and
// (b) the clean cross entropy against smoothed one-hot labels; averaged over
// the batch.
template <class Real>
inline LossResult<Real> loss_aut(const LossEnv<Real>& env, const std::vector<SentencePair>& examples, double alpha,
                                 Rng& data_rng, Rng& lambda_rng, const MixHooks& hooks = {}) {
    if (examples.size() < 2) throw std::invalid_argument("loss_aut: batch size must be >= 2");
    const auto& model = *env.model;
    const Real inv_b = Real(1) / static_cast<Real>(examples.size());
    const std::vector<std::size_t> perm = hooks.perm ? *hooks.perm : data_rng.permutation(examples.size());
    if (perm.size() != examples.size()) throw std::invalid_argument("loss_aut: permutation size mismatch");

    LossResult<Real> res;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const double lam_d = hooks.lambda ? *hooks.lambda : sample_lambda(alpha, lambda_rng);
        const Real lam = static_cast<Real>(lam_d);
        res.lambdas.push_back(lam_d);
        const VirtualExample<Real> v = make_aut_virtual(model, examples[i], examples[perm[i]], lam);

        // Frozen targets on the pad-aligned parents, interpolated with the
        // same lambda as the embeddings.
        const Mat<Real> omega_a = soft_target(model, v.src_a, v.tgt_in_a);
        const Mat<Real> omega_b = soft_target(model, v.src_b, v.tgt_in_b);
        const Mat<Real> omega_mixed = mix(omega_a, omega_b, lam);

        FwdCache<Real> mix_cache;
        const FwdOut<Real> mix_out = model.forward(v.src, v.tgt_in, &mix_cache, env.drop());
        TokenLoss<Real> tl_mix = ce_soft(mix_out.logits, omega_mixed, v.label_real, env.reduction);

        const DecoderIo io = make_decoder_io(examples[i].tgt);
        FwdCache<Real> clean_cache;
        const FwdOut<Real> clean_out =
            model.forward(model.embed_src(examples[i].src), model.embed_tgt(io.input), &clean_cache, env.drop());
        TokenLoss<Real> tl_clean = ce_labels(clean_out.logits, io.labels, io.real, env.label_smoothing, env.reduction);

        const double ell = static_cast<double>(tl_mix.value) + static_cast<double>(tl_clean.value);
        res.value += ell;
        res.example_losses.push_back(ell);

        if (env.grads) {
            tl_mix.dlogits *= inv_b;
            const InputGrads<Real> gm = model.backward(mix_cache, tl_mix.dlogits, env.grads);
            add_src_table_grad(model, *env.grads, v.src_a, gm.src, lam);
            add_src_table_grad(model, *env.grads, v.src_b, gm.src, Real(1) - lam);
            add_tgt_table_grad(model, *env.grads, v.tgt_in_a, gm.tgt, lam);
            add_tgt_table_grad(model, *env.grads, v.tgt_in_b, gm.tgt, Real(1) - lam);

            tl_clean.dlogits *= inv_b;
            const InputGrads<Real> gc = model.backward(clean_cache, tl_clean.dlogits, env.grads);
            add_src_table_grad(model, *env.grads, examples[i].src, gc.src, Real(1));
            add_tgt_table_grad(model, *env.grads, io.input, gc.tgt, Real(1));
        }
    }
    res.value /= static_cast<double>(examples.size());
    return res;
}

}  // namespace advaug
