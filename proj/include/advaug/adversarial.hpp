#pragma once

#include "advaug/model.hpp"
#include "advaug/rng.hpp"
#include "advaug/types.hpp"
#include "advaug/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace advaug {

enum class AdvSide { kSrc, kTgt };

// Attack knobs for one side (source or target).
struct AdvParams {
    double gamma = 0.25;        // replacement ratio
    int k = 10;                 // candidate-list size
    double sim_threshold = -1;  // minimum cosine similarity for candidacy
    AdvSide side = AdvSide::kSrc;

    void validate() const {
        if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("AdvParams: gamma must be in [0,1]");
        if (k < 1) throw std::invalid_argument("AdvParams: k must be >= 1");
        if (sim_threshold < -1.0 || sim_threshold > 1.0)
            throw std::invalid_argument("AdvParams: sim_threshold must be in [-1,1]");
    }
};

// Top-k content tokens by embedding cosine similarity, excluding the token
// itself and all specials, keeping only similarity >= threshold. Ties break
// toward the lower id.
template <class Real>
inline std::vector<TokenId> candidate_set(TokenId token, const Mat<Real>& table, int k, double sim_threshold) {
    if (k < 1) throw std::invalid_argument("candidate_set: k must be >= 1");
    if (token < 0 || token >= table.rows()) throw std::out_of_range("candidate_set: token id out of range");
    if (Vocabulary::is_special(token)) return {};

    const auto base = table.row(token);
    const double base_norm = static_cast<double>(base.norm());
    std::vector<std::pair<double, TokenId>> scored;
    scored.reserve(static_cast<std::size_t>(table.rows()));
    for (TokenId c = Vocabulary::kNumSpecials; c < static_cast<TokenId>(table.rows()); ++c) {
        if (c == token) continue;
        const auto row = table.row(c);
        const double denom = base_norm * static_cast<double>(row.norm());
        const double sim = denom > 0 ? static_cast<double>(base.dot(row)) / denom : 0.0;
        if (sim >= sim_threshold) scored.emplace_back(sim, c);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    if (static_cast<int>(scored.size()) > k) scored.resize(static_cast<std::size_t>(k));
    std::vector<TokenId> out;
    out.reserve(scored.size());
    for (const auto& [sim, id] : scored) out.push_back(id);
    return out;
}

// Greedy gradient-guided word replacement. grads row i holds dL/d e(s_i) for
// the unperturbed sequence; a candidate c at position i scores
// (e(c) - e(s_i)) . g_i, the first-order loss increase. ceil(gamma*|s|)
// distinct content positions are sampled uniformly; positions whose best
// candidate scores <= 0 (or has no candidates) stay unchanged.
template <class Real>
inline IdSeq adv_replace(const IdSeq& s, const Mat<Real>& grads, const Mat<Real>& table, const AdvParams& params,
                         Rng& rng) {
    params.validate();
    if (s.empty()) throw std::invalid_argument("adv_replace: empty sequence");
    if (grads.rows() != static_cast<Eigen::Index>(s.size()) || grads.cols() != table.cols())
        throw std::invalid_argument("adv_replace: gradient shape mismatch");

    IdSeq out = s;
    std::vector<std::size_t> content;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (Vocabulary::is_content(s[i])) content.push_back(i);
    if (content.empty()) return out;

    auto budget = static_cast<std::size_t>(std::ceil(params.gamma * static_cast<double>(s.size())));
    budget = std::min(budget, content.size());
    if (budget == 0) return out;

    const std::vector<std::size_t> picks = rng.sample_indices(content.size(), budget);
    for (std::size_t pi : picks) {
        const std::size_t pos = content[pi];
        const std::vector<TokenId> cands = candidate_set(s[pos], table, params.k, params.sim_threshold);
        if (cands.empty()) continue;
        const auto g = grads.row(static_cast<Eigen::Index>(pos));
        const auto base = table.row(s[pos]);
        Real best_score = Real(0);
        TokenId best = -1;
        for (TokenId c : cands) {
            const Real score = (table.row(c) - base).dot(g);
            if (score > best_score) {
                best_score = score;
                best = c;
            }
        }
        if (best >= 0) out[pos] = best;
    }
    return out;
}

template <class Real>
struct AdvDraw {
    IdSeq src, tgt;
};

// Frozen-model pass at the origin pair: soft target rows (the model's own
// prediction, gradients severed) plus the input gradient at the source
// embeddings used to seed the source-side attack.
template <class Real>
struct OriginPass {
    Mat<Real> omega;     // (|y|+1, V) frozen prediction rows
    Mat<Real> src_grad;  // (|x|, d) dL/d e(x) at the origin
};

template <class Real>
inline OriginPass<Real> origin_pass(const Transformer<Real>& model, const SentencePair& ex, Real label_smoothing) {
    const DecoderIo io = make_decoder_io(ex.tgt);
    const EmbeddedSeq<Real> src = model.embed_src(ex.src);
    const EmbeddedSeq<Real> tgt = model.embed_tgt(io.input);
    FwdCache<Real> cache;
    const FwdOut<Real> out = model.forward(src, tgt, &cache);
    const Mat<Real> labels = one_hot_smoothed<Real>(io.labels, label_smoothing, model.config().vocab_size);
    Mat<Real> dlogits = out.probs - labels;
    InputGrads<Real> grads = model.backward(cache, dlogits, nullptr);
    return OriginPass<Real>{out.probs, std::move(grads.src)};
}

// One adversarial draw: attack the source against (x,y), then attack the
// target against the already-attacked source. Both are length-preserving.
// src_grad is dL/d e(x) at the origin; pass origin_pass().src_grad (it can
// be shared across several draws from the same origin).
template <class Real>
inline AdvDraw<Real> gen_adv_pair(const Transformer<Real>& model, const SentencePair& ex, const Mat<Real>& src_grad,
                                  const AdvParams& xi_src, const AdvParams& xi_tgt, Rng& rng, Real label_smoothing) {
    AdvDraw<Real> draw;
    draw.src = adv_replace(ex.src, src_grad, model.src_table(), xi_src, rng);

    // Target gradient at (x_hat, y): decoder input row j+1 embeds y_j.
    const DecoderIo io = make_decoder_io(ex.tgt);
    const EmbeddedSeq<Real> src_es = model.embed_src(draw.src);
    const EmbeddedSeq<Real> tgt_es = model.embed_tgt(io.input);
    FwdCache<Real> cache;
    const FwdOut<Real> out = model.forward(src_es, tgt_es, &cache);
    const Mat<Real> labels = one_hot_smoothed<Real>(io.labels, label_smoothing, model.config().vocab_size);
    Mat<Real> dlogits = out.probs - labels;
    const InputGrads<Real> grads = model.backward(cache, dlogits, nullptr);
    const Mat<Real> tgt_grad = grads.tgt.bottomRows(static_cast<Eigen::Index>(ex.tgt.size()));

    draw.tgt = adv_replace(ex.tgt, tgt_grad, model.tgt_table(), xi_tgt, rng);
    return draw;
}

template <class Real>
inline AdvDraw<Real> gen_adv_pair(const Transformer<Real>& model, const SentencePair& ex, const AdvParams& xi_src,
                                  const AdvParams& xi_tgt, Rng& rng, Real label_smoothing) {
    const OriginPass<Real> origin = origin_pass(model, ex, label_smoothing);
    return gen_adv_pair(model, ex, origin.src_grad, xi_src, xi_tgt, rng, label_smoothing);
}

}  // namespace advaug
