#pragma once

#include "advaug/model.hpp"
#include "advaug/types.hpp"
#include "advaug/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace advaug {

// Beam search over the decoder with length-normalized scoring
// (log-probability divided by hypothesis length, end marker included).
// beam_width=1 degenerates to greedy argmax rollout. A hypothesis terminates
// on eos or at length 2*|src|+5.
template <class Real>
inline IdSeq decode(const Transformer<Real>& model, const IdSeq& src, int beam_width = 1) {
    if (src.empty()) throw std::invalid_argument("decode: empty source");
    if (beam_width < 1) throw std::invalid_argument("decode: beam_width must be >= 1");

    struct Hyp {
        IdSeq toks;
        double logp = 0.0;
        bool finished = false;

        double norm() const { return logp / static_cast<double>(toks.size() + (finished ? 1 : 0)); }
    };

    const int max_len = 2 * static_cast<int>(src.size()) + 5;
    const int vocab = model.config().vocab_size;
    const EmbeddedSeq<Real> src_es = model.embed_src(src);

    std::vector<Hyp> active{Hyp{}};
    std::vector<Hyp> done;
    for (int step = 0; step < max_len && !active.empty(); ++step) {
        std::vector<Hyp> candidates;
        for (const Hyp& h : active) {
            IdSeq input;
            input.reserve(h.toks.size() + 1);
            input.push_back(Vocabulary::kSos);
            input.insert(input.end(), h.toks.begin(), h.toks.end());
            const FwdOut<Real> out = model.forward(src_es, model.embed_tgt(input));
            const auto row = out.logits.row(out.logits.rows() - 1);
            const Real mx = row.maxCoeff();
            const double lse =
                static_cast<double>(mx) + std::log(static_cast<double>((row.array() - mx).exp().sum()));
            for (TokenId id = 0; id < vocab; ++id) {
                if (id == Vocabulary::kPad || id == Vocabulary::kSos) continue;
                Hyp next = h;
                next.logp += static_cast<double>(row(id)) - lse;
                if (id == Vocabulary::kEos)
                    next.finished = true;
                else
                    next.toks.push_back(id);
                candidates.push_back(std::move(next));
            }
        }
        // Candidates in one round share a prefix length, so raw log-prob
        // ranks them identically to the normalized score. Only the top
        // beam_width survive; survivors that just emitted eos retire.
        std::sort(candidates.begin(), candidates.end(),
                  [](const Hyp& a, const Hyp& b) { return a.logp > b.logp; });
        if (static_cast<int>(candidates.size()) > beam_width) candidates.resize(static_cast<std::size_t>(beam_width));
        active.clear();
        for (Hyp& c : candidates) {
            if (c.finished)
                done.push_back(std::move(c));
            else
                active.push_back(std::move(c));
        }
    }

    // Length cap hit with nothing finished: fall back to open hypotheses.
    const std::vector<Hyp>& pool = done.empty() ? active : done;
    const Hyp* best = nullptr;
    double best_score = -std::numeric_limits<double>::infinity();
    for (const Hyp& h : pool) {
        if (h.norm() > best_score) {
            best_score = h.norm();
            best = &h;
        }
    }
    if (!best) throw std::logic_error("decode: no hypothesis");
    return best->toks;
}

}  // namespace advaug
