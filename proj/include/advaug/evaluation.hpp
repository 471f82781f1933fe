#pragma once

#include "advaug/adversarial.hpp"
#include "advaug/bleu.hpp"
#include "advaug/decode.hpp"
#include "advaug/model.hpp"
#include "advaug/rng.hpp"
#include "advaug/types.hpp"
#include "advaug/vocab.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace advaug {

// Nearest content token by embedding cosine similarity, excluding the token
// itself; -1 when there is no other content token.
template <class Real>
inline TokenId nearest_content_token(TokenId token, const Mat<Real>& table) {
    const std::vector<TokenId> top = candidate_set(token, table, 1, -1.0);
    return top.empty() ? TokenId{-1} : top[0];
}

// Noisy copy of a dataset: each content position of each source sentence is
// independently replaced, with the given probability, by its nearest
// neighbour in the embedding table. Targets are untouched; they stay the
// references the noisy inputs are scored against. One uniform draw is
// consumed per content position regardless of the fraction, so realizations
// at different fractions differ only in the replacement decision.
template <class Real>
inline std::vector<SentencePair> make_noisy(const std::vector<SentencePair>& dataset, double fraction,
                                            const Mat<Real>& table, Rng& rng) {
    if (fraction < 0.0 || fraction > 1.0) throw std::invalid_argument("make_noisy: fraction must be in [0,1]");
    std::vector<SentencePair> out = dataset;
    for (SentencePair& ex : out) {
        for (TokenId& id : ex.src) {
            if (!Vocabulary::is_content(id)) continue;
            const bool replace = rng.uniform01() < fraction;
            if (!replace) continue;
            const TokenId alt = nearest_content_token(id, table);
            if (alt >= 0) id = alt;
        }
    }
    return out;
}

// BLEU per model per noise fraction, plus each model's drop from the lowest
// to the highest fraction.
struct RobustnessReport {
    std::vector<double> fractions;
    std::vector<std::string> model_names;
    std::vector<std::vector<double>> scores;  // [model][fraction]
    std::vector<double> degradation;          // scores.front() - scores.back()

    nlohmann::json to_json() const {
        nlohmann::json models = nlohmann::json::array();
        for (std::size_t m = 0; m < model_names.size(); ++m)
            models.push_back({{"name", model_names[m]}, {"bleu", scores[m]}, {"degradation", degradation[m]}});
        return {{"fractions", fractions}, {"models", models}};
    }

    std::string to_table() const {
        std::size_t name_w = 5;
        for (const std::string& n : model_names) name_w = std::max(name_w, n.size());
        char buf[64];
        std::string t(name_w, ' ');
        t.replace(0, 5, "model");
        for (double f : fractions) {
            std::snprintf(buf, sizeof buf, "  %7.2f", f);
            t += buf;
        }
        t += "  degradation\n";
        for (std::size_t m = 0; m < model_names.size(); ++m) {
            std::string row = model_names[m];
            row.resize(name_w, ' ');
            for (double s : scores[m]) {
                std::snprintf(buf, sizeof buf, "  %7.2f", s);
                row += buf;
            }
            std::snprintf(buf, sizeof buf, "  %11.2f", degradation[m]);
            row += buf;
            t += row + "\n";
        }
        return t;
    }
};

// Decode every model on the same noisy copies of the dataset and score with
// corpus BLEU. The noise realization is built once per fraction from the
// first model's source embedding table, so all models see byte-identical
// inputs. Fractions are reported in ascending order.
template <class Real>
inline RobustnessReport robustness_sweep(const std::vector<std::pair<std::string, const Transformer<Real>*>>& models,
                                         const std::vector<SentencePair>& dataset, std::vector<double> fractions,
                                         std::uint64_t seed, int beam_width = 1, bool smooth = false) {
    if (models.empty()) throw std::invalid_argument("robustness_sweep: need at least one model");
    if (fractions.empty()) throw std::invalid_argument("robustness_sweep: need at least one fraction");
    if (dataset.empty()) throw std::invalid_argument("robustness_sweep: empty dataset");
    std::sort(fractions.begin(), fractions.end());

    std::vector<std::vector<SentencePair>> noisy;
    noisy.reserve(fractions.size());
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        Rng rng = Rng::stream(seed, "noise", i);
        noisy.push_back(make_noisy(dataset, fractions[i], models[0].second->src_table(), rng));
    }

    std::vector<IdSeq> refs;
    refs.reserve(dataset.size());
    for (const SentencePair& ex : dataset) refs.push_back(ex.tgt);

    RobustnessReport rep;
    rep.fractions = fractions;
    for (const auto& [name, model] : models) {
        rep.model_names.push_back(name);
        std::vector<double> row;
        for (const std::vector<SentencePair>& set : noisy) {
            std::vector<IdSeq> hyps;
            hyps.reserve(set.size());
            for (const SentencePair& ex : set) hyps.push_back(decode(*model, ex.src, beam_width));
            row.push_back(bleu(hyps, refs, smooth));
        }
        rep.degradation.push_back(row.front() - row.back());
        rep.scores.push_back(std::move(row));
    }
    return rep;
}

}  // namespace advaug
