#pragma once

#include "advaug/types.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace advaug {

struct BleuStats {
    // Indexed by n-gram order minus one.
    long long matched[4] = {0, 0, 0, 0};
    long long total[4] = {0, 0, 0, 0};
    long long hyp_len = 0;
    long long ref_len = 0;
};

namespace detail {

inline std::map<IdSeq, long long> ngram_counts(const IdSeq& s, int n) {
    std::map<IdSeq, long long> counts;
    if (static_cast<int>(s.size()) < n) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i)
        ++counts[IdSeq(s.begin() + static_cast<std::ptrdiff_t>(i),
                       s.begin() + static_cast<std::ptrdiff_t>(i) + n)];
    return counts;
}

}  // namespace detail

// Accumulates clipped (modified) n-gram matches for one sentence pair.
inline void accumulate_bleu(BleuStats& stats, const IdSeq& hyp, const IdSeq& ref) {
    stats.hyp_len += static_cast<long long>(hyp.size());
    stats.ref_len += static_cast<long long>(ref.size());
    for (int n = 1; n <= 4; ++n) {
        const auto hyp_counts = detail::ngram_counts(hyp, n);
        const auto ref_counts = detail::ngram_counts(ref, n);
        for (const auto& [gram, count] : hyp_counts) {
            stats.total[n - 1] += count;
            const auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) stats.matched[n - 1] += std::min(count, it->second);
        }
    }
}

// Corpus-level score in [0,100]: geometric mean of modified 1-4-gram
// precisions times the brevity penalty, following the multi-bleu convention
// (single reference). With smoothing off, any zero precision yields 0; the
// smoothing flag adds one to each order's numerator and denominator, for very
// short synthetic sentences.
inline double bleu_from_stats(const BleuStats& stats, bool smooth = false) {
    if (stats.hyp_len == 0 || stats.ref_len == 0) return 0.0;
    double log_precision_sum = 0.0;
    for (int n = 0; n < 4; ++n) {
        long long matched = stats.matched[n];
        long long total = stats.total[n];
        if (smooth) {
            ++matched;
            ++total;
        }
        if (matched == 0 || total == 0) return 0.0;
        log_precision_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
    }
    const double bp = stats.hyp_len >= stats.ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(stats.ref_len) /
                                               static_cast<double>(stats.hyp_len));
    return 100.0 * bp * std::exp(log_precision_sum / 4.0);
}

inline double bleu(const std::vector<IdSeq>& hypotheses, const std::vector<IdSeq>& references,
                   bool smooth = false) {
    if (hypotheses.size() != references.size())
        throw std::invalid_argument("bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                                    std::to_string(references.size()) + " references");
    if (hypotheses.empty()) throw std::invalid_argument("bleu: empty corpus");
    BleuStats stats;
    for (std::size_t i = 0; i < hypotheses.size(); ++i)
        accumulate_bleu(stats, hypotheses[i], references[i]);
    return bleu_from_stats(stats, smooth);
}

}  // namespace advaug
