#pragma once

#include "advaug/rng.hpp"
#include "advaug/types.hpp"
#include "advaug/vocab.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace advaug {

inline IdSeq pad_to(const IdSeq& s, std::size_t len) {
    IdSeq out = s;
    out.resize(len, Vocabulary::kPad);
    return out;
}

inline Mask mask_of(const IdSeq& padded) {
    Mask m(padded.size());
    for (std::size_t i = 0; i < padded.size(); ++i) m[i] = padded[i] != Vocabulary::kPad ? 1 : 0;
    return m;
}

struct AlignedPair {
    IdSeq a, b;
    Mask a_real, b_real;
};

// Appends pad ids to the shorter sequence so both have length max(|a|,|b|).
inline AlignedPair pad_align(const IdSeq& a, const IdSeq& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("pad_align: empty sequence");
    const std::size_t len = std::max(a.size(), b.size());
    AlignedPair out;
    out.a = pad_to(a, len);
    out.b = pad_to(b, len);
    out.a_real = mask_of(out.a);
    out.b_real = mask_of(out.b);
    // Real flags reflect the original lengths, so interior pads (none by
    // invariant) cannot be confused with alignment padding.
    for (std::size_t i = 0; i < a.size(); ++i) out.a_real[i] = 1;
    for (std::size_t i = 0; i < b.size(); ++i) out.b_real[i] = 1;
    return out;
}

// Embedding-level variant: appends copies of the pad row.
template <class Real>
inline std::pair<EmbeddedSeq<Real>, EmbeddedSeq<Real>> pad_align(const EmbeddedSeq<Real>& a,
                                                                 const EmbeddedSeq<Real>& b,
                                                                 const Vec<Real>& pad_row) {
    if (a.length() == 0 || b.length() == 0) throw std::invalid_argument("pad_align: empty sequence");
    if (a.dim() != b.dim()) throw std::invalid_argument("pad_align: dimension mismatch");
    const Eigen::Index len = std::max(a.length(), b.length());
    auto extend = [&](const EmbeddedSeq<Real>& s) {
        EmbeddedSeq<Real> out;
        out.rows = Mat<Real>(len, s.dim());
        out.rows.topRows(s.length()) = s.rows;
        for (Eigen::Index i = s.length(); i < len; ++i) out.rows.row(i) = pad_row.transpose();
        out.real = s.real;
        out.real.resize(static_cast<std::size_t>(len), 0);
        return out;
    };
    return {extend(a), extend(b)};
}

struct Batch {
    std::vector<SentencePair> examples;
    // Padded to the batch max per side; one row per example.
    std::vector<IdSeq> src_padded, tgt_padded;
    std::vector<Mask> src_mask, tgt_mask;

    int size() const { return static_cast<int>(examples.size()); }
};

inline Batch finalize_batch(std::vector<SentencePair> examples) {
    Batch b;
    b.examples = std::move(examples);
    std::size_t src_w = 0, tgt_w = 0;
    for (const auto& e : b.examples) {
        src_w = std::max(src_w, e.src.size());
        tgt_w = std::max(tgt_w, e.tgt.size());
    }
    for (const auto& e : b.examples) {
        b.src_padded.push_back(pad_to(e.src, src_w));
        b.tgt_padded.push_back(pad_to(e.tgt, tgt_w));
        b.src_mask.push_back(mask_of(b.src_padded.back()));
        b.tgt_mask.push_back(mask_of(b.tgt_padded.back()));
    }
    return b;
}

// Groups examples of similar source length into batches. The corpus is
// shuffled by seed, stably sorted by source length (so in-bucket order stays
// shuffled), sliced, and the batch order is shuffled again. A trailing
// singleton is folded into the previous batch: the authentic-pair shuffle
// needs at least two examples per batch.
inline std::vector<Batch> make_batches(const std::vector<SentencePair>& corpus, int batch_size,
                                       std::uint64_t seed) {
    if (batch_size < 2) throw std::invalid_argument("make_batches: batch_size must be >= 2");
    if (corpus.size() < 2) throw std::invalid_argument("make_batches: need at least 2 examples");

    Rng rng(seed);
    std::vector<int> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return corpus[static_cast<std::size_t>(a)].src.size() < corpus[static_cast<std::size_t>(b)].src.size();
    });

    std::vector<std::vector<SentencePair>> groups;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
        std::vector<SentencePair> group;
        for (std::size_t j = i; j < end; ++j) group.push_back(corpus[static_cast<std::size_t>(order[j])]);
        groups.push_back(std::move(group));
    }
    if (groups.size() > 1 && groups.back().size() < 2) {
        groups[groups.size() - 2].push_back(groups.back()[0]);
        groups.pop_back();
    }

    std::vector<int> batch_order(groups.size());
    std::iota(batch_order.begin(), batch_order.end(), 0);
    rng.shuffle(batch_order);

    std::vector<Batch> out;
    out.reserve(groups.size());
    for (int gi : batch_order) out.push_back(finalize_batch(std::move(groups[static_cast<std::size_t>(gi)])));
    return out;
}

}  // namespace advaug
