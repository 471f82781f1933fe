#pragma once

#include "advaug/adversarial.hpp"
#include "advaug/batching.hpp"
#include "advaug/model.hpp"
#include "advaug/rng.hpp"
#include "advaug/types.hpp"

#include <stdexcept>
#include <utility>
#include <vector>

namespace advaug {

// lambda ~ Beta(alpha, alpha); symmetric around 0.5.
inline double sample_lambda(double alpha, Rng& rng) {
    if (alpha <= 0.0) throw std::invalid_argument("sample_lambda: alpha must be > 0");
    return rng.beta(alpha, alpha);
}

// Convex combination lambda*a + (1-lambda)*b, written so that the endpoints
// and self-mixing are exact: lambda=1 returns a, lambda=0 returns b, and
// mix(a,a,lambda)=a bit-for-bit for any lambda.
template <class Real>
inline Mat<Real> mix(const Mat<Real>& a, const Mat<Real>& b, Real lambda) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("mix: shape mismatch");
    if (lambda == Real(1)) return a;
    if (lambda == Real(0)) return b;
    return b + lambda * (a - b);
}

template <class Real>
inline EmbeddedSeq<Real> mix(const EmbeddedSeq<Real>& a, const EmbeddedSeq<Real>& b, Real lambda) {
    if (a.length() != b.length()) throw std::invalid_argument("mix: sequences must be pad-aligned to equal length");
    EmbeddedSeq<Real> out;
    out.rows = mix(a.rows, b.rows, lambda);
    out.real.resize(a.real.size());
    for (std::size_t i = 0; i < a.real.size(); ++i) out.real[i] = (a.real[i] || b.real[i]) ? 1 : 0;
    return out;
}

enum class Provenance { kAdv, kAut };

// One interpolated training example. Parent token ids are kept (padded to
// the mixed length) so embedding-table gradients can be scattered back with
// weights lambda / 1-lambda. The soft target rows are attached by the losses
// module; label ids are only meaningful for aut provenance.
template <class Real>
struct VirtualExample {
    Provenance provenance = Provenance::kAut;
    Real lambda = Real(1);
    EmbeddedSeq<Real> src, tgt_in;        // mixed raw embeddings
    IdSeq src_a, src_b;                   // parent source ids, pad-aligned
    IdSeq tgt_in_a, tgt_in_b;             // parent decoder-input ids, pad-aligned
    IdSeq labels_a, labels_b;             // parent label ids, pad-aligned
    Mask label_real;                      // union of parent label masks
    Mat<Real> soft_target;                // empty until attached
};

// P_adv element: two fresh adversarial draws from the same origin, one
// shared lambda across the source and target mixes. Lengths match the
// origin by construction, so no padding is involved.
template <class Real>
inline VirtualExample<Real> sample_adv_virtual(const Transformer<Real>& model, const SentencePair& ex,
                                               const Mat<Real>& origin_src_grad, const AdvParams& xi_src,
                                               const AdvParams& xi_tgt, double alpha, Rng& adv_rng,
                                               Rng& lambda_rng, Real label_smoothing) {
    const AdvDraw<Real> d1 = gen_adv_pair(model, ex, origin_src_grad, xi_src, xi_tgt, adv_rng, label_smoothing);
    const AdvDraw<Real> d2 = gen_adv_pair(model, ex, origin_src_grad, xi_src, xi_tgt, adv_rng, label_smoothing);
    const Real lambda = static_cast<Real>(sample_lambda(alpha, lambda_rng));

    VirtualExample<Real> v;
    v.provenance = Provenance::kAdv;
    v.lambda = lambda;
    v.src_a = d1.src;
    v.src_b = d2.src;
    const DecoderIo io1 = make_decoder_io(d1.tgt);
    const DecoderIo io2 = make_decoder_io(d2.tgt);
    v.tgt_in_a = io1.input;
    v.tgt_in_b = io2.input;
    v.labels_a = io1.labels;
    v.labels_b = io2.labels;
    v.label_real = io1.real;
    v.src = mix(model.embed_src(d1.src), model.embed_src(d2.src), lambda);
    v.tgt_in = mix(model.embed_tgt(io1.input), model.embed_tgt(io2.input), lambda);
    return v;
}

// P_aut element: interpolates two authentic pairs after pad-aligning both
// sides; the single lambda is shared across source, target, and label mixes.
template <class Real>
inline VirtualExample<Real> make_aut_virtual(const Transformer<Real>& model, const SentencePair& a,
                                             const SentencePair& b, Real lambda) {
    VirtualExample<Real> v;
    v.provenance = Provenance::kAut;
    v.lambda = lambda;

    const AlignedPair src_al = pad_align(a.src, b.src);
    v.src_a = src_al.a;
    v.src_b = src_al.b;

    const DecoderIo io_a = make_decoder_io(a.tgt);
    const DecoderIo io_b = make_decoder_io(b.tgt);
    const std::size_t len = std::max(io_a.input.size(), io_b.input.size());
    const DecoderIo pa = pad_decoder_io(io_a, len);
    const DecoderIo pb = pad_decoder_io(io_b, len);
    v.tgt_in_a = pa.input;
    v.tgt_in_b = pb.input;
    v.labels_a = pa.labels;
    v.labels_b = pb.labels;
    v.label_real.resize(len);
    for (std::size_t i = 0; i < len; ++i) v.label_real[i] = (pa.real[i] || pb.real[i]) ? 1 : 0;

    v.src = mix(model.embed_src(src_al.a), model.embed_src(src_al.b), lambda);
    v.tgt_in = mix(model.embed_tgt(pa.input), model.embed_tgt(pb.input), lambda);
    return v;
}

// Pairs example i with examples[perm[i]] and draws one lambda per pair.
template <class Real>
inline std::vector<VirtualExample<Real>> sample_aut_virtual(const Transformer<Real>& model,
                                                            const std::vector<SentencePair>& examples,
                                                            const std::vector<std::size_t>& perm, double alpha,
                                                            Rng& lambda_rng) {
    if (examples.size() < 2) throw std::invalid_argument("sample_aut_virtual: batch size must be >= 2");
    if (perm.size() != examples.size()) throw std::invalid_argument("sample_aut_virtual: permutation size mismatch");
    std::vector<VirtualExample<Real>> out;
    out.reserve(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const Real lambda = static_cast<Real>(sample_lambda(alpha, lambda_rng));
        out.push_back(make_aut_virtual(model, examples[i], examples[perm[i]], lambda));
    }
    return out;
}

}  // namespace advaug
