#pragma once

#include "advaug/rng.hpp"
#include "advaug/types.hpp"
#include "advaug/vocab.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace advaug {

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 64;
    int n_heads = 4;
    int n_enc = 2;
    int n_dec = 2;
    int d_ff = 128;
    double dropout = 0.1;
    bool shared_embeddings = false;
    int max_len = 512;

    int head_dim() const { return d_model / n_heads; }

    void validate() const {
        if (vocab_size <= Vocabulary::kNumSpecials) throw std::invalid_argument("ModelConfig: vocab_size");
        if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
            throw std::invalid_argument("ModelConfig: d_model must be divisible by n_heads");
        if (n_enc <= 0 || n_dec <= 0 || d_ff <= 0) throw std::invalid_argument("ModelConfig: layer sizes");
        if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("ModelConfig: dropout");
    }
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <class Real>
struct LinearP {
    Mat<Real> w;  // (out, in)
    Vec<Real> b;  // (out)

    void init(int out, int in, Rng& rng) {
        w.resize(out, in);
        const double r = std::sqrt(6.0 / (in + out));
        for (Eigen::Index i = 0; i < w.size(); ++i)
            w.data()[i] = static_cast<Real>((2.0 * rng.uniform01() - 1.0) * r);
        b = Vec<Real>::Zero(out);
    }
    void zero(int out, int in) {
        w = Mat<Real>::Zero(out, in);
        b = Vec<Real>::Zero(out);
    }
};

template <class Real>
struct LayerNormP {
    Vec<Real> gamma, beta;

    void init(int d) {
        gamma = Vec<Real>::Ones(d);
        beta = Vec<Real>::Zero(d);
    }
    void zero(int d) {
        gamma = Vec<Real>::Zero(d);
        beta = Vec<Real>::Zero(d);
    }
};

template <class Real>
struct AttentionP {
    LinearP<Real> q, k, v, o;
};

template <class Real>
struct EncLayerP {
    AttentionP<Real> self;
    LayerNormP<Real> ln1;
    LinearP<Real> ff1, ff2;
    LayerNormP<Real> ln2;
};

template <class Real>
struct DecLayerP {
    AttentionP<Real> self;
    LayerNormP<Real> ln1;
    AttentionP<Real> cross;
    LayerNormP<Real> ln2;
    LinearP<Real> ff1, ff2;
    LayerNormP<Real> ln3;
};

template <class Real>
struct TransformerParams {
    Mat<Real> src_emb;  // (V, d)
    Mat<Real> tgt_emb;  // (V, d); unused when embeddings are shared
    std::vector<EncLayerP<Real>> enc;
    std::vector<DecLayerP<Real>> dec;
    LinearP<Real> out;

    // Visits every tensor in a fixed order. F is called as f(name, matrix)
    // with matrix either Mat<Real>& or Vec<Real>&.
    template <class F>
    void visit(const ModelConfig& cfg, F&& f) {
        f("src_emb", src_emb);
        if (!cfg.shared_embeddings) f("tgt_emb", tgt_emb);
        auto attn = [&](const std::string& p, AttentionP<Real>& a) {
            f(p + ".q.w", a.q.w);
            f(p + ".q.b", a.q.b);
            f(p + ".k.w", a.k.w);
            f(p + ".k.b", a.k.b);
            f(p + ".v.w", a.v.w);
            f(p + ".v.b", a.v.b);
            f(p + ".o.w", a.o.w);
            f(p + ".o.b", a.o.b);
        };
        auto ln = [&](const std::string& p, LayerNormP<Real>& l) {
            f(p + ".gamma", l.gamma);
            f(p + ".beta", l.beta);
        };
        auto lin = [&](const std::string& p, LinearP<Real>& l) {
            f(p + ".w", l.w);
            f(p + ".b", l.b);
        };
        for (std::size_t i = 0; i < enc.size(); ++i) {
            const std::string p = "enc." + std::to_string(i);
            attn(p + ".self", enc[i].self);
            ln(p + ".ln1", enc[i].ln1);
            lin(p + ".ff1", enc[i].ff1);
            lin(p + ".ff2", enc[i].ff2);
            ln(p + ".ln2", enc[i].ln2);
        }
        for (std::size_t i = 0; i < dec.size(); ++i) {
            const std::string p = "dec." + std::to_string(i);
            attn(p + ".self", dec[i].self);
            ln(p + ".ln1", dec[i].ln1);
            attn(p + ".cross", dec[i].cross);
            ln(p + ".ln2", dec[i].ln2);
            lin(p + ".ff1", dec[i].ff1);
            lin(p + ".ff2", dec[i].ff2);
            ln(p + ".ln3", dec[i].ln3);
        }
        f("out.w", out.w);
        f("out.b", out.b);
    }

    void init(const ModelConfig& cfg, Rng& rng) {
        alloc(cfg);
        const Real emb_std = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
        for (Eigen::Index i = 0; i < src_emb.size(); ++i)
            src_emb.data()[i] = static_cast<Real>(rng.normal()) * emb_std;
        if (!cfg.shared_embeddings)
            for (Eigen::Index i = 0; i < tgt_emb.size(); ++i)
                tgt_emb.data()[i] = static_cast<Real>(rng.normal()) * emb_std;
        auto attn = [&](AttentionP<Real>& a) {
            a.q.init(cfg.d_model, cfg.d_model, rng);
            a.k.init(cfg.d_model, cfg.d_model, rng);
            a.v.init(cfg.d_model, cfg.d_model, rng);
            a.o.init(cfg.d_model, cfg.d_model, rng);
        };
        for (auto& l : enc) {
            attn(l.self);
            l.ln1.init(cfg.d_model);
            l.ff1.init(cfg.d_ff, cfg.d_model, rng);
            l.ff2.init(cfg.d_model, cfg.d_ff, rng);
            l.ln2.init(cfg.d_model);
        }
        for (auto& l : dec) {
            attn(l.self);
            l.ln1.init(cfg.d_model);
            attn(l.cross);
            l.ln2.init(cfg.d_model);
            l.ff1.init(cfg.d_ff, cfg.d_model, rng);
            l.ff2.init(cfg.d_model, cfg.d_ff, rng);
            l.ln3.init(cfg.d_model);
        }
        out.init(cfg.vocab_size, cfg.d_model, rng);
    }

    void init_zero(const ModelConfig& cfg) {
        alloc(cfg);
        src_emb.setZero();
        if (!cfg.shared_embeddings) tgt_emb.setZero();
        auto attn = [&](AttentionP<Real>& a) {
            a.q.zero(cfg.d_model, cfg.d_model);
            a.k.zero(cfg.d_model, cfg.d_model);
            a.v.zero(cfg.d_model, cfg.d_model);
            a.o.zero(cfg.d_model, cfg.d_model);
        };
        for (auto& l : enc) {
            attn(l.self);
            l.ln1.zero(cfg.d_model);
            l.ff1.zero(cfg.d_ff, cfg.d_model);
            l.ff2.zero(cfg.d_model, cfg.d_ff);
            l.ln2.zero(cfg.d_model);
        }
        for (auto& l : dec) {
            attn(l.self);
            l.ln1.zero(cfg.d_model);
            attn(l.cross);
            l.ln2.zero(cfg.d_model);
            l.ff1.zero(cfg.d_ff, cfg.d_model);
            l.ff2.zero(cfg.d_model, cfg.d_ff);
            l.ln3.zero(cfg.d_model);
        }
        out.zero(cfg.vocab_size, cfg.d_model);
    }

  private:
    void alloc(const ModelConfig& cfg) {
        src_emb.resize(cfg.vocab_size, cfg.d_model);
        if (!cfg.shared_embeddings) tgt_emb.resize(cfg.vocab_size, cfg.d_model);
        enc.resize(static_cast<std::size_t>(cfg.n_enc));
        dec.resize(static_cast<std::size_t>(cfg.n_dec));
    }
};

template <class Real>
struct TensorRef {
    std::string name;
    Real* data;
    Eigen::Index rows, cols;  // cols == 1 for vectors

    Eigen::Index size() const { return rows * cols; }
};

template <class Real>
std::vector<TensorRef<Real>> tensor_refs(TransformerParams<Real>& p, const ModelConfig& cfg) {
    std::vector<TensorRef<Real>> refs;
    p.visit(cfg, [&](const std::string& name, auto& m) {
        refs.push_back(TensorRef<Real>{name, m.data(), m.rows(), m.cols()});
    });
    return refs;
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

// Non-null rng means training mode; eval passes are deterministic.
template <class Real>
struct DropoutCtx {
    Real p = 0;
    Rng* rng = nullptr;

    bool active() const { return rng != nullptr && p > Real(0); }
};

template <class Real>
inline Mat<Real> dropout_forward(Mat<Real>& x, const DropoutCtx<Real>& ctx) {
    if (!ctx.active()) return {};
    const Real keep = Real(1) - ctx.p;
    Mat<Real> mask(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i)
        mask.data()[i] = ctx.rng->uniform01() < static_cast<double>(keep) ? Real(1) / keep : Real(0);
    x.array() *= mask.array();
    return mask;
}

// ---------------------------------------------------------------------------
// Layer primitives with explicit caches
// ---------------------------------------------------------------------------

template <class Real>
struct LinearCache {
    Mat<Real> x;
};

template <class Real>
inline Mat<Real> linear_forward(const LinearP<Real>& p, const Mat<Real>& x, LinearCache<Real>* cache) {
    if (cache) cache->x = x;
    Mat<Real> y = x * p.w.transpose();
    y.rowwise() += p.b.transpose();
    return y;
}

template <class Real>
inline Mat<Real> linear_backward(const LinearP<Real>& p, const LinearCache<Real>& cache, const Mat<Real>& dy,
                                 LinearP<Real>* grad) {
    if (grad) {
        grad->w.noalias() += dy.transpose() * cache.x;
        grad->b.noalias() += dy.colwise().sum().transpose();
    }
    return dy * p.w;
}

template <class Real>
struct LayerNormCache {
    Mat<Real> xhat;
    Vec<Real> inv_std;
};

template <class Real>
inline Mat<Real> layernorm_forward(const LayerNormP<Real>& p, const Mat<Real>& x, LayerNormCache<Real>* cache) {
    const Real eps = static_cast<Real>(1e-5);
    const Eigen::Index d = x.cols();
    Mat<Real> y(x.rows(), d);
    Mat<Real> xhat(x.rows(), d);
    Vec<Real> inv_std(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Real mu = x.row(i).mean();
        const Real var = (x.row(i).array() - mu).square().sum() / static_cast<Real>(d);
        const Real inv = Real(1) / std::sqrt(var + eps);
        xhat.row(i) = (x.row(i).array() - mu) * inv;
        inv_std(i) = inv;
        y.row(i) = xhat.row(i).cwiseProduct(p.gamma.transpose()) + p.beta.transpose();
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    } else {
        // y already computed from local xhat
    }
    return y;
}

template <class Real>
inline Mat<Real> layernorm_backward(const LayerNormP<Real>& p, const LayerNormCache<Real>& cache,
                                    const Mat<Real>& dy, LayerNormP<Real>* grad) {
    const Eigen::Index d = dy.cols();
    Mat<Real> dx(dy.rows(), d);
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        const Eigen::RowVectorX<Real> xhat = cache.xhat.row(i);
        const Eigen::RowVectorX<Real> g = dy.row(i).cwiseProduct(p.gamma.transpose());
        const Real mean_g = g.mean();
        const Real mean_gx = g.cwiseProduct(xhat).mean();
        dx.row(i) = ((g.array() - mean_g - xhat.array() * mean_gx) * cache.inv_std(i)).matrix();
        if (grad) {
            grad->gamma.noalias() += dy.row(i).cwiseProduct(xhat).transpose();
            grad->beta.noalias() += dy.row(i).transpose();
        }
    }
    return dx;
}

template <class Real>
struct AttnCache {
    LinearCache<Real> q_in, k_in, v_in, o_in;
    Mat<Real> q, k, v;             // (L, d)
    std::vector<Mat<Real>> attn;   // per head, post-softmax, pre-dropout
    std::vector<Mat<Real>> drop;   // per head dropout masks (may be empty)
};

// Multi-head scaled dot-product attention. key_real masks pad keys; causal
// additionally restricts queries to positions <= their own index.
template <class Real>
inline Mat<Real> attention_forward(const AttentionP<Real>& p, const ModelConfig& cfg, const Mat<Real>& x,
                                   const Mat<Real>& memory, const Mask& key_real, bool causal,
                                   const DropoutCtx<Real>& drop, AttnCache<Real>* cache) {
    const int h = cfg.n_heads;
    const int dh = cfg.head_dim();
    const Real scale = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(dh)));
    const Real neg_inf = -std::numeric_limits<Real>::infinity();

    Mat<Real> q = linear_forward(p.q, x, cache ? &cache->q_in : nullptr);
    Mat<Real> k = linear_forward(p.k, memory, cache ? &cache->k_in : nullptr);
    Mat<Real> v = linear_forward(p.v, memory, cache ? &cache->v_in : nullptr);

    const Eigen::Index lq = x.rows();
    const Eigen::Index lm = memory.rows();
    Mat<Real> ctx(lq, cfg.d_model);
    if (cache) {
        cache->attn.assign(static_cast<std::size_t>(h), {});
        cache->drop.assign(static_cast<std::size_t>(h), {});
    }
    for (int a = 0; a < h; ++a) {
        auto qa = q.middleCols(a * dh, dh);
        auto ka = k.middleCols(a * dh, dh);
        auto va = v.middleCols(a * dh, dh);
        Mat<Real> s = (qa * ka.transpose()) * scale;
        for (Eigen::Index j = 0; j < lm; ++j)
            if (!key_real[static_cast<std::size_t>(j)]) s.col(j).setConstant(neg_inf);
        if (causal)
            for (Eigen::Index i = 0; i < lq; ++i)
                for (Eigen::Index j = i + 1; j < lm; ++j) s(i, j) = neg_inf;
        // Row-stable softmax.
        Mat<Real> attn(lq, lm);
        for (Eigen::Index i = 0; i < lq; ++i) {
            const Real mx = s.row(i).maxCoeff();
            attn.row(i) = (s.row(i).array() - mx).exp();
            attn.row(i) /= attn.row(i).sum();
        }
        Mat<Real> attn_used = attn;
        Mat<Real> mask = dropout_forward(attn_used, drop);
        ctx.middleCols(a * dh, dh).noalias() = attn_used * va;
        if (cache) {
            cache->attn[static_cast<std::size_t>(a)] = std::move(attn);
            cache->drop[static_cast<std::size_t>(a)] = std::move(mask);
        }
    }
    if (cache) {
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
    }
    return linear_forward(p.o, ctx, cache ? &cache->o_in : nullptr);
}

// Returns (dx, dmemory). For self-attention callers add them together.
template <class Real>
inline std::pair<Mat<Real>, Mat<Real>> attention_backward(const AttentionP<Real>& p, const ModelConfig& cfg,
                                                          const AttnCache<Real>& cache, const Mat<Real>& dout,
                                                          AttentionP<Real>* grad) {
    const int h = cfg.n_heads;
    const int dh = cfg.head_dim();
    const Real scale = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(dh)));

    Mat<Real> dctx = linear_backward(p.o, cache.o_in, dout, grad ? &grad->o : nullptr);
    Mat<Real> dq = Mat<Real>::Zero(cache.q.rows(), cache.q.cols());
    Mat<Real> dk = Mat<Real>::Zero(cache.k.rows(), cache.k.cols());
    Mat<Real> dv = Mat<Real>::Zero(cache.v.rows(), cache.v.cols());

    for (int a = 0; a < h; ++a) {
        const Mat<Real>& attn = cache.attn[static_cast<std::size_t>(a)];
        const Mat<Real>& mask = cache.drop[static_cast<std::size_t>(a)];
        auto ka = cache.k.middleCols(a * dh, dh);
        auto qa = cache.q.middleCols(a * dh, dh);
        auto va = cache.v.middleCols(a * dh, dh);
        auto dctx_a = dctx.middleCols(a * dh, dh);

        Mat<Real> attn_used = attn;
        if (mask.size() > 0) attn_used.array() *= mask.array();
        dv.middleCols(a * dh, dh).noalias() += attn_used.transpose() * dctx_a;

        Mat<Real> dattn = dctx_a * va.transpose();
        if (mask.size() > 0) dattn.array() *= mask.array();
        // Softmax backward per row; masked entries have attn == 0 so they
        // contribute nothing.
        Mat<Real> ds(attn.rows(), attn.cols());
        for (Eigen::Index i = 0; i < attn.rows(); ++i) {
            const Real dot = attn.row(i).dot(dattn.row(i));
            ds.row(i) = attn.row(i).array() * (dattn.row(i).array() - dot);
        }
        ds *= scale;
        dq.middleCols(a * dh, dh).noalias() += ds * ka;
        dk.middleCols(a * dh, dh).noalias() += ds.transpose() * qa;
    }

    Mat<Real> dx = linear_backward(p.q, cache.q_in, dq, grad ? &grad->q : nullptr);
    Mat<Real> dmem = linear_backward(p.k, cache.k_in, dk, grad ? &grad->k : nullptr);
    dmem += linear_backward(p.v, cache.v_in, dv, grad ? &grad->v : nullptr);
    return {std::move(dx), std::move(dmem)};
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

template <class Real>
struct EncLayerCache {
    AttnCache<Real> self;
    Mat<Real> self_drop;
    LayerNormCache<Real> ln1;
    LinearCache<Real> ff1, ff2;
    Mat<Real> relu_in;
    Mat<Real> ff_drop;
    LayerNormCache<Real> ln2;
};

template <class Real>
struct DecLayerCache {
    AttnCache<Real> self;
    Mat<Real> self_drop;
    LayerNormCache<Real> ln1;
    AttnCache<Real> cross;
    Mat<Real> cross_drop;
    LayerNormCache<Real> ln2;
    LinearCache<Real> ff1, ff2;
    Mat<Real> relu_in;
    Mat<Real> ff_drop;
    LayerNormCache<Real> ln3;
};

template <class Real>
struct FwdCache {
    Mask src_real, tgt_real;
    Mat<Real> src_emb_drop, tgt_emb_drop;
    std::vector<EncLayerCache<Real>> enc;
    std::vector<DecLayerCache<Real>> dec;
    Mat<Real> enc_out;
    LinearCache<Real> out_in;
    Mat<Real> logits;
    Mat<Real> probs;
};

template <class Real>
struct FwdOut {
    Mat<Real> logits;
    Mat<Real> probs;  // PredictionSequence: each row a distribution over vocab
};

template <class Real>
struct InputGrads {
    Mat<Real> src;  // gradient w.r.t. raw source embedding rows
    Mat<Real> tgt;  // gradient w.r.t. raw shifted-target embedding rows
};

template <class Real>
inline Mat<Real> softmax_rows(const Mat<Real>& logits) {
    Mat<Real> p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const Real mx = logits.row(i).maxCoeff();
        p.row(i) = (logits.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

// Smoothed one-hot label rows: 1-eps on the true class, eps spread uniformly
// over the remaining vocab.
template <class Real>
inline Mat<Real> one_hot_smoothed(const IdSeq& ids, Real eps, int vocab_size) {
    if (eps < Real(0) || eps >= Real(1)) throw std::invalid_argument("one_hot_smoothed: eps must be in [0,1)");
    Mat<Real> y(static_cast<Eigen::Index>(ids.size()), vocab_size);
    const Real off = eps / static_cast<Real>(vocab_size - 1);
    y.setConstant(off);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= vocab_size) throw std::out_of_range("one_hot_smoothed: id out of range");
        y(static_cast<Eigen::Index>(i), ids[i]) = Real(1) - eps;
    }
    return y;
}

// Decoder input is the shifted copy of the target: [<sos>, y_0..y_{m-1}];
// labels append <eos>: [y_0..y_{m-1}, <eos>]. Both have length m+1.
struct DecoderIo {
    IdSeq input;
    IdSeq labels;
    Mask real;
};

inline DecoderIo make_decoder_io(const IdSeq& tgt) {
    if (tgt.empty()) throw std::invalid_argument("make_decoder_io: empty target");
    DecoderIo io;
    io.input.reserve(tgt.size() + 1);
    io.input.push_back(Vocabulary::kSos);
    io.input.insert(io.input.end(), tgt.begin(), tgt.end());
    io.labels = tgt;
    io.labels.push_back(Vocabulary::kEos);
    io.real.assign(io.input.size(), 1);
    return io;
}

inline DecoderIo pad_decoder_io(const DecoderIo& io, std::size_t len) {
    DecoderIo out;
    out.input = io.input;
    out.input.resize(len, Vocabulary::kPad);
    out.labels = io.labels;
    out.labels.resize(len, Vocabulary::kPad);
    out.real = io.real;
    out.real.resize(len, 0);
    return out;
}

template <class Real>
class Transformer {
  public:
    Transformer() = default;

    Transformer(const ModelConfig& cfg, Rng& init_rng) : cfg_(cfg) {
        cfg_.validate();
        params_.init(cfg_, init_rng);
        build_pe();
    }

    static Transformer with_params(const ModelConfig& cfg, TransformerParams<Real> params) {
        Transformer m;
        m.cfg_ = cfg;
        m.cfg_.validate();
        m.params_ = std::move(params);
        m.build_pe();
        return m;
    }

    const ModelConfig& config() const { return cfg_; }
    TransformerParams<Real>& params() { return params_; }
    const TransformerParams<Real>& params() const { return params_; }

    const Mat<Real>& src_table() const { return params_.src_emb; }
    const Mat<Real>& tgt_table() const { return cfg_.shared_embeddings ? params_.src_emb : params_.tgt_emb; }

    EmbeddedSeq<Real> embed_src(const IdSeq& ids) const { return embed(src_table(), ids); }
    EmbeddedSeq<Real> embed_tgt(const IdSeq& ids) const { return embed(tgt_table(), ids); }

    EmbeddedSeq<Real> embed(const Mat<Real>& table, const IdSeq& ids) const {
        if (ids.empty()) throw std::invalid_argument("embed: empty sequence");
        EmbeddedSeq<Real> out;
        out.rows.resize(static_cast<Eigen::Index>(ids.size()), cfg_.d_model);
        out.real.resize(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] < 0 || ids[i] >= table.rows()) throw std::out_of_range("embed: id out of range");
            out.rows.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
            out.real[i] = ids[i] != Vocabulary::kPad ? 1 : 0;
        }
        return out;
    }

    // Forward pass over embedding sequences. Causal masking on the decoder;
    // pad positions are excluded from attention keys on both sides. Output
    // row j is the model's distribution over the vocabulary at position j.
    FwdOut<Real> forward(const EmbeddedSeq<Real>& src, const EmbeddedSeq<Real>& tgt_in,
                         FwdCache<Real>* cache = nullptr, const DropoutCtx<Real>& drop = {}) const {
        if (src.dim() != cfg_.d_model || tgt_in.dim() != cfg_.d_model)
            throw std::invalid_argument("forward: embedding dimension mismatch");
        if (src.length() == 0 || tgt_in.length() == 0) throw std::invalid_argument("forward: empty sequence");
        if (src.length() > cfg_.max_len || tgt_in.length() > cfg_.max_len)
            throw std::invalid_argument("forward: sequence exceeds max_len");
        if (src.real.size() != static_cast<std::size_t>(src.length()) ||
            tgt_in.real.size() != static_cast<std::size_t>(tgt_in.length()))
            throw std::invalid_argument("forward: mask length mismatch");

        const Real emb_scale = static_cast<Real>(std::sqrt(static_cast<double>(cfg_.d_model)));

        Mat<Real> x = src.rows * emb_scale + pe_.topRows(src.length());
        Mat<Real> src_emb_drop = dropout_forward(x, drop);
        if (cache) {
            cache->src_real = src.real;
            cache->tgt_real = tgt_in.real;
            cache->src_emb_drop = std::move(src_emb_drop);
            cache->enc.assign(params_.enc.size(), {});
            cache->dec.assign(params_.dec.size(), {});
        }
        for (std::size_t i = 0; i < params_.enc.size(); ++i)
            x = enc_layer_forward(params_.enc[i], x, src.real, drop, cache ? &cache->enc[i] : nullptr);
        Mat<Real> enc_out = std::move(x);

        Mat<Real> y = tgt_in.rows * emb_scale + pe_.topRows(tgt_in.length());
        Mat<Real> tgt_emb_drop = dropout_forward(y, drop);
        if (cache) {
            cache->tgt_emb_drop = std::move(tgt_emb_drop);
            cache->enc_out = enc_out;
        }
        for (std::size_t i = 0; i < params_.dec.size(); ++i)
            y = dec_layer_forward(params_.dec[i], y, enc_out, tgt_in.real, src.real, drop,
                                  cache ? &cache->dec[i] : nullptr);

        FwdOut<Real> out;
        out.logits = linear_forward(params_.out, y, cache ? &cache->out_in : nullptr);
        out.probs = softmax_rows(out.logits);
        if (cache) {
            cache->logits = out.logits;
            cache->probs = out.probs;
        }
        return out;
    }

    // Backpropagates dL/dlogits. Parameter gradients are accumulated into
    // *param_grads when given (pass nullptr for input-gradient-only passes,
    // e.g. the adversarial attack). Returned input gradients are w.r.t. the
    // raw embedding rows fed to forward.
    InputGrads<Real> backward(const FwdCache<Real>& cache, const Mat<Real>& dlogits,
                              TransformerParams<Real>* param_grads) const {
        const Real emb_scale = static_cast<Real>(std::sqrt(static_cast<double>(cfg_.d_model)));

        Mat<Real> dy = linear_backward(params_.out, cache.out_in, dlogits,
                                       param_grads ? &param_grads->out : nullptr);

        Mat<Real> denc_total = Mat<Real>::Zero(cache.enc_out.rows(), cache.enc_out.cols());
        for (std::size_t i = params_.dec.size(); i-- > 0;) {
            auto [dx, denc] = dec_layer_backward(params_.dec[i], cache.dec[i], dy,
                                                 param_grads ? &param_grads->dec[i] : nullptr);
            dy = std::move(dx);
            denc_total += denc;
        }
        if (cache.tgt_emb_drop.size() > 0) dy.array() *= cache.tgt_emb_drop.array();
        InputGrads<Real> grads;
        grads.tgt = dy * emb_scale;

        Mat<Real> dx = std::move(denc_total);
        for (std::size_t i = params_.enc.size(); i-- > 0;)
            dx = enc_layer_backward(params_.enc[i], cache.enc[i], dx,
                                    param_grads ? &param_grads->enc[i] : nullptr);
        if (cache.src_emb_drop.size() > 0) dx.array() *= cache.src_emb_drop.array();
        grads.src = dx * emb_scale;
        return grads;
    }

    Vec<Real> pad_row_src() const { return src_table().row(Vocabulary::kPad).transpose(); }
    Vec<Real> pad_row_tgt() const { return tgt_table().row(Vocabulary::kPad).transpose(); }

  private:
    void build_pe() {
        pe_.resize(cfg_.max_len, cfg_.d_model);
        for (int pos = 0; pos < cfg_.max_len; ++pos) {
            for (int i = 0; i < cfg_.d_model; i += 2) {
                const double angle = pos / std::pow(10000.0, static_cast<double>(i) / cfg_.d_model);
                pe_(pos, i) = static_cast<Real>(std::sin(angle));
                if (i + 1 < cfg_.d_model) pe_(pos, i + 1) = static_cast<Real>(std::cos(angle));
            }
        }
    }

    Mat<Real> enc_layer_forward(const EncLayerP<Real>& p, const Mat<Real>& x, const Mask& src_real,
                                const DropoutCtx<Real>& drop, EncLayerCache<Real>* cache) const {
        Mat<Real> a = attention_forward(p.self, cfg_, x, x, src_real, false, drop, cache ? &cache->self : nullptr);
        Mat<Real> a_drop = dropout_forward(a, drop);
        Mat<Real> x1 = layernorm_forward(p.ln1, Mat<Real>(x + a), cache ? &cache->ln1 : nullptr);

        Mat<Real> h = linear_forward(p.ff1, x1, cache ? &cache->ff1 : nullptr);
        if (cache) cache->relu_in = h;
        h = h.cwiseMax(Real(0));
        Mat<Real> f = linear_forward(p.ff2, h, cache ? &cache->ff2 : nullptr);
        Mat<Real> f_drop = dropout_forward(f, drop);
        Mat<Real> x2 = layernorm_forward(p.ln2, Mat<Real>(x1 + f), cache ? &cache->ln2 : nullptr);
        if (cache) {
            cache->self_drop = std::move(a_drop);
            cache->ff_drop = std::move(f_drop);
        }
        return x2;
    }

    Mat<Real> enc_layer_backward(const EncLayerP<Real>& p, const EncLayerCache<Real>& cache, const Mat<Real>& dout,
                                 EncLayerP<Real>* grad) const {
        Mat<Real> d2 = layernorm_backward(p.ln2, cache.ln2, dout, grad ? &grad->ln2 : nullptr);
        Mat<Real> df = d2;
        if (cache.ff_drop.size() > 0) df.array() *= cache.ff_drop.array();
        Mat<Real> dh = linear_backward(p.ff2, cache.ff2, df, grad ? &grad->ff2 : nullptr);
        dh.array() *= (cache.relu_in.array() > Real(0)).template cast<Real>();
        Mat<Real> dx1 = linear_backward(p.ff1, cache.ff1, dh, grad ? &grad->ff1 : nullptr);
        dx1 += d2;

        Mat<Real> d1 = layernorm_backward(p.ln1, cache.ln1, dx1, grad ? &grad->ln1 : nullptr);
        Mat<Real> da = d1;
        if (cache.self_drop.size() > 0) da.array() *= cache.self_drop.array();
        auto [dxq, dxm] = attention_backward(p.self, cfg_, cache.self, da, grad ? &grad->self : nullptr);
        return Mat<Real>(d1 + dxq + dxm);
    }

    Mat<Real> dec_layer_forward(const DecLayerP<Real>& p, const Mat<Real>& y, const Mat<Real>& enc_out,
                                const Mask& tgt_real, const Mask& src_real, const DropoutCtx<Real>& drop,
                                DecLayerCache<Real>* cache) const {
        Mat<Real> a = attention_forward(p.self, cfg_, y, y, tgt_real, true, drop, cache ? &cache->self : nullptr);
        Mat<Real> a_drop = dropout_forward(a, drop);
        Mat<Real> y1 = layernorm_forward(p.ln1, Mat<Real>(y + a), cache ? &cache->ln1 : nullptr);

        Mat<Real> c =
            attention_forward(p.cross, cfg_, y1, enc_out, src_real, false, drop, cache ? &cache->cross : nullptr);
        Mat<Real> c_drop = dropout_forward(c, drop);
        Mat<Real> y2 = layernorm_forward(p.ln2, Mat<Real>(y1 + c), cache ? &cache->ln2 : nullptr);

        Mat<Real> h = linear_forward(p.ff1, y2, cache ? &cache->ff1 : nullptr);
        if (cache) cache->relu_in = h;
        h = h.cwiseMax(Real(0));
        Mat<Real> f = linear_forward(p.ff2, h, cache ? &cache->ff2 : nullptr);
        Mat<Real> f_drop = dropout_forward(f, drop);
        Mat<Real> y3 = layernorm_forward(p.ln3, Mat<Real>(y2 + f), cache ? &cache->ln3 : nullptr);
        if (cache) {
            cache->self_drop = std::move(a_drop);
            cache->cross_drop = std::move(c_drop);
            cache->ff_drop = std::move(f_drop);
        }
        return y3;
    }

    std::pair<Mat<Real>, Mat<Real>> dec_layer_backward(const DecLayerP<Real>& p, const DecLayerCache<Real>& cache,
                                                       const Mat<Real>& dout, DecLayerP<Real>* grad) const {
        Mat<Real> d3 = layernorm_backward(p.ln3, cache.ln3, dout, grad ? &grad->ln3 : nullptr);
        Mat<Real> df = d3;
        if (cache.ff_drop.size() > 0) df.array() *= cache.ff_drop.array();
        Mat<Real> dh = linear_backward(p.ff2, cache.ff2, df, grad ? &grad->ff2 : nullptr);
        dh.array() *= (cache.relu_in.array() > Real(0)).template cast<Real>();
        Mat<Real> dy2 = linear_backward(p.ff1, cache.ff1, dh, grad ? &grad->ff1 : nullptr);
        dy2 += d3;

        Mat<Real> d2 = layernorm_backward(p.ln2, cache.ln2, dy2, grad ? &grad->ln2 : nullptr);
        Mat<Real> dc = d2;
        if (cache.cross_drop.size() > 0) dc.array() *= cache.cross_drop.array();
        auto [dy1c, denc] = attention_backward(p.cross, cfg_, cache.cross, dc, grad ? &grad->cross : nullptr);
        Mat<Real> dy1 = d2 + dy1c;

        Mat<Real> d1 = layernorm_backward(p.ln1, cache.ln1, dy1, grad ? &grad->ln1 : nullptr);
        Mat<Real> da = d1;
        if (cache.self_drop.size() > 0) da.array() *= cache.self_drop.array();
        auto [dyq, dym] = attention_backward(p.self, cfg_, cache.self, da, grad ? &grad->self : nullptr);
        return {Mat<Real>(d1 + dyq + dym), std::move(denc)};
    }

    ModelConfig cfg_;
    TransformerParams<Real> params_;
    Mat<Real> pe_;
};

// Scatter-add an input-embedding gradient back to the table rows named by
// ids; weight carries the interpolation coefficient for mixed inputs.
template <class Real>
inline void scatter_embedding_grad(Mat<Real>& table_grad, const IdSeq& ids, const Mat<Real>& g, Real weight) {
    for (std::size_t i = 0; i < ids.size(); ++i)
        table_grad.row(ids[i]) += g.row(static_cast<Eigen::Index>(i)) * weight;
}

}  // namespace advaug
