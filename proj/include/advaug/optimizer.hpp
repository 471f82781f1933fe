#pragma once

#include "advaug/model.hpp"
#include "advaug/types.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace advaug {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
    double lr_scale = 1.0;
    int warmup_steps = 400;

    void validate() const {
        if (beta1 < 0 || beta1 >= 1) throw std::invalid_argument("AdamConfig: beta1 must be in [0,1)");
        if (beta2 < 0 || beta2 >= 1) throw std::invalid_argument("AdamConfig: beta2 must be in [0,1)");
        if (eps <= 0) throw std::invalid_argument("AdamConfig: eps must be > 0");
        if (lr_scale <= 0) throw std::invalid_argument("AdamConfig: lr_scale must be > 0");
        if (warmup_steps < 1) throw std::invalid_argument("AdamConfig: warmup_steps must be >= 1");
    }
};

// Inverse-square-root schedule with linear warmup, scaled by the model width.
inline double warmup_lr(int step, int d_model, int warmup_steps, double lr_scale) {
    if (step < 1) throw std::invalid_argument("warmup_lr: step must be >= 1");
    const double t = static_cast<double>(step);
    const double w = static_cast<double>(warmup_steps);
    return lr_scale / std::sqrt(static_cast<double>(d_model)) *
           std::min(1.0 / std::sqrt(t), t / (w * std::sqrt(w)));
}

// Adam over the model's parameter tensors. Moment buffers are laid out in the
// same fixed tensor order as tensor_refs(), so state round-trips by index.
template <class Real>
class Adam {
public:
    using Flat = Eigen::Array<Real, Eigen::Dynamic, 1>;

    Adam(const ModelConfig& cfg, AdamConfig acfg) : cfg_(cfg), acfg_(acfg) {
        acfg_.validate();
        TransformerParams<Real> shape;
        shape.init_zero(cfg);
        for (const auto& ref : tensor_refs(shape, cfg)) {
            m_.push_back(Flat::Zero(ref.size()));
            v_.push_back(Flat::Zero(ref.size()));
        }
    }

    int step_count() const { return t_; }
    const AdamConfig& config() const { return acfg_; }
    std::vector<Flat>& first_moments() { return m_; }
    std::vector<Flat>& second_moments() { return v_; }

    void restore(int t) {
        if (t < 0) throw std::invalid_argument("Adam::restore: negative step");
        t_ = t;
    }

    // One update with an explicit learning rate.
    void step(TransformerParams<Real>& params, TransformerParams<Real>& grads, double lr) {
        ++t_;
        auto prefs = tensor_refs(params, cfg_);
        auto grefs = tensor_refs(grads, cfg_);
        if (prefs.size() != m_.size()) throw std::logic_error("Adam::step: tensor count mismatch");
        const Real b1 = static_cast<Real>(acfg_.beta1);
        const Real b2 = static_cast<Real>(acfg_.beta2);
        const Real bc1 = static_cast<Real>(1.0 - std::pow(acfg_.beta1, t_));
        const Real bc2 = static_cast<Real>(1.0 - std::pow(acfg_.beta2, t_));
        for (std::size_t i = 0; i < prefs.size(); ++i) {
            Eigen::Map<Flat> p(prefs[i].data, prefs[i].size());
            Eigen::Map<const Flat> g(grefs[i].data, grefs[i].size());
            m_[i] = b1 * m_[i] + (1 - b1) * g;
            v_[i] = b2 * v_[i] + (1 - b2) * g * g;
            p -= static_cast<Real>(lr) * (m_[i] / bc1) /
                 ((v_[i] / bc2).sqrt() + static_cast<Real>(acfg_.eps));
        }
    }

    // One update at the scheduled rate for the upcoming step index.
    void step_scheduled(TransformerParams<Real>& params, TransformerParams<Real>& grads) {
        const double lr = warmup_lr(t_ + 1, cfg_.d_model, acfg_.warmup_steps, acfg_.lr_scale);
        step(params, grads, lr);
    }

private:
    ModelConfig cfg_;
    AdamConfig acfg_;
    int t_ = 0;
    std::vector<Flat> m_, v_;
};

}  // namespace advaug
