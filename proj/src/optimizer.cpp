#include "kinflow/optimizer.hpp"

#include <cmath>

namespace kinflow {

AdamW::AdamW(const OptimizerConfig& cfg, const std::vector<Index>& block_sizes)
    : cfg_(cfg), sizes_(block_sizes) {
    m_.reserve(sizes_.size());
    v_.reserve(sizes_.size());
    for (Index n : sizes_) {
        require(n >= 1, "AdamW: block sizes must be positive");
        m_.push_back(Eigen::ArrayXd::Zero(n));
        v_.push_back(Eigen::ArrayXd::Zero(n));
    }
}

void AdamW::step(const std::vector<double*>& params, const std::vector<double*>& grads) {
    require(params.size() == sizes_.size() && grads.size() == sizes_.size(),
            "AdamW: block count mismatch");

    double norm_sq = 0.0;
    for (std::size_t b = 0; b < sizes_.size(); ++b) {
        for (Index i = 0; i < sizes_[b]; ++i) {
            norm_sq += grads[b][i] * grads[b][i];
        }
    }
    const double norm = std::sqrt(norm_sq);
    const double clip = cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip ? cfg_.grad_clip / norm : 1.0;

    ++step_count_;
    const double bias1 = 1.0 - std::pow(cfg_.beta1, step_count_);
    const double bias2 = 1.0 - std::pow(cfg_.beta2, step_count_);
    constexpr double kEps = 1e-8;

    for (std::size_t b = 0; b < sizes_.size(); ++b) {
        Eigen::ArrayXd& m = m_[b];
        Eigen::ArrayXd& v = v_[b];
        for (Index i = 0; i < sizes_[b]; ++i) {
            const double g = grads[b][i] * clip;
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            params[b][i] -= cfg_.lr * (m_hat / (std::sqrt(v_hat) + kEps) +
                                       cfg_.weight_decay * params[b][i]);
        }
    }
}

}  // namespace kinflow
