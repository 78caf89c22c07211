#include "latentmol/optim.hpp"

#include <algorithm>
#include <cmath>

namespace latentmol {

float AdamConfig::lr_at(int step) const {
    float lo = lr_min < 0.0f ? lr_max / 100.0f : lr_min;
    int T = std::max(1, total_steps);
    float t = static_cast<float>(std::clamp(step, 0, T));
    return lo + 0.5f * (lr_max - lo) * (1.0f + std::cos(static_cast<float>(M_PI) * t / T));
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i].numel(), 0.0f);
        v_[i].assign(params_[i].numel(), 0.0f);
    }
}

void Adam::step() {
    float lr = cfg_.lr_at(step_);
    ++step_;
    float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(step_));
    float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(step_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (!p.has_grad())
            throw MissingGradient("adam: parameter " + std::to_string(i) + " has no gradient");
        const std::vector<float>& g = p.grad();
        float* w = p.data().data();
        for (int64_t j = 0; j < p.numel(); ++j) {
            m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0f - cfg_.beta1) * g[j];
            v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0f - cfg_.beta2) * g[j] * g[j];
            float mhat = m_[i][j] / bc1;
            float vhat = v_[i][j] / bc2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

}  // namespace latentmol
