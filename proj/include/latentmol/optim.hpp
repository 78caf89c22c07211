#pragma once

// Adam with a single-cycle cosine-annealed learning rate.

#include <string>
#include <vector>

#include "latentmol/tensor.hpp"

namespace latentmol {

struct AdamConfig {
    float lr_max = 1e-3f;
    float lr_min = -1.0f;  // < 0 means lr_max / 100
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    int total_steps = 1;  // cycle length T for the cosine schedule

    float lr_at(int step) const;  // step in [0, T], clamped
};

class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);

    // Applies one update using current gradients; throws MissingGradient if a
    // parameter has no populated gradient buffer.
    void step();
    void zero_grad();
    int steps_taken() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<float>> m_, v_;
    AdamConfig cfg_;
    int step_ = 0;
};

}  // namespace latentmol
