#include "doctest.h"

#include <cmath>

#include "latentmol/optim.hpp"

using namespace latentmol;

TEST_CASE("cosine schedule endpoints") {
    AdamConfig cfg;
    cfg.lr_max = 0.2f;
    cfg.total_steps = 100;
    CHECK(cfg.lr_at(0) == doctest::Approx(0.2f));
    CHECK(cfg.lr_at(100) == doctest::Approx(0.002f));  // default floor lr_max / 100
    CHECK(cfg.lr_at(50) == doctest::Approx(0.101f));
    cfg.lr_min = 0.05f;
    CHECK(cfg.lr_at(100) == doctest::Approx(0.05f));
    CHECK(cfg.lr_at(200) == doctest::Approx(0.05f));  // clamped past the cycle
}

TEST_CASE("first Adam step moves a scalar by about lr") {
    // Bias correction makes the very first update exactly lr * sign(grad)
    // up to the epsilon term.
    Tensor p = Tensor::scalar(1.0f, true);
    AdamConfig cfg;
    cfg.lr_max = 0.1f;
    cfg.lr_min = 0.1f;  // flat schedule
    cfg.total_steps = 10;
    Adam adam({p}, cfg);
    p.grad()[0] = 1.0f;
    adam.step();
    CHECK(p.data()[0] == doctest::Approx(0.9f).epsilon(1e-4));
}

TEST_CASE("missing gradient is rejected") {
    Tensor p = Tensor::scalar(1.0f, true);
    AdamConfig cfg;
    Adam adam({p}, cfg);
    CHECK_THROWS_AS(adam.step(), MissingGradient);
}

TEST_CASE("Adam is deterministic") {
    auto run = [](int steps) {
        Tensor p = Tensor::from({3}, {1.0f, -2.0f, 0.5f}, true);
        AdamConfig cfg;
        cfg.lr_max = 0.05f;
        cfg.total_steps = steps;
        Adam adam({p}, cfg);
        for (int s = 0; s < steps; ++s) {
            for (int i = 0; i < 3; ++i) p.grad()[i] = 2.0f * p.data()[i];
            adam.step();
            adam.zero_grad();
        }
        return p.data();
    };
    auto a = run(50), b = run(50);
    for (int i = 0; i < 3; ++i) CHECK(a[i] == b[i]);
    // And it actually minimizes sum of squares.
    for (int i = 0; i < 3; ++i) CHECK(std::abs(a[i]) < 1.0f);
}
