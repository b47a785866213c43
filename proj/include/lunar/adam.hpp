#pragma once

#include <cmath>
#include <cstdint>

#include "lunar/common.hpp"
#include "lunar/unet.hpp"

namespace lunar {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        if (learning_rate <= 0.0) throw validation_error("Adam: learning_rate must be positive");
        if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
            throw validation_error("Adam: betas must lie in (0,1)");
        if (epsilon <= 0.0) throw validation_error("Adam: epsilon must be positive");
    }
};

struct AdamState {
    ModelParams m;  // first moments
    ModelParams v;  // second moments
    std::int64_t step = 0;

    static AdamState init_like(const ModelParams& params) {
        AdamState s;
        s.m = ModelParams::zeros_like(params);
        s.v = ModelParams::zeros_like(params);
        return s;
    }
};

// One Adam update, elementwise over every parameter tensor:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const AdamConfig& cfg) {
    cfg.validate();
    if (params.items.size() != grads.items.size() || params.items.size() != state.m.items.size())
        throw validation_error("adam_step: parameter/gradient/state tensor counts differ");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.items.size(); ++t) {
        auto& theta = params.items[t].second;
        const auto& g = grads.items[t].second;
        auto& m = state.m.items[t].second;
        auto& v = state.v.items[t].second;
        if (!theta.same_shape(g))
            throw validation_error("adam_step: shape mismatch for " + params.items[t].first);
        for (std::size_t i = 0; i < theta.data.size(); ++i) {
            const double gi = g.data[i];
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            theta.data[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

}  // namespace lunar
