#pragma once

#include <cmath>
#include <string>

#include "jocor/error.hpp"
#include "jocor/mlp.hpp"

namespace jocor {

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
            throw ConfigError("adam: learning_rate must be finite and >= 0");
        }
        if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam: beta1 must lie in [0, 1)");
        if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam: beta2 must lie in [0, 1)");
        if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("adam: epsilon must be > 0");
    }
};

namespace detail {

template <typename Param, typename Moment>
void adam_update_block(Param& param, Moment& m, Moment& v, const Moment& g, const AdamConfig& cfg,
                       double correction1, double correction2) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const auto m_hat = m.array() / correction1;
    const auto v_hat = v.array() / correction2;
    param.array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
}

}  // namespace detail

/// Throws ShapeError/NumericError if `grads` cannot be applied to `net`.
/// The message names the offending block, e.g. "layer 1 bias".
inline void check_gradients(const MlpNetwork& net, const Gradients& grads) {
    if (grads.weights.size() != net.layers.size() || grads.bias.size() != net.layers.size()) {
        throw ShapeError("adam_step: gradient has " + std::to_string(grads.weights.size()) +
                         " layers, network has " + std::to_string(net.layers.size()));
    }
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const auto& layer = net.layers[k];
        require_shape(grads.weights[k], layer.weights.rows(), layer.weights.cols(),
                      ("adam_step: layer " + std::to_string(k) + " weights").c_str());
        if (grads.bias[k].size() != layer.bias.size()) {
            throw ShapeError("adam_step: layer " + std::to_string(k) + " bias has wrong length");
        }
        if (!grads.weights[k].allFinite()) {
            throw NumericError("adam_step: non-finite gradient in layer " + std::to_string(k) + " weights");
        }
        if (!grads.bias[k].allFinite()) {
            throw NumericError("adam_step: non-finite gradient in layer " + std::to_string(k) + " bias");
        }
    }
}

/// One bias-corrected Adam step. Validates every block before touching any,
/// so a failing call leaves the network unchanged.
inline void adam_step(MlpNetwork& net, const Gradients& grads, const AdamConfig& cfg) {
    cfg.validate();
    check_gradients(net, grads);

    AdamState& s = net.adam;
    ++s.step;
    const double t = static_cast<double>(s.step);
    const double correction1 = 1.0 - std::pow(cfg.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        detail::adam_update_block(net.layers[k].weights, s.weight_m[k], s.weight_v[k], grads.weights[k], cfg,
                                  correction1, correction2);
        detail::adam_update_block(net.layers[k].bias, s.bias_m[k], s.bias_v[k], grads.bias[k], cfg, correction1,
                                  correction2);
    }
}

}  // namespace jocor
