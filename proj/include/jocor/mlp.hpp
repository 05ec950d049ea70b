#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "jocor/error.hpp"
#include "jocor/matrix.hpp"
#include "jocor/random.hpp"

namespace jocor {

enum class Activation { relu, none };

/// Fully connected layer computing `activation(x * weights + bias)`.
/// `weights` is (in x out), so a batch of row vectors multiplies on the left.
struct DenseLayer {
    Matrix weights;
    RowVector bias;
    Activation activation = Activation::none;

    Eigen::Index in_width() const { return weights.rows(); }
    Eigen::Index out_width() const { return weights.cols(); }
};

/// First and second moment estimates, one pair per parameter block.
struct AdamState {
    std::vector<Matrix> weight_m, weight_v;
    std::vector<RowVector> bias_m, bias_v;
    std::uint64_t step = 0;
};

/// A multilayer perceptron whose final layer feeds a softmax, plus its optimizer state.
struct MlpNetwork {
    std::vector<DenseLayer> layers;
    AdamState adam;
    std::uint64_t seed = 0;

    Eigen::Index input_width() const { return layers.front().in_width(); }
    Eigen::Index output_width() const { return layers.back().out_width(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& layer : layers) {
            n += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
        }
        return n;
    }
};

/// Everything `backward` needs from a forward pass.
struct ForwardTrace {
    /// inputs[k] is the activation entering layer k; inputs[0] is the batch itself.
    std::vector<Matrix> inputs;
    /// pre_activations[k] = inputs[k] * W_k + b_k. The last entry holds the logits.
    std::vector<Matrix> pre_activations;
    /// Row-wise softmax of the logits (batch x classes).
    Matrix probabilities;

    Eigen::Index batch_size() const { return probabilities.rows(); }
    const Matrix& logits() const { return pre_activations.back(); }
};

/// Gradients with the same block layout as the network parameters.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<RowVector> bias;

    static Gradients zeros_like(const MlpNetwork& net) {
        Gradients g;
        for (const auto& layer : net.layers) {
            g.weights.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
            g.bias.push_back(RowVector::Zero(layer.bias.size()));
        }
        return g;
    }
};

/// Hidden layers use ReLU, the last layer is linear (softmax is applied in
/// `forward`). Weights are uniform on [-a, a] with a = sqrt(6 / fan_in);
/// biases start at zero.
inline MlpNetwork init_network(const std::vector<std::size_t>& layer_widths, std::uint64_t seed) {
    if (layer_widths.size() < 2) {
        throw ConfigError("init_network: need at least an input and an output width");
    }
    for (std::size_t w : layer_widths) {
        if (w == 0) throw ConfigError("init_network: layer widths must be positive");
    }

    MlpNetwork net;
    net.seed = seed;
    Rng rng(seed);
    for (std::size_t k = 0; k + 1 < layer_widths.size(); ++k) {
        const auto in = static_cast<Eigen::Index>(layer_widths[k]);
        const auto out = static_cast<Eigen::Index>(layer_widths[k + 1]);
        const double bound = std::sqrt(6.0 / static_cast<double>(in));

        DenseLayer layer;
        layer.weights.resize(in, out);
        for (Eigen::Index i = 0; i < in; ++i) {
            for (Eigen::Index j = 0; j < out; ++j) layer.weights(i, j) = rng.uniform(-bound, bound);
        }
        layer.bias = RowVector::Zero(out);
        layer.activation = (k + 2 == layer_widths.size()) ? Activation::none : Activation::relu;
        net.layers.push_back(std::move(layer));

        net.adam.weight_m.push_back(Matrix::Zero(in, out));
        net.adam.weight_v.push_back(Matrix::Zero(in, out));
        net.adam.bias_m.push_back(RowVector::Zero(out));
        net.adam.bias_v.push_back(RowVector::Zero(out));
    }
    return net;
}

/// Row-wise softmax with max subtraction. Entries are floored at the smallest
/// normal double so that no probability is exactly zero.
inline Matrix softmax_rows(const Eigen::Ref<const Matrix>& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double peak = logits.row(r).maxCoeff();
        p.row(r) = (logits.row(r).array() - peak).exp().matrix();
        p.row(r) /= p.row(r).sum();
    }
    return p.cwiseMax(std::numeric_limits<double>::min());
}

inline ForwardTrace forward(const MlpNetwork& net, const Eigen::Ref<const Matrix>& x) {
    if (net.layers.empty()) throw ConfigError("forward: network has no layers");
    if (x.cols() != net.input_width()) {
        throw ShapeError("forward: input has " + std::to_string(x.cols()) + " columns, network expects " +
                         std::to_string(net.input_width()));
    }

    ForwardTrace trace;
    trace.inputs.reserve(net.layers.size());
    trace.pre_activations.reserve(net.layers.size());
    trace.inputs.emplace_back(x);
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const DenseLayer& layer = net.layers[k];
        Matrix z = trace.inputs[k] * layer.weights;
        z.rowwise() += layer.bias;
        if (k + 1 < net.layers.size()) {
            trace.inputs.push_back(layer.activation == Activation::relu ? Matrix(z.cwiseMax(0.0)) : z);
        }
        trace.pre_activations.push_back(std::move(z));
    }
    trace.probabilities = softmax_rows(trace.logits());
    return trace;
}

/// Restricts a trace to a subset of its rows, so backward only pays for them.
inline ForwardTrace select_rows(const ForwardTrace& trace, const std::vector<std::size_t>& rows) {
    ForwardTrace out;
    for (const auto& m : trace.inputs) out.inputs.push_back(gather_rows(m, rows));
    for (const auto& m : trace.pre_activations) out.pre_activations.push_back(gather_rows(m, rows));
    out.probabilities = gather_rows(trace.probabilities, rows);
    return out;
}

/// Backpropagates an upstream gradient with respect to the softmax output.
/// Contributions are summed over the rows of the batch; any averaging belongs
/// in `dL_dp`.
inline Gradients backward(const MlpNetwork& net, const ForwardTrace& trace, const Eigen::Ref<const Matrix>& dL_dp) {
    require_shape(dL_dp, trace.probabilities.rows(), trace.probabilities.cols(), "backward: dL/dp");

    const Matrix& p = trace.probabilities;
    // Softmax Jacobian-vector product: dz = p * (g - <p, g>) per row.
    const Vector inner = p.cwiseProduct(dL_dp).rowwise().sum();
    Matrix delta = p.cwiseProduct(dL_dp - inner.replicate(1, p.cols()));

    Gradients grads;
    grads.weights.resize(net.layers.size());
    grads.bias.resize(net.layers.size());
    for (std::size_t k = net.layers.size(); k-- > 0;) {
        grads.weights[k].noalias() = trace.inputs[k].transpose() * delta;
        grads.bias[k] = delta.colwise().sum();
        if (k == 0) break;
        Matrix upstream = delta * net.layers[k].weights.transpose();
        if (net.layers[k - 1].activation == Activation::relu) {
            upstream = upstream.cwiseProduct((trace.pre_activations[k - 1].array() > 0.0).cast<double>().matrix());
        }
        delta = std::move(upstream);
    }
    return grads;
}

/// Predicted class per row (lowest index on ties).
inline Labels predict(const MlpNetwork& net, const Eigen::Ref<const Matrix>& x) {
    const ForwardTrace trace = forward(net, x);
    Labels out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) out[static_cast<std::size_t>(r)] = argmax_row(trace.probabilities, r);
    return out;
}

}  // namespace jocor
