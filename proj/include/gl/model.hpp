#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gl/autodiff.hpp"
#include "gl/ops.hpp"
#include "gl/params.hpp"

namespace gl {

enum class Activation { Relu, Tanh };

// Fully connected classifier: layer_dims runs input width .. class count,
// one activation per hidden layer, none on the output. Parameters lay out
// as W0, b0, W1, b1, ... with Wl shaped [in x out].
struct ModelSpec {
    std::vector<std::size_t> layer_dims;
    std::vector<Activation> activations;
    std::vector<bool> has_bias;

    std::size_t num_layers() const { return layer_dims.empty() ? 0 : layer_dims.size() - 1; }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t num_classes() const { return layer_dims.back(); }

    void validate() const;
    std::size_t param_count() const;
    // Zero-valued parameters with this spec's layout.
    ParamVector param_layout() const;

    static std::string weight_name(std::size_t layer) { return "W" + std::to_string(layer); }
    static std::string bias_name(std::size_t layer) { return "b" + std::to_string(layer); }

    // Convenience: relu/tanh MLP with biases everywhere.
    static ModelSpec mlp(std::vector<std::size_t> dims, Activation act = Activation::Relu);
};

struct Batch {
    Tensor x;            // [B x m], values expected in [0, 1]
    std::vector<int> y;  // length B

    std::size_t size() const { return y.size(); }
    Batch single(std::size_t i) const;
    std::vector<double> flat_x() const;  // row-major copy, length B*m
};

enum class InitScheme { Random, Xavier, He };

InitScheme init_scheme_from_string(std::string_view s);
std::string to_string(InitScheme s);
Activation activation_from_string(std::string_view s);
std::string to_string(Activation a);

// random: N(0, 0.02^2); xavier: U(+-sqrt(6/(fan_in+fan_out)));
// he: N(0, 2/fan_in) scaled by the leaky-relu gain sqrt(2/(1+0.01^2)).
// Biases are zero. Deterministic under seed.
ParamVector init_params(const ModelSpec& spec, InitScheme scheme, std::uint64_t seed);

Tensor forward(const ModelSpec& spec, const BoundParams& params, const Tensor& x);
Tensor forward(const ModelSpec& spec, const ParamVector& params, const Tensor& x);

// Mean softmax cross-entropy over the batch.
Tensor loss(const Tensor& logits, std::span<const int> labels);

// Forward + loss against a batch; the standard client objective.
Tensor batch_loss(const ModelSpec& spec, const BoundParams& params, const Batch& batch);
double batch_loss_value(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

using BatchLossFn = std::function<Tensor(const BoundParams&, const Batch&)>;
BatchLossFn model_loss_fn(const ModelSpec& spec);

// One independent backward pass per sample; the mean of the results equals
// the batch-mean-loss gradient.
std::vector<ParamVector> per_sample_grads(const BatchLossFn& loss_fn, const ParamVector& params,
                                          const Batch& batch);

}  // namespace gl
