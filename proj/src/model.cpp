#include "gl/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "gl/rng.hpp"

namespace gl {

void ModelSpec::validate() const {
    if (layer_dims.size() < 2)
        throw std::invalid_argument("ModelSpec: need at least input and output widths");
    for (std::size_t d : layer_dims)
        if (d == 0) throw std::invalid_argument("ModelSpec: zero layer width");
    if (num_classes() < 2)
        throw std::invalid_argument("ModelSpec: class count must be at least 2");
    if (activations.size() != num_layers() - 1) {
        std::ostringstream os;
        os << "ModelSpec: " << activations.size() << " activations for " << num_layers() - 1
           << " hidden layers";
        throw std::invalid_argument(os.str());
    }
    if (has_bias.size() != num_layers()) {
        std::ostringstream os;
        os << "ModelSpec: " << has_bias.size() << " bias flags for " << num_layers() << " layers";
        throw std::invalid_argument(os.str());
    }
}

std::size_t ModelSpec::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < num_layers(); ++l) {
        n += layer_dims[l] * layer_dims[l + 1];
        if (has_bias[l]) n += layer_dims[l + 1];
    }
    return n;
}

ParamVector ModelSpec::param_layout() const {
    validate();
    std::vector<ParamSegment> segs;
    std::size_t offset = 0;
    for (std::size_t l = 0; l < num_layers(); ++l) {
        ParamSegment w{weight_name(l), {layer_dims[l], layer_dims[l + 1]}, offset};
        offset += w.count();
        segs.push_back(std::move(w));
        if (has_bias[l]) {
            ParamSegment b{bias_name(l), {1, layer_dims[l + 1]}, offset};
            offset += b.count();
            segs.push_back(std::move(b));
        }
    }
    return ParamVector(std::move(segs), std::vector<double>(offset, 0.0));
}

ModelSpec ModelSpec::mlp(std::vector<std::size_t> dims, Activation act) {
    ModelSpec spec;
    spec.layer_dims = std::move(dims);
    spec.activations.assign(spec.num_layers() - 1, act);
    spec.has_bias.assign(spec.num_layers(), true);
    spec.validate();
    return spec;
}

Batch Batch::single(std::size_t i) const {
    std::size_t m = x.cols();
    std::vector<double> row(m);
    for (std::size_t j = 0; j < m; ++j) row[j] = x.at(i, j);
    return Batch{Tensor({1, m}, std::move(row)), {y[i]}};
}

std::vector<double> Batch::flat_x() const {
    return std::vector<double>(x.data().begin(), x.data().end());
}

InitScheme init_scheme_from_string(std::string_view s) {
    if (s == "random") return InitScheme::Random;
    if (s == "xavier") return InitScheme::Xavier;
    if (s == "he") return InitScheme::He;
    throw std::invalid_argument("unknown init scheme '" + std::string(s) + "'");
}

std::string to_string(InitScheme s) {
    switch (s) {
        case InitScheme::Random: return "random";
        case InitScheme::Xavier: return "xavier";
        case InitScheme::He: return "he";
    }
    return "?";
}

Activation activation_from_string(std::string_view s) {
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

ParamVector init_params(const ModelSpec& spec, InitScheme scheme, std::uint64_t seed) {
    ParamVector params = spec.param_layout();
    Rng rng(seed);
    auto vals = params.values();
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const ParamSegment& w = params.segment(ModelSpec::weight_name(l));
        double fan_in = static_cast<double>(spec.layer_dims[l]);
        double fan_out = static_cast<double>(spec.layer_dims[l + 1]);
        for (std::size_t i = 0; i < w.count(); ++i) {
            double v = 0.0;
            switch (scheme) {
                case InitScheme::Random:
                    v = rng.normal(0.0, 0.02);
                    break;
                case InitScheme::Xavier: {
                    double bound = std::sqrt(6.0 / (fan_in + fan_out));
                    v = rng.uniform(-bound, bound);
                    break;
                }
                case InitScheme::He: {
                    // leaky-relu slope 0.01
                    double gain = std::sqrt(2.0 / (1.0 + 0.01 * 0.01));
                    v = rng.normal(0.0, gain * std::sqrt(2.0 / fan_in));
                    break;
                }
            }
            vals[w.offset + i] = v;
        }
        // biases stay zero
    }
    return params;
}

namespace {

template <class Params>
Tensor forward_impl(const ModelSpec& spec, const Params& get_segment, const Tensor& x) {
    Tensor z = x;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        z = matmul(z, get_segment(ModelSpec::weight_name(l)));
        if (spec.has_bias[l]) z = add(z, get_segment(ModelSpec::bias_name(l)));
        if (l + 1 < spec.num_layers())
            z = spec.activations[l] == Activation::Relu ? relu(z) : gl::tanh(z);
    }
    return z;
}

void check_input(const ModelSpec& spec, const Tensor& x) {
    if (x.rank() != 2 || x.cols() != spec.input_dim()) {
        std::ostringstream os;
        os << "forward: input " << x.shape_str() << " does not match input width "
           << spec.input_dim();
        throw std::invalid_argument(os.str());
    }
}

}  // namespace

Tensor forward(const ModelSpec& spec, const BoundParams& params, const Tensor& x) {
    spec.validate();
    check_input(spec, x);
    return forward_impl(spec, [&](const std::string& n) { return params.segment_tensor(n); }, x);
}

Tensor forward(const ModelSpec& spec, const ParamVector& params, const Tensor& x) {
    spec.validate();
    check_input(spec, x);
    return forward_impl(spec, [&](const std::string& n) { return params.segment_tensor(n); }, x);
}

Tensor loss(const Tensor& logits, std::span<const int> labels) {
    return softmax_cross_entropy(logits, labels);
}

Tensor batch_loss(const ModelSpec& spec, const BoundParams& params, const Batch& batch) {
    return loss(forward(spec, params, batch.x), batch.y);
}

double batch_loss_value(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    return loss(forward(spec, params, batch.x), batch.y).value();
}

BatchLossFn model_loss_fn(const ModelSpec& spec) {
    return [spec](const BoundParams& p, const Batch& b) { return batch_loss(spec, p, b); };
}

std::vector<ParamVector> per_sample_grads(const BatchLossFn& loss_fn, const ParamVector& params,
                                          const Batch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("per_sample_grads: empty batch");
    std::vector<ParamVector> out;
    out.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        ad::Tape tape;
        BoundParams bp = bind(tape, params);
        Tensor l = loss_fn(bp, batch.single(i));
        out.push_back(grad(l, bp).values);
    }
    return out;
}

}  // namespace gl
