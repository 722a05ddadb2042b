#include "gl/lambda.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "gl/ops.hpp"

namespace gl {

LambdaMatrix compute_lambda(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    spec.validate();
    const std::size_t B = batch.size();
    const std::size_t C = spec.num_classes();
    Tensor logits = forward(spec, params, batch.x);
    std::vector<double> p = softmax_probs(logits);

    LambdaMatrix lm;
    lm.C = C;
    lm.B = B;
    lm.values.assign(C * B, 0.0);
    lm.row_valid.assign(C, false);

    for (std::size_t k = 0; k < C; ++k) {
        double denom = 0.0;
        for (std::size_t i = 0; i < B; ++i) {
            double r = p[i * C + k] - (static_cast<std::size_t>(batch.y[i]) == k ? 1.0 : 0.0);
            lm.values[k * B + i] = r;
            denom += r;
        }
        if (std::abs(denom) < kLambdaDenomEps) continue;  // row stays invalid
        lm.row_valid[k] = true;
        for (std::size_t i = 0; i < B; ++i) lm.values[k * B + i] /= denom;
    }
    return lm;
}

WeightedAverage weighted_average_from_grads(const fl::GradientCapture& capture,
                                            std::size_t layer) {
    const ParamVector& g = capture.batch_grad;
    std::string wname = ModelSpec::weight_name(layer);
    std::string bname = ModelSpec::bias_name(layer);
    if (!g.has_segment(wname))
        throw std::invalid_argument("weighted_average_from_grads: no layer " +
                                    std::to_string(layer));
    if (!g.has_segment(bname))
        throw std::invalid_argument("weighted_average_from_grads: layer " +
                                    std::to_string(layer) + " has no bias");

    const ParamSegment& ws = g.segment(wname);
    auto gw = g.segment_values(wname);  // [dim x C] row-major
    auto gb = g.segment_values(bname);  // [1 x C]
    std::size_t dim = ws.shape[0];
    std::size_t C = ws.shape[1];

    WeightedAverage wa;
    wa.C = C;
    wa.dim = dim;
    wa.per_class.assign(C * dim, 0.0);
    wa.valid.assign(C, false);
    for (std::size_t k = 0; k < C; ++k) {
        if (std::abs(gb[k]) < kLambdaDenomEps) continue;
        wa.valid[k] = true;
        for (std::size_t d = 0; d < dim; ++d) wa.per_class[k * dim + d] = gw[d * C + k] / gb[k];
    }
    return wa;
}

LambdaProfile lambda_bias_profile(const LambdaMatrix& lambda) {
    LambdaProfile prof;
    prof.max_lambda.assign(lambda.C, 0.0);
    prof.entropy.assign(lambda.C, 0.0);
    prof.row_valid = lambda.row_valid;

    for (std::size_t k = 0; k < lambda.C; ++k) {
        double mx = -std::numeric_limits<double>::infinity();
        double abs_sum = 0.0;
        for (std::size_t i = 0; i < lambda.B; ++i) {
            mx = std::max(mx, lambda.at(k, i));
            abs_sum += std::abs(lambda.at(k, i));
        }
        prof.max_lambda[k] = mx;
        double h = 0.0;
        if (abs_sum > 0.0) {
            for (std::size_t i = 0; i < lambda.B; ++i) {
                double q = std::abs(lambda.at(k, i)) / abs_sum;
                if (q > 0.0) h -= q * std::log(q);
            }
        }
        prof.entropy[k] = h;
    }
    return prof;
}

}  // namespace gl
