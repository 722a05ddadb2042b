#pragma once

#include <string>
#include <vector>

#include "gl/flsim.hpp"
#include "gl/model.hpp"

namespace gl {

// Per-sample, per-class contribution weights: lambda[k][i] is sample i's
// share of the class-k output-gradient mass. Every valid row sums to 1; a
// row is flagged invalid when its denominator (the summed residual for
// that class) is smaller than 1e-12 in magnitude.
struct LambdaMatrix {
    std::size_t C = 0;
    std::size_t B = 0;
    std::vector<double> values;   // C x B row-major
    std::vector<bool> row_valid;  // length C

    double at(std::size_t k, std::size_t i) const { return values[k * B + i]; }
};

// Per-class weighted averages recovered from a gradient capture via the
// weight/bias gradient quotient. For a single linear layer acting on the
// input this reconstructs input-space vectors; for the last layer of a
// deeper model it reconstructs last-hidden-layer feature vectors instead
// (the derivation assumes the layer sees its input directly).
struct WeightedAverage {
    std::size_t C = 0;
    std::size_t dim = 0;
    std::vector<double> per_class;  // C x dim row-major
    std::vector<bool> valid;        // length C, false when |grad b_k| < 1e-12

    std::span<const double> row(std::size_t k) const {
        return std::span<const double>(per_class).subspan(k * dim, dim);
    }
};

struct LambdaProfile {
    std::vector<double> max_lambda;  // per class
    std::vector<double> entropy;     // per class, natural log of |lambda| distribution
    std::vector<bool> row_valid;
};

inline constexpr double kLambdaDenomEps = 1e-12;

// Analytic residual route: d ce / d logit = softmax(logit) - onehot(label).
LambdaMatrix compute_lambda(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// grad W_k / grad b_k for the named layer of a capture.
WeightedAverage weighted_average_from_grads(const fl::GradientCapture& capture,
                                            std::size_t layer);

LambdaProfile lambda_bias_profile(const LambdaMatrix& lambda);

}  // namespace gl
