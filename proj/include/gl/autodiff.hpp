#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "gl/params.hpp"
#include "gl/tape.hpp"
#include "gl/tensor.hpp"

namespace gl {

// Parameters attached to a tape as differentiable leaves, one node per
// scalar. Segment tensors share those nodes, so anything computed from
// them can be differentiated back to the flat vector.
struct BoundParams {
    ad::Tape* tape = nullptr;
    const ParamVector* layout = nullptr;
    std::vector<ad::NodeId> nodes;

    Tensor segment_tensor(std::string_view name) const;
};

BoundParams bind(ad::Tape& tape, const ParamVector& params);

// d(scalar_out)/d(theta), aligned with the bound layout. The gradient
// values are plain doubles; the node ids point at live tape nodes, so the
// gradient itself can be differentiated again (that is what hvp and the
// poisoning objective do).
struct GradResult {
    ParamVector values;
    std::vector<ad::NodeId> nodes;
};

GradResult grad(const Tensor& scalar_out, const BoundParams& wrt);

// Hessian-vector product (d2 f / d theta2) * v, computed by differentiating
// the inner product of grad(f) with v.
std::vector<double> hvp(const Tensor& scalar_out, const BoundParams& wrt,
                        std::span<const double> direction);

}  // namespace gl
