#pragma once

#include <span>
#include <string>
#include <vector>

#include "gl/tape.hpp"

namespace gl {

// Dense row-major tensor of doubles. A tensor is either detached (plain
// values) or recorded: attached to a Tape with one node per element, in
// which case `data` mirrors the tape values at emission time. Recorded
// tensors are the substrate of every differentiable computation here;
// detached ones serve metrics, oracles, and serialization.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor scalar(double v);
    // Result of an op: skips the finite-value check (overflow in a
    // computation is flagged by consumers, not rejected here).
    static Tensor computed(std::vector<std::size_t> shape, std::vector<double> data);
    // Differentiable input: emits Leaf nodes.
    static Tensor leaf(ad::Tape& tape, std::vector<std::size_t> shape,
                       std::span<const double> values);
    // Recorded but constant with respect to differentiation.
    static Tensor constant(ad::Tape& tape, std::vector<std::size_t> shape,
                           std::span<const double> values);
    static Tensor from_nodes(ad::Tape& tape, std::vector<std::size_t> shape,
                             std::vector<ad::NodeId> nodes);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }

    // 2-D accessors (most of the op set is matrix-shaped).
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const { return data_; }
    double at(std::size_t i) const { return data_[i]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    bool recorded() const { return tape_ != nullptr; }
    ad::Tape* tape() const { return tape_; }
    const std::vector<ad::NodeId>& nodes() const { return nodes_; }

    // Scalar (shape []) conveniences.
    double value() const;
    ad::NodeId node() const;

    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
    std::vector<ad::NodeId> nodes_;
    ad::Tape* tape_ = nullptr;
};

std::size_t shape_product(std::span<const std::size_t> shape);

}  // namespace gl
