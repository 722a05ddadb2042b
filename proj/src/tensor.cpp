#include "gl/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gl {

std::size_t shape_product(std::span<const std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
        std::ostringstream os;
        os << "Tensor: shape " << shape_str() << " does not match " << data_.size() << " values";
        throw std::invalid_argument(os.str());
    }
    for (double v : data_) {
        if (!std::isfinite(v)) throw std::invalid_argument("Tensor: non-finite value rejected");
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = shape_product(shape);
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_.assign(n, 0.0);
    return t;
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::computed(std::vector<std::size_t> shape, std::vector<double> data) {
    if (shape_product(shape) != data.size())
        throw std::invalid_argument("Tensor::computed: shape/value count mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

Tensor Tensor::leaf(ad::Tape& tape, std::vector<std::size_t> shape,
                    std::span<const double> values) {
    if (shape_product(shape) != values.size())
        throw std::invalid_argument("Tensor::leaf: shape/value count mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.tape_ = &tape;
    t.nodes_.reserve(values.size());
    t.data_.reserve(values.size());
    for (double v : values) {
        t.nodes_.push_back(tape.leaf(v));
        t.data_.push_back(v);
    }
    return t;
}

Tensor Tensor::constant(ad::Tape& tape, std::vector<std::size_t> shape,
                        std::span<const double> values) {
    if (shape_product(shape) != values.size())
        throw std::invalid_argument("Tensor::constant: shape/value count mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.tape_ = &tape;
    t.nodes_.reserve(values.size());
    t.data_.reserve(values.size());
    for (double v : values) {
        t.nodes_.push_back(tape.constant(v));
        t.data_.push_back(v);
    }
    return t;
}

Tensor Tensor::from_nodes(ad::Tape& tape, std::vector<std::size_t> shape,
                          std::vector<ad::NodeId> nodes) {
    if (shape_product(shape) != nodes.size())
        throw std::invalid_argument("Tensor::from_nodes: shape/node count mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.tape_ = &tape;
    t.data_.reserve(nodes.size());
    for (ad::NodeId id : nodes) t.data_.push_back(tape.val(id));
    t.nodes_ = std::move(nodes);
    return t;
}

std::size_t Tensor::rows() const {
    if (shape_.size() != 2) throw std::logic_error("Tensor::rows: not a matrix: " + shape_str());
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (shape_.size() != 2) throw std::logic_error("Tensor::cols: not a matrix: " + shape_str());
    return shape_[1];
}

double Tensor::value() const {
    if (!shape_.empty() || data_.size() != 1)
        throw std::logic_error("Tensor::value: not a scalar: " + shape_str());
    return data_[0];
}

ad::NodeId Tensor::node() const {
    if (!recorded() || nodes_.size() != 1)
        throw std::logic_error("Tensor::node: not a recorded scalar");
    return nodes_[0];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << "x";
        os << shape_[i];
    }
    os << "]";
    return os.str();
}

}  // namespace gl
