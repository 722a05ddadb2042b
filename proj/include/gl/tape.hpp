#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace gl::ad {

enum class Op : std::uint8_t {
    Const,
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Tanh,
    Relu,
    Sqrt,
    Abs,
};

struct Node {
    Op op;
    std::int32_t a;
    std::int32_t b;
};

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

// Append-only record of scalar operations with eager value evaluation.
// This is the differentiation graph: nodes are emitted in topological
// order (inputs always precede consumers), and gradient() emits the
// reverse sweep as further nodes on the same tape. Because the sweep is
// made of ordinary tape operations, gradients can be differentiated
// again, which is what the second-order objectives here need (matching
// losses and poisoning losses both contain d(loss)/d(theta) inside them).
//
// A tape is confined to one thread while recording; finished values read
// from it are plain doubles and safe to share.
class Tape {
public:
    Tape() = default;

    NodeId constant(double v) { return emit(Op::Const, kNoNode, kNoNode, v); }
    NodeId leaf(double v) { return emit(Op::Leaf, kNoNode, kNoNode, v); }

    NodeId add(NodeId a, NodeId b) { return emit(Op::Add, a, b, vals_[a] + vals_[b]); }
    NodeId sub(NodeId a, NodeId b) { return emit(Op::Sub, a, b, vals_[a] - vals_[b]); }
    NodeId mul(NodeId a, NodeId b) { return emit(Op::Mul, a, b, vals_[a] * vals_[b]); }
    NodeId div(NodeId a, NodeId b) { return emit(Op::Div, a, b, vals_[a] / vals_[b]); }
    NodeId neg(NodeId a) { return emit(Op::Neg, a, kNoNode, -vals_[a]); }
    NodeId exp(NodeId a) { return emit(Op::Exp, a, kNoNode, std::exp(vals_[a])); }
    NodeId log(NodeId a) { return emit(Op::Log, a, kNoNode, std::log(vals_[a])); }
    NodeId tanh(NodeId a) { return emit(Op::Tanh, a, kNoNode, std::tanh(vals_[a])); }
    NodeId relu(NodeId a) { return emit(Op::Relu, a, kNoNode, vals_[a] > 0.0 ? vals_[a] : 0.0); }
    NodeId sqrt(NodeId a) { return emit(Op::Sqrt, a, kNoNode, std::sqrt(vals_[a])); }
    NodeId abs(NodeId a) { return emit(Op::Abs, a, kNoNode, std::abs(vals_[a])); }

    double val(NodeId id) const { return vals_[static_cast<std::size_t>(id)]; }
    const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
    std::size_t size() const { return nodes_.size(); }

    void clear() {
        nodes_.clear();
        vals_.clear();
    }
    void reserve(std::size_t n) {
        nodes_.reserve(n);
        vals_.reserve(n);
    }

    // Reverse sweep from `output`. Returns one node per entry of `wrt`
    // holding d(output)/d(wrt); entries whose adjoint never becomes
    // nonzero come back as fresh zero constants (detached leaves are not
    // an error). The emitted nodes extend the tape, so the result can be
    // fed back into gradient() for higher-order derivatives.
    std::vector<NodeId> gradient(NodeId output, std::span<const NodeId> wrt);

private:
    NodeId emit(Op op, NodeId a, NodeId b, double v) {
        nodes_.push_back(Node{op, a, b});
        vals_.push_back(v);
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    std::vector<double> vals_;
};

// Small helpers over parallel node vectors, used by the attack objectives.
NodeId nodes_sum(Tape& t, std::span<const NodeId> xs);
NodeId nodes_dot(Tape& t, std::span<const NodeId> a, std::span<const NodeId> b);
NodeId nodes_dot_const(Tape& t, std::span<const NodeId> a, std::span<const double> b);
NodeId nodes_sq_l2_diff(Tape& t, std::span<const NodeId> a, std::span<const double> b);

}  // namespace gl::ad
