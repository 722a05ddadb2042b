#include "gl/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace gl::ad {

std::vector<NodeId> Tape::gradient(NodeId output, std::span<const NodeId> wrt) {
    if (output < 0 || static_cast<std::size_t>(output) >= nodes_.size())
        throw std::invalid_argument("Tape::gradient: output node out of range");

    // adj[i] is the node holding d(output)/d(node i), or kNoNode while the
    // adjoint is still structurally zero. Nodes emitted during the sweep sit
    // above `output` and never need adjoint slots themselves.
    std::vector<NodeId> adj(static_cast<std::size_t>(output) + 1, kNoNode);
    adj[static_cast<std::size_t>(output)] = constant(1.0);

    auto accumulate = [&](NodeId target, NodeId contrib) {
        NodeId& slot = adj[static_cast<std::size_t>(target)];
        slot = (slot == kNoNode) ? contrib : add(slot, contrib);
    };

    for (NodeId i = output; i >= 0; --i) {
        const NodeId a = adj[static_cast<std::size_t>(i)];
        if (a == kNoNode) continue;
        const Node n = nodes_[static_cast<std::size_t>(i)];
        switch (n.op) {
            case Op::Const:
            case Op::Leaf:
                break;
            case Op::Add:
                accumulate(n.a, a);
                accumulate(n.b, a);
                break;
            case Op::Sub:
                accumulate(n.a, a);
                accumulate(n.b, neg(a));
                break;
            case Op::Mul:
                accumulate(n.a, mul(a, n.b));
                accumulate(n.b, mul(a, n.a));
                break;
            case Op::Div:
                // d(x/y)/dx = 1/y, d(x/y)/dy = -(x/y)/y; node i is x/y.
                accumulate(n.a, div(a, n.b));
                accumulate(n.b, neg(div(mul(a, i), n.b)));
                break;
            case Op::Neg:
                accumulate(n.a, neg(a));
                break;
            case Op::Exp:
                accumulate(n.a, mul(a, i));
                break;
            case Op::Log:
                accumulate(n.a, div(a, n.a));
                break;
            case Op::Tanh:
                accumulate(n.a, mul(a, sub(constant(1.0), mul(i, i))));
                break;
            case Op::Relu:
                // Subgradient 0 at the kink; the mask is constant per sweep,
                // so second derivatives through relu are zero a.e.
                if (vals_[static_cast<std::size_t>(n.a)] > 0.0) accumulate(n.a, a);
                break;
            case Op::Sqrt:
                accumulate(n.a, div(a, mul(constant(2.0), i)));
                break;
            case Op::Abs: {
                double x = vals_[static_cast<std::size_t>(n.a)];
                if (x > 0.0)
                    accumulate(n.a, a);
                else if (x < 0.0)
                    accumulate(n.a, neg(a));
                break;
            }
        }
    }

    std::vector<NodeId> out;
    out.reserve(wrt.size());
    for (NodeId w : wrt) {
        if (w < 0 || static_cast<std::size_t>(w) >= nodes_.size())
            throw std::invalid_argument("Tape::gradient: wrt node out of range");
        NodeId g = (w <= output) ? adj[static_cast<std::size_t>(w)] : kNoNode;
        out.push_back(g == kNoNode ? constant(0.0) : g);
    }
    return out;
}

NodeId nodes_sum(Tape& t, std::span<const NodeId> xs) {
    if (xs.empty()) return t.constant(0.0);
    NodeId acc = xs[0];
    for (std::size_t i = 1; i < xs.size(); ++i) acc = t.add(acc, xs[i]);
    return acc;
}

NodeId nodes_dot(Tape& t, std::span<const NodeId> a, std::span<const NodeId> b) {
    if (a.size() != b.size()) throw std::invalid_argument("nodes_dot: length mismatch");
    if (a.empty()) return t.constant(0.0);
    NodeId acc = t.mul(a[0], b[0]);
    for (std::size_t i = 1; i < a.size(); ++i) acc = t.add(acc, t.mul(a[i], b[i]));
    return acc;
}

NodeId nodes_dot_const(Tape& t, std::span<const NodeId> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("nodes_dot_const: length mismatch");
    if (a.empty()) return t.constant(0.0);
    NodeId acc = t.mul(a[0], t.constant(b[0]));
    for (std::size_t i = 1; i < a.size(); ++i) acc = t.add(acc, t.mul(a[i], t.constant(b[i])));
    return acc;
}

NodeId nodes_sq_l2_diff(Tape& t, std::span<const NodeId> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("nodes_sq_l2_diff: length mismatch");
    NodeId acc = t.constant(0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        NodeId d = t.sub(a[i], t.constant(b[i]));
        acc = t.add(acc, t.mul(d, d));
    }
    return acc;
}

}  // namespace gl::ad
