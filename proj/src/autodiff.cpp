#include "gl/autodiff.hpp"

#include <sstream>
#include <stdexcept>

namespace gl {

Tensor BoundParams::segment_tensor(std::string_view name) const {
    const ParamSegment& s = layout->segment(name);
    std::vector<ad::NodeId> ids(nodes.begin() + static_cast<std::ptrdiff_t>(s.offset),
                                nodes.begin() + static_cast<std::ptrdiff_t>(s.offset + s.count()));
    return Tensor::from_nodes(*tape, s.shape, std::move(ids));
}

BoundParams bind(ad::Tape& tape, const ParamVector& params) {
    BoundParams bp;
    bp.tape = &tape;
    bp.layout = &params;
    bp.nodes.reserve(params.size());
    for (double v : params.values()) bp.nodes.push_back(tape.leaf(v));
    return bp;
}

GradResult grad(const Tensor& scalar_out, const BoundParams& wrt) {
    if (!scalar_out.shape().empty()) {
        std::ostringstream os;
        os << "grad: output must be scalar, got shape " << scalar_out.shape_str();
        throw std::invalid_argument(os.str());
    }
    if (!scalar_out.recorded() || scalar_out.tape() != wrt.tape)
        throw std::invalid_argument("grad: output is not recorded on the parameter tape");

    std::vector<ad::NodeId> g = wrt.tape->gradient(scalar_out.node(), wrt.nodes);
    std::vector<double> vals;
    vals.reserve(g.size());
    for (ad::NodeId id : g) vals.push_back(wrt.tape->val(id));
    return GradResult{ParamVector(wrt.layout->segments(), std::move(vals)), std::move(g)};
}

std::vector<double> hvp(const Tensor& scalar_out, const BoundParams& wrt,
                        std::span<const double> direction) {
    if (direction.size() != wrt.nodes.size()) {
        std::ostringstream os;
        os << "hvp: direction length " << direction.size() << " != parameter count "
           << wrt.nodes.size();
        throw std::invalid_argument(os.str());
    }
    GradResult g = grad(scalar_out, wrt);
    ad::Tape& t = *wrt.tape;
    ad::NodeId s = ad::nodes_dot_const(t, g.nodes, direction);
    std::vector<ad::NodeId> h = t.gradient(s, wrt.nodes);
    std::vector<double> out;
    out.reserve(h.size());
    for (ad::NodeId id : h) out.push_back(t.val(id));
    return out;
}

}  // namespace gl
