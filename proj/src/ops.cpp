#include "gl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gl {
namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    std::ostringstream os;
    os << op << ": incompatible shapes " << a.shape_str() << " and " << b.shape_str();
    throw std::invalid_argument(os.str());
}

// The two evaluation contexts shared by every kernel: plain doubles, or
// node ids on a tape. Kernels are written once against this interface.
struct RawEval {
    using V = double;
    V c(double v) const { return v; }
    V add(V a, V b) const { return a + b; }
    V sub(V a, V b) const { return a - b; }
    V mul(V a, V b) const { return a * b; }
    V exp(V a) const { return std::exp(a); }
    V log(V a) const { return std::log(a); }
    V tanh(V a) const { return std::tanh(a); }
    V relu(V a) const { return a > 0.0 ? a : 0.0; }
    double val(V a) const { return a; }
};

struct RecEval {
    ad::Tape* t;
    using V = ad::NodeId;
    V c(double v) const { return t->constant(v); }
    V add(V a, V b) const { return t->add(a, b); }
    V sub(V a, V b) const { return t->sub(a, b); }
    V mul(V a, V b) const { return t->mul(a, b); }
    V exp(V a) const { return t->exp(a); }
    V log(V a) const { return t->log(a); }
    V tanh(V a) const { return t->tanh(a); }
    V relu(V a) const { return t->relu(a); }
    double val(V a) const { return t->val(a); }
};

ad::Tape* recording_tape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.recorded() && b.recorded() && a.tape() != b.tape())
        throw std::invalid_argument(std::string(op) + ": operands recorded on different tapes");
    return a.recorded() ? a.tape() : b.tape();
}

std::vector<ad::NodeId> as_nodes(ad::Tape& t, const Tensor& x) {
    if (x.recorded()) return x.nodes();
    std::vector<ad::NodeId> ids;
    ids.reserve(x.size());
    for (double v : x.data()) ids.push_back(t.constant(v));
    return ids;
}

// --- kernels ---------------------------------------------------------------

template <class E>
std::vector<typename E::V> k_matmul(const E& e, std::span<const typename E::V> a,
                                    std::span<const typename E::V> b, std::size_t r,
                                    std::size_t k, std::size_t c) {
    std::vector<typename E::V> out(r * c, typename E::V{});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            typename E::V acc = e.mul(a[i * k], b[j]);
            for (std::size_t p = 1; p < k; ++p) acc = e.add(acc, e.mul(a[i * k + p], b[p * c + j]));
            out[i * c + j] = acc;
        }
    return out;
}

enum class Elt { Add, Sub, Mul };

template <class E>
std::vector<typename E::V> k_elementwise(const E& e, Elt op, std::span<const typename E::V> a,
                                         std::span<const typename E::V> b, std::size_t rows,
                                         std::size_t row_len, bool broadcast_b) {
    std::vector<typename E::V> out(rows * row_len, typename E::V{});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < row_len; ++j) {
            typename E::V av = a[i * row_len + j];
            typename E::V bv = broadcast_b ? b[j] : b[i * row_len + j];
            out[i * row_len + j] =
                op == Elt::Add ? e.add(av, bv) : (op == Elt::Sub ? e.sub(av, bv) : e.mul(av, bv));
        }
    return out;
}

template <class E>
typename E::V k_sum(const E& e, std::span<const typename E::V> a) {
    if (a.empty()) return e.c(0.0);
    typename E::V acc = a[0];
    for (std::size_t i = 1; i < a.size(); ++i) acc = e.add(acc, a[i]);
    return acc;
}

template <class E>
typename E::V k_l2_norm_sq(const E& e, std::span<const typename E::V> a) {
    typename E::V acc = e.c(0.0);
    for (std::size_t i = 0; i < a.size(); ++i) acc = e.add(acc, e.mul(a[i], a[i]));
    return acc;
}

// Mean cross-entropy after softmax. Per row: lse = m + log(sum exp(z - m))
// with the row max m captured as a constant (the shift identity is exact
// for any constant, so derivatives of every order stay exact).
template <class E>
typename E::V k_softmax_ce(const E& e, std::span<const typename E::V> z,
                           std::span<const int> labels, std::size_t rows, std::size_t cols) {
    typename E::V total = e.c(0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        double m = e.val(z[i * cols]);
        for (std::size_t j = 1; j < cols; ++j) m = std::max(m, e.val(z[i * cols + j]));
        typename E::V mc = e.c(m);
        typename E::V s = e.exp(e.sub(z[i * cols], mc));
        for (std::size_t j = 1; j < cols; ++j) s = e.add(s, e.exp(e.sub(z[i * cols + j], mc)));
        typename E::V lse = e.add(e.log(s), mc);
        total = e.add(total, e.sub(lse, z[i * cols + static_cast<std::size_t>(labels[i])]));
    }
    return e.mul(total, e.c(1.0 / static_cast<double>(rows)));
}

// --- dispatch helpers --------------------------------------------------------

Tensor elementwise(const char* name, Elt op, const Tensor& a, const Tensor& b) {
    bool broadcast = false;
    if (a.shape() == b.shape()) {
        broadcast = false;
    } else if (op == Elt::Add && a.rank() == 2 && b.size() == a.cols() &&
               (b.rank() == 1 || (b.rank() == 2 && b.rows() == 1))) {
        broadcast = true;  // [R x N] + [1 x N] row broadcast
    } else {
        shape_error(name, a, b);
    }
    std::size_t rows = broadcast ? a.rows() : 1;
    std::size_t row_len = a.size() / rows;
    ad::Tape* t = recording_tape(name, a, b);
    if (!t) {
        auto out = k_elementwise(RawEval{}, op, a.data(), b.data(), rows, row_len, broadcast);
        return Tensor::computed(a.shape(), std::move(out));
    }
    auto an = as_nodes(*t, a);
    auto bn = as_nodes(*t, b);
    auto out = k_elementwise(RecEval{t}, op,
                             std::span<const ad::NodeId>(an), std::span<const ad::NodeId>(bn),
                             rows, row_len, broadcast);
    return Tensor::from_nodes(*t, a.shape(), std::move(out));
}

template <class RawFn, class RecFn>
Tensor unary(const Tensor& a, RawFn raw_fn, RecFn rec_fn) {
    if (!a.recorded()) {
        std::vector<double> out;
        out.reserve(a.size());
        for (double v : a.data()) out.push_back(raw_fn(v));
        return Tensor::computed(a.shape(), std::move(out));
    }
    ad::Tape& t = *a.tape();
    std::vector<ad::NodeId> out;
    out.reserve(a.size());
    for (ad::NodeId id : a.nodes()) out.push_back(rec_fn(t, id));
    return Tensor::from_nodes(t, a.shape(), std::move(out));
}

template <class ScalarKernel>
Tensor reduce_to_scalar(const Tensor& a, ScalarKernel k) {
    if (!a.recorded()) {
        double v = k(RawEval{}, a.data());
        return Tensor::computed({}, {v});
    }
    ad::NodeId v = k(RecEval{a.tape()}, std::span<const ad::NodeId>(a.nodes()));
    return Tensor::from_nodes(*a.tape(), {}, {v});
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) shape_error("matmul", a, b);
    std::size_t r = a.rows(), k = a.cols(), c = b.cols();
    ad::Tape* t = recording_tape("matmul", a, b);
    if (!t) {
        auto out = k_matmul(RawEval{}, a.data(), b.data(), r, k, c);
        return Tensor::computed({r, c}, std::move(out));
    }
    auto an = as_nodes(*t, a);
    auto bn = as_nodes(*t, b);
    auto out = k_matmul(RecEval{t}, std::span<const ad::NodeId>(an),
                        std::span<const ad::NodeId>(bn), r, k, c);
    return Tensor::from_nodes(*t, {r, c}, std::move(out));
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise("add", Elt::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise("sub", Elt::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise("mul", Elt::Mul, a, b); }

Tensor scale(const Tensor& a, double c) {
    return unary(
        a, [c](double v) { return v * c; },
        [c](ad::Tape& t, ad::NodeId id) { return t.mul(id, t.constant(c)); });
}

Tensor relu(const Tensor& a) {
    return unary(
        a, [](double v) { return v > 0.0 ? v : 0.0; },
        [](ad::Tape& t, ad::NodeId id) { return t.relu(id); });
}

Tensor tanh(const Tensor& a) {
    return unary(
        a, [](double v) { return std::tanh(v); },
        [](ad::Tape& t, ad::NodeId id) { return t.tanh(id); });
}

Tensor sum(const Tensor& a) {
    return reduce_to_scalar(a, [](const auto& e, auto xs) { return k_sum(e, xs); });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
    Tensor s = sum(a);
    return scale(s, 1.0 / static_cast<double>(a.size()));
}

Tensor l2_norm_sq(const Tensor& a) {
    return reduce_to_scalar(a, [](const auto& e, auto xs) { return k_l2_norm_sq(e, xs); });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2) {
        std::ostringstream os;
        os << "softmax_cross_entropy: logits must be [B x C], got " << logits.shape_str();
        throw std::invalid_argument(os.str());
    }
    std::size_t rows = logits.rows(), cols = logits.cols();
    if (labels.size() != rows) {
        std::ostringstream os;
        os << "softmax_cross_entropy: " << labels.size() << " labels for " << rows << " rows";
        throw std::invalid_argument(os.str());
    }
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= cols) {
            std::ostringstream os;
            os << "softmax_cross_entropy: label " << y << " out of range [0, " << cols << ")";
            throw std::out_of_range(os.str());
        }
    if (!logits.recorded()) {
        double v = k_softmax_ce(RawEval{}, logits.data(), labels, rows, cols);
        return Tensor::computed({}, {v});
    }
    ad::NodeId v = k_softmax_ce(RecEval{logits.tape()},
                                std::span<const ad::NodeId>(logits.nodes()), labels, rows, cols);
    return Tensor::from_nodes(*logits.tape(), {}, {v});
}

std::vector<double> softmax_probs(const Tensor& logits) {
    if (logits.rank() != 2)
        throw std::invalid_argument("softmax_probs: logits must be [B x C], got " +
                                    logits.shape_str());
    std::size_t rows = logits.rows(), cols = logits.cols();
    std::vector<double> p(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
        double m = logits.at(i, 0);
        for (std::size_t j = 1; j < cols; ++j) m = std::max(m, logits.at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            p[i * cols + j] = std::exp(logits.at(i, j) - m);
            s += p[i * cols + j];
        }
        for (std::size_t j = 0; j < cols; ++j) p[i * cols + j] /= s;
    }
    return p;
}

}  // namespace gl
