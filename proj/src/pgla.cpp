#include "gl/pgla.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gl/metrics.hpp"
#include "gl/ops.hpp"
#include "gl/rng.hpp"

namespace gl::pgla {
namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Match loss between the dummy gradient (nodes) and the captured one
// (constants). Squared L2, or 1 - cosine with a tiny floor keeping the
// quotient finite for degenerate gradients.
ad::NodeId match_distance(ad::Tape& t, Distance d, std::span<const ad::NodeId> g,
                          std::span<const double> captured) {
    if (d == Distance::SquaredL2) return ad::nodes_sq_l2_diff(t, g, captured);
    ad::NodeId dot = ad::nodes_dot_const(t, g, captured);
    ad::NodeId na = ad::nodes_dot(t, g, g);
    double nb = 0.0;
    for (double v : captured) nb += v * v;
    ad::NodeId denom = t.add(t.sqrt(t.mul(na, t.constant(nb))), t.constant(1e-30));
    return t.sub(t.constant(1.0), t.div(dot, denom));
}

}  // namespace

void AttackConfig::validate(std::size_t input_dim) const {
    if (iterations < 1) throw std::invalid_argument("AttackConfig: iterations must be >= 1");
    if (tv_weight < 0) throw std::invalid_argument("AttackConfig: tv_weight must be >= 0");
    if (restarts < 0) throw std::invalid_argument("AttackConfig: restarts must be >= 0");
    if (step_size <= 0) throw std::invalid_argument("AttackConfig: step size must be positive");
    if (method == Method::Ig && tv_weight > 0 && image.pixels() != input_dim) {
        std::ostringstream os;
        os << "AttackConfig: image " << image.h << "x" << image.w << "x" << image.ch
           << " does not factor input dimension " << input_dim;
        throw std::invalid_argument(os.str());
    }
}

AttackConfig AttackConfig::dlg_defaults(std::size_t input_dim, std::uint64_t seed) {
    AttackConfig c;
    c.method = Method::Dlg;
    c.distance = Distance::SquaredL2;
    c.iterations = 200;
    c.step_size = 0.1;
    c.tv_weight = 0.0;
    c.seed = seed;
    c.image = ImageMeta{input_dim, 1, 1};
    return c;
}

AttackConfig AttackConfig::ig_defaults(std::size_t input_dim, std::uint64_t seed) {
    AttackConfig c;
    c.method = Method::Ig;
    c.distance = Distance::NegativeCosine;
    c.iterations = 1000;
    c.step_size = 0.1;
    c.tv_weight = 1e-4;
    c.seed = seed;
    std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(input_dim))));
    if (side * side == input_dim)
        c.image = ImageMeta{side, side, 1};
    else
        c.image = ImageMeta{input_dim, 1, 1};
    return c;
}

LabelInference idlg_infer_labels(const fl::GradientCapture& capture, const ModelSpec& spec) {
    spec.validate();
    std::size_t last = spec.num_layers() - 1;
    std::size_t C = spec.num_classes();
    std::size_t B = capture.batch_size;
    const ParamVector& g = capture.batch_grad;

    // Score per class: bias gradient when the last layer has one, else the
    // column sums of the last weight gradient (same sign structure when
    // the previous activations are nonnegative).
    std::vector<double> score(C, 0.0);
    if (g.has_segment(ModelSpec::bias_name(last))) {
        auto gb = g.segment_values(ModelSpec::bias_name(last));
        for (std::size_t k = 0; k < C; ++k) score[k] = gb[k];
    } else {
        const ParamSegment& ws = g.segment(ModelSpec::weight_name(last));
        auto gw = g.segment_values(ModelSpec::weight_name(last));
        std::size_t rows = ws.shape[0];
        for (std::size_t d = 0; d < rows; ++d)
            for (std::size_t k = 0; k < C; ++k) score[k] += gw[d * C + k];
    }

    std::vector<std::size_t> order(C);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });

    LabelInference out;
    std::size_t negatives = 0;
    for (double s : score)
        if (s < 0.0) ++negatives;
    out.low_confidence = negatives < B;
    for (std::size_t i = 0; i < B; ++i) out.labels.push_back(static_cast<int>(order[i % C]));
    std::sort(out.labels.begin(), out.labels.end());
    return out;
}

double total_variation(const Tensor& x, const ImageMeta& meta) {
    if (x.rank() != 2 || meta.pixels() != x.cols()) {
        std::ostringstream os;
        os << "total_variation: image " << meta.h << "x" << meta.w << "x" << meta.ch
           << " does not factor " << x.shape_str();
        throw std::invalid_argument(os.str());
    }
    double tv = 0.0;
    for (std::size_t b = 0; b < x.rows(); ++b) {
        auto img = x.data().subspan(b * meta.pixels(), meta.pixels());
        auto at = [&](std::size_t r, std::size_t c, std::size_t ch) {
            return img[(r * meta.w + c) * meta.ch + ch];
        };
        for (std::size_t r = 0; r < meta.h; ++r)
            for (std::size_t c = 0; c < meta.w; ++c)
                for (std::size_t ch = 0; ch < meta.ch; ++ch) {
                    if (c + 1 < meta.w) tv += std::abs(at(r, c + 1, ch) - at(r, c, ch));
                    if (r + 1 < meta.h) tv += std::abs(at(r + 1, c, ch) - at(r, c, ch));
                }
    }
    return tv;
}

ad::NodeId total_variation_nodes(ad::Tape& tape, std::span<const ad::NodeId> x_nodes,
                                 std::size_t batch, const ImageMeta& meta) {
    if (batch * meta.pixels() != x_nodes.size())
        throw std::invalid_argument("total_variation_nodes: node count does not factor");
    ad::NodeId tv = tape.constant(0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        auto img = x_nodes.subspan(b * meta.pixels(), meta.pixels());
        auto at = [&](std::size_t r, std::size_t c, std::size_t ch) {
            return img[(r * meta.w + c) * meta.ch + ch];
        };
        for (std::size_t r = 0; r < meta.h; ++r)
            for (std::size_t c = 0; c < meta.w; ++c)
                for (std::size_t ch = 0; ch < meta.ch; ++ch) {
                    if (c + 1 < meta.w)
                        tv = tape.add(tv, tape.abs(tape.sub(at(r, c + 1, ch), at(r, c, ch))));
                    if (r + 1 < meta.h)
                        tv = tape.add(tv, tape.abs(tape.sub(at(r + 1, c, ch), at(r, c, ch))));
                }
    }
    return tv;
}

ReconstructionResult reconstruct(const fl::GradientCapture& capture, const ModelSpec& spec,
                                 const ParamVector& params, const AttackConfig& config,
                                 const Batch* truth) {
    spec.validate();
    config.validate(spec.input_dim());
    if (capture.batch_grad.size() != params.size())
        throw std::invalid_argument("reconstruct: capture does not match parameter count");

    const std::size_t B = capture.batch_size;
    const std::size_t m = spec.input_dim();

    ReconstructionResult res;
    if (truth) {
        res.y_hat = truth->y;
    } else {
        LabelInference inf = idlg_infer_labels(capture, spec);
        res.y_hat = inf.labels;
        res.labels_low_confidence = inf.low_confidence;
    }

    std::vector<double> x(B * m), best_x;
    double best_loss = std::numeric_limits<double>::infinity();
    bool diverged = false;
    double max_step_grad = 0.0;

    for (int attempt = 0; attempt <= config.restarts; ++attempt) {
        Rng rng(Rng::derive(config.seed, "pgla-init", static_cast<std::uint64_t>(attempt)));
        for (auto& v : x) v = rng.uniform();
        res.trajectory.clear();
        best_loss = std::numeric_limits<double>::infinity();
        best_x = x;
        diverged = false;
        max_step_grad = 0.0;
        res.restarts_used = attempt;

        std::vector<double> adam_m(x.size(), 0.0), adam_v(x.size(), 0.0);
        std::vector<double> velocity(x.size(), 0.0);
        const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;

        for (int it = 0; it < config.iterations; ++it) {
            ad::Tape tape;
            BoundParams bp = bind(tape, params);
            Tensor xt = Tensor::leaf(tape, {B, m}, x);
            Tensor ll = loss(forward(spec, bp, xt), res.y_hat);
            std::vector<ad::NodeId> g = tape.gradient(ll.node(), bp.nodes);
            ad::NodeId match =
                match_distance(tape, config.distance, g, capture.batch_grad.values());
            if (config.method == Method::Ig && config.tv_weight > 0.0) {
                ad::NodeId tv = total_variation_nodes(tape, xt.nodes(), B, config.image);
                match = tape.add(match, tape.mul(tape.constant(config.tv_weight), tv));
            }
            double match_val = tape.val(match);

            TrajectoryPoint pt;
            pt.iter = it;
            pt.match_loss = match_val;
            if (truth) {
                Tensor cur = Tensor::computed({B, m}, std::vector<double>(x));
                auto q = metrics::quality_report(cur, truth->x);
                pt.psnr = q.pruned_mean_psnr;
                pt.has_psnr = true;
            }
            res.trajectory.push_back(pt);
            res.iterations_used = it + 1;

            if (!std::isfinite(match_val)) {
                diverged = true;
                break;
            }
            if (match_val < best_loss) {
                best_loss = match_val;
                best_x = x;
            }

            std::vector<ad::NodeId> dx = tape.gradient(match, xt.nodes());
            double lr = config.step_size;
            if (config.cosine_decay && config.iterations > 1)
                lr *= 0.5 * (1.0 + std::cos(3.14159265358979323846 * it /
                                            (config.iterations - 1)));
            for (std::size_t i = 0; i < x.size(); ++i) {
                double gi = tape.val(dx[i]);
                max_step_grad = std::max(max_step_grad, std::abs(gi));
                double step;
                if (config.optimizer == Optimizer::Adam) {
                    adam_m[i] = b1 * adam_m[i] + (1 - b1) * gi;
                    adam_v[i] = b2 * adam_v[i] + (1 - b2) * gi * gi;
                    double mc = adam_m[i] / (1 - std::pow(b1, it + 1));
                    double vc = adam_v[i] / (1 - std::pow(b2, it + 1));
                    step = lr * mc / (std::sqrt(vc) + adam_eps);
                } else {
                    velocity[i] = config.momentum * velocity[i] + gi;
                    step = lr * velocity[i];
                }
                x[i] = clamp01(x[i] - step);
            }
        }
        if (!diverged) break;
    }

    for (auto& v : best_x) v = clamp01(v);
    res.x_hat = Tensor::computed({B, m}, std::move(best_x));
    res.best_match_loss = best_loss;

    if (diverged) {
        res.failed = true;
        res.failure_reason = "diverged on every restart";
    } else if (max_step_grad < 1e-14) {
        // Flat matching objective: the captured gradient carries no data
        // signal (zero-initialized parameters do this), so the dummy data
        // never moved.
        res.failed = true;
        res.failure_reason = "flat matching objective";
    }
    return res;
}

}  // namespace gl::pgla
