#include "gl/eggv.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "gl/io.hpp"
#include "gl/ops.hpp"
#include "gl/rng.hpp"

namespace gl::eggv {
namespace {

std::vector<ParamSegment> decoder_segments(std::size_t in, std::size_t out, std::size_t hidden) {
    std::vector<ParamSegment> segs;
    std::size_t offset = 0;
    auto push = [&](const std::string& name, std::vector<std::size_t> shape) {
        ParamSegment s{name, std::move(shape), offset};
        offset += s.count();
        segs.push_back(std::move(s));
    };
    if (hidden == 0) {
        push("Wd", {in, out});
        push("bd", {1, out});
    } else {
        push("Wd0", {in, hidden});
        push("bd0", {1, hidden});
        push("Wd1", {hidden, out});
        push("bd1", {1, out});
    }
    return segs;
}

// y = x * W + b over raw doubles, W row-major [in x out].
void affine_raw(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                std::size_t in, std::size_t out, std::vector<double>& y) {
    y.assign(out, 0.0);
    for (std::size_t i = 0; i < in; ++i)
        for (std::size_t j = 0; j < out; ++j) y[j] += x[i] * w[i * out + j];
    for (std::size_t j = 0; j < out; ++j) y[j] += b[j];
}

std::vector<ad::NodeId> affine_nodes(ad::Tape& t, std::span<const ad::NodeId> x,
                                     std::span<const ad::NodeId> w, std::span<const ad::NodeId> b,
                                     std::size_t in, std::size_t out) {
    std::vector<ad::NodeId> y(out);
    for (std::size_t j = 0; j < out; ++j) {
        ad::NodeId acc = b[j];
        for (std::size_t i = 0; i < in; ++i) acc = t.add(acc, t.mul(x[i], w[i * out + j]));
        y[j] = acc;
    }
    return y;
}

double moving_avg_tail(const std::vector<double>& xs, int window) {
    if (xs.empty()) return 0.0;
    std::size_t w = std::min<std::size_t>(xs.size(), static_cast<std::size_t>(std::max(1, window)));
    double s = 0;
    for (std::size_t i = xs.size() - w; i < xs.size(); ++i) s += xs[i];
    return s / static_cast<double>(w);
}

}  // namespace

ProjectionPlan build_projection_plan(const ParamVector& layout, double rho, std::uint64_t seed) {
    if (!(rho > 0.0) || rho > 1.0) {
        std::ostringstream os;
        os << "build_projection_plan: rho " << rho << " outside (0, 1]";
        throw std::invalid_argument(os.str());
    }
    ProjectionPlan plan;
    plan.rho = rho;
    plan.seed = seed;
    plan.param_count = layout.size();

    std::uint64_t counter = 0;
    for (const auto& seg : layout.segments()) {
        std::size_t n = seg.count();
        std::size_t take = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(rho * static_cast<double>(n))));
        take = std::min(take, n);

        // Partial Fisher-Yates over the segment indices.
        Rng rng(Rng::derive(seed, "projection-plan", counter++));
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = 0; i < take; ++i) {
            std::size_t j = i + rng.below(n - i);
            std::swap(idx[i], idx[j]);
        }
        std::vector<std::size_t> picked(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
        std::sort(picked.begin(), picked.end());

        for (std::size_t p : picked) plan.flat_indices.push_back(seg.offset + p);
        plan.per_segment.push_back({seg.name, std::move(picked)});
    }
    return plan;
}

std::vector<double> project(const ParamVector& grad, const ProjectionPlan& plan) {
    if (grad.size() != plan.param_count) {
        std::ostringstream os;
        os << "project: gradient length " << grad.size() << " != plan's " << plan.param_count;
        throw std::invalid_argument(os.str());
    }
    std::vector<double> out;
    out.reserve(plan.dim());
    for (std::size_t i : plan.flat_indices) out.push_back(grad.values()[i]);
    return out;
}

std::vector<ad::NodeId> project_nodes(std::span<const ad::NodeId> grad_nodes,
                                      const ProjectionPlan& plan) {
    if (grad_nodes.size() != plan.param_count)
        throw std::invalid_argument("project_nodes: gradient length does not match plan");
    std::vector<ad::NodeId> out;
    out.reserve(plan.dim());
    for (std::size_t i : plan.flat_indices) out.push_back(grad_nodes[i]);
    return out;
}

Decoder make_decoder(std::size_t input_dim, std::size_t output_dim, std::size_t hidden_dim,
                     std::uint64_t seed) {
    Decoder d;
    d.input_dim = input_dim;
    d.output_dim = output_dim;
    d.hidden_dim = hidden_dim;
    auto segs = decoder_segments(input_dim, output_dim, hidden_dim);
    std::size_t total = 0;
    for (const auto& s : segs) total += s.count();
    std::vector<double> vals(total, 0.0);
    Rng rng(Rng::derive(seed, "decoder-init"));
    for (const auto& s : segs) {
        if (s.name[0] != 'W') continue;  // biases start at zero
        for (std::size_t i = 0; i < s.count(); ++i) vals[s.offset + i] = rng.normal(0.0, 0.02);
    }
    d.phi = ParamVector(std::move(segs), std::move(vals));
    return d;
}

std::vector<double> decode(const Decoder& d, std::span<const double> g) {
    if (g.size() != d.input_dim)
        throw std::invalid_argument("decode: projected gradient dimension mismatch");
    std::vector<double> out;
    if (d.hidden_dim == 0) {
        affine_raw(g, d.phi.segment_values("Wd"), d.phi.segment_values("bd"), d.input_dim,
                   d.output_dim, out);
        return out;
    }
    std::vector<double> h;
    affine_raw(g, d.phi.segment_values("Wd0"), d.phi.segment_values("bd0"), d.input_dim,
               d.hidden_dim, h);
    for (auto& v : h) v = std::tanh(v);
    affine_raw(h, d.phi.segment_values("Wd1"), d.phi.segment_values("bd1"), d.hidden_dim,
               d.output_dim, out);
    return out;
}

std::vector<ad::NodeId> decode_nodes(ad::Tape& tape, const Decoder& d, const BoundParams& phi,
                                     std::span<const ad::NodeId> g_nodes) {
    if (g_nodes.size() != d.input_dim)
        throw std::invalid_argument("decode_nodes: projected gradient dimension mismatch");
    auto seg_nodes = [&](const char* name) {
        const ParamSegment& s = phi.layout->segment(name);
        return std::span<const ad::NodeId>(phi.nodes).subspan(s.offset, s.count());
    };
    if (d.hidden_dim == 0)
        return affine_nodes(tape, g_nodes, seg_nodes("Wd"), seg_nodes("bd"), d.input_dim,
                            d.output_dim);
    auto h = affine_nodes(tape, g_nodes, seg_nodes("Wd0"), seg_nodes("bd0"), d.input_dim,
                          d.hidden_dim);
    for (auto& id : h) id = tape.tanh(id);
    return affine_nodes(tape, h, seg_nodes("Wd1"), seg_nodes("bd1"), d.hidden_dim, d.output_dim);
}

namespace {

// One evaluation of L(theta, phi) on a batch, optionally with gradients
// for both parameter sets.
double eggv_loss(const ModelSpec& spec, const ParamVector& theta, const Decoder& d,
                 const ProjectionPlan& plan, const Batch& batch,
                 std::vector<double>* grad_theta, std::vector<double>* grad_phi) {
    ad::Tape tape;
    BoundParams btheta = bind(tape, theta);
    Tensor ll = batch_loss(spec, btheta, batch);
    std::vector<ad::NodeId> g = tape.gradient(ll.node(), btheta.nodes);
    std::vector<ad::NodeId> gt = project_nodes(g, plan);

    BoundParams bphi = bind(tape, d.phi);
    std::vector<ad::NodeId> xhat = decode_nodes(tape, d, bphi, gt);
    std::vector<double> x_flat = batch.flat_x();
    ad::NodeId L = ad::nodes_sq_l2_diff(tape, xhat, x_flat);

    if (grad_theta) {
        std::vector<ad::NodeId> wrt = btheta.nodes;
        wrt.insert(wrt.end(), bphi.nodes.begin(), bphi.nodes.end());
        std::vector<ad::NodeId> dg = tape.gradient(L, wrt);
        grad_theta->resize(theta.size());
        grad_phi->resize(d.phi.size());
        for (std::size_t i = 0; i < theta.size(); ++i) (*grad_theta)[i] = tape.val(dg[i]);
        for (std::size_t i = 0; i < d.phi.size(); ++i)
            (*grad_phi)[i] = tape.val(dg[theta.size() + i]);
    }
    return tape.val(L);
}

}  // namespace

PoisonRun poison_model(const ModelSpec& spec, const ParamVector& theta0,
                       const std::vector<Batch>& aux, const PoisonConfig& config) {
    spec.validate();
    if (aux.empty()) throw std::invalid_argument("poison_model: empty auxiliary dataset");
    const std::size_t B = aux.front().size();
    for (const auto& b : aux)
        if (b.size() != B)
            throw std::invalid_argument("poison_model: auxiliary batches must share one size");
    if (config.iterations < 0) throw std::invalid_argument("poison_model: negative iterations");

    PoisonRun run;
    run.config = config;
    run.plan = build_projection_plan(theta0, config.rho, Rng::derive(config.seed, "plan"));
    run.decoder = make_decoder(run.plan.dim(), B * spec.input_dim(), config.decoder_hidden,
                               Rng::derive(config.seed, "decoder"));
    run.theta_star = theta0;

    double a_theta = config.alpha_theta;
    double a_phi = config.alpha_phi;
    int halvings = 0;

    ParamVector theta_prev = run.theta_star;
    ParamVector phi_prev = run.decoder.phi;

    run.initial_loss = eggv_loss(spec, run.theta_star, run.decoder, run.plan, aux[0], nullptr,
                                 nullptr);
    if (config.iterations == 0) {
        run.loss_curve.push_back(run.initial_loss);
        run.final_moving_avg = run.initial_loss;
        return run;
    }

    std::vector<double> gt, gp;
    for (int t = 0; t < config.iterations;) {
        const Batch& batch = aux[static_cast<std::size_t>(t) % aux.size()];
        double L = eggv_loss(spec, run.theta_star, run.decoder, run.plan, batch, &gt, &gp);

        if (!std::isfinite(L)) {
            if (++halvings > 5) {
                run.aborted = true;
                break;
            }
            a_theta *= 0.5;
            a_phi *= 0.5;
            run.theta_star = theta_prev;  // roll the poisoned step back
            run.decoder.phi = phi_prev;
            continue;
        }

        run.loss_curve.push_back(L);
        theta_prev = run.theta_star;
        phi_prev = run.decoder.phi;

        auto tv = run.theta_star.values();
        for (std::size_t i = 0; i < tv.size(); ++i) tv[i] -= a_theta * gt[i];
        auto pv = run.decoder.phi.values();
        for (std::size_t i = 0; i < pv.size(); ++i) pv[i] -= a_phi * gp[i];

        ++t;
        if (moving_avg_tail(run.loss_curve, config.ma_window) <= config.epsilon) break;
    }
    run.final_moving_avg = moving_avg_tail(run.loss_curve, config.ma_window);
    return run;
}

double vulnerability_score(const ModelSpec& spec, const ParamVector& params, const Decoder& d,
                           const ProjectionPlan& plan, const Batch& batch) {
    if (d.output_dim != batch.size() * spec.input_dim()) {
        std::ostringstream os;
        os << "vulnerability_score: decoder output " << d.output_dim << " != batch "
           << batch.size() << " x " << spec.input_dim();
        throw std::invalid_argument(os.str());
    }
    return eggv_loss(spec, params, d, plan, batch, nullptr, nullptr);
}

LandscapeGrid landscape_grid(const ModelSpec& spec, const ParamVector& theta_star,
                             const Decoder& d, const ProjectionPlan& plan,
                             std::span<const Batch> probe_batches, double extent, int steps,
                             std::uint64_t seed, const Dataset* accuracy_data) {
    if (steps < 2) throw std::invalid_argument("landscape_grid: steps must be >= 2");
    if (probe_batches.empty()) throw std::invalid_argument("landscape_grid: no probe batches");

    // Two random directions, filter-normalized: each segment of the
    // direction is rescaled to the norm of the matching theta* segment.
    auto make_direction = [&](std::uint64_t index) {
        ParamVector dir = ParamVector::zeros_like(theta_star);
        Rng rng(Rng::derive(seed, "landscape-dir", index));
        auto dv = dir.values();
        for (auto& v : dv) v = rng.normal();
        for (const auto& seg : theta_star.segments()) {
            double nt = 0, nd = 0;
            for (std::size_t i = 0; i < seg.count(); ++i) {
                nt += theta_star.values()[seg.offset + i] * theta_star.values()[seg.offset + i];
                nd += dv[seg.offset + i] * dv[seg.offset + i];
            }
            double scale = nd > 0 ? std::sqrt(nt / nd) : 0.0;
            for (std::size_t i = 0; i < seg.count(); ++i) dv[seg.offset + i] *= scale;
        }
        return dir;
    };
    ParamVector dx = make_direction(0);
    ParamVector dy = make_direction(1);

    LandscapeGrid grid;
    grid.steps = steps;
    grid.extent = extent;
    grid.coords.resize(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i)
        grid.coords[static_cast<std::size_t>(i)] =
            -extent + 2.0 * extent * static_cast<double>(i) / static_cast<double>(steps - 1);
    // Symmetric linspace with odd steps: force the middle coordinate to 0
    // so the center cell is exactly theta*.
    if (steps % 2 == 1) grid.coords[static_cast<std::size_t>(steps / 2)] = 0.0;

    grid.scores.resize(static_cast<std::size_t>(steps) * static_cast<std::size_t>(steps));
    if (accuracy_data) grid.accuracy.resize(grid.scores.size());

    for (int i = 0; i < steps; ++i) {
        for (int j = 0; j < steps; ++j) {
            double a = grid.coords[static_cast<std::size_t>(i)];
            double b = grid.coords[static_cast<std::size_t>(j)];
            ParamVector theta = theta_star.axpy(a, dx).axpy(b, dy);
            std::size_t cell =
                static_cast<std::size_t>(i) * static_cast<std::size_t>(steps) +
                static_cast<std::size_t>(j);
            double s = 0;
            for (const Batch& b : probe_batches) s += vulnerability_score(spec, theta, d, plan, b);
            grid.scores[cell] = s / static_cast<double>(probe_batches.size());
            if (accuracy_data) grid.accuracy[cell] = evaluate_accuracy(spec, theta, *accuracy_data);
        }
    }
    return grid;
}

LandscapeGrid landscape_grid(const ModelSpec& spec, const ParamVector& theta_star,
                             const Decoder& d, const ProjectionPlan& plan,
                             const Batch& eval_batch, double extent, int steps,
                             std::uint64_t seed, const Dataset* accuracy_data) {
    return landscape_grid(spec, theta_star, d, plan, std::span<const Batch>(&eval_batch, 1),
                          extent, steps, seed, accuracy_data);
}

void write_landscape_csv(const std::filesystem::path& path, const LandscapeGrid& grid) {
    io::CsvWriter csv(path);
    std::vector<std::string> header{"a", "b", "score"};
    if (!grid.accuracy.empty()) header.push_back("accuracy");
    csv.row(header);
    for (int i = 0; i < grid.steps; ++i)
        for (int j = 0; j < grid.steps; ++j) {
            std::size_t cell = static_cast<std::size_t>(i) * static_cast<std::size_t>(grid.steps) +
                               static_cast<std::size_t>(j);
            std::vector<std::string> row{io::format_double(grid.coords[static_cast<std::size_t>(i)]),
                                         io::format_double(grid.coords[static_cast<std::size_t>(j)]),
                                         io::format_double(grid.scores[cell])};
            if (!grid.accuracy.empty()) row.push_back(io::format_double(grid.accuracy[cell]));
            csv.row(row);
        }
    csv.close();
}

ParamVector fishing_baseline_poison(const ModelSpec& spec, const ParamVector& params,
                                    int target_class) {
    spec.validate();
    if (target_class < 0 || static_cast<std::size_t>(target_class) >= spec.num_classes()) {
        std::ostringstream os;
        os << "fishing_baseline_poison: class " << target_class << " out of range [0, "
           << spec.num_classes() << ")";
        throw std::invalid_argument(os.str());
    }
    std::size_t last = spec.num_layers() - 1;
    if (!spec.has_bias[last])
        throw std::invalid_argument(
            "fishing_baseline_poison: final layer needs a bias to saturate non-target logits");

    ParamVector out = params;
    const ParamSegment& ws = out.segment(ModelSpec::weight_name(last));
    const ParamSegment& bs = out.segment(ModelSpec::bias_name(last));
    std::size_t in = ws.shape[0], C = ws.shape[1];
    auto vals = out.values();
    // Target column: alternating 0/1 pattern; every other column zeroed.
    for (std::size_t i = 0; i < in; ++i)
        for (std::size_t k = 0; k < C; ++k)
            vals[ws.offset + i * C + k] =
                (k == static_cast<std::size_t>(target_class)) ? ((i % 2 == 0) ? 1.0 : 0.0) : 0.0;
    // Saturating biases: non-target logits sit far above anything the
    // target column can produce, so the target-class softmax output is
    // negligible except through a genuine target-class label.
    for (std::size_t k = 0; k < C; ++k)
        vals[bs.offset + k] = (k == static_cast<std::size_t>(target_class)) ? 0.0 : 50.0;
    return out;
}

void save_poison_run(const std::filesystem::path& dir, const PoisonRun& run) {
    std::filesystem::create_directories(dir);
    io::write_f64(dir / "theta_star.f64", run.theta_star.values());
    io::write_f64(dir / "phi_star.f64", run.decoder.phi.values());

    io::Header h;
    h.emplace_back("param_count", std::to_string(run.theta_star.size()));
    h.emplace_back("decoder_in", std::to_string(run.decoder.input_dim));
    h.emplace_back("decoder_out", std::to_string(run.decoder.output_dim));
    h.emplace_back("decoder_hidden", std::to_string(run.decoder.hidden_dim));
    h.emplace_back("rho", io::format_double(run.config.rho));
    h.emplace_back("seed", std::to_string(run.config.seed));
    h.emplace_back("iterations", std::to_string(run.config.iterations));
    h.emplace_back("alpha_theta", io::format_double(run.config.alpha_theta));
    h.emplace_back("alpha_phi", io::format_double(run.config.alpha_phi));
    h.emplace_back("epsilon", io::format_double(run.config.epsilon));
    h.emplace_back("aborted", run.aborted ? "1" : "0");
    io::write_header(dir / "poison.hdr", h);

    // Plan: one line per segment, local positions comma-joined.
    io::Header plan;
    for (const auto& sp : run.plan.per_segment) {
        std::string joined;
        for (std::size_t i = 0; i < sp.positions.size(); ++i) {
            if (i) joined.push_back(',');
            joined += std::to_string(sp.positions[i]);
        }
        plan.emplace_back(sp.segment, joined);
    }
    io::write_header(dir / "plan.hdr", plan);

    io::CsvWriter csv(dir / "loss_curve.csv");
    csv.row({"iter", "loss"});
    for (std::size_t i = 0; i < run.loss_curve.size(); ++i)
        csv.row({std::to_string(i), io::format_double(run.loss_curve[i])});
    csv.close();
}

PoisonRun load_poison_run(const std::filesystem::path& dir, const ModelSpec& spec) {
    PoisonRun run;
    io::Header h = io::read_header(dir / "poison.hdr");
    run.config.rho = std::stod(io::header_get(h, "rho"));
    run.config.seed = std::stoull(io::header_get(h, "seed"));
    run.config.iterations = std::stoi(io::header_get(h, "iterations"));
    run.config.alpha_theta = std::stod(io::header_get(h, "alpha_theta"));
    run.config.alpha_phi = std::stod(io::header_get(h, "alpha_phi"));
    run.config.epsilon = std::stod(io::header_get(h, "epsilon"));
    run.aborted = io::header_get(h, "aborted") == "1";

    ParamVector layout = spec.param_layout();
    run.theta_star = ParamVector(layout.segments(), io::read_f64(dir / "theta_star.f64"));

    std::size_t din = std::stoul(io::header_get(h, "decoder_in"));
    std::size_t dout = std::stoul(io::header_get(h, "decoder_out"));
    std::size_t dhid = std::stoul(io::header_get(h, "decoder_hidden"));
    run.decoder.input_dim = din;
    run.decoder.output_dim = dout;
    run.decoder.hidden_dim = dhid;
    run.decoder.phi = ParamVector(decoder_segments(din, dout, dhid), io::read_f64(dir / "phi_star.f64"));

    io::Header plan = io::read_header(dir / "plan.hdr");
    run.plan.rho = run.config.rho;
    run.plan.seed = run.config.seed;
    run.plan.param_count = layout.size();
    for (const auto& [seg_name, joined] : plan) {
        ProjectionPlan::SegmentPositions sp;
        sp.segment = seg_name;
        std::istringstream ss(joined);
        std::string cell;
        while (std::getline(ss, cell, ',')) sp.positions.push_back(std::stoul(cell));
        const ParamSegment& seg = layout.segment(seg_name);
        for (std::size_t p : sp.positions) run.plan.flat_indices.push_back(seg.offset + p);
        run.plan.per_segment.push_back(std::move(sp));
    }
    return run;
}

}  // namespace gl::eggv
