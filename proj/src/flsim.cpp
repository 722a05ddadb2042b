#include "gl/flsim.hpp"

#include <sstream>
#include <stdexcept>

#include "gl/io.hpp"

namespace gl::fl {

GradientCapture client_gradient(const ModelSpec& spec, const ParamVector& params,
                                const Batch& batch, bool capture_per_sample, int round,
                                int client_id) {
    if (batch.size() == 0) throw std::invalid_argument("client_gradient: empty batch");
    GradientCapture cap;
    cap.round = round;
    cap.client_id = client_id;
    cap.batch_size = batch.size();
    cap.labels = batch.y;

    ad::Tape tape;
    BoundParams bp = bind(tape, params);
    cap.batch_grad = grad(batch_loss(spec, bp, batch), bp).values;
    if (capture_per_sample)
        cap.per_sample = per_sample_grads(model_loss_fn(spec), params, batch);
    return cap;
}

ParamVector aggregate(const std::vector<GradientCapture>& captures,
                      const std::vector<std::size_t>& client_sizes) {
    if (captures.empty()) throw std::invalid_argument("aggregate: no captures");
    if (client_sizes.size() != captures.size())
        throw std::invalid_argument("aggregate: size list does not match capture list");
    double total = 0;
    for (std::size_t s : client_sizes) total += static_cast<double>(s);
    if (total <= 0) throw std::invalid_argument("aggregate: client sizes sum to zero");

    ParamVector out = ParamVector::zeros_like(captures[0].batch_grad);
    auto acc = out.values();
    for (std::size_t i = 0; i < captures.size(); ++i) {
        const auto& g = captures[i].batch_grad;
        if (g.size() != out.size()) {
            std::ostringstream os;
            os << "aggregate: capture " << i << " has " << g.size() << " parameters, expected "
               << out.size();
            throw std::invalid_argument(os.str());
        }
        double w = static_cast<double>(client_sizes[i]) / total;
        auto gv = g.values();
        for (std::size_t j = 0; j < out.size(); ++j) acc[j] += w * gv[j];
    }
    return out;
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& update, double eta) {
    if (params.size() != update.size()) {
        std::ostringstream os;
        os << "sgd_step: parameter count " << params.size() << " != update count "
           << update.size();
        throw std::invalid_argument(os.str());
    }
    return params.axpy(-eta, update);
}

void save_capture(const std::filesystem::path& prefix, const GradientCapture& c) {
    std::filesystem::path f64 = prefix;
    f64 += ".f64";
    io::write_f64(f64, c.batch_grad.values());

    io::Header h;
    h.emplace_back("round", std::to_string(c.round));
    h.emplace_back("client", std::to_string(c.client_id));
    h.emplace_back("batch_size", std::to_string(c.batch_size));
    h.emplace_back("param_count", std::to_string(c.batch_grad.size()));
    std::string labels;
    for (std::size_t i = 0; i < c.labels.size(); ++i) {
        if (i) labels.push_back(',');
        labels += std::to_string(c.labels[i]);
    }
    h.emplace_back("labels", labels);
    std::filesystem::path hdr = prefix;
    hdr += ".hdr";
    io::write_header(hdr, h);

    if (c.per_sample) {
        for (std::size_t i = 0; i < c.per_sample->size(); ++i) {
            std::filesystem::path ps = prefix;
            ps += ".sample" + std::to_string(i) + ".f64";
            io::write_f64(ps, (*c.per_sample)[i].values());
        }
    }
}

GradientCapture load_capture(const std::filesystem::path& prefix, const ParamVector& layout) {
    std::filesystem::path hdr = prefix;
    hdr += ".hdr";
    io::Header h = io::read_header(hdr);

    GradientCapture c;
    c.round = std::stoi(io::header_get(h, "round"));
    c.client_id = std::stoi(io::header_get(h, "client"));
    c.batch_size = static_cast<std::size_t>(std::stoul(io::header_get(h, "batch_size")));
    std::size_t param_count = static_cast<std::size_t>(std::stoul(io::header_get(h, "param_count")));
    if (param_count != layout.size())
        throw std::runtime_error("load_capture: parameter count mismatch against layout");

    std::istringstream ls(io::header_get(h, "labels"));
    std::string cell;
    while (std::getline(ls, cell, ',')) c.labels.push_back(std::stoi(cell));

    std::filesystem::path f64 = prefix;
    f64 += ".f64";
    c.batch_grad = ParamVector(layout.segments(), io::read_f64(f64));

    std::vector<ParamVector> per;
    for (std::size_t i = 0;; ++i) {
        std::filesystem::path ps = prefix;
        ps += ".sample" + std::to_string(i) + ".f64";
        if (!std::filesystem::exists(ps)) break;
        per.emplace_back(layout.segments(), io::read_f64(ps));
    }
    if (!per.empty()) c.per_sample = std::move(per);
    return c;
}

}  // namespace gl::fl
