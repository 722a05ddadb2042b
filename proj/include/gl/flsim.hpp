#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "gl/model.hpp"

namespace gl::fl {

struct ClientState {
    int id = 0;
    std::vector<Batch> dataset;  // private batches
    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& b : dataset) n += b.size();
        return n;
    }
};

// What one client hands the server in one round: the batch-mean-loss
// gradient, optionally the per-sample gradients (for the detector side),
// and the batch metadata.
struct GradientCapture {
    int round = 0;
    int client_id = 0;
    ParamVector batch_grad;
    std::optional<std::vector<ParamVector>> per_sample;
    std::size_t batch_size = 0;
    std::vector<int> labels;  // label multiset of the batch
};

GradientCapture client_gradient(const ModelSpec& spec, const ParamVector& params,
                                const Batch& batch, bool capture_per_sample,
                                int round = 0, int client_id = 0);

// Dataset-size-weighted mean of client gradients.
ParamVector aggregate(const std::vector<GradientCapture>& captures,
                      const std::vector<std::size_t>& client_sizes);

ParamVector sgd_step(const ParamVector& params, const ParamVector& update, double eta);

// Flat little-endian f64 vector file plus a text sidecar header
// (<prefix>.f64 and <prefix>.hdr).
void save_capture(const std::filesystem::path& prefix, const GradientCapture& c);
GradientCapture load_capture(const std::filesystem::path& prefix, const ParamVector& layout);

}  // namespace gl::fl
