#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gl/dataset.hpp"
#include "gl/model.hpp"

namespace gl::eggv {

// Fixed-position gradient subsampling. Positions are drawn once per
// segment (every weight and bias block is a sampling unit), are unique
// and sorted within a segment, and stay fixed for the life of a run so
// the projected gradient has consistent coordinates across iterations.
struct ProjectionPlan {
    struct SegmentPositions {
        std::string segment;
        std::vector<std::size_t> positions;  // local, sorted, unique
    };
    std::vector<SegmentPositions> per_segment;
    double rho = 0.0;
    std::uint64_t seed = 0;
    std::size_t param_count = 0;
    std::vector<std::size_t> flat_indices;  // global offsets, concatenated in segment order

    std::size_t dim() const { return flat_indices.size(); }
};

// Per segment: max(1, round(rho * segment size)) positions, sampled
// uniformly without replacement, deterministic under the seed.
ProjectionPlan build_projection_plan(const ParamVector& layout, double rho, std::uint64_t seed);

std::vector<double> project(const ParamVector& grad, const ProjectionPlan& plan);
// The recorded path: selection is a linear pass-through of node ids.
std::vector<ad::NodeId> project_nodes(std::span<const ad::NodeId> grad_nodes,
                                      const ProjectionPlan& plan);

// Gradient-to-input decoder. Affine by default; one optional tanh hidden
// layer when hidden_dim > 0.
struct Decoder {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::size_t hidden_dim = 0;
    ParamVector phi;
};

Decoder make_decoder(std::size_t input_dim, std::size_t output_dim, std::size_t hidden_dim,
                     std::uint64_t seed);
std::vector<double> decode(const Decoder& d, std::span<const double> g);
std::vector<ad::NodeId> decode_nodes(ad::Tape& tape, const Decoder& d, const BoundParams& phi,
                                     std::span<const ad::NodeId> g_nodes);

struct PoisonConfig {
    int iterations = 2000;
    double alpha_theta = 1e-3;
    double alpha_phi = 1e-2;
    double epsilon = 1e-3;
    double rho = 0.004;
    std::uint64_t seed = 0;
    std::size_t decoder_hidden = 0;
    int ma_window = 25;  // moving-average window for the stop rule
};

struct PoisonRun {
    ParamVector theta_star;
    Decoder decoder;
    ProjectionPlan plan;
    std::vector<double> loss_curve;
    PoisonConfig config;
    bool aborted = false;
    double initial_loss = 0.0;
    double final_moving_avg = 0.0;
};

// The joint poisoning loop: per step, on the next auxiliary batch,
//   L(theta, phi) = || x - D(project(d loss / d theta), phi) ||^2
// and both parameter sets take a gradient step (the theta step runs
// through the gradient, i.e. second order). Stops at `iterations` or when
// the moving average of L drops to epsilon. A non-finite L rolls the step
// back and halves both step sizes, up to 5 times, then aborts with the
// partial curve.
PoisonRun poison_model(const ModelSpec& spec, const ParamVector& theta0,
                       const std::vector<Batch>& aux, const PoisonConfig& config);

// L(theta, phi) on one batch; lower means more vulnerable gradients.
double vulnerability_score(const ModelSpec& spec, const ParamVector& params, const Decoder& d,
                           const ProjectionPlan& plan, const Batch& batch);

struct LandscapeGrid {
    int steps = 0;
    double extent = 0.0;
    std::vector<double> coords;    // length steps, includes 0 exactly for odd steps
    std::vector<double> scores;    // steps x steps, row-major over (a, b)
    std::vector<double> accuracy;  // same layout; empty when not requested
};

// Vulnerability (and optionally accuracy) over a plane through theta_star
// spanned by two seeded random directions, filter-normalized per segment.
// Scores average over the probe batches; probing the poisoning run's own
// auxiliary batches puts the grid center at the trained optimum, while a
// single held-out batch shows the (noisier) generalization surface.
LandscapeGrid landscape_grid(const ModelSpec& spec, const ParamVector& theta_star,
                             const Decoder& d, const ProjectionPlan& plan,
                             std::span<const Batch> probe_batches, double extent, int steps,
                             std::uint64_t seed, const Dataset* accuracy_data = nullptr);
LandscapeGrid landscape_grid(const ModelSpec& spec, const ParamVector& theta_star,
                             const Decoder& d, const ProjectionPlan& plan,
                             const Batch& eval_batch, double extent, int steps,
                             std::uint64_t seed, const Dataset* accuracy_data = nullptr);

void write_landscape_csv(const std::filesystem::path& path, const LandscapeGrid& grid);

// Gradient-biased contrast baseline: overwrites the final dense layer so
// one target class column carries a 0/1 pattern, all other columns are
// zeroed, and non-target biases saturate the softmax. The batch-mean
// gradient then approximates the gradient of the (single) target-class
// sample.
ParamVector fishing_baseline_poison(const ModelSpec& spec, const ParamVector& params,
                                    int target_class);

// Run-directory persistence: theta*, phi*, plan and loss curve.
void save_poison_run(const std::filesystem::path& dir, const PoisonRun& run);
PoisonRun load_poison_run(const std::filesystem::path& dir, const ModelSpec& spec);

}  // namespace gl::eggv
