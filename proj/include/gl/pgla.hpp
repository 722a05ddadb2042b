#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gl/flsim.hpp"
#include "gl/model.hpp"

namespace gl::pgla {

// Spatial interpretation of flat sample vectors, needed by the total
// variation term (channels innermost).
struct ImageMeta {
    std::size_t h = 0;
    std::size_t w = 0;
    std::size_t ch = 1;
    std::size_t pixels() const { return h * w * ch; }
};

enum class Method { Dlg, Ig };
enum class Distance { SquaredL2, NegativeCosine };
enum class Optimizer { Gd, Adam };

// dlg: squared-L2 gradient matching. ig: one concrete "IG-style"
// formulation — whole-vector negative cosine plus weighted anisotropic TV
// (the original splits the cosine over layer groups; this fixes a single
// variant and labels it as such). The default optimizer is Adam: plain
// gradient descent stalls on the stiff directions of the matching loss
// and leaves one sample per batch unrecovered at any constant step size.
struct AttackConfig {
    Method method = Method::Dlg;
    int iterations = 200;
    double step_size = 0.5;
    double tv_weight = 0.0;  // ig only
    Distance distance = Distance::SquaredL2;
    Optimizer optimizer = Optimizer::Adam;
    double momentum = 0.9;  // gd only
    int restarts = 3;
    std::uint64_t seed = 0;
    bool cosine_decay = true;
    ImageMeta image;

    void validate(std::size_t input_dim) const;
    static AttackConfig dlg_defaults(std::size_t input_dim, std::uint64_t seed);
    static AttackConfig ig_defaults(std::size_t input_dim, std::uint64_t seed);
};

struct LabelInference {
    std::vector<int> labels;
    bool low_confidence = false;
};

// Cross-entropy residual sign rule: classes present in the batch pull
// their last-layer bias gradient negative. Returns the batch_size most
// negative entries; short supply of negative entries sets the
// low-confidence flag (duplicate labels in the batch do this).
LabelInference idlg_infer_labels(const fl::GradientCapture& capture, const ModelSpec& spec);

struct TrajectoryPoint {
    int iter = 0;
    double match_loss = 0.0;
    double psnr = 0.0;
    bool has_psnr = false;
};

struct ReconstructionResult {
    Tensor x_hat;  // [B x m], clamped to [0, 1]
    std::vector<int> y_hat;
    bool labels_low_confidence = false;
    std::vector<TrajectoryPoint> trajectory;  // final attempt only
    int iterations_used = 0;
    int restarts_used = 0;
    double best_match_loss = 0.0;
    bool failed = false;
    std::string failure_reason;
};

// Gradient matching against a capture: initializes dummy data uniformly,
// descends the matching distance with plain gradient steps (optional
// cosine decay), clamps to [0,1] each step, and returns the iterate with
// the best match loss. Labels come from the truth when supplied, else
// from idlg_infer_labels. NaN divergence restarts with a fresh seed.
ReconstructionResult reconstruct(const fl::GradientCapture& capture, const ModelSpec& spec,
                                 const ParamVector& params, const AttackConfig& config,
                                 const Batch* truth = nullptr);

// Anisotropic total variation: sum of absolute horizontal and vertical
// neighbor differences, per image, summed over the batch.
double total_variation(const Tensor& x, const ImageMeta& meta);
ad::NodeId total_variation_nodes(ad::Tape& tape, std::span<const ad::NodeId> x_nodes,
                                 std::size_t batch, const ImageMeta& meta);

}  // namespace gl::pgla
