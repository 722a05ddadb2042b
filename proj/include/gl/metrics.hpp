#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gl/model.hpp"
#include "gl/params.hpp"

namespace gl::metrics {

// Client-side gradient-bias detector: for each dense weight matrix, the
// ratio of the largest per-sample gradient norm to the sum of the rest;
// the report is the max over layers. A vanishing denominator yields an
// infinite ratio with the degenerate flag set.
struct DsnrReport {
    double value = 0.0;
    std::vector<std::pair<std::string, double>> per_layer;
    std::string argmax_layer;
    bool degenerate = false;
    std::size_t batch_size = 0;
};

DsnrReport d_snr(const std::vector<ParamVector>& per_sample_grads);

// Population variance and mean of whole-vector per-sample gradient norms.
std::pair<double, double> grad_norm_variance(const std::vector<ParamVector>& per_sample_grads);

// 10*log10(peak^2 / MSE), clamped to 100 dB when MSE < 1e-12.
double psnr(const Tensor& x_hat, const Tensor& x_true, double peak = 1.0);

// Single-window SSIM over all values, K1=0.01, K2=0.03, dynamic range 1.
double ssim(const Tensor& x_hat, const Tensor& x_true);

struct QualityReport {
    std::vector<double> per_sample_psnr;
    std::vector<double> per_sample_ssim;
    double min_psnr = 0.0;
    double pruned_mean_psnr = 0.0;  // mean after dropping the single min and max
    double max_psnr = 0.0;
};

// Per-sample quality of a reconstructed batch against the truth, with
// greedy minimal-MSE alignment (gradient matching is permutation-invariant
// across the batch). Samples are rows of [B x m] tensors.
QualityReport quality_report(const Tensor& x_hat, const Tensor& x_true);

// The alignment itself: result[i] = index of the truth row matched to
// reconstruction row i.
std::vector<std::size_t> greedy_match(const Tensor& x_hat, const Tensor& x_true);

}  // namespace gl::metrics
