#include "gl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gl::metrics {
namespace {

double l2_norm(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double mse(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

}  // namespace

DsnrReport d_snr(const std::vector<ParamVector>& per_sample_grads) {
    if (per_sample_grads.size() < 2)
        throw std::invalid_argument("d_snr: need at least 2 per-sample gradients");

    DsnrReport rep;
    rep.batch_size = per_sample_grads.size();
    rep.value = -std::numeric_limits<double>::infinity();

    const ParamVector& first = per_sample_grads[0];
    for (const auto& seg : first.segments()) {
        if (seg.name.empty() || seg.name[0] != 'W') continue;  // dense weight matrices only
        double mx = 0.0, sum = 0.0;
        for (const auto& g : per_sample_grads) {
            double n = l2_norm(g.segment_values(seg.name));
            mx = std::max(mx, n);
            sum += n;
        }
        double rest = sum - mx;
        double ratio;
        if (rest < 1e-12) {
            ratio = std::numeric_limits<double>::infinity();
            rep.degenerate = true;
        } else {
            ratio = mx / rest;
        }
        rep.per_layer.emplace_back(seg.name, ratio);
        if (ratio > rep.value) {
            rep.value = ratio;
            rep.argmax_layer = seg.name;
        }
    }
    if (rep.per_layer.empty()) throw std::invalid_argument("d_snr: no dense weight segments");
    return rep;
}

std::pair<double, double> grad_norm_variance(const std::vector<ParamVector>& per_sample_grads) {
    if (per_sample_grads.empty())
        throw std::invalid_argument("grad_norm_variance: need at least 1 gradient");
    std::vector<double> norms;
    norms.reserve(per_sample_grads.size());
    for (const auto& g : per_sample_grads) norms.push_back(l2_norm(g.values()));
    double mean = 0;
    for (double n : norms) mean += n;
    mean /= static_cast<double>(norms.size());
    double var = 0;
    for (double n : norms) var += (n - mean) * (n - mean);
    var /= static_cast<double>(norms.size());
    return {var, mean};
}

double psnr(const Tensor& x_hat, const Tensor& x_true, double peak) {
    check_same_shape("psnr", x_hat, x_true);
    double m = mse(x_hat.data(), x_true.data());
    if (m < 1e-12) return 100.0;
    return 10.0 * std::log10(peak * peak / m);
}

double ssim(const Tensor& x_hat, const Tensor& x_true) {
    check_same_shape("ssim", x_hat, x_true);
    const double k1 = 0.01, k2 = 0.03, L = 1.0;
    const double c1 = (k1 * L) * (k1 * L), c2 = (k2 * L) * (k2 * L);
    auto a = x_hat.data(), b = x_true.data();
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double va = 0, vb = 0, cov = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
        cov += (a[i] - ma) * (b[i] - mb);
    }
    va /= n;
    vb /= n;
    cov /= n;
    return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

std::vector<std::size_t> greedy_match(const Tensor& x_hat, const Tensor& x_true) {
    check_same_shape("greedy_match", x_hat, x_true);
    std::size_t B = x_hat.rows(), m = x_hat.cols();
    std::vector<std::vector<double>> cost(B, std::vector<double>(B));
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < B; ++j)
            cost[i][j] = mse(x_hat.data().subspan(i * m, m), x_true.data().subspan(j * m, m));

    std::vector<std::size_t> match(B, 0);
    std::vector<bool> used_r(B, false), used_t(B, false);
    for (std::size_t step = 0; step < B; ++step) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < B; ++i) {
            if (used_r[i]) continue;
            for (std::size_t j = 0; j < B; ++j) {
                if (used_t[j]) continue;
                if (cost[i][j] < best) {
                    best = cost[i][j];
                    bi = i;
                    bj = j;
                }
            }
        }
        match[bi] = bj;
        used_r[bi] = true;
        used_t[bj] = true;
    }
    return match;
}

QualityReport quality_report(const Tensor& x_hat, const Tensor& x_true) {
    auto match = greedy_match(x_hat, x_true);
    std::size_t B = x_hat.rows(), m = x_hat.cols();

    QualityReport rep;
    for (std::size_t i = 0; i < B; ++i) {
        auto hr = x_hat.data().subspan(i * m, m);
        auto tr = x_true.data().subspan(match[i] * m, m);
        Tensor h({m}, std::vector<double>(hr.begin(), hr.end()));
        Tensor t({m}, std::vector<double>(tr.begin(), tr.end()));
        rep.per_sample_psnr.push_back(psnr(h, t));
        rep.per_sample_ssim.push_back(ssim(h, t));
    }

    std::vector<double> sorted = rep.per_sample_psnr;
    std::sort(sorted.begin(), sorted.end());
    rep.min_psnr = sorted.front();
    rep.max_psnr = sorted.back();
    if (sorted.size() <= 2) {
        double s = 0;
        for (double v : sorted) s += v;
        rep.pruned_mean_psnr = s / static_cast<double>(sorted.size());
    } else {
        double s = 0;
        for (std::size_t i = 1; i + 1 < sorted.size(); ++i) s += sorted[i];
        rep.pruned_mean_psnr = s / static_cast<double>(sorted.size() - 2);
    }
    return rep;
}

}  // namespace gl::metrics
