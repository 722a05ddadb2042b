#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gl/config.hpp"
#include "gl/flsim.hpp"
#include "gl/metrics.hpp"

namespace gl {

// Flat report rows; every metric observation carries its (rep, round,
// client) key. Timings are collected separately because they are the one
// non-reproducible quantity — the normative report files never include
// them.
struct QualityRow {
    int rep = 0, round = 0, client = 0;
    double min_psnr = 0, pruned_mean_psnr = 0, max_psnr = 0;
    std::vector<double> per_sample_psnr, per_sample_ssim;
    bool attack_failed = false;
    double best_match_loss = 0;
    int iterations_used = 0;
};

struct DetectRow {
    int rep = 0, round = 0, client = 0;
    bool has_dsnr = false;
    double dsnr = 0;
    std::string argmax_layer;
    bool has_variance = false;
    double norm_variance = 0, norm_mean = 0;
};

struct LambdaRow {
    int rep = 0, round = 0, client = 0;
    int class_index = 0;
    bool valid = false;
    double max_lambda = 0, entropy = 0;
};

struct RoundRow {
    int round = 0;
    double update_norm = 0, theta_norm = 0;
    bool poisoned = false;
};

struct RunReport {
    std::string config_echo;  // canonical JSON
    std::vector<RoundRow> rounds;
    std::vector<QualityRow> quality;
    std::vector<DetectRow> detect;
    std::vector<LambdaRow> lambda;
    double poison_initial_loss = 0, poison_final_moving_avg = 0;
    bool poisoned = false;
    std::optional<std::string> failed_stage;
    std::string failure_message;
    std::vector<std::pair<std::string, double>> timings_ms;  // non-normative
};

// The full pipeline: poison -> simulate rounds -> capture evaluation
// batches at the poisoned model -> attack -> detect -> report. Every
// stage persists its artifacts under output_dir; a stage failure is
// recorded with its name and later stages are skipped. Identical
// (config, master_seed) pairs produce byte-identical report files.
RunReport run_experiment(const ExperimentConfig& cfg);

// CSV + JSON-lines emission with a stable column order. timings.csv is
// written separately and is the only file exempt from byte determinism.
void emit_report(const RunReport& report, const std::filesystem::path& dir, bool csv = true,
                 bool jsonl = true);

}  // namespace gl
