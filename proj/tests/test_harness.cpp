#include "doctest.h"
#include "gl/config.hpp"
#include "gl/experiment.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

using namespace gl;
namespace fs = std::filesystem;

namespace {

fs::path write_config(const char* name, const std::string& body) {
    fs::path p = fs::temp_directory_path() / name;
    std::ofstream(p) << body;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

const char* kMinimal = R"({
  "model": { "layer_dims": [16, 32, 4] },
  "dataset": { "kind": "gaussian_blobs", "m": 16, "C": 4, "n": 64 }
})";

}  // namespace

TEST_CASE("minimal config gets the documented defaults") {
    ExperimentConfig cfg = load_config(write_config("gl_min.json", kMinimal));
    CHECK(cfg.batch_size == 8);
    CHECK(cfg.poison.eggv.rho == 0.004);
    CHECK(cfg.poison.kind == PoisonSettings::Kind::None);
    CHECK(cfg.repetitions == 100);
    CHECK(cfg.master_seed == 42);
    CHECK(cfg.model.activations.size() == 1);
    CHECK(cfg.model.activations[0] == Activation::Relu);
}

TEST_CASE("out-of-range rho is rejected with a range message") {
    std::string body = R"({
      "model": { "layer_dims": [8, 4] },
      "dataset": { "kind": "gaussian_blobs", "m": 8, "C": 4, "n": 16 },
      "aux_dataset": { "kind": "gaussian_blobs", "m": 8, "C": 4, "n": 16 },
      "poison": { "kind": "eggv", "rho": 1.5 }
    })";
    CHECK_THROWS_WITH_AS(load_config(write_config("gl_rho.json", body)),
                         doctest::Contains("(0, 1]"), std::runtime_error);
}

TEST_CASE("unknown keys are rejected by path") {
    std::string body = R"({
      "model": { "layer_dims": [8, 4], "dropout": 0.5 },
      "dataset": { "kind": "gaussian_blobs", "m": 8, "C": 4, "n": 16 }
    })";
    CHECK_THROWS_WITH_AS(load_config(write_config("gl_unknown.json", body)),
                         doctest::Contains("model.dropout"), std::runtime_error);
}

TEST_CASE("config round-trips to identical canonical form") {
    ExperimentConfig cfg = load_config(write_config("gl_rt.json", kMinimal));
    std::string once = config_to_json_string(cfg);
    ExperimentConfig back = config_from_json_string(once);
    std::string twice = config_to_json_string(back);
    CHECK(once == twice);
}

TEST_CASE("environment overrides map onto config keys") {
    setenv("GL_BATCH_SIZE", "4", 1);
    setenv("GL_MASTER_SEED", "777", 1);
    ExperimentConfig cfg = load_config(write_config("gl_env.json", kMinimal));
    unsetenv("GL_BATCH_SIZE");
    unsetenv("GL_MASTER_SEED");
    CHECK(cfg.batch_size == 4);
    CHECK(cfg.master_seed == 777);
}

TEST_CASE("capture-and-detect pipeline without poison or attack") {
    fs::path out = fs::temp_directory_path() / "gl_run_basic";
    fs::remove_all(out);
    std::string body = R"({
      "model": { "layer_dims": [8, 16, 4] },
      "dataset": { "kind": "gaussian_blobs", "m": 8, "C": 4, "n": 64 },
      "batch_size": 4,
      "repetitions": 3,
      "master_seed": 11,
      "output_dir": ")" + out.generic_string() + R"("
    })";
    ExperimentConfig cfg = load_config(write_config("gl_basic.json", body));
    RunReport report = run_experiment(cfg);

    CHECK_FALSE(report.failed_stage.has_value());
    CHECK(report.quality.empty());  // no attack configured
    CHECK(report.detect.size() == 3);
    CHECK(fs::exists(out / "captures" / "cap0.hdr"));
    CHECK(fs::exists(out / "detect.csv"));
    CHECK(fs::exists(out / "report.jsonl"));

    // quality.csv exists but holds only its header line.
    std::string q = slurp(out / "quality.csv");
    CHECK(q.find("min_psnr") != std::string::npos);
    CHECK(std::count(q.begin(), q.end(), '\n') == 1);
}

TEST_CASE("full-run determinism: re-running overwrites with identical bytes") {
    fs::path out = fs::temp_directory_path() / "gl_det";
    fs::remove_all(out);
    std::string body = R"({
      "model": { "layer_dims": [8, 12, 4] },
      "dataset": { "kind": "gaussian_blobs", "m": 8, "C": 4, "n": 48 },
      "batch_size": 4,
      "repetitions": 2,
      "master_seed": 1234,
      "attack": { "method": "dlg", "iterations": 20 },
      "detect": { "dsnr": true, "variance": true, "lambda_layer": 1 },
      "output_dir": ")" + out.generic_string() + R"("
    })";
    ExperimentConfig cfg = load_config(write_config("gl_det.json", body));
    run_experiment(cfg);

    std::vector<std::string> files{"report.jsonl", "quality.csv", "detect.csv", "lambda.csv",
                                   "rounds.csv", "config.json", "theta_eval.f64",
                                   "captures/cap0.f64", "attack/rec0.x_hat.f64"};
    std::vector<std::string> first;
    for (const auto& f : files) first.push_back(slurp(out / f));

    run_experiment(cfg);
    for (std::size_t i = 0; i < files.size(); ++i) {
        INFO(files[i]);
        CHECK(slurp(out / files[i]) == first[i]);
    }
}

TEST_CASE("stage failure is recorded and later stages are skipped") {
    fs::path out = fs::temp_directory_path() / "gl_run_fail";
    fs::remove_all(out);
    // 8 samples for 4 clients of batch size 4: clients cannot fill a batch.
    std::string body = R"({
      "model": { "layer_dims": [8, 4] },
      "dataset": { "kind": "gaussian_blobs", "m": 8, "C": 4, "n": 8 },
      "batch_size": 4,
      "clients": 4,
      "repetitions": 2,
      "output_dir": ")" + out.generic_string() + R"("
    })";
    ExperimentConfig cfg = load_config(write_config("gl_fail.json", body));
    RunReport report = run_experiment(cfg);
    REQUIRE(report.failed_stage.has_value());
    CHECK(*report.failed_stage == "data");
    CHECK(report.detect.empty());
}

TEST_CASE("fishing poison raises reported d-snr over the paired clean run") {
    auto run_with = [&](const char* poison, const fs::path& out) {
        fs::remove_all(out);
        std::string body = R"({
          "model": { "layer_dims": [8, 16, 4] },
          "dataset": { "kind": "gaussian_blobs", "m": 8, "C": 4, "n": 64 },
          "batch_size": 4,
          "repetitions": 4,
          "master_seed": 99,
          "poison": { "kind": ")" + std::string(poison) + R"(", "target_class": 1 },
          "output_dir": ")" + out.generic_string() + R"("
        })";
        ExperimentConfig cfg = load_config(write_config("gl_fish.json", body));
        return run_experiment(cfg);
    };
    RunReport clean = run_with("none", fs::temp_directory_path() / "gl_fish_none");
    RunReport fish = run_with("fishing", fs::temp_directory_path() / "gl_fish_on");
    REQUIRE_FALSE(clean.failed_stage.has_value());
    REQUIRE_FALSE(fish.failed_stage.has_value());
    REQUIRE(fish.detect.size() == 4);
    // Same data walk, same batches: compare pairwise where a target-class
    // sample is present (the fishing row explodes there).
    std::size_t exceeded = 0;
    for (std::size_t i = 0; i < 4; ++i)
        if (fish.detect[i].has_dsnr && fish.detect[i].dsnr > clean.detect[i].dsnr) ++exceeded;
    CHECK(exceeded >= 3);
}

TEST_CASE("attacked quality rows carry one psnr per sample") {
    fs::path out = fs::temp_directory_path() / "gl_quality_rows";
    fs::remove_all(out);
    std::string body = R"({
      "model": { "layer_dims": [8, 12, 4] },
      "dataset": { "kind": "gaussian_blobs", "m": 8, "C": 4, "n": 48 },
      "aux_dataset": { "kind": "gaussian_blobs", "m": 8, "C": 4, "n": 32 },
      "batch_size": 4,
      "repetitions": 2,
      "master_seed": 13,
      "poison": { "kind": "eggv", "iterations": 100, "alpha_theta": 0.01, "alpha_phi": 0.01 },
      "attack": { "method": "dlg", "iterations": 25 },
      "output_dir": ")" + out.generic_string() + R"("
    })";
    ExperimentConfig cfg = load_config(write_config("gl_qrows.json", body));
    RunReport report = run_experiment(cfg);
    REQUIRE_FALSE(report.failed_stage.has_value());
    REQUIRE(report.quality.size() == 2);
    for (const auto& q : report.quality) {
        CHECK(q.per_sample_psnr.size() == 4);
        CHECK(q.per_sample_ssim.size() == 4);
        CHECK(q.min_psnr <= q.pruned_mean_psnr);
        CHECK(q.pruned_mean_psnr <= q.max_psnr);
    }
    CHECK(report.poisoned);
    CHECK(report.poison_final_moving_avg < report.poison_initial_loss);
}

TEST_CASE("re-emitting a report is byte-identical") {
    fs::path out = fs::temp_directory_path() / "gl_emit";
    fs::remove_all(out);
    std::string body = R"({
      "model": { "layer_dims": [8, 4] },
      "dataset": { "kind": "gaussian_blobs", "m": 8, "C": 4, "n": 32 },
      "batch_size": 4,
      "repetitions": 2,
      "master_seed": 5,
      "output_dir": ")" + out.generic_string() + R"("
    })";
    ExperimentConfig cfg = load_config(write_config("gl_emit.json", body));
    RunReport report = run_experiment(cfg);
    std::string first = slurp(out / "detect.csv");
    emit_report(report, out);
    CHECK(slurp(out / "detect.csv") == first);
}
