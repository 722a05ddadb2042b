#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "gl/dataset.hpp"
#include "gl/eggv.hpp"
#include "gl/model.hpp"
#include "gl/pgla.hpp"

namespace gl {

// One source of data for an experiment: synthesized, or loaded from disk
// (csv / raw_f32). A zero seed means "derive from the master seed".
struct DatasetConfig {
    bool synthetic = true;
    SynthKind kind = SynthKind::GaussianBlobs;
    std::size_t m = 16;
    std::size_t C = 4;
    std::size_t n = 64;
    std::uint64_t seed = 0;
    std::string path;
    std::string format = "csv";  // csv | raw_f32
};

struct PoisonSettings {
    enum class Kind { None, Eggv, Fishing };
    Kind kind = Kind::None;
    eggv::PoisonConfig eggv;
    int fishing_target = 0;
    int round = 0;  // the round whose distributed model is the poisoned one
};

struct DetectSettings {
    bool dsnr = true;
    bool variance = true;
    int lambda_layer = -1;  // -1 disables the lambda profile
};

// Declarative experiment description. Configs are exhaustive on save so a
// run directory always records every knob that produced it.
struct ExperimentConfig {
    ModelSpec model;
    InitScheme init_scheme = InitScheme::Random;
    std::uint64_t init_seed = 0;  // 0 -> derived from master_seed
    DatasetConfig dataset;
    std::optional<DatasetConfig> aux_dataset;
    std::size_t batch_size = 8;
    std::size_t clients = 1;
    int rounds = 1;
    double learning_rate = 0.1;
    int repetitions = 100;  // evaluation batches for attack/detect stages
    PoisonSettings poison;
    std::optional<pgla::AttackConfig> attack;
    DetectSettings detect;
    std::string output_dir;
    std::uint64_t master_seed = 42;

    void validate() const;
};

// Strict parse: unknown keys are rejected with their full path, values are
// range-checked, referenced files must exist, and the output directory
// must be writable. GL_-prefixed environment variables override config
// keys one-to-one (GL_BATCH_SIZE, GL_POISON_RHO, ...).
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);
std::string config_to_json_string(const ExperimentConfig& cfg);
ExperimentConfig config_from_json_string(const std::string& text);

Dataset realize_dataset(const DatasetConfig& dc, std::uint64_t master_seed,
                        std::string_view stage);

}  // namespace gl
