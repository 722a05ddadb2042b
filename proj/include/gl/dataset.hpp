#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gl/model.hpp"

namespace gl {

// Labeled samples with values in [0, 1]. Ingestion clamps; synthesis
// constructs in range.
struct Dataset {
    std::size_t m = 0;
    std::size_t C = 0;
    std::vector<double> x;  // n x m row-major
    std::vector<int> y;     // length n

    std::size_t size() const { return y.size(); }
    Batch batch(std::size_t start, std::size_t count) const;
    // Consecutive batches of size b (remainder dropped).
    std::vector<Batch> batches(std::size_t b) const;
};

enum class SynthKind { GaussianBlobs, StripePatterns, RandomUniform };

SynthKind synth_kind_from_string(std::string_view s);
std::string to_string(SynthKind k);

Dataset synth_dataset(SynthKind kind, std::size_t m, std::size_t C, std::size_t n,
                      std::uint64_t seed);

// CSV rows are "label,v1,...,vm". The raw format is a 16-byte header
// (magic "GLDS", n, m, C as little-endian u32) followed by n*m
// little-endian f32 values and n u32 labels.
Dataset ingest_csv(const std::filesystem::path& path);
Dataset ingest_raw_f32(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const Dataset& d);
void write_raw_f32(const std::filesystem::path& path, const Dataset& d);

// Argmax-logit accuracy; ties break toward the lowest class index.
double evaluate_accuracy(const ModelSpec& spec, const ParamVector& params, const Dataset& d);

}  // namespace gl
