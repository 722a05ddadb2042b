#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gl::io {

// Flat little-endian 64-bit float vector files, the persisted form of
// gradients, parameters, and reconstructions.
void write_f64(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64(const std::filesystem::path& path);

// Sidecar text headers: one "key value" pair per line.
using Header = std::vector<std::pair<std::string, std::string>>;
void write_header(const std::filesystem::path& path, const Header& h);
Header read_header(const std::filesystem::path& path);
std::string header_get(const Header& h, const std::string& key);

// Fixed float formatting (%.17g round-trips doubles exactly) so emitted
// files are byte-stable across runs.
std::string format_double(double v);

// Minimal CSV emitter; the whole file is buffered and written on close.
class CsvWriter {
public:
    explicit CsvWriter(std::filesystem::path path) : path_(std::move(path)) {}
    ~CsvWriter() { close(); }
    void row(const std::vector<std::string>& cells);
    void close();

private:
    std::filesystem::path path_;
    std::string buf_;
    bool closed_ = false;
};

}  // namespace gl::io
