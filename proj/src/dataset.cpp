#include "gl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gl/rng.hpp"

namespace gl {
namespace {

constexpr std::uint32_t kRawMagic = 0x53444C47;  // "GLDS" little-endian

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Balanced label assignment: class i*C/n pattern, then a seeded shuffle so
// batches are label-mixed. Counts per class stay within +-1.
std::vector<int> balanced_labels(std::size_t n, std::size_t C, Rng& rng) {
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % C);
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = rng.below(i);
        std::swap(y[i - 1], y[j]);
    }
    return y;
}

std::uint32_t read_u32_le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

float read_f32_le(std::istream& in) {
    std::uint32_t bits = read_u32_le(in);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

void write_f32_le(std::ostream& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32_le(out, bits);
}

}  // namespace

Batch Dataset::batch(std::size_t start, std::size_t count) const {
    if (start + count > size()) throw std::out_of_range("Dataset::batch: range past end");
    std::vector<double> bx(x.begin() + static_cast<std::ptrdiff_t>(start * m),
                           x.begin() + static_cast<std::ptrdiff_t>((start + count) * m));
    std::vector<int> by(y.begin() + static_cast<std::ptrdiff_t>(start),
                        y.begin() + static_cast<std::ptrdiff_t>(start + count));
    return Batch{Tensor({count, m}, std::move(bx)), std::move(by)};
}

std::vector<Batch> Dataset::batches(std::size_t b) const {
    if (b == 0) throw std::invalid_argument("Dataset::batches: batch size must be positive");
    std::vector<Batch> out;
    for (std::size_t start = 0; start + b <= size(); start += b) out.push_back(batch(start, b));
    return out;
}

SynthKind synth_kind_from_string(std::string_view s) {
    if (s == "gaussian_blobs") return SynthKind::GaussianBlobs;
    if (s == "stripe_patterns") return SynthKind::StripePatterns;
    if (s == "random_uniform") return SynthKind::RandomUniform;
    throw std::invalid_argument("unknown synthetic dataset kind '" + std::string(s) + "'");
}

std::string to_string(SynthKind k) {
    switch (k) {
        case SynthKind::GaussianBlobs: return "gaussian_blobs";
        case SynthKind::StripePatterns: return "stripe_patterns";
        case SynthKind::RandomUniform: return "random_uniform";
    }
    return "?";
}

Dataset synth_dataset(SynthKind kind, std::size_t m, std::size_t C, std::size_t n,
                      std::uint64_t seed) {
    if (m == 0 || C < 2) throw std::invalid_argument("synth_dataset: need m >= 1 and C >= 2");
    if (n < C) throw std::invalid_argument("synth_dataset: need at least one sample per class");

    Rng rng(seed);
    Dataset d;
    d.m = m;
    d.C = C;
    d.y = balanced_labels(n, C, rng);
    d.x.resize(n * m);

    switch (kind) {
        case SynthKind::GaussianBlobs: {
            // Class means in [0.25, 0.75] keep the +-3 sigma mass inside [0,1].
            std::vector<double> means(C * m);
            for (auto& v : means) v = rng.uniform(0.25, 0.75);
            const double sigma = 0.06;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j)
                    d.x[i * m + j] =
                        clamp01(means[static_cast<std::size_t>(d.y[i]) * m + j] +
                                rng.normal(0.0, sigma));
            break;
        }
        case SynthKind::StripePatterns: {
            // Class c alternates high/low runs of length c+1 with jitter.
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t run = static_cast<std::size_t>(d.y[i]) + 1;
                for (std::size_t j = 0; j < m; ++j) {
                    double base = ((j / run) % 2 == 0) ? 0.8 : 0.2;
                    d.x[i * m + j] = clamp01(base + rng.uniform(-0.08, 0.08));
                }
            }
            break;
        }
        case SynthKind::RandomUniform: {
            for (auto& v : d.x) v = rng.uniform();
            break;
        }
    }
    return d;
}

Dataset ingest_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ingest_csv: cannot open " + path.string());
    Dataset d;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(row, cell, ',')) {
            try {
                std::size_t used = 0;
                vals.push_back(std::stod(cell, &used));
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw std::runtime_error("ingest_csv: " + path.string() + " line " +
                                         std::to_string(line_no) + ": bad cell '" + cell + "'");
            }
        }
        if (vals.size() < 2)
            throw std::runtime_error("ingest_csv: " + path.string() + " line " +
                                     std::to_string(line_no) + ": need label plus values");
        if (d.m == 0) {
            d.m = vals.size() - 1;
        } else if (vals.size() - 1 != d.m) {
            throw std::runtime_error("ingest_csv: " + path.string() + " line " +
                                     std::to_string(line_no) + ": expected " +
                                     std::to_string(d.m) + " values");
        }
        double lbl = vals[0];
        if (lbl < 0 || lbl != std::floor(lbl))
            throw std::runtime_error("ingest_csv: " + path.string() + " line " +
                                     std::to_string(line_no) + ": bad label");
        d.y.push_back(static_cast<int>(lbl));
        for (std::size_t j = 1; j < vals.size(); ++j) d.x.push_back(clamp01(vals[j]));
    }
    if (d.size() == 0) throw std::runtime_error("ingest_csv: " + path.string() + " is empty");
    d.C = static_cast<std::size_t>(*std::max_element(d.y.begin(), d.y.end())) + 1;
    if (d.C < 2) d.C = 2;
    return d;
}

Dataset ingest_raw_f32(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("ingest_raw_f32: cannot open " + path.string());
    std::uint32_t magic = read_u32_le(in);
    std::uint32_t n = read_u32_le(in);
    std::uint32_t m = read_u32_le(in);
    std::uint32_t C = read_u32_le(in);
    if (!in || magic != kRawMagic)
        throw std::runtime_error("ingest_raw_f32: " + path.string() +
                                 ": bad magic at byte offset 0");
    if (n == 0 || m == 0 || C < 2)
        throw std::runtime_error("ingest_raw_f32: " + path.string() + ": bad header counts");

    Dataset d;
    d.m = m;
    d.C = C;
    d.x.resize(static_cast<std::size_t>(n) * m);
    d.y.resize(n);
    for (std::size_t i = 0; i < d.x.size(); ++i) d.x[i] = clamp01(read_f32_le(in));
    if (!in)
        throw std::runtime_error("ingest_raw_f32: " + path.string() +
                                 ": truncated values at byte offset " +
                                 std::to_string(16 + d.x.size() * 4));
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t lbl = read_u32_le(in);
        if (lbl >= C)
            throw std::runtime_error("ingest_raw_f32: " + path.string() + ": label " +
                                     std::to_string(lbl) + " out of range at sample " +
                                     std::to_string(i));
        d.y[i] = static_cast<int>(lbl);
    }
    if (!in) throw std::runtime_error("ingest_raw_f32: " + path.string() + ": truncated labels");
    return d;
}

void write_csv(const std::filesystem::path& path, const Dataset& d) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path.string());
    char buf[64];
    for (std::size_t i = 0; i < d.size(); ++i) {
        out << d.y[i];
        for (std::size_t j = 0; j < d.m; ++j) {
            std::snprintf(buf, sizeof buf, "%.9g", d.x[i * d.m + j]);
            out << ',' << buf;
        }
        out << '\n';
    }
}

double evaluate_accuracy(const ModelSpec& spec, const ParamVector& params, const Dataset& d) {
    if (d.size() == 0) throw std::invalid_argument("evaluate_accuracy: empty dataset");
    for (int y : d.y)
        if (y < 0 || static_cast<std::size_t>(y) >= spec.num_classes())
            throw std::invalid_argument("evaluate_accuracy: label out of range");
    Tensor logits = forward(spec, params, Tensor({d.size(), d.m}, d.x));
    std::size_t C = spec.num_classes();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < C; ++k)
            if (logits.at(i, k) > logits.at(i, best)) best = k;  // ties keep the lowest index
        if (best == static_cast<std::size_t>(d.y[i])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(d.size());
}

void write_raw_f32(const std::filesystem::path& path, const Dataset& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_raw_f32: cannot open " + path.string());
    write_u32_le(out, kRawMagic);
    write_u32_le(out, static_cast<std::uint32_t>(d.size()));
    write_u32_le(out, static_cast<std::uint32_t>(d.m));
    write_u32_le(out, static_cast<std::uint32_t>(d.C));
    for (double v : d.x) write_f32_le(out, static_cast<float>(v));
    for (int y : d.y) write_u32_le(out, static_cast<std::uint32_t>(y));
}

}  // namespace gl
