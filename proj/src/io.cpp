#include "gl/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gl::io {
namespace {

void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

void write_f64(const std::filesystem::path& path, std::span<const double> values) {
    std::string buf;
    buf.reserve(values.size() * 8);
    for (double d : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        put_u64_le(buf, bits);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_f64: cannot open " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<double> read_f64(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_f64: cannot open " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() % 8 != 0)
        throw std::runtime_error("read_f64: " + path.string() + " length not a multiple of 8");
    std::vector<double> out(buf.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b)
            bits = (bits << 8) | static_cast<unsigned char>(buf[i * 8 + static_cast<std::size_t>(b)]);
        std::memcpy(&out[i], &bits, 8);
    }
    return out;
}

void write_header(const std::filesystem::path& path, const Header& h) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_header: cannot open " + path.string());
    for (const auto& [k, v] : h) out << k << ' ' << v << '\n';
}

Header read_header(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_header: cannot open " + path.string());
    Header h;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto sp = line.find(' ');
        if (sp == std::string::npos)
            throw std::runtime_error("read_header: malformed line in " + path.string());
        h.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
    return h;
}

std::string header_get(const Header& h, const std::string& key) {
    for (const auto& [k, v] : h)
        if (k == key) return v;
    throw std::runtime_error("header_get: missing key '" + key + "'");
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) buf_.push_back(',');
        buf_ += cells[i];
    }
    buf_.push_back('\n');
}

void CsvWriter::close() {
    if (closed_) return;
    closed_ = true;
    std::ofstream out(path_, std::ios::binary);
    if (!out) throw std::runtime_error("CsvWriter: cannot open " + path_.string());
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
}

}  // namespace gl::io
