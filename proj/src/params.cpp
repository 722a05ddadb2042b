#include "gl/params.hpp"

#include <sstream>
#include <stdexcept>

namespace gl {

ParamVector::ParamVector(std::vector<ParamSegment> segments, std::vector<double> values)
    : segments_(std::move(segments)), values_(std::move(values)) {
    std::size_t expected = 0;
    for (const auto& s : segments_) {
        if (s.offset != expected) {
            std::ostringstream os;
            os << "ParamVector: segment '" << s.name << "' at offset " << s.offset
               << ", expected " << expected << " (segments must tile the vector)";
            throw std::invalid_argument(os.str());
        }
        expected += s.count();
    }
    if (expected != values_.size()) {
        std::ostringstream os;
        os << "ParamVector: segments cover " << expected << " values, vector holds "
           << values_.size();
        throw std::invalid_argument(os.str());
    }
}

ParamVector ParamVector::zeros_like(const ParamVector& other) {
    return ParamVector(other.segments_, std::vector<double>(other.size(), 0.0));
}

bool ParamVector::has_segment(std::string_view name) const {
    for (const auto& s : segments_)
        if (s.name == name) return true;
    return false;
}

const ParamSegment& ParamVector::segment(std::string_view name) const {
    for (const auto& s : segments_)
        if (s.name == name) return s;
    throw std::out_of_range("ParamVector: no segment named '" + std::string(name) + "'");
}

std::span<const double> ParamVector::segment_values(std::string_view name) const {
    const ParamSegment& s = segment(name);
    return std::span<const double>(values_).subspan(s.offset, s.count());
}

Tensor ParamVector::segment_tensor(std::string_view name) const {
    const ParamSegment& s = segment(name);
    auto vals = segment_values(name);
    return Tensor(s.shape, std::vector<double>(vals.begin(), vals.end()));
}

bool ParamVector::same_layout(const ParamVector& other) const {
    if (segments_.size() != other.segments_.size() || size() != other.size()) return false;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        if (segments_[i].name != other.segments_[i].name ||
            segments_[i].shape != other.segments_[i].shape ||
            segments_[i].offset != other.segments_[i].offset)
            return false;
    }
    return true;
}

ParamVector ParamVector::axpy(double c, const ParamVector& other) const {
    if (!same_layout(other))
        throw std::invalid_argument("ParamVector::axpy: layouts differ");
    std::vector<double> out(values_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * other.values_[i];
    return ParamVector(segments_, std::move(out));
}

}  // namespace gl
