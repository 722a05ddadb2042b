#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gl/tensor.hpp"

namespace gl {

struct ParamSegment {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t count() const { return shape_product(shape); }
};

// Named segments over one flat vector of doubles. Segments tile the vector
// exactly, and offsets are stable for the lifetime of a layout — the
// fixed-position gradient projector depends on that.
class ParamVector {
public:
    ParamVector() = default;
    ParamVector(std::vector<ParamSegment> segments, std::vector<double> values);

    // Zero vector with the same layout.
    static ParamVector zeros_like(const ParamVector& other);

    std::size_t size() const { return values_.size(); }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    const std::vector<ParamSegment>& segments() const { return segments_; }
    bool has_segment(std::string_view name) const;
    const ParamSegment& segment(std::string_view name) const;
    std::span<const double> segment_values(std::string_view name) const;
    // Detached tensor copy of one segment.
    Tensor segment_tensor(std::string_view name) const;

    bool same_layout(const ParamVector& other) const;

    // theta + c * other, layouts must match.
    ParamVector axpy(double c, const ParamVector& other) const;

private:
    std::vector<ParamSegment> segments_;
    std::vector<double> values_;
};

}  // namespace gl
