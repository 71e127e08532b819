#include "fbc/param_vector.hpp"

#include <cmath>

#include "fbc/errors.hpp"

namespace fbc {

ParamVector::ParamVector(std::vector<Segment> layout) : layout_(std::move(layout)) {
    std::size_t total = 0;
    for (auto& seg : layout_) {
        seg.offset = total;
        total += seg.size();
    }
    values_.assign(total, 0.0);
}

ParamVector ParamVector::random_normal(std::vector<Segment> layout, double stddev, Rng& rng) {
    ParamVector out(std::move(layout));
    for (auto& v : out.values_) v = rng.normal(0.0, stddev);
    return out;
}

const Segment& ParamVector::segment(std::string_view name) const {
    for (const auto& seg : layout_) {
        if (seg.name == name) return seg;
    }
    throw LayoutMismatch("no segment named '" + std::string(name) + "'");
}

bool ParamVector::has_segment(std::string_view name) const {
    for (const auto& seg : layout_) {
        if (seg.name == name) return true;
    }
    return false;
}

std::span<const double> ParamVector::segment_values(std::string_view name) const {
    const Segment& seg = segment(name);
    return {values_.data() + seg.offset, seg.size()};
}

std::span<double> ParamVector::segment_values(std::string_view name) {
    const Segment& seg = segment(name);
    return {values_.data() + seg.offset, seg.size()};
}

bool ParamVector::same_layout(const ParamVector& other) const {
    if (layout_.size() != other.layout_.size()) return false;
    for (std::size_t i = 0; i < layout_.size(); ++i) {
        const Segment& a = layout_[i];
        const Segment& b = other.layout_[i];
        if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
    }
    return true;
}

bool ParamVector::all_finite() const {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double dot(const Gradient& a, const Gradient& b) {
    if (a.size() != b.size()) throw LayoutMismatch("gradient length mismatch in dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const Gradient& a) {
    return std::sqrt(dot(a, a));
}

Gradient operator+(const Gradient& a, const Gradient& b) {
    if (a.size() != b.size()) throw LayoutMismatch("gradient length mismatch in +");
    Gradient out = a;
    for (std::size_t i = 0; i < b.size(); ++i) out[i] += b[i];
    return out;
}

Gradient operator-(const Gradient& a, const Gradient& b) {
    if (a.size() != b.size()) throw LayoutMismatch("gradient length mismatch in -");
    Gradient out = a;
    for (std::size_t i = 0; i < b.size(); ++i) out[i] -= b[i];
    return out;
}

Gradient operator*(double s, const Gradient& a) {
    Gradient out = a;
    for (auto& v : out.values) v *= s;
    return out;
}

} // namespace fbc
