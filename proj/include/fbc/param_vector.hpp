#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fbc/rng.hpp"

namespace fbc {

// One named block of weights inside a flat parameter vector.
struct Segment {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 1;
    std::size_t offset = 0; // assigned by ParamVector

    std::size_t size() const { return rows * cols; }
};

/// Flat double-precision store for all trainable weights, addressed through
/// an ordered list of named (rows x cols) segments.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::vector<Segment> layout);

    static ParamVector random_normal(std::vector<Segment> layout, double stddev, Rng& rng);

    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    const std::vector<Segment>& layout() const { return layout_; }
    const Segment& segment(std::string_view name) const; // throws LayoutMismatch
    bool has_segment(std::string_view name) const;
    std::span<const double> segment_values(std::string_view name) const;
    std::span<double> segment_values(std::string_view name);

    bool same_layout(const ParamVector& other) const;
    bool all_finite() const;

private:
    std::vector<double> values_;
    std::vector<Segment> layout_;
};

/// Gradient with respect to a ParamVector; same length and coordinate order.
struct Gradient {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }
    double& operator[](std::size_t i) { return values[i]; }
};

double dot(const Gradient& a, const Gradient& b);
double norm(const Gradient& a);
Gradient operator+(const Gradient& a, const Gradient& b);
Gradient operator-(const Gradient& a, const Gradient& b);
Gradient operator*(double s, const Gradient& a);

} // namespace fbc
