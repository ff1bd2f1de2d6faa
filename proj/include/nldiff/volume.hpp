#ifndef NLDIFF_VOLUME_HPP
#define NLDIFF_VOLUME_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nldiff/errors.hpp"

namespace nldiff {

namespace detail {

/// Compensated (Kahan) sum. Sequential and deterministic; keeps the error of
/// long reductions far below the tolerances the filter invariants are
/// checked at.
inline double kahan_sum(std::span<const double> values) {
    double sum = 0.0;
    double carry = 0.0;
    for (double v : values) {
        const double y = v - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    return sum;
}

} // namespace detail

/// Dense greyscale image/volume on a rectangular grid, 1 to 3 axes.
/// Values are stored flat with the last axis fastest; dims are listed
/// slowest first. Each axis carries its own physical spacing so that
/// anisotropic volumes (e.g. CT with coarse slice distance) keep their
/// geometry through the filter.
class ImageVolume {
public:
    ImageVolume() = default;

    ImageVolume(std::vector<std::size_t> dims, std::vector<double> data,
                std::vector<double> spacing = {})
        : dims_(std::move(dims)), spacing_(std::move(spacing)), data_(std::move(data)) {
        if (dims_.empty() || dims_.size() > 3)
            throw std::invalid_argument("ImageVolume: rank must be 1, 2 or 3");
        std::size_t m = 1;
        for (std::size_t d : dims_) {
            if (d == 0) throw std::invalid_argument("ImageVolume: zero-length axis");
            m *= d;
        }
        if (data_.size() != m)
            throw std::invalid_argument("ImageVolume: data length " + std::to_string(data_.size()) +
                                        " does not match dims product " + std::to_string(m));
        if (spacing_.empty()) spacing_.assign(dims_.size(), 1.0);
        if (spacing_.size() != dims_.size())
            throw std::invalid_argument("ImageVolume: spacing rank mismatch");
        for (double h : spacing_)
            if (!(h > 0.0)) throw std::invalid_argument("ImageVolume: spacing must be positive");
    }

    static ImageVolume zeros(std::vector<std::size_t> dims, std::vector<double> spacing = {}) {
        std::size_t m = 1;
        for (std::size_t d : dims) m *= d;
        return ImageVolume(std::move(dims), std::vector<double>(m, 0.0), std::move(spacing));
    }

    std::size_t rank() const { return dims_.size(); }
    const std::vector<std::size_t>& dims() const { return dims_; }
    const std::vector<double>& spacing() const { return spacing_; }
    std::size_t size() const { return data_.size(); }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    // 2-D convenience accessor, row-major: (row, col).
    double at(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }
    double& at(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }

    double min_value() const { return *std::min_element(data_.begin(), data_.end()); }
    double max_value() const { return *std::max_element(data_.begin(), data_.end()); }

    bool same_shape(const ImageVolume& other) const { return dims_ == other.dims_; }

private:
    std::vector<std::size_t> dims_;
    std::vector<double> spacing_;
    std::vector<double> data_;
};

/// One grid line of a volume along a fixed axis: flat start offset, stride
/// between consecutive samples, and sample count.
struct AxisLine {
    std::size_t offset;
    std::size_t stride;
    std::size_t length;
};

/// All lines of `dims` along axis `axis`, in a fixed deterministic order.
/// Over one axis the lines partition the index set: every pixel appears in
/// exactly one line.
inline std::vector<AxisLine> axis_lines(const std::vector<std::size_t>& dims, std::size_t axis) {
    if (axis >= dims.size()) throw std::invalid_argument("axis_lines: axis out of range");
    std::size_t outer = 1, inner = 1;
    for (std::size_t j = 0; j < axis; ++j) outer *= dims[j];
    for (std::size_t j = axis + 1; j < dims.size(); ++j) inner *= dims[j];

    std::vector<AxisLine> lines;
    lines.reserve(outer * inner);
    const std::size_t block = dims[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i)
            lines.push_back({o * block + i, inner, dims[axis]});
    return lines;
}

inline void gather_line(const ImageVolume& v, const AxisLine& line, std::vector<double>& out) {
    out.resize(line.length);
    std::size_t idx = line.offset;
    for (std::size_t i = 0; i < line.length; ++i, idx += line.stride) out[i] = v[idx];
}

/// Average grey value of the volume.
inline double mean_grey(const ImageVolume& v) {
    if (v.size() == 0) throw std::invalid_argument("mean_grey: empty volume");
    return detail::kahan_sum(v.data()) / static_cast<double>(v.size());
}

enum class Norm { l1, l2, linf };

namespace detail {

inline double vector_norm(std::span<const double> x, Norm norm) {
    switch (norm) {
        case Norm::l1: {
            double s = 0, c = 0;
            for (double v : x) {
                const double y = std::fabs(v) - c;
                const double t = s + y;
                c = (t - s) - y;
                s = t;
            }
            return s;
        }
        case Norm::l2: {
            double s = 0, c = 0;
            for (double v : x) {
                const double y = v * v - c;
                const double t = s + y;
                c = (t - s) - y;
                s = t;
            }
            return std::sqrt(s);
        }
        case Norm::linf: {
            double s = 0;
            for (double v : x) s = std::max(s, std::fabs(v));
            return s;
        }
    }
    return 0.0;
}

} // namespace detail

/// Relative distance of the image to its own mean, ||U - mu*1|| / ||mu*1||.
/// The norm defaults to Euclidean; the settling criterion is defined on it.
inline double rel_dist_to_mean(const ImageVolume& v, Norm norm = Norm::l2) {
    const double mu = mean_grey(v);
    if (mu == 0.0) throw numerical_error("rel_dist_to_mean: mean grey level is zero");
    std::vector<double> dev(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) dev[i] = v[i] - mu;
    std::vector<double> base(v.size(), mu);
    return detail::vector_norm(dev, norm) / detail::vector_norm(base, norm);
}

/// Affine min-max rescale to [0,1]. A constant image has no range to map;
/// its value is clamped into [0,1] so the operation stays idempotent.
inline ImageVolume normalized(const ImageVolume& v) {
    const double lo = v.min_value();
    const double hi = v.max_value();
    std::vector<double> data(v.data().begin(), v.data().end());
    if (hi > lo) {
        const double scale = 1.0 / (hi - lo);
        for (double& x : data) x = (x - lo) * scale;
    } else {
        for (double& x : data) x = std::clamp(x, 0.0, 1.0);
    }
    return ImageVolume(v.dims(), std::move(data), v.spacing());
}

} // namespace nldiff

#endif
