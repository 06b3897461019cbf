#include "docnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace docnn {

std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one axis");
    for (auto e : shape)
        if (e == 0) throw std::invalid_argument("tensor extent must be positive: " + shape_string(shape));
}

void require_hwc(const Tensor& t, const char* what) {
    if (t.rank() != 3) throw std::invalid_argument(std::string(what) + ": expected H x W x C tensor, got " + shape_string(t.shape()));
}

}  // namespace

Tensor::Tensor() : shape_{1}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    check_shape(shape_);
    if (data_.size() != element_count(shape_))
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                                    shape_string(shape_));
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) throw std::out_of_range("tensor axis out of range");
    return shape_[axis];
}

std::size_t Tensor::offset(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) throw std::invalid_argument("index rank does not match tensor rank");
    std::size_t off = 0;
    for (std::size_t a = 0; a < shape_.size(); ++a) {
        if (index[a] >= shape_[a]) throw std::out_of_range("tensor index out of range");
        off = off * shape_[a] + index[a];
    }
    return off;
}

Shape Tensor::unravel(std::size_t offset) const {
    if (offset >= data_.size()) throw std::out_of_range("tensor offset out of range");
    Shape index(shape_.size());
    for (std::size_t a = shape_.size(); a-- > 0;) {
        index[a] = offset % shape_[a];
        offset /= shape_[a];
    }
    return index;
}

Tensor Tensor::reshaped(Shape shape) const {
    if (element_count(shape) != data_.size())
        throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Shape4 describe(const Tensor& t) {
    const auto& s = t.shape();
    if (s.size() == 3) return {s[0], s[1], s[2], 1};
    if (s.size() == 4) return {s[1], s[2], s[3], s[0]};
    throw std::invalid_argument("describe: expected rank 3 or 4, got " + shape_string(s));
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    add_into(out, b);
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (auto& v : out.data()) v *= s;
    return out;
}

void add_into(Tensor& acc, const Tensor& b) {
    if (acc.shape() != b.shape())
        throw std::invalid_argument("shape mismatch: " + shape_string(acc.shape()) + " vs " + shape_string(b.shape()));
    auto dst = acc.data();
    auto src = b.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.data()) m = std::max(m, std::abs(v));
    return m;
}

std::size_t reflect_index(long i, std::size_t n) {
    if (n == 1) return 0;
    const long period = 2 * (static_cast<long>(n) - 1);
    i %= period;
    if (i < 0) i += period;
    if (i >= static_cast<long>(n)) i = period - i;
    return static_cast<std::size_t>(i);
}

Tensor pad_reflect(const Tensor& hwc, std::size_t margin) {
    require_hwc(hwc, "pad_reflect");
    const auto [h, w, c, n] = describe(hwc);
    // Extent-1 axes have nothing to mirror and replicate their only sample.
    if ((h > 1 && margin >= h) || (w > 1 && margin >= w))
        throw std::invalid_argument("pad_reflect: margin " + std::to_string(margin) + " too large for " + shape_string(hwc.shape()));
    if (margin == 0) return hwc;
    const std::size_t ph = h + 2 * margin, pw = w + 2 * margin;
    Tensor out({ph, pw, c});
    const auto src = hwc.data();
    auto dst = out.data();
    for (std::size_t y = 0; y < ph; ++y) {
        const std::size_t sy = reflect_index(static_cast<long>(y) - static_cast<long>(margin), h);
        for (std::size_t x = 0; x < pw; ++x) {
            const std::size_t sx = reflect_index(static_cast<long>(x) - static_cast<long>(margin), w);
            std::copy_n(&src[(sy * w + sx) * c], c, &dst[(y * pw + x) * c]);
        }
    }
    return out;
}

Tensor pad_reflect_adjoint(const Tensor& padded, std::size_t margin) {
    require_hwc(padded, "pad_reflect_adjoint");
    if (margin == 0) return padded;
    const auto [ph, pw, c, n] = describe(padded);
    if (ph <= 2 * margin || pw <= 2 * margin) throw std::invalid_argument("pad_reflect_adjoint: margin too large");
    const std::size_t h = ph - 2 * margin, w = pw - 2 * margin;
    Tensor out({h, w, c});
    const auto src = padded.data();
    auto dst = out.data();
    for (std::size_t y = 0; y < ph; ++y) {
        const std::size_t sy = reflect_index(static_cast<long>(y) - static_cast<long>(margin), h);
        for (std::size_t x = 0; x < pw; ++x) {
            const std::size_t sx = reflect_index(static_cast<long>(x) - static_cast<long>(margin), w);
            for (std::size_t k = 0; k < c; ++k) dst[(sy * w + sx) * c + k] += src[(y * pw + x) * c + k];
        }
    }
    return out;
}

Tensor crop(const Tensor& hwc, std::size_t margin) {
    require_hwc(hwc, "crop");
    if (margin == 0) return hwc;
    const auto [ph, pw, c, n] = describe(hwc);
    if (ph <= 2 * margin || pw <= 2 * margin) throw std::invalid_argument("crop: margin too large");
    const std::size_t h = ph - 2 * margin, w = pw - 2 * margin;
    Tensor out({h, w, c});
    for (std::size_t y = 0; y < h; ++y)
        std::copy_n(&hwc.data()[((y + margin) * pw + margin) * c], w * c, &out.data()[y * w * c]);
    return out;
}

Tensor window_gather(const Tensor& padded, std::size_t kh, std::size_t kw) {
    require_hwc(padded, "window_gather");
    const auto [ph, pw, c, n] = describe(padded);
    if (kh == 0 || kw == 0) throw std::invalid_argument("window_gather: window extents must be positive");
    if (ph < kh || pw < kw)
        throw std::invalid_argument("window_gather: " + shape_string(padded.shape()) + " is too small for a " +
                                    std::to_string(kh) + "x" + std::to_string(kw) + " window");
    const std::size_t oh = ph - kh + 1, ow = pw - kw + 1;
    const std::size_t row_len = kh * kw * c;
    Tensor cols({oh * ow, row_len});
    const auto src = padded.data();
    auto dst = cols.data();
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double* row = &dst[(y * ow + x) * row_len];
            for (std::size_t dy = 0; dy < kh; ++dy) {
                // kw * c consecutive values per window row
                std::copy_n(&src[((y + dy) * pw + x) * c], kw * c, row + dy * kw * c);
            }
        }
    return cols;
}

Tensor window_scatter(const Tensor& cols, const Shape& padded_shape, std::size_t kh, std::size_t kw) {
    Tensor out(padded_shape);
    const auto [ph, pw, c, n] = describe(out);
    if (ph < kh || pw < kw) throw std::invalid_argument("window_scatter: window larger than map");
    const std::size_t oh = ph - kh + 1, ow = pw - kw + 1;
    const std::size_t row_len = kh * kw * c;
    if (cols.shape() != Shape{oh * ow, row_len})
        throw std::invalid_argument("window_scatter: column matrix " + shape_string(cols.shape()) + " does not match map");
    const auto src = cols.data();
    auto dst = out.data();
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            const double* row = &src[(y * ow + x) * row_len];
            for (std::size_t dy = 0; dy < kh; ++dy) {
                double* base = &dst[((y + dy) * pw + x) * c];
                for (std::size_t j = 0; j < kw * c; ++j) base[j] += row[dy * kw * c + j];
            }
        }
    return out;
}

}  // namespace docnn
