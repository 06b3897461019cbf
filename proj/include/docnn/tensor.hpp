#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace docnn {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles, last axis fastest. Every extent is >= 1.
//
// Feature maps use H x W x C. Convolution windows are always flattened in
// (dy, dx, c) order, i.e. the row-major order of a kh x kw x C block; kernels
// are stored so that their trailing axes match that order.
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::size_t offset(std::span<const std::size_t> index) const;
    std::size_t offset(std::initializer_list<std::size_t> index) const {
        return offset(std::span<const std::size_t>(index.begin(), index.size()));
    }
    Shape unravel(std::size_t offset) const;

    double& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
    double at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

    Tensor reshaped(Shape shape) const;
    void fill(double value);

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

struct Shape4 {
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t channels = 1;
    std::size_t batch = 1;
};

// Accepts H x W x C (batch 1) or N x H x W x C.
Shape4 describe(const Tensor& t);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
void add_into(Tensor& acc, const Tensor& b);
double max_abs(const Tensor& t);

// Mirror index into [0, n) without repeating the edge sample: -1 -> 1, n -> n-2.
std::size_t reflect_index(long i, std::size_t n);

Tensor pad_reflect(const Tensor& hwc, std::size_t margin);
// Adjoint of pad_reflect: gradients landing on mirrored border cells are
// accumulated back onto the interior cells they were copied from.
Tensor pad_reflect_adjoint(const Tensor& padded, std::size_t margin);
Tensor crop(const Tensor& hwc, std::size_t margin);

// im2col lowering of an already padded H x W x C map. Row r = y * W' + x holds
// the kh x kw x C window whose top-left corner is (y, x), flattened as
// (dy, dx, c). W' = W - kw + 1.
Tensor window_gather(const Tensor& padded, std::size_t kh, std::size_t kw);
// Adjoint of window_gather: sums each row back into the window it came from.
Tensor window_scatter(const Tensor& cols, const Shape& padded_shape, std::size_t kh, std::size_t kw);

}  // namespace docnn
