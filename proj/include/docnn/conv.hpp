#pragma once

#include <cstddef>

#include "docnn/tensor.hpp"

namespace docnn {

// Standard convolution kernel: weights [C_out, kh, kw, C_in], bias [C_out].
struct StdKernel {
    Tensor weights;
    Tensor bias;

    std::size_t out_channels() const { return weights.extent(0); }
    std::size_t kernel_h() const { return weights.extent(1); }
    std::size_t kernel_w() const { return weights.extent(2); }
    std::size_t in_channels() const { return weights.extent(3); }
    void validate() const;
};

// Depthwise kernel: weights [kh*kw, D_mul, C_in]. Output channel for input
// channel c and multiplier slot d is c * D_mul + d.
struct DepthwiseKernel {
    Tensor weights;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;

    std::size_t taps() const { return weights.extent(0); }
    std::size_t depth_multiplier() const { return weights.extent(1); }
    std::size_t in_channels() const { return weights.extent(2); }
    void validate() const;
};

// Depthwise over-parameterized kernel: a depthwise stage D followed by a
// dense contraction W [C_out, D_mul, C_in] over every (d, c) feature, plus bias.
struct DoConvKernel {
    DepthwiseKernel depthwise;
    Tensor weights;
    Tensor bias;

    std::size_t out_channels() const { return weights.extent(0); }
    std::size_t depth_multiplier() const { return depthwise.depth_multiplier(); }
    std::size_t in_channels() const { return depthwise.in_channels(); }
    std::size_t kernel_h() const { return depthwise.kernel_h; }
    std::size_t kernel_w() const { return depthwise.kernel_w; }
    // Checks shared C_in and D_mul between D and W. The D_mul >= kh*kw
    // over-parameterization bound is a network-level rule, not enforced here.
    void validate() const;
};

// Reflect margin needed to keep H x W for an odd kernel extent.
std::size_t same_margin(std::size_t kernel_extent);

Tensor conv_std(const Tensor& input, const StdKernel& k, bool same_pad);
Tensor conv_depthwise(const Tensor& input, const DepthwiseKernel& k, bool same_pad);

// Two-stage evaluation: depthwise features P' = D o P per window, then
// O = W * P' + bias.
Tensor doconv_compose(const Tensor& input, const DoConvKernel& k, bool same_pad);

// Folds (D, W) into one standard kernel: Q[o, i, c] = sum_d D[i, d, c] W[o, d, c].
StdKernel doconv_fold(const DoConvKernel& k);

// Identity depthwise stage: D[i, d, c] = 1 when i == d, else 0. D_mul >= kh*kw.
DepthwiseKernel identity_depthwise(std::size_t kh, std::size_t kw, std::size_t depth_multiplier, std::size_t in_channels);

void add_channel_bias(Tensor& hwc, const Tensor& bias);

Tensor relu(const Tensor& t);
Tensor gap(const Tensor& hwc);
Tensor fully_connected(const Tensor& v, const Tensor& weights, const Tensor& bias);
Tensor softmax(const Tensor& v);

}  // namespace docnn
