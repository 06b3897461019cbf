#include "docnn/conv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gemm.hpp"

namespace docnn {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void require_input(const Tensor& input, std::size_t channels, const char* op) {
    require(input.rank() == 3, std::string(op) + ": input must be H x W x C, got " + shape_string(input.shape()));
    require(input.extent(2) == channels, std::string(op) + ": input has " + std::to_string(input.extent(2)) +
                                             " channels, kernel expects " + std::to_string(channels));
}

Tensor pad_for(const Tensor& input, std::size_t kh, std::size_t kw, bool same_pad, const char* op) {
    if (same_pad) {
        require(kh == kw, std::string(op) + ": same padding needs a square kernel");
        return pad_reflect(input, same_margin(kh));
    }
    require(input.extent(0) >= kh && input.extent(1) >= kw,
            std::string(op) + ": input " + shape_string(input.shape()) + " smaller than kernel");
    return input;
}

}  // namespace

void StdKernel::validate() const {
    require(weights.rank() == 4, "StdKernel weights must be [C_out, kh, kw, C_in], got " + shape_string(weights.shape()));
    require(kernel_h() % 2 == 1 && kernel_w() % 2 == 1, "StdKernel spatial extents must be odd");
    require(bias.shape() == Shape{out_channels()}, "StdKernel bias must be [C_out]");
}

void DepthwiseKernel::validate() const {
    require(weights.rank() == 3, "DepthwiseKernel weights must be [kh*kw, D_mul, C_in], got " + shape_string(weights.shape()));
    require(kernel_h * kernel_w == taps(), "DepthwiseKernel tap count does not match kh*kw");
    require(kernel_h % 2 == 1 && kernel_w % 2 == 1, "DepthwiseKernel spatial extents must be odd");
}

void DoConvKernel::validate() const {
    depthwise.validate();
    require(weights.rank() == 3, "DoConvKernel W must be [C_out, D_mul, C_in], got " + shape_string(weights.shape()));
    require(weights.extent(1) == depthwise.depth_multiplier(), "DoConvKernel: D_mul mismatch between D and W");
    require(weights.extent(2) == depthwise.in_channels(), "DoConvKernel: C_in mismatch between D and W");
    require(bias.shape() == Shape{out_channels()}, "DoConvKernel bias must be [C_out]");
}

std::size_t same_margin(std::size_t kernel_extent) {
    require(kernel_extent % 2 == 1, "same padding needs an odd kernel extent");
    return (kernel_extent - 1) / 2;
}

void add_channel_bias(Tensor& hwc, const Tensor& bias) {
    const std::size_t c = hwc.shape().back();
    require(bias.size() == c, "bias length does not match channel count");
    auto d = hwc.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += bias[i % c];
}

Tensor conv_std(const Tensor& input, const StdKernel& k, bool same_pad) {
    k.validate();
    require_input(input, k.in_channels(), "conv_std");
    const std::size_t kh = k.kernel_h(), kw = k.kernel_w();
    const Tensor padded = pad_for(input, kh, kw, same_pad, "conv_std");
    const std::size_t oh = padded.extent(0) - kh + 1, ow = padded.extent(1) - kw + 1;
    const std::size_t cout = k.out_channels(), row_len = kh * kw * k.in_channels();

    Tensor out({oh, ow, cout});
    auto o = detail::as_matrix(out, oh * ow, cout);
    if (kh == 1 && kw == 1) {
        o.noalias() = detail::as_matrix(padded, oh * ow, row_len) * detail::as_matrix(k.weights, cout, row_len).transpose();
    } else {
        const Tensor cols = window_gather(padded, kh, kw);
        o.noalias() = detail::as_matrix(cols, oh * ow, row_len) * detail::as_matrix(k.weights, cout, row_len).transpose();
    }
    add_channel_bias(out, k.bias);
    return out;
}

Tensor conv_depthwise(const Tensor& input, const DepthwiseKernel& k, bool same_pad) {
    k.validate();
    require_input(input, k.in_channels(), "conv_depthwise");
    const std::size_t kh = k.kernel_h, kw = k.kernel_w;
    const Tensor padded = pad_for(input, kh, kw, same_pad, "conv_depthwise");
    const std::size_t oh = padded.extent(0) - kh + 1, ow = padded.extent(1) - kw + 1;
    const std::size_t cin = k.in_channels(), dmul = k.depth_multiplier(), taps = k.taps();

    const Tensor cols = window_gather(padded, kh, kw);
    Tensor out({oh, ow, cin * dmul});
    const auto w = k.weights.data();
    const auto src = cols.data();
    auto dst = out.data();
    for (std::size_t p = 0; p < oh * ow; ++p) {
        const double* window = &src[p * taps * cin];
        double* o = &dst[p * cin * dmul];
        for (std::size_t i = 0; i < taps; ++i)
            for (std::size_t d = 0; d < dmul; ++d)
                for (std::size_t c = 0; c < cin; ++c) o[c * dmul + d] += w[(i * dmul + d) * cin + c] * window[i * cin + c];
    }
    return out;
}

Tensor doconv_compose(const Tensor& input, const DoConvKernel& k, bool same_pad) {
    k.validate();
    const Tensor features = conv_depthwise(input, k.depthwise, same_pad);
    const std::size_t oh = features.extent(0), ow = features.extent(1);
    const std::size_t cout = k.out_channels(), cin = k.in_channels(), dmul = k.depth_multiplier();

    // W reordered to match the (c, d) channel order of the depthwise stage.
    Tensor mix({cout, cin * dmul});
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t d = 0; d < dmul; ++d)
            for (std::size_t c = 0; c < cin; ++c) mix[o * cin * dmul + c * dmul + d] = k.weights[(o * dmul + d) * cin + c];

    Tensor out({oh, ow, cout});
    detail::as_matrix(out, oh * ow, cout).noalias() =
        detail::as_matrix(features, oh * ow, cin * dmul) * detail::as_matrix(mix, cout, cin * dmul).transpose();
    add_channel_bias(out, k.bias);
    return out;
}

StdKernel doconv_fold(const DoConvKernel& k) {
    k.validate();
    const std::size_t cout = k.out_channels(), cin = k.in_channels(), dmul = k.depth_multiplier();
    const std::size_t taps = k.depthwise.taps();
    Tensor q({cout, k.kernel_h(), k.kernel_w(), cin});
    const auto dw = k.depthwise.weights.data();
    const auto w = k.weights.data();
    auto dst = q.data();
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t i = 0; i < taps; ++i)
            for (std::size_t c = 0; c < cin; ++c) {
                double acc = 0.0;
                for (std::size_t d = 0; d < dmul; ++d) acc += dw[(i * dmul + d) * cin + c] * w[(o * dmul + d) * cin + c];
                dst[(o * taps + i) * cin + c] = acc;
            }
    return StdKernel{std::move(q), k.bias};
}

DepthwiseKernel identity_depthwise(std::size_t kh, std::size_t kw, std::size_t depth_multiplier, std::size_t in_channels) {
    const std::size_t taps = kh * kw;
    require(depth_multiplier >= taps, "identity depthwise stage needs D_mul >= kh*kw");
    Tensor d({taps, depth_multiplier, in_channels});
    for (std::size_t i = 0; i < taps; ++i)
        for (std::size_t c = 0; c < in_channels; ++c) d[(i * depth_multiplier + i) * in_channels + c] = 1.0;
    return DepthwiseKernel{std::move(d), kh, kw};
}

Tensor relu(const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor gap(const Tensor& hwc) {
    require(hwc.rank() == 3, "gap: input must be H x W x C");
    const std::size_t n = hwc.extent(0) * hwc.extent(1), c = hwc.extent(2);
    Tensor out({c});
    const auto src = hwc.data();
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t k = 0; k < c; ++k) out[k] += src[p * c + k];
    for (auto& v : out.data()) v /= static_cast<double>(n);
    return out;
}

Tensor fully_connected(const Tensor& v, const Tensor& weights, const Tensor& bias) {
    require(v.rank() == 1, "fully_connected: input must be a vector");
    require(weights.rank() == 2 && weights.extent(1) == v.size(),
            "fully_connected: weights " + shape_string(weights.shape()) + " do not match input length " + std::to_string(v.size()));
    require(bias.shape() == Shape{weights.extent(0)}, "fully_connected: bias must be [K]");
    const std::size_t k = weights.extent(0), c = v.size();
    Tensor out = bias;
    for (std::size_t r = 0; r < k; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += weights[r * c + j] * v[j];
        out[r] += acc;
    }
    return out;
}

Tensor softmax(const Tensor& v) {
    require(v.rank() == 1, "softmax: input must be a vector");
    const double m = *std::max_element(v.data().begin(), v.data().end());
    Tensor out = v;
    double sum = 0.0;
    for (auto& x : out.data()) {
        x = std::exp(x - m);
        sum += x;
    }
    for (auto& x : out.data()) x /= sum;
    return out;
}

}  // namespace docnn
