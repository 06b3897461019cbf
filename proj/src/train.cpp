#include "docnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

#include "gemm.hpp"

namespace docnn {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348'5546;  // "SHUF"

template <class... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

std::size_t feature_param_count(const FeatureLayer& layer) {
    return std::visit(Overloaded{
                          [](const StdKernel&) -> std::size_t { return 2; },
                          [](const DepthwiseLayer&) -> std::size_t { return 2; },
                          [](const DoConvKernel&) -> std::size_t { return 3; },
                      },
                      layer);
}

Tensor channel_sums(const Tensor& hwc) {
    const std::size_t c = hwc.shape().back();
    Tensor out({c});
    const auto d = hwc.data();
    for (std::size_t i = 0; i < d.size(); ++i) out[i % c] += d[i];
    return out;
}

// Backprop through one feature layer; grads for its parameters start at `slot`.
Tensor feature_backward(const FeatureLayer& layer, const StdKernel& folded, const Tensor& input, const Tensor& grad_out,
                        double weight, ParamGrads& grads, std::size_t slot) {
    auto acc = [&](std::size_t i, const Tensor& g) {
        auto dst = grads[i].data();
        const auto src = g.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += weight * src[k];
    };
    return std::visit(Overloaded{
                          [&](const StdKernel& k) {
                              auto g = conv_std_backward(input, k, true, grad_out);
                              acc(slot, g.weights);
                              acc(slot + 1, g.bias);
                              return std::move(g.input);
                          },
                          [&](const DepthwiseLayer& l) {
                              auto g = conv_depthwise_backward(input, l.kernel, true, grad_out);
                              acc(slot, g.weights);
                              acc(slot + 1, channel_sums(grad_out));
                              return std::move(g.input);
                          },
                          [&](const DoConvKernel& k) {
                              auto g = conv_std_backward(input, folded, true, grad_out);
                              auto f = doconv_fold_backward(k, g.weights);
                              acc(slot, f.depthwise);
                              acc(slot + 1, f.weights);
                              acc(slot + 2, g.bias);
                              return std::move(g.input);
                          },
                      },
                      layer);
}

}  // namespace

double loss_ce(const Tensor& probs, std::size_t label) {
    if (probs.rank() != 1 || label >= probs.size())
        throw std::invalid_argument("loss_ce: label " + std::to_string(label) + " out of range for " + std::to_string(probs.size()) + " classes");
    return -std::log(std::max(probs[label], 1e-12));
}

StdKernelGrads conv_std_backward(const Tensor& input, const StdKernel& k, bool same_pad, const Tensor& grad_out) {
    k.validate();
    const std::size_t kh = k.kernel_h(), kw = k.kernel_w(), cout = k.out_channels();
    const std::size_t margin = same_pad ? same_margin(kh) : 0;
    const Tensor padded = pad_reflect(input, margin);
    const std::size_t oh = padded.extent(0) - kh + 1, ow = padded.extent(1) - kw + 1;
    if (grad_out.shape() != Shape{oh, ow, cout})
        throw std::invalid_argument("conv_std_backward: gradient shape " + shape_string(grad_out.shape()) + " does not match output");
    const std::size_t rows = oh * ow, row_len = kh * kw * k.in_channels();
    const Tensor cols = (kh == 1 && kw == 1) ? padded : window_gather(padded, kh, kw);
    const auto g = detail::as_matrix(grad_out, rows, cout);

    StdKernelGrads out{Tensor(), Tensor(k.weights.shape()), channel_sums(grad_out)};
    detail::as_matrix(out.weights, cout, row_len).noalias() = g.transpose() * detail::as_matrix(cols, rows, row_len);

    Tensor grad_cols({rows, row_len});
    detail::as_matrix(grad_cols, rows, row_len).noalias() = g * detail::as_matrix(k.weights, cout, row_len);
    Tensor grad_padded = (kh == 1 && kw == 1) ? grad_cols.reshaped(padded.shape()) : window_scatter(grad_cols, padded.shape(), kh, kw);
    out.input = pad_reflect_adjoint(grad_padded, margin);
    return out;
}

DepthwiseGrads conv_depthwise_backward(const Tensor& input, const DepthwiseKernel& k, bool same_pad, const Tensor& grad_out) {
    k.validate();
    const std::size_t kh = k.kernel_h, kw = k.kernel_w;
    const std::size_t cin = k.in_channels(), dmul = k.depth_multiplier(), taps = k.taps();
    const std::size_t margin = same_pad ? same_margin(kh) : 0;
    const Tensor padded = pad_reflect(input, margin);
    const std::size_t oh = padded.extent(0) - kh + 1, ow = padded.extent(1) - kw + 1;
    if (grad_out.shape() != Shape{oh, ow, cin * dmul})
        throw std::invalid_argument("conv_depthwise_backward: gradient shape " + shape_string(grad_out.shape()) + " does not match output");

    const Tensor cols = window_gather(padded, kh, kw);
    Tensor grad_cols(cols.shape());
    DepthwiseGrads out{Tensor(), Tensor(k.weights.shape())};
    const auto w = k.weights.data();
    const auto src = cols.data();
    const auto go = grad_out.data();
    auto gw = out.weights.data();
    auto gc = grad_cols.data();
    for (std::size_t p = 0; p < oh * ow; ++p) {
        const double* window = &src[p * taps * cin];
        double* gwin = &gc[p * taps * cin];
        const double* g = &go[p * cin * dmul];
        for (std::size_t i = 0; i < taps; ++i)
            for (std::size_t d = 0; d < dmul; ++d)
                for (std::size_t c = 0; c < cin; ++c) {
                    const double gv = g[c * dmul + d];
                    gw[(i * dmul + d) * cin + c] += gv * window[i * cin + c];
                    gwin[i * cin + c] += gv * w[(i * dmul + d) * cin + c];
                }
    }
    out.input = pad_reflect_adjoint(window_scatter(grad_cols, padded.shape(), kh, kw), margin);
    return out;
}

FoldGrads doconv_fold_backward(const DoConvKernel& k, const Tensor& grad_folded) {
    k.validate();
    const std::size_t cout = k.out_channels(), cin = k.in_channels(), dmul = k.depth_multiplier(), taps = k.depthwise.taps();
    if (grad_folded.size() != cout * taps * cin) throw std::invalid_argument("doconv_fold_backward: gradient size mismatch");
    FoldGrads out{Tensor(k.depthwise.weights.shape()), Tensor(k.weights.shape())};
    const auto dw = k.depthwise.weights.data();
    const auto w = k.weights.data();
    const auto gq = grad_folded.data();
    auto gd = out.depthwise.data();
    auto gwt = out.weights.data();
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t i = 0; i < taps; ++i)
            for (std::size_t c = 0; c < cin; ++c) {
                const double g = gq[(o * taps + i) * cin + c];
                for (std::size_t d = 0; d < dmul; ++d) {
                    gd[(i * dmul + d) * cin + c] += g * w[(o * dmul + d) * cin + c];
                    gwt[(o * dmul + d) * cin + c] += g * dw[(i * dmul + d) * cin + c];
                }
            }
    return out;
}

Tensor relu_backward(const Tensor& pre_activation, const Tensor& grad_out) {
    if (pre_activation.shape() != grad_out.shape()) throw std::invalid_argument("relu_backward: shape mismatch");
    Tensor out = grad_out;
    const auto pre = pre_activation.data();
    auto d = out.data();
    for (std::size_t i = 0; i < d.size(); ++i)
        if (pre[i] <= 0.0) d[i] = 0.0;
    return out;
}

Tensor gap_backward(const Shape& input_shape, const Tensor& grad_out) {
    if (input_shape.size() != 3 || grad_out.shape() != Shape{input_shape[2]})
        throw std::invalid_argument("gap_backward: shape mismatch");
    Tensor out(input_shape);
    const std::size_t n = input_shape[0] * input_shape[1], c = input_shape[2];
    const double inv = 1.0 / static_cast<double>(n);
    auto d = out.data();
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t k = 0; k < c; ++k) d[p * c + k] = grad_out[k] * inv;
    return out;
}

FullyConnectedGrads fully_connected_backward(const Tensor& v, const Tensor& weights, const Tensor& grad_out) {
    const std::size_t k = weights.extent(0), c = weights.extent(1);
    if (v.size() != c || grad_out.size() != k) throw std::invalid_argument("fully_connected_backward: shape mismatch");
    FullyConnectedGrads out{Tensor({c}), Tensor(weights.shape()), grad_out};
    for (std::size_t r = 0; r < k; ++r)
        for (std::size_t j = 0; j < c; ++j) {
            out.weights[r * c + j] = grad_out[r] * v[j];
            out.input[j] += grad_out[r] * weights[r * c + j];
        }
    return out;
}

ParamGrads zero_grads(const Model& model) {
    ParamGrads g;
    for (const auto& p : parameters(model)) g.emplace_back(p.tensor->shape());
    return g;
}

double accumulate_sample_grads(const Model& model, const Tensor& patch, std::size_t label, double weight, ParamGrads& grads) {
    const auto& cfg = model.config;
    if (label >= cfg.num_classes) throw std::invalid_argument("label " + std::to_string(label) + " out of range");
    const ForwardTrace t = forward_trace(model, patch);
    const Tensor probs = softmax(t.logits);
    const double loss = loss_ce(probs, label);

    auto acc = [&](std::size_t i, const Tensor& g) {
        auto dst = grads[i].data();
        const auto src = g.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += weight * src[k];
    };
    const std::size_t n1 = feature_param_count(model.feature1), n2 = feature_param_count(model.feature2);
    const std::size_t slot_f1 = 2, slot_f2 = slot_f1 + n1, slot_out = slot_f2 + n2, slot_fc = slot_out + 2;
    if (grads.size() != slot_fc + 2) throw std::invalid_argument("gradient buffer does not match model");

    Tensor g_logits = probs;
    g_logits[label] -= 1.0;
    auto fc = fully_connected_backward(t.pooled, model.fc_weights, g_logits);
    acc(slot_fc, fc.weights);
    acc(slot_fc + 1, fc.bias);

    const Tensor g_head_pre = relu_backward(t.head_pre, gap_backward(t.head.shape(), fc.input));
    auto head = conv_std_backward(t.head_in, model.conv_out, true, g_head_pre);
    acc(slot_out, head.weights);
    acc(slot_out + 1, head.bias);

    Tensor g_base(t.base.shape());
    if (cfg.drc_enabled) add_into(g_base, head.input);

    const Tensor g_feat2_pre = relu_backward(t.feat2_pre, head.input);
    const Tensor g_feat2_in = feature_backward(model.feature2, t.folded2, t.feat2_in, g_feat2_pre, weight, grads, slot_f2);
    if (cfg.drc_enabled) add_into(g_base, g_feat2_in);

    const Tensor g_feat1_pre = relu_backward(t.feat1_pre, g_feat2_in);
    add_into(g_base, feature_backward(model.feature1, t.folded1, t.feat1_in, g_feat1_pre, weight, grads, slot_f1));

    auto in = conv_std_backward(t.input, model.conv_in, true, relu_backward(t.base_pre, g_base));
    acc(0, in.weights);
    acc(1, in.bias);
    return loss;
}

LossAndGrads backward(const Model& model, std::span<const Tensor> batch, std::span<const std::size_t> labels) {
    if (batch.empty()) throw std::invalid_argument("backward: empty batch");
    if (batch.size() != labels.size()) throw std::invalid_argument("backward: batch and label counts differ");
    const std::size_t n = batch.size();
    const double weight = 1.0 / static_cast<double>(n);

    std::vector<ParamGrads> per_sample(n);
    std::vector<double> losses(n);
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t i = begin; i < n; i += stride) {
            per_sample[i] = zero_grads(model);
            losses[i] = accumulate_sample_grads(model, batch[i], labels[i], weight, per_sample[i]);
        }
    };
    const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    }

    LossAndGrads out{0.0, std::move(per_sample[0])};
    out.loss = losses[0] * weight;
    for (std::size_t i = 1; i < n; ++i) {
        out.loss += losses[i] * weight;
        for (std::size_t p = 0; p < out.grads.size(); ++p) add_into(out.grads[p], per_sample[i][p]);
    }
    return out;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must be in [0, 1)");
}

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, std::span<Tensor> velocity, const TrainConfig& cfg) {
    if (params.size() != grads.size() || params.size() != velocity.size())
        throw std::invalid_argument("sgd_step: parameter, gradient and velocity counts differ");
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto theta = params[p]->data();
        const auto g = grads[p].data();
        auto v = velocity[p].data();
        if (theta.size() != g.size() || theta.size() != v.size()) throw std::invalid_argument("sgd_step: shape mismatch");
        for (std::size_t i = 0; i < theta.size(); ++i) {
            v[i] = cfg.momentum * v[i] - cfg.learning_rate * g[i];
            theta[i] += v[i];
        }
    }
}

void sgd_step(Model& model, const ParamGrads& grads, ParamGrads& velocity, const TrainConfig& cfg) {
    std::vector<Tensor*> params;
    for (auto& p : parameters(model)) params.push_back(p.tensor);
    sgd_step(params, grads, velocity, cfg);
}

TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (data.patches.empty()) throw std::invalid_argument("train: empty training set");
    if (data.patches.size() != data.labels.size()) throw std::invalid_argument("train: patch and label counts differ");
    for (auto l : data.labels)
        if (l >= model.config.num_classes) throw std::invalid_argument("train: label " + std::to_string(l) + " out of range");

    const std::size_t n = data.patches.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream rng = RngStream::derive(cfg.seed, kShuffleStream);
    ParamGrads velocity = zero_grads(model);

    TrainResult result;
    std::vector<Tensor> batch;
    std::vector<std::size_t> labels;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double total = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            batch.clear();
            labels.clear();
            for (std::size_t i = start; i < stop; ++i) {
                batch.push_back(data.patches[order[i]]);
                labels.push_back(data.labels[order[i]]);
            }
            const auto step = backward(model, batch, labels);
            if (!std::isfinite(step.loss))
                throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch starting at sample " +
                                         std::to_string(start));
            total += step.loss * static_cast<double>(stop - start);
            sgd_step(model, step.grads, velocity, cfg);
        }
        result.loss_trace.push_back(total / static_cast<double>(n));
        if (on_epoch) on_epoch(epoch + 1, result.loss_trace.back());
    }
    return result;
}

}  // namespace docnn
