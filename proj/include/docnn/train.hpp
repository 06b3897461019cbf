#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "docnn/conv.hpp"
#include "docnn/network.hpp"
#include "docnn/tensor.hpp"

namespace docnn {

// -log(probs[label]), probability floored at 1e-12.
double loss_ce(const Tensor& probs, std::size_t label);

// Layer adjoints. Each takes the forward input and the upstream gradient.
struct StdKernelGrads {
    Tensor input, weights, bias;
};
StdKernelGrads conv_std_backward(const Tensor& input, const StdKernel& k, bool same_pad, const Tensor& grad_out);

struct DepthwiseGrads {
    Tensor input, weights;
};
DepthwiseGrads conv_depthwise_backward(const Tensor& input, const DepthwiseKernel& k, bool same_pad, const Tensor& grad_out);

// Product rule through Q[o, i, c] = sum_d D[i, d, c] W[o, d, c].
struct FoldGrads {
    Tensor depthwise, weights;
};
FoldGrads doconv_fold_backward(const DoConvKernel& k, const Tensor& grad_folded);

Tensor relu_backward(const Tensor& pre_activation, const Tensor& grad_out);
Tensor gap_backward(const Shape& input_shape, const Tensor& grad_out);

struct FullyConnectedGrads {
    Tensor input, weights, bias;
};
FullyConnectedGrads fully_connected_backward(const Tensor& v, const Tensor& weights, const Tensor& grad_out);

// One gradient per tensor of parameters(model), same order and shapes.
using ParamGrads = std::vector<Tensor>;

ParamGrads zero_grads(const Model& model);

// Adds d(loss)/d(theta) * weight for one sample into grads; returns the loss.
double accumulate_sample_grads(const Model& model, const Tensor& patch, std::size_t label, double weight, ParamGrads& grads);

struct LossAndGrads {
    double loss = 0.0;
    ParamGrads grads;
};

// Mean batch cross-entropy and its gradient. Samples run in parallel; the
// reduction is summed in sample order so the result does not depend on the
// number of worker threads.
LossAndGrads backward(const Model& model, std::span<const Tensor> batch, std::span<const std::size_t> labels);

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 64;
    std::size_t epochs = 120;
    std::uint64_t seed = 0;

    void validate() const;
};

// v <- momentum * v - lr * g;  theta <- theta + v
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, std::span<Tensor> velocity, const TrainConfig& cfg);
void sgd_step(Model& model, const ParamGrads& grads, ParamGrads& velocity, const TrainConfig& cfg);

struct Dataset {
    std::vector<Tensor> patches;
    std::vector<std::size_t> labels;
};

struct TrainResult {
    std::vector<double> loss_trace;  // mean sample loss per epoch
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

// Mini-batch momentum SGD. Each epoch reshuffles sample order from a stream
// derived from cfg.seed; the final partial batch is kept. Throws
// std::runtime_error on a non-finite loss.
TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace docnn
