#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "docnn/conv.hpp"
#include "docnn/network.hpp"
#include "docnn/rng.hpp"

namespace docnn {

// max |a - b| / max |b|; 0 when both are identically zero.
double relative_error(const Tensor& a, const Tensor& b);

struct FoldCase {
    std::size_t height, width, in_channels, out_channels, depth_multiplier, kernel;
    bool same_pad;
};

DoConvKernel random_doconv(RngStream& rng, std::size_t kernel, std::size_t depth_multiplier, std::size_t in_channels,
                           std::size_t out_channels);
Tensor random_tensor(RngStream& rng, Shape shape, double lo = -1.0, double hi = 1.0);

// Relative error between the two-stage and folded DO-Conv evaluations.
double fold_equivalence_error(RngStream& rng, const FoldCase& c);

struct GradCheckStats {
    std::size_t checked = 0;
    std::size_t failures = 0;
    // Coordinates where a ReLU pre-activation changed sign inside [-eps, +eps];
    // the loss is not differentiable there, so they are reported separately.
    std::size_t kinks = 0;
    double worst_error = 0.0;  // |analytic - numeric| / max(rtol-scaled, atol) ratio
    std::string worst_param;
};

// Central differences of the mean batch loss against backward(), on every
// scalar of every parameter tensor. Pass when
// |a - n| <= max(atol, rtol * max(|a|, |n|)).
GradCheckStats gradient_check(Model& model, std::span<const Tensor> batch, std::span<const std::size_t> labels, double eps = 1e-5,
                              double rtol = 1e-4, double atol = 1e-6);

struct CheckOutcome {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Fold equivalence, gradient, and metric-oracle suites at reduced size.
std::vector<CheckOutcome> run_selfcheck(std::ostream* log = nullptr);

}  // namespace docnn
