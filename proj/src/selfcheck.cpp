#include "docnn/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "docnn/metrics.hpp"
#include "docnn/train.hpp"

namespace docnn {

namespace {

struct LossProbe {
    double loss = 0.0;
    std::vector<bool> active;  // sign pattern of every ReLU input
};

LossProbe probe(const Model& model, std::span<const Tensor> batch, std::span<const std::size_t> labels) {
    LossProbe p;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const ForwardTrace t = forward_trace(model, batch[i]);
        p.loss += loss_ce(softmax(t.logits), labels[i]);
        for (const Tensor* pre : {&t.base_pre, &t.feat1_pre, &t.feat2_pre, &t.head_pre})
            for (double v : pre->data()) p.active.push_back(v > 0.0);
    }
    p.loss /= static_cast<double>(batch.size());
    return p;
}

std::string fmt(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

}  // namespace

double relative_error(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument("relative_error: shape mismatch");
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
    const double scale = max_abs(b);
    if (scale == 0.0) return diff == 0.0 ? 0.0 : INFINITY;
    return diff / scale;
}

Tensor random_tensor(RngStream& rng, Shape shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

DoConvKernel random_doconv(RngStream& rng, std::size_t kernel, std::size_t depth_multiplier, std::size_t in_channels,
                           std::size_t out_channels) {
    return DoConvKernel{
        DepthwiseKernel{random_tensor(rng, {kernel * kernel, depth_multiplier, in_channels}), kernel, kernel},
        random_tensor(rng, {out_channels, depth_multiplier, in_channels}),
        random_tensor(rng, {out_channels}),
    };
}

double fold_equivalence_error(RngStream& rng, const FoldCase& c) {
    const DoConvKernel k = random_doconv(rng, c.kernel, c.depth_multiplier, c.in_channels, c.out_channels);
    const Tensor input = random_tensor(rng, {c.height, c.width, c.in_channels});
    const Tensor composed = doconv_compose(input, k, c.same_pad);
    const Tensor folded = conv_std(input, doconv_fold(k), c.same_pad);
    return relative_error(composed, folded);
}

GradCheckStats gradient_check(Model& model, std::span<const Tensor> batch, std::span<const std::size_t> labels, double eps,
                              double rtol, double atol) {
    const LossAndGrads analytic = backward(model, batch, labels);
    GradCheckStats stats;
    auto params = parameters(model);
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto values = params[p].tensor->data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + eps;
            const LossProbe plus = probe(model, batch, labels);
            values[i] = saved - eps;
            const LossProbe minus = probe(model, batch, labels);
            values[i] = saved;
            if (plus.active != minus.active) {
                ++stats.kinks;
                continue;
            }
            const double numeric = (plus.loss - minus.loss) / (2.0 * eps);
            const double a = analytic.grads[p][i];
            const double bound = std::max(atol, rtol * std::max(std::abs(a), std::abs(numeric)));
            const double ratio = std::abs(a - numeric) / bound;
            ++stats.checked;
            if (ratio > 1.0) ++stats.failures;
            if (ratio > stats.worst_error) {
                stats.worst_error = ratio;
                stats.worst_param = params[p].name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return stats;
}

std::vector<CheckOutcome> run_selfcheck(std::ostream* log) {
    std::vector<CheckOutcome> out;
    auto record = [&](CheckOutcome c) {
        if (log) *log << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
        out.push_back(std::move(c));
    };

    {
        RngStream rng(101);
        double worst = 0.0;
        std::size_t cases = 0;
        for (std::size_t cin : {1, 3, 32})
            for (std::size_t cout : {1, 3, 32})
                for (std::size_t dmul : {1, 9, 18})
                    for (bool same : {false, true}) {
                        worst = std::max(worst, fold_equivalence_error(rng, {5, 6, cin, cout, dmul, 3, same}));
                        ++cases;
                    }
        record({"fold-equivalence", worst <= 1e-10, std::to_string(cases) + " cases, max relative error " + fmt(worst)});
    }

    {
        RngStream rng(202);
        NetworkConfig cfg{5, 3, 4, 6, 2, LayerType::doconv, true, 9, 3};
        std::size_t failures = 0, checked = 0, kinks = 0;
        double worst = 0.0;
        for (LayerType type : {LayerType::standard, LayerType::depthwise, LayerType::doconv}) {
            cfg.layer_type = type;
            Model m = build(cfg, rng);
            for (auto& p : parameters(m))
                for (auto& v : p.tensor->data()) v = rng.uniform(-0.5, 0.5);
            const std::vector<Tensor> batch = {random_tensor(rng, {5, 5, 3}), random_tensor(rng, {5, 5, 3})};
            const std::vector<std::size_t> labels = {0, 1};
            const auto s = gradient_check(m, batch, labels);
            failures += s.failures;
            checked += s.checked;
            kinks += s.kinks;
            worst = std::max(worst, s.worst_error);
        }
        record({"gradients", failures == 0 && checked > 0,
                std::to_string(checked) + " coordinates, " + std::to_string(failures) + " failures, " + std::to_string(kinks) +
                    " at ReLU kinks, worst error/tolerance " + fmt(worst)});
    }

    {
        RngStream rng(303);
        bool ok = true;
        for (int trial = 0; trial < 20 && ok; ++trial) {
            const std::size_t classes = 2 + rng.below(5), n = 1 + rng.below(200);
            std::vector<std::size_t> truth(n), pred(n);
            for (std::size_t i = 0; i < n; ++i) {
                truth[i] = rng.below(classes);
                pred[i] = rng.uniform() < 0.6 ? truth[i] : rng.below(classes);
            }
            std::size_t agree = 0;
            std::vector<double> nt(classes), np(classes);
            for (std::size_t i = 0; i < n; ++i) {
                agree += truth[i] == pred[i];
                nt[truth[i]] += 1.0;
                np[pred[i]] += 1.0;
            }
            const double po = static_cast<double>(agree) / static_cast<double>(n);
            double pe = 0.0;
            for (std::size_t c = 0; c < classes; ++c) pe += nt[c] * np[c];
            pe /= static_cast<double>(n) * static_cast<double>(n);
            const double k = pe >= 1.0 ? (po >= 1.0 ? 1.0 : 0.0) : (po - pe) / (1.0 - pe);
            const auto cm = confusion(truth, pred, classes);
            ok = overall_accuracy(cm) == po && kappa(cm) == k;
        }
        const ConfusionMatrix hand{2, {40, 10, 5, 45}};
        const bool hand_ok = std::abs(overall_accuracy(hand) - 0.85) < 1e-12 && std::abs(kappa(hand) - 0.70) < 1e-12;
        record({"metrics-oracle", ok && hand_ok, "20 random tallies + [[40,10],[5,45]] -> oa 0.85, kappa 0.70"});
    }
    return out;
}

}  // namespace docnn
