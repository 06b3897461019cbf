#include "docnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace docnn {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

void fill_uniform(Tensor& t, double bound, RngStream& rng) {
    for (auto& v : t.data()) v = rng.uniform(-bound, bound);
}

// He-uniform bound for layers followed by ReLU.
double relu_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

StdKernel make_std(std::size_t cout, std::size_t k, std::size_t cin, RngStream& rng) {
    StdKernel kernel{Tensor({cout, k, k, cin}), Tensor({cout})};
    fill_uniform(kernel.weights, relu_bound(k * k * cin), rng);
    return kernel;
}

FeatureLayer make_feature(const NetworkConfig& cfg, RngStream& rng) {
    const std::size_t k = cfg.kernel_size, c = cfg.mid_channels;
    switch (cfg.layer_type) {
        case LayerType::standard:
            return make_std(c, k, c, rng);
        case LayerType::depthwise: {
            DepthwiseLayer layer{DepthwiseKernel{Tensor({k * k, 1, c}), k, k}, Tensor({c})};
            fill_uniform(layer.kernel.weights, relu_bound(k * k), rng);
            return layer;
        }
        case LayerType::doconv: {
            // D starts as the identity so the folded kernel equals W at step 0.
            DoConvKernel kernel{identity_depthwise(k, k, cfg.d_mul, c), Tensor({c, cfg.d_mul, c}), Tensor({c})};
            fill_uniform(kernel.weights, relu_bound(k * k * c), rng);
            return kernel;
        }
    }
    throw std::logic_error("unknown layer type");
}

void append_feature(const std::string& prefix, FeatureLayer& layer, std::vector<ParamRef>& out) {
    std::visit(Overloaded{
                   [&](StdKernel& k) {
                       out.push_back({prefix + ".weight", &k.weights});
                       out.push_back({prefix + ".bias", &k.bias});
                   },
                   [&](DepthwiseLayer& l) {
                       out.push_back({prefix + ".depthwise", &l.kernel.weights});
                       out.push_back({prefix + ".bias", &l.bias});
                   },
                   [&](DoConvKernel& k) {
                       out.push_back({prefix + ".depthwise", &k.depthwise.weights});
                       out.push_back({prefix + ".weight", &k.weights});
                       out.push_back({prefix + ".bias", &k.bias});
                   },
               },
               layer);
}

Tensor apply_feature(const FeatureLayer& layer, const Tensor& x, DoConvPath path, StdKernel* folded_out) {
    return std::visit(Overloaded{
                          [&](const StdKernel& k) { return conv_std(x, k, true); },
                          [&](const DepthwiseLayer& l) {
                              Tensor y = conv_depthwise(x, l.kernel, true);
                              add_channel_bias(y, l.bias);
                              return y;
                          },
                          [&](const DoConvKernel& k) {
                              if (path == DoConvPath::composed) return doconv_compose(x, k, true);
                              StdKernel q = doconv_fold(k);
                              Tensor y = conv_std(x, q, true);
                              if (folded_out) *folded_out = std::move(q);
                              return y;
                          },
                      },
                      layer);
}

ForwardTrace run(const Model& model, const Tensor& patch, DoConvPath path) {
    const auto& cfg = model.config;
    if (patch.shape() != Shape{cfg.input_size, cfg.input_size, cfg.in_channels})
        throw std::invalid_argument("forward: patch " + shape_string(patch.shape()) + " does not match model input " +
                                    shape_string({cfg.input_size, cfg.input_size, cfg.in_channels}));
    ForwardTrace t;
    t.input = patch;
    t.base_pre = conv_std(patch, model.conv_in, true);
    t.base = relu(t.base_pre);

    t.feat1_in = t.base;
    t.feat1_pre = apply_feature(model.feature1, t.feat1_in, path, &t.folded1);
    t.feat1 = relu(t.feat1_pre);

    t.feat2_in = cfg.drc_enabled ? add(t.feat1, t.base) : t.feat1;
    t.feat2_pre = apply_feature(model.feature2, t.feat2_in, path, &t.folded2);
    t.feat2 = relu(t.feat2_pre);

    t.head_in = cfg.drc_enabled ? add(t.feat2, t.base) : t.feat2;
    t.head_pre = conv_std(t.head_in, model.conv_out, true);
    t.head = relu(t.head_pre);

    t.pooled = gap(t.head);
    t.logits = fully_connected(t.pooled, model.fc_weights, model.fc_bias);
    return t;
}

}  // namespace

std::string to_string(LayerType t) {
    switch (t) {
        case LayerType::standard: return "standard";
        case LayerType::depthwise: return "depthwise";
        case LayerType::doconv: return "doconv";
    }
    return "?";
}

LayerType parse_layer_type(std::string_view name) {
    if (name == "standard") return LayerType::standard;
    if (name == "depthwise") return LayerType::depthwise;
    if (name == "doconv") return LayerType::doconv;
    throw std::invalid_argument("unknown layer type '" + std::string(name) + "'");
}

void NetworkConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("network config: " + m); };
    if (in_channels == 0 || mid_channels == 0 || out_channels == 0) fail("channel counts must be positive");
    if (num_classes == 0) fail("num_classes must be positive");
    if (kernel_size == 0 || kernel_size % 2 == 0) fail("kernel_size must be odd");
    if (input_size <= same_margin(kernel_size)) fail("input_size too small for the kernel's reflect margin");
    if (layer_type == LayerType::doconv && d_mul < kernel_size * kernel_size)
        fail("doconv layers need d_mul >= kernel_size^2 (" + std::to_string(kernel_size * kernel_size) + ")");
}

NetworkConfig variant_config(std::string_view variant, NetworkConfig base) {
    if (variant == "scnn") {
        base.layer_type = LayerType::standard;
        base.drc_enabled = false;
    } else if (variant == "sdcnn") {
        base.layer_type = LayerType::depthwise;
        base.drc_enabled = false;
    } else if (variant == "docnn") {
        base.layer_type = LayerType::doconv;
        base.drc_enabled = false;
    } else if (variant == "docnn-drc") {
        base.layer_type = LayerType::doconv;
        base.drc_enabled = true;
    } else {
        throw std::invalid_argument("unknown network variant '" + std::string(variant) + "'");
    }
    return base;
}

std::vector<ParamRef> parameters(Model& model) {
    std::vector<ParamRef> out;
    out.push_back({"conv_in.weight", &model.conv_in.weights});
    out.push_back({"conv_in.bias", &model.conv_in.bias});
    append_feature("feature1", model.feature1, out);
    append_feature("feature2", model.feature2, out);
    out.push_back({"conv_out.weight", &model.conv_out.weights});
    out.push_back({"conv_out.bias", &model.conv_out.bias});
    out.push_back({"fc.weight", &model.fc_weights});
    out.push_back({"fc.bias", &model.fc_bias});
    return out;
}

std::vector<ConstParamRef> parameters(const Model& model) {
    std::vector<ConstParamRef> out;
    for (auto& p : parameters(const_cast<Model&>(model))) out.push_back({std::move(p.name), p.tensor});
    return out;
}

Model build(const NetworkConfig& config, RngStream& rng) {
    config.validate();
    Model m;
    m.config = config;
    m.conv_in = make_std(config.mid_channels, 1, config.in_channels, rng);
    m.feature1 = make_feature(config, rng);
    m.feature2 = make_feature(config, rng);
    m.conv_out = make_std(config.out_channels, 1, config.mid_channels, rng);
    m.fc_weights = Tensor({config.num_classes, config.out_channels});
    m.fc_bias = Tensor({config.num_classes});
    fill_uniform(m.fc_weights, 1.0 / std::sqrt(static_cast<double>(config.out_channels)), rng);
    return m;
}

std::size_t parameter_count(const Model& model) {
    std::size_t n = 0;
    for (const auto& p : parameters(model)) n += p.tensor->size();
    return n;
}

std::size_t analytic_parameter_count(const NetworkConfig& cfg) {
    cfg.validate();
    const std::size_t c = cfg.mid_channels, taps = cfg.kernel_size * cfg.kernel_size;
    std::size_t feature = 0;
    switch (cfg.layer_type) {
        case LayerType::standard: feature = c * taps * c + c; break;
        case LayerType::depthwise: feature = taps * c + c; break;
        case LayerType::doconv: feature = taps * cfg.d_mul * c + c * cfg.d_mul * c + c; break;
    }
    return (cfg.in_channels * c + c) + 2 * feature + (c * cfg.out_channels + cfg.out_channels) +
           (cfg.out_channels * cfg.num_classes + cfg.num_classes);
}

ForwardTrace forward_trace(const Model& model, const Tensor& patch) { return run(model, patch, DoConvPath::folded); }

Tensor forward(const Model& model, const Tensor& patch, DoConvPath path) { return run(model, patch, path).logits; }

std::size_t predict(const Model& model, const Tensor& patch) {
    const Tensor logits = forward(model, patch);
    const auto d = logits.data();
    return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

Model fold_model(const Model& model) {
    Model out = model;
    bool folded = false;
    for (FeatureLayer* layer : {&out.feature1, &out.feature2}) {
        if (const auto* k = std::get_if<DoConvKernel>(layer)) {
            *layer = doconv_fold(*k);
            folded = true;
        }
    }
    if (folded) out.config.layer_type = LayerType::standard;
    return out;
}

}  // namespace docnn
