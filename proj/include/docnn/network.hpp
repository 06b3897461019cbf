#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "docnn/conv.hpp"
#include "docnn/rng.hpp"
#include "docnn/tensor.hpp"

namespace docnn {

enum class LayerType { standard, depthwise, doconv };

std::string to_string(LayerType t);
LayerType parse_layer_type(std::string_view name);

struct NetworkConfig {
    std::size_t input_size = 9;
    std::size_t in_channels = 15;
    std::size_t mid_channels = 32;
    std::size_t out_channels = 64;
    std::size_t num_classes = 9;
    LayerType layer_type = LayerType::doconv;
    bool drc_enabled = true;
    std::size_t d_mul = 9;
    std::size_t kernel_size = 3;

    void validate() const;
    bool operator==(const NetworkConfig&) const = default;
};

// Ablation variants by name: "scnn", "sdcnn", "docnn", "docnn-drc".
NetworkConfig variant_config(std::string_view variant, NetworkConfig base = {});

struct DepthwiseLayer {
    DepthwiseKernel kernel;  // D_mul = 1, so channel count is preserved
    Tensor bias;
};

using FeatureLayer = std::variant<StdKernel, DepthwiseLayer, DoConvKernel>;

// conv1x1-in -> feature layer 1 -> feature layer 2 -> conv1x1-out -> GAP -> FC.
//
// With DRC enabled the post-ReLU output b of conv1x1-in is added to the
// inputs of feature layer 2 and of conv1x1-out.
struct Model {
    static constexpr std::uint32_t kFormatVersion = 1;

    NetworkConfig config;
    StdKernel conv_in;
    FeatureLayer feature1;
    FeatureLayer feature2;
    StdKernel conv_out;
    Tensor fc_weights;  // [num_classes, out_channels]
    Tensor fc_bias;     // [num_classes]
    std::uint32_t format_version = kFormatVersion;
};

struct ParamRef {
    std::string name;
    Tensor* tensor;
};
struct ConstParamRef {
    std::string name;
    const Tensor* tensor;
};

// Trainable tensors in a fixed order; ParamGrads and the model file use it.
std::vector<ParamRef> parameters(Model& model);
std::vector<ConstParamRef> parameters(const Model& model);

Model build(const NetworkConfig& config, RngStream& rng);

std::size_t parameter_count(const Model& model);
// Closed-form count for a config, layer by layer, biases included.
std::size_t analytic_parameter_count(const NetworkConfig& config);

enum class DoConvPath { folded, composed };

// Intermediate activations kept for the reverse pass.
struct ForwardTrace {
    Tensor input;
    Tensor base_pre, base;        // conv1x1-in, before/after ReLU
    Tensor feat1_in, feat1_pre, feat1;
    Tensor feat2_in, feat2_pre, feat2;
    Tensor head_in, head_pre, head;  // conv1x1-out
    Tensor pooled;
    Tensor logits;
    // Folded kernels of DO-Conv feature layers (empty weights otherwise).
    StdKernel folded1, folded2;
};

ForwardTrace forward_trace(const Model& model, const Tensor& patch);
Tensor forward(const Model& model, const Tensor& patch, DoConvPath path = DoConvPath::folded);
std::size_t predict(const Model& model, const Tensor& patch);

// Replaces every DO-Conv feature layer by its folded standard kernel.
Model fold_model(const Model& model);

// Model file: "DOCNN1", u64 LE manifest length, JSON manifest, f32 LE blobs.
enum class LoadErrorKind { missing_file, bad_magic, version_mismatch, truncated, malformed };

class LoadError : public std::runtime_error {
public:
    LoadError(LoadErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    LoadErrorKind kind() const { return kind_; }

private:
    LoadErrorKind kind_;
};

void save(const Model& model, const std::filesystem::path& path);
void save(const Model& model, const std::filesystem::path& path, const nlohmann::json& metadata);
Model load(const std::filesystem::path& path);
std::pair<Model, nlohmann::json> load_with_metadata(const std::filesystem::path& path);
void export_folded(const Model& model, const std::filesystem::path& path);

nlohmann::json config_to_json(const NetworkConfig& config);
NetworkConfig config_from_json(const nlohmann::json& j, NetworkConfig base = {});

}  // namespace docnn
