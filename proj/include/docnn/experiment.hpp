#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "docnn/hsi.hpp"
#include "docnn/metrics.hpp"
#include "docnn/network.hpp"
#include "docnn/train.hpp"
#include "json.hpp"

namespace docnn {

// One JSON document describing a full train/evaluate protocol:
//
//   {"dataset": "data/ip", "scene": "ip", "seed": 0, "runs": 10,
//    "reshuffle_split_per_run": true,
//    "split":   {"train_fraction": 0.1, "min_per_class": 1},
//    "network": {"variant": "docnn-drc", "in_channels": 15, ...},
//    "train":   {"learning_rate": 0.01, "momentum": 0.9, "batch_size": 64, "epochs": 150}}
//
// network.in_channels is the PCA component count. network.num_classes, when
// given, must agree with the dataset. Run i uses seed + i for initialization
// and shuffling, and for the split too when reshuffle_split_per_run is set.
struct ExperimentConfig {
    std::filesystem::path dataset;
    std::string scene;
    SplitSpec split;
    NetworkConfig network;
    bool num_classes_given = false;
    TrainConfig train;
    std::size_t runs = 10;
    bool reshuffle_split_per_run = true;
    std::uint64_t seed = 0;

    void validate() const;
};

// Per-scene epoch counts: pu 120, sa 120, ip 150.
std::optional<std::size_t> default_epochs(std::string_view scene);

// Relative dataset paths resolve against base_dir.
ExperimentConfig parse_experiment(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

// Scene after standardization + PCA, ready for patch extraction.
struct PreparedScene {
    HsiScene scene;
    PcaModel pca;
    Tensor projected;
    PatchExtractor patches;
};

PreparedScene prepare_scene(const HsiScene& scene, std::size_t components, std::size_t patch_size);
Dataset make_dataset(const PreparedScene& prepared, std::span<const LabeledPixel> pixels);

// Folds DO-Conv layers once, then classifies each pixel.
std::vector<std::size_t> predict_pixels(const Model& model, const PreparedScene& prepared, std::span<const LabeledPixel> pixels);
EvalReport evaluate_model(const Model& model, const PreparedScene& prepared, std::span<const LabeledPixel> pixels);

struct RunOutcome {
    std::uint64_t seed = 0;
    SplitSpec split;
    EvalReport report;
    std::vector<double> loss_trace;
};

struct ExperimentResult {
    std::vector<RunOutcome> runs;
    RunSummary summary;
    Model last_model;
};

// `log`, when set, receives one line per training epoch.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const HsiScene& scene, std::ostream* log = nullptr);
ExperimentResult run_experiment(const ExperimentConfig& cfg, const PreparedScene& prepared, std::ostream* log = nullptr);

// Summary printed by `train`: RunSummary plus per-run OA / kappa.
nlohmann::json summary_json(const ExperimentResult& result);

// Metadata stored alongside a trained model so eval can rebuild its split.
nlohmann::json model_metadata(const ExperimentConfig& cfg, const RunOutcome& run);

}  // namespace docnn
