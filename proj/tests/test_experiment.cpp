#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "docnn/experiment.hpp"

using namespace docnn;
namespace fs = std::filesystem;

namespace {

const PreparedScene& small_scene() {
    static const PreparedScene p = prepare_scene(synthetic_scene({12, 15, 10, 0.15, 4}), 5, 5);
    return p;
}

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.network = variant_config("docnn-drc");
    cfg.network.in_channels = 5;
    cfg.network.input_size = 5;
    cfg.network.mid_channels = 8;
    cfg.network.out_channels = 16;
    cfg.network.num_classes = 3;
    cfg.train.batch_size = 16;
    cfg.train.epochs = 5;
    cfg.runs = 2;
    cfg.split.train_fraction = 0.2;
    cfg.seed = 3;
    return cfg;
}

}  // namespace

TEST(ExperimentConfig, ParsesNestedSectionsAndSceneEpochs) {
    const auto j = nlohmann::json::parse(R"({
        "dataset": "data/pu", "scene": "pu", "seed": 5, "runs": 3,
        "reshuffle_split_per_run": false,
        "split": {"train_fraction": 0.01, "min_per_class": 2},
        "network": {"variant": "scnn", "in_channels": 15},
        "train": {"learning_rate": 0.02}
    })");
    const ExperimentConfig cfg = parse_experiment(j, "/base");
    EXPECT_EQ(cfg.dataset, fs::path("/base/data/pu"));
    EXPECT_EQ(cfg.train.epochs, 120u);
    EXPECT_EQ(cfg.train.learning_rate, 0.02);
    EXPECT_EQ(cfg.train.batch_size, 64u);
    EXPECT_EQ(cfg.network.layer_type, LayerType::standard);
    EXPECT_FALSE(cfg.num_classes_given);
    EXPECT_EQ(cfg.split.min_per_class, 2u);
    EXPECT_EQ(cfg.split.seed, 5u);
    EXPECT_FALSE(cfg.reshuffle_split_per_run);
    EXPECT_EQ(parse_experiment(to_json(cfg)).network, cfg.network);

    EXPECT_EQ(parse_experiment({{"scene", "ip"}}).train.epochs, 150u);
    EXPECT_EQ(parse_experiment({{"scene", "sa"}}).train.epochs, 120u);
    EXPECT_EQ(parse_experiment({{"scene", "ip"}, {"train", {{"epochs", 3}}}}).train.epochs, 3u);
    EXPECT_EQ(parse_experiment({{"dataset", "/abs/x"}}, "/base").dataset, fs::path("/abs/x"));
    EXPECT_FALSE(default_epochs("other"));
}

TEST(ExperimentConfig, Errors) {
    EXPECT_THROW(parse_experiment(nlohmann::json::array()), std::invalid_argument);
    EXPECT_THROW(parse_experiment({{"runs", "many"}}), std::invalid_argument);
    EXPECT_THROW(parse_experiment({{"network", {{"variant", "vgg"}}}}), std::invalid_argument);
    ExperimentConfig cfg;
    cfg.runs = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    EXPECT_THROW(load_experiment("/nonexistent/config.json"), std::runtime_error);
}

TEST(Experiment, OverfitTenSamples) {
    const PreparedScene& p = small_scene();
    std::vector<LabeledPixel> pixels;
    for (std::size_t i = 0; i < 10; ++i) pixels.push_back({i, (i * 5) % 15, ((i * 5) % 15) / 5});
    for (const auto& px : pixels) ASSERT_EQ(p.scene.label_at(px.row, px.col), px.label + 1);
    ExperimentConfig cfg = small_config();
    RngStream rng(1);
    Model m = build(cfg.network, rng);
    cfg.train.batch_size = 10;
    cfg.train.epochs = 200;
    train(m, make_dataset(p, pixels), cfg.train);
    EXPECT_EQ(evaluate_model(m, p, pixels).oa, 1.0);
}

TEST(Experiment, UntrainedModelNearChance) {
    const PreparedScene& p = small_scene();
    const auto pixels = labeled_pixels(p.scene);
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        RngStream rng(seed);
        const double oa = evaluate_model(build(small_config().network, rng), p, pixels).oa;
        sum += oa;
    }
    EXPECT_NEAR(sum / 5.0, 1.0 / 3.0, 0.15);
}

TEST(Experiment, ZeroEpochsStillReports) {
    ExperimentConfig cfg = small_config();
    cfg.train.epochs = 0;
    cfg.runs = 1;
    const auto r = run_experiment(cfg, small_scene());
    ASSERT_EQ(r.runs.size(), 1u);
    EXPECT_TRUE(r.runs[0].loss_trace.empty());
    EXPECT_EQ(r.summary.oa_std, 0.0);
    RngStream init = RngStream::derive(cfg.seed, 0x494e4954);
    const Model untrained = build(cfg.network, init);
    const Split split = stratified_split(small_scene().scene, r.runs[0].split);
    EXPECT_EQ(r.runs[0].report.oa, evaluate_model(untrained, small_scene(), split.test).oa);
}

TEST(Experiment, DeterministicSummaryJson) {
    const ExperimentConfig cfg = small_config();
    std::ostringstream log_a, log_b;
    const auto a = run_experiment(cfg, small_scene(), &log_a);
    const auto b = run_experiment(cfg, small_scene(), &log_b);
    EXPECT_EQ(summary_json(a).dump(), summary_json(b).dump());
    EXPECT_EQ(log_a.str(), log_b.str());
    EXPECT_NE(log_a.str().find("run 2 epoch 5 loss "), std::string::npos);
    ASSERT_EQ(a.runs.size(), 2u);
    EXPECT_EQ(a.runs[1].seed, 4u);
    EXPECT_EQ(a.runs[1].split.seed, 4u);
    EXPECT_EQ(summary_json(a).at("per_run").size(), 2u);

    ExperimentConfig fixed = cfg;
    fixed.reshuffle_split_per_run = false;
    const auto c = run_experiment(fixed, small_scene());
    EXPECT_EQ(c.runs[1].split.seed, 3u);
}

TEST(Experiment, FoldedModelEvaluatesTheSame) {
    ExperimentConfig cfg = small_config();
    cfg.runs = 1;
    const auto r = run_experiment(cfg, small_scene());
    const fs::path path = fs::temp_directory_path() / "docnn_experiment_folded.docnn";
    export_folded(r.last_model, path);
    const Split split = stratified_split(small_scene().scene, r.runs[0].split);
    const double folded = evaluate_model(load(path), small_scene(), split.test).oa;
    EXPECT_NEAR(folded, r.runs[0].report.oa, 1e-4);
    const auto meta = model_metadata(cfg, r.runs[0]);
    EXPECT_EQ(meta.at("split").at("seed"), 3);
}

TEST(Experiment, ClassCountMismatch) {
    ExperimentConfig cfg = small_config();
    cfg.num_classes_given = true;
    cfg.network.num_classes = 4;
    EXPECT_THROW(run_experiment(cfg, small_scene()), std::invalid_argument);
    RngStream rng(2);
    const Model m = build(cfg.network, rng);
    EXPECT_THROW(evaluate_model(m, small_scene(), labeled_pixels(small_scene().scene)), std::invalid_argument);
    cfg = small_config();
    cfg.network.in_channels = 6;
    EXPECT_THROW(run_experiment(cfg, small_scene()), std::invalid_argument);
}
