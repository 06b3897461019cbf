// docnn: train, evaluate and inspect DO-Conv hyperspectral classifiers.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "docnn/experiment.hpp"
#include "docnn/hsi.hpp"
#include "docnn/metrics.hpp"
#include "docnn/network.hpp"
#include "docnn/selfcheck.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace docnn;

namespace {

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> runs;
    bool verbose = false;
};

ExperimentConfig experiment_from(const GlobalOptions& g) {
    ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_experiment(g.config);
    if (g.seed) cfg.seed = cfg.split.seed = cfg.train.seed = *g.seed;
    if (g.runs) cfg.runs = *g.runs;
    return cfg;
}

void write_bytes(const fs::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("failed writing " + path.string());
}

struct TrainArgs {
    std::string out;
    std::string dataset;
    std::optional<std::size_t> epochs;
};

int cmd_train(const GlobalOptions& g, const TrainArgs& a) {
    ExperimentConfig cfg = experiment_from(g);
    if (!a.dataset.empty()) cfg.dataset = a.dataset;
    if (a.epochs) cfg.train.epochs = *a.epochs;
    if (cfg.dataset.empty()) throw std::invalid_argument("no dataset: set \"dataset\" in the config or pass --dataset");
    const HsiScene scene = load_scene(cfg.dataset);
    const ExperimentResult result = run_experiment(cfg, scene, g.verbose ? &std::cout : nullptr);
    if (!a.out.empty()) save(result.last_model, a.out, model_metadata(cfg, result.runs.back()));
    std::cout << summary_json(result).dump(2) << "\n";
    return 0;
}

struct EvalArgs {
    std::string model;
    std::string dataset;
    std::optional<double> fraction;
    std::optional<std::uint64_t> split_seed;
    std::optional<std::size_t> min_per_class;
    std::string out;
    std::string legend;
};

struct LoadedInputs {
    Model model;
    nlohmann::json metadata;
    PreparedScene prepared;
};

LoadedInputs load_inputs(const GlobalOptions& g, const EvalArgs& a) {
    auto [model, metadata] = load_with_metadata(a.model);
    fs::path dataset = a.dataset;
    if (dataset.empty() && !g.config.empty()) dataset = load_experiment(g.config).dataset;
    if (dataset.empty()) dataset = metadata.value("dataset", std::string{});
    if (dataset.empty()) throw std::invalid_argument("no dataset: pass --dataset");
    const HsiScene scene = load_scene(dataset);
    if (scene.num_classes() != model.config.num_classes)
        throw std::invalid_argument("model has " + std::to_string(model.config.num_classes) + " classes, dataset " + dataset.string() +
                                    " has " + std::to_string(scene.num_classes()));
    PreparedScene prepared = prepare_scene(scene, model.config.in_channels, model.config.input_size);
    return {std::move(model), std::move(metadata), std::move(prepared)};
}

int cmd_eval(const GlobalOptions& g, const EvalArgs& a) {
    LoadedInputs in = load_inputs(g, a);
    SplitSpec spec;
    if (in.metadata.contains("split")) {
        const auto& s = in.metadata.at("split");
        spec.train_fraction = s.value("train_fraction", spec.train_fraction);
        spec.seed = s.value("seed", spec.seed);
        spec.min_per_class = s.value("min_per_class", spec.min_per_class);
    }
    if (a.fraction) spec.train_fraction = *a.fraction;
    if (a.split_seed) spec.seed = *a.split_seed;
    else if (g.seed) spec.seed = *g.seed;
    if (a.min_per_class) spec.min_per_class = *a.min_per_class;
    const Split split = stratified_split(in.prepared.scene, spec);
    if (split.test.empty()) throw std::invalid_argument("split leaves no test pixels");
    std::cout << to_json(evaluate_model(in.model, in.prepared, split.test)).dump(2) << "\n";
    return 0;
}

int cmd_predict_map(const GlobalOptions& g, const EvalArgs& a) {
    LoadedInputs in = load_inputs(g, a);
    const auto& scene = in.prepared.scene;
    const auto pixels = labeled_pixels(scene);
    const auto predicted = predict_pixels(in.model, in.prepared, pixels);
    std::vector<int> raster(scene.height * scene.width, -1);
    for (std::size_t i = 0; i < pixels.size(); ++i) raster[pixels[i].row * scene.width + pixels[i].col] = static_cast<int>(predicted[i]);
    const RenderedMap map = render_map(raster, scene.height, scene.width, scene.class_names);
    write_bytes(a.out, map.ppm);
    const fs::path legend = a.legend.empty() ? fs::path(a.out + ".legend.json") : fs::path(a.legend);
    write_bytes(legend, map.legend.dump(2) + "\n");
    std::cout << nlohmann::json{{"map", a.out}, {"legend", legend.string()}, {"pixels", pixels.size()}}.dump(2) << "\n";
    return 0;
}

int cmd_fold(const std::string& in_path, const std::string& out_path) {
    auto [model, metadata] = load_with_metadata(in_path);
    metadata["folded_from"] = to_string(model.config.layer_type);
    const Model folded = fold_model(model);
    save(folded, out_path, metadata);
    std::cout << nlohmann::json{{"model", out_path},
                                {"parameter_count_before", parameter_count(model)},
                                {"parameter_count_after", parameter_count(folded)}}
                     .dump(2)
              << "\n";
    return 0;
}

struct ParamCountArgs {
    std::string variant;
    std::optional<std::size_t> classes;
    std::optional<std::size_t> in_channels;
};

int cmd_param_count(const GlobalOptions& g, const ParamCountArgs& a) {
    NetworkConfig net;
    if (!g.config.empty()) {
        const ExperimentConfig cfg = load_experiment(g.config);
        net = cfg.network;
        if (!cfg.num_classes_given && !cfg.dataset.empty() && fs::exists(cfg.dataset / "header.json"))
            net.num_classes = load_scene(cfg.dataset).num_classes();
    }
    if (!a.variant.empty()) net = variant_config(a.variant, net);
    if (a.classes) net.num_classes = *a.classes;
    if (a.in_channels) net.in_channels = *a.in_channels;
    RngStream rng(g.seed.value_or(0));
    const Model model = build(net, rng);
    std::cout << nlohmann::json{{"parameter_count", parameter_count(model)}, {"network", config_to_json(net)}}.dump(2) << "\n";
    return 0;
}

int cmd_selfcheck() {
    bool ok = true;
    for (const auto& c : run_selfcheck(&std::cout)) ok = ok && c.passed;
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DO-Conv shallow network for hyperspectral image classification"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalOptions g;
    app.add_option("--config", g.config, "experiment config (JSON)");
    app.add_option("--seed", g.seed, "base seed");
    app.add_option("--runs", g.runs, "number of seeded runs");
    app.add_flag("--verbose", g.verbose, "print the loss trace");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train and evaluate over seeded runs; print summary JSON");
    train_cmd->add_option("--out", train_args.out, "write the last run's model here");
    train_cmd->add_option("--dataset", train_args.dataset, "HSIC container directory (overrides config)");
    train_cmd->add_option("--epochs", train_args.epochs, "override epoch count");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on the test split");
    eval_cmd->add_option("--model", eval_args.model, "model file")->required();
    eval_cmd->add_option("--dataset", eval_args.dataset, "HSIC container directory");
    eval_cmd->add_option("--fraction", eval_args.fraction, "training fraction of the split");
    eval_cmd->add_option("--split-seed", eval_args.split_seed, "split seed");
    eval_cmd->add_option("--min-per-class", eval_args.min_per_class, "minimum training pixels per class");

    EvalArgs map_args;
    auto* map_cmd = app.add_subcommand("predict-map", "classify labeled pixels and write a P6 class map");
    map_cmd->add_option("--model", map_args.model, "model file")->required();
    map_cmd->add_option("--dataset", map_args.dataset, "HSIC container directory");
    map_cmd->add_option("--out", map_args.out, "output .ppm")->required();
    map_cmd->add_option("--legend", map_args.legend, "legend JSON (default <out>.legend.json)");

    std::string fold_in, fold_out;
    auto* fold_cmd = app.add_subcommand("fold", "replace DO-Conv layers by folded standard kernels");
    fold_cmd->add_option("--model", fold_in, "input model")->required();
    fold_cmd->add_option("--out", fold_out, "output model")->required();

    ParamCountArgs pc_args;
    auto* pc_cmd = app.add_subcommand("param-count", "print the trainable parameter count");
    pc_cmd->add_option("--variant", pc_args.variant, "scnn | sdcnn | docnn | docnn-drc");
    pc_cmd->add_option("--classes", pc_args.classes, "number of classes");
    pc_cmd->add_option("--in-channels", pc_args.in_channels, "PCA components");

    auto* check_cmd = app.add_subcommand("selfcheck", "run fold-equivalence, gradient and metric checks");

    std::string synth_out;
    std::uint64_t synth_seed = 7;
    auto* synth_cmd = app.add_subcommand("make-synthetic", "write the three-class synthetic scene");
    synth_cmd->add_option("--out", synth_out, "output directory")->required();
    synth_cmd->add_option("--scene-seed", synth_seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) return cmd_train(g, train_args);
        if (*eval_cmd) return cmd_eval(g, eval_args);
        if (*map_cmd) return cmd_predict_map(g, map_args);
        if (*fold_cmd) return cmd_fold(fold_in, fold_out);
        if (*pc_cmd) return cmd_param_count(g, pc_args);
        if (*check_cmd) return cmd_selfcheck();
        if (*synth_cmd) {
            SyntheticSpec spec;
            spec.seed = synth_seed;
            save_scene(synthetic_scene(spec), synth_out);
            std::cout << nlohmann::json{{"dataset", synth_out}}.dump(2) << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
