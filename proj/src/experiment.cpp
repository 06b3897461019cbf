#include "docnn/experiment.hpp"

#include <fstream>
#include <iterator>
#include <ostream>
#include <stdexcept>

namespace docnn {

namespace {

constexpr std::uint64_t kInitStream = 0x494e4954;  // "INIT"

}  // namespace

void ExperimentConfig::validate() const {
    if (runs == 0) throw std::invalid_argument("runs must be at least 1");
    if (!(split.train_fraction > 0.0 && split.train_fraction <= 1.0)) throw std::invalid_argument("split.train_fraction must be in (0, 1]");
    network.validate();
    train.validate();
}

std::optional<std::size_t> default_epochs(std::string_view scene) {
    if (scene == "pu" || scene == "sa") return 120;
    if (scene == "ip") return 150;
    return std::nullopt;
}

ExperimentConfig parse_experiment(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
    ExperimentConfig cfg;
    try {
        if (j.contains("dataset")) {
            cfg.dataset = j.at("dataset").get<std::string>();
            if (cfg.dataset.is_relative() && !base_dir.empty()) cfg.dataset = base_dir / cfg.dataset;
        }
        cfg.scene = j.value("scene", std::string{});
        cfg.seed = j.value("seed", cfg.seed);
        cfg.runs = j.value("runs", cfg.runs);
        cfg.reshuffle_split_per_run = j.value("reshuffle_split_per_run", cfg.reshuffle_split_per_run);
        if (j.contains("split")) {
            const auto& s = j.at("split");
            cfg.split.train_fraction = s.value("train_fraction", cfg.split.train_fraction);
            cfg.split.min_per_class = s.value("min_per_class", cfg.split.min_per_class);
        }
        if (j.contains("network")) {
            cfg.network = config_from_json(j.at("network"));
            cfg.num_classes_given = j.at("network").contains("num_classes");
        }
        if (auto e = default_epochs(cfg.scene)) cfg.train.epochs = *e;
        if (j.contains("train")) {
            const auto& t = j.at("train");
            cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
            cfg.train.momentum = t.value("momentum", cfg.train.momentum);
            cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
            cfg.train.epochs = t.value("epochs", cfg.train.epochs);
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("experiment config: ") + e.what());
    }
    cfg.split.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(std::string{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()});
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    return parse_experiment(j, path.parent_path());
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
    return {
        {"dataset", cfg.dataset.string()},
        {"scene", cfg.scene},
        {"seed", cfg.seed},
        {"runs", cfg.runs},
        {"reshuffle_split_per_run", cfg.reshuffle_split_per_run},
        {"split", {{"train_fraction", cfg.split.train_fraction}, {"min_per_class", cfg.split.min_per_class}}},
        {"network", config_to_json(cfg.network)},
        {"train",
         {{"learning_rate", cfg.train.learning_rate},
          {"momentum", cfg.train.momentum},
          {"batch_size", cfg.train.batch_size},
          {"epochs", cfg.train.epochs}}},
    };
}

PreparedScene prepare_scene(const HsiScene& scene, std::size_t components, std::size_t patch_size) {
    scene.validate();
    PcaModel pca = fit_preprocessing(scene, components);
    Tensor projected = pca_apply(scene.cube, pca);
    PatchExtractor patches(projected, patch_size);
    return PreparedScene{scene, std::move(pca), std::move(projected), std::move(patches)};
}

Dataset make_dataset(const PreparedScene& prepared, std::span<const LabeledPixel> pixels) {
    Dataset d;
    d.patches.reserve(pixels.size());
    d.labels.reserve(pixels.size());
    for (const auto& p : pixels) {
        d.patches.push_back(prepared.patches.extract(p.row, p.col));
        d.labels.push_back(p.label);
    }
    return d;
}

std::vector<std::size_t> predict_pixels(const Model& model, const PreparedScene& prepared, std::span<const LabeledPixel> pixels) {
    const Model inference = fold_model(model);
    std::vector<std::size_t> out;
    out.reserve(pixels.size());
    for (const auto& p : pixels) out.push_back(predict(inference, prepared.patches.extract(p.row, p.col)));
    return out;
}

EvalReport evaluate_model(const Model& model, const PreparedScene& prepared, std::span<const LabeledPixel> pixels) {
    if (model.config.num_classes != prepared.scene.num_classes())
        throw std::invalid_argument("model has " + std::to_string(model.config.num_classes) + " classes, dataset has " +
                                    std::to_string(prepared.scene.num_classes()));
    const auto predicted = predict_pixels(model, prepared, pixels);
    std::vector<std::size_t> truth;
    truth.reserve(pixels.size());
    for (const auto& p : pixels) truth.push_back(p.label);
    return evaluate(confusion(truth, predicted, model.config.num_classes));
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const HsiScene& scene, std::ostream* log) {
    return run_experiment(cfg, prepare_scene(scene, cfg.network.in_channels, cfg.network.input_size), log);
}

ExperimentResult run_experiment(const ExperimentConfig& base, const PreparedScene& prepared, std::ostream* log) {
    ExperimentConfig cfg = base;
    if (cfg.num_classes_given && cfg.network.num_classes != prepared.scene.num_classes())
        throw std::invalid_argument("config declares " + std::to_string(cfg.network.num_classes) + " classes, dataset has " +
                                    std::to_string(prepared.scene.num_classes()));
    cfg.network.num_classes = prepared.scene.num_classes();
    if (prepared.projected.extent(2) != cfg.network.in_channels)
        throw std::invalid_argument("prepared scene has " + std::to_string(prepared.projected.extent(2)) + " components, network expects " +
                                    std::to_string(cfg.network.in_channels));
    cfg.validate();

    ExperimentResult result;
    std::vector<EvalReport> reports;
    for (std::size_t i = 0; i < cfg.runs; ++i) {
        RunOutcome run;
        run.seed = cfg.seed + i;
        run.split = cfg.split;
        run.split.seed = cfg.reshuffle_split_per_run ? run.seed : cfg.seed;
        const Split split = stratified_split(prepared.scene, run.split);
        if (split.test.empty()) throw std::invalid_argument("split leaves no test pixels");

        RngStream init = RngStream::derive(run.seed, kInitStream);
        Model model = build(cfg.network, init);
        TrainConfig tc = cfg.train;
        tc.seed = run.seed;
        const Dataset train_set = make_dataset(prepared, split.train);
        EpochCallback on_epoch;
        if (log)
            on_epoch = [&](std::size_t epoch, double loss) { *log << "run " << i + 1 << " epoch " << epoch << " loss " << loss << "\n"; };
        run.loss_trace = train(model, train_set, tc, on_epoch).loss_trace;
        run.report = evaluate_model(model, prepared, split.test);
        reports.push_back(run.report);
        result.runs.push_back(std::move(run));
        result.last_model = std::move(model);
    }
    result.summary = aggregate(reports);
    return result;
}

nlohmann::json summary_json(const ExperimentResult& result) {
    nlohmann::json j = to_json(result.summary);
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : result.runs)
        runs.push_back({{"seed", r.seed}, {"split_seed", r.split.seed}, {"oa", r.report.oa}, {"kappa", r.report.kappa}});
    j["per_run"] = runs;
    return j;
}

nlohmann::json model_metadata(const ExperimentConfig& cfg, const RunOutcome& run) {
    return {
        {"dataset", cfg.dataset.string()},
        {"run_seed", run.seed},
        {"split", {{"train_fraction", run.split.train_fraction}, {"seed", run.split.seed}, {"min_per_class", run.split.min_per_class}}},
    };
}

}  // namespace docnn
