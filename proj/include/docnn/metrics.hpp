#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace docnn {

// counts[t][p]: samples of true class t predicted as p.
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::uint64_t> counts;  // row-major classes x classes

    std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * classes + predicted]; }
    std::uint64_t total() const;
    std::uint64_t row_sum(std::size_t c) const;
    std::uint64_t col_sum(std::size_t c) const;
};

ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted, std::size_t classes);

double overall_accuracy(const ConfusionMatrix& cm);
std::vector<double> per_class_accuracy(const ConfusionMatrix& cm);
// Cohen's kappa. When chance agreement p_e is 1 (a single class in play),
// kappa is 1 if every sample agrees and 0 otherwise.
double kappa(const ConfusionMatrix& cm);

struct EvalReport {
    double oa = 0.0;
    double kappa = 0.0;
    std::vector<double> per_class;  // NaN for classes with no test samples
    ConfusionMatrix confusion;
};

EvalReport evaluate(const ConfusionMatrix& cm);
nlohmann::json to_json(const EvalReport& r);

struct RunSummary {
    std::size_t runs = 0;
    double oa_mean = 0.0, oa_std = 0.0;
    double kappa_mean = 0.0, kappa_std = 0.0;
};

// Mean and sample (n - 1) standard deviation; std is 0 for a single run.
RunSummary aggregate(std::span<const EvalReport> reports);
nlohmann::json to_json(const RunSummary& s);

using Rgb = std::array<std::uint8_t, 3>;

// Fixed 16-entry class palette.
const std::vector<Rgb>& default_palette();

struct RenderedMap {
    std::string ppm;        // binary P6, 8-bit
    nlohmann::json legend;  // {"classes": [{"index", "name", "rgb"}], "unlabeled": [0,0,0]}
};

// predictions: row-major raster of class indices, or -1 for unlabeled
// pixels, which render black.
RenderedMap render_map(std::span<const int> predictions, std::size_t height, std::size_t width,
                       const std::vector<std::string>& class_names, const std::vector<Rgb>& palette = default_palette());

}  // namespace docnn
