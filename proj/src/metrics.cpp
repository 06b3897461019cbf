#include "docnn/metrics.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace docnn {

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::row_sum(std::size_t c) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < classes; ++p) s += at(c, p);
    return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t c) const {
    std::uint64_t s = 0;
    for (std::size_t t = 0; t < classes; ++t) s += at(t, c);
    return s;
}

ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted, std::size_t classes) {
    if (truth.size() != predicted.size()) throw std::invalid_argument("confusion: label lists differ in length");
    if (classes == 0) throw std::invalid_argument("confusion: class count must be positive");
    ConfusionMatrix cm{classes, std::vector<std::uint64_t>(classes * classes, 0)};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= classes || predicted[i] >= classes)
            throw std::invalid_argument("confusion: label out of range at sample " + std::to_string(i));
        ++cm.counts[truth[i] * classes + predicted[i]];
    }
    return cm;
}

namespace {

void require_nonempty(const ConfusionMatrix& cm) {
    if (cm.classes == 0 || cm.total() == 0) throw std::invalid_argument("empty confusion matrix");
}

}  // namespace

double overall_accuracy(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    std::uint64_t trace = 0;
    for (std::size_t c = 0; c < cm.classes; ++c) trace += cm.at(c, c);
    return static_cast<double>(trace) / static_cast<double>(cm.total());
}

std::vector<double> per_class_accuracy(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    std::vector<double> out(cm.classes);
    for (std::size_t c = 0; c < cm.classes; ++c) {
        const auto rs = cm.row_sum(c);
        if (rs == 0) throw std::invalid_argument("per_class_accuracy: class " + std::to_string(c) + " has no samples");
        out[c] = static_cast<double>(cm.at(c, c)) / static_cast<double>(rs);
    }
    return out;
}

double kappa(const ConfusionMatrix& cm) {
    const double po = overall_accuracy(cm);
    const double total = static_cast<double>(cm.total());
    double pe = 0.0;
    for (std::size_t c = 0; c < cm.classes; ++c) pe += static_cast<double>(cm.row_sum(c)) * static_cast<double>(cm.col_sum(c));
    pe /= total * total;
    if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
    return (po - pe) / (1.0 - pe);
}

EvalReport evaluate(const ConfusionMatrix& cm) {
    EvalReport r;
    r.oa = overall_accuracy(cm);
    r.kappa = kappa(cm);
    r.per_class.resize(cm.classes);
    for (std::size_t c = 0; c < cm.classes; ++c) {
        const auto rs = cm.row_sum(c);
        r.per_class[c] = rs ? static_cast<double>(cm.at(c, c)) / static_cast<double>(rs) : std::numeric_limits<double>::quiet_NaN();
    }
    r.confusion = cm;
    return r;
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json per_class = nlohmann::json::array();
    for (double v : r.per_class) per_class.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t t = 0; t < r.confusion.classes; ++t) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t p = 0; p < r.confusion.classes; ++p) row.push_back(r.confusion.at(t, p));
        rows.push_back(row);
    }
    return {{"oa", r.oa}, {"kappa", r.kappa}, {"per_class", per_class}, {"confusion", rows}};
}

RunSummary aggregate(std::span<const EvalReport> reports) {
    if (reports.empty()) throw std::invalid_argument("aggregate: no reports");
    const double n = static_cast<double>(reports.size());
    RunSummary s;
    s.runs = reports.size();
    for (const auto& r : reports) {
        s.oa_mean += r.oa / n;
        s.kappa_mean += r.kappa / n;
    }
    if (reports.size() > 1) {
        for (const auto& r : reports) {
            s.oa_std += (r.oa - s.oa_mean) * (r.oa - s.oa_mean);
            s.kappa_std += (r.kappa - s.kappa_mean) * (r.kappa - s.kappa_mean);
        }
        s.oa_std = std::sqrt(s.oa_std / (n - 1.0));
        s.kappa_std = std::sqrt(s.kappa_std / (n - 1.0));
    }
    return s;
}

nlohmann::json to_json(const RunSummary& s) {
    return {
        {"runs", s.runs},
        {"oa_mean", s.oa_mean},
        {"oa_std", s.oa_std},
        {"oa_percent", {{"mean", 100.0 * s.oa_mean}, {"std", 100.0 * s.oa_std}}},
        {"kappa_mean", s.kappa_mean},
        {"kappa_std", s.kappa_std},
        {"kappa_x100", {{"mean", 100.0 * s.kappa_mean}, {"std", 100.0 * s.kappa_std}}},
    };
}

const std::vector<Rgb>& default_palette() {
    static const std::vector<Rgb> palette = {
        {{230, 25, 75}},   {{60, 180, 75}},   {{255, 225, 25}}, {{0, 130, 200}},   {{245, 130, 48}},  {{145, 30, 180}},
        {{70, 240, 240}},  {{240, 50, 230}},  {{210, 245, 60}}, {{250, 190, 212}}, {{0, 128, 128}},   {{220, 190, 255}},
        {{170, 110, 40}},  {{255, 250, 200}}, {{128, 0, 0}},    {{170, 255, 195}},
    };
    return palette;
}

RenderedMap render_map(std::span<const int> predictions, std::size_t height, std::size_t width,
                       const std::vector<std::string>& class_names, const std::vector<Rgb>& palette) {
    if (predictions.size() != height * width) throw std::invalid_argument("render_map: raster size does not match dimensions");
    if (palette.size() < class_names.size())
        throw std::invalid_argument("render_map: palette has " + std::to_string(palette.size()) + " colors for " +
                                    std::to_string(class_names.size()) + " classes");
    RenderedMap out;
    out.ppm = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.ppm.reserve(out.ppm.size() + 3 * predictions.size());
    for (int p : predictions) {
        Rgb color{0, 0, 0};
        if (p >= 0) {
            if (static_cast<std::size_t>(p) >= class_names.size())
                throw std::invalid_argument("render_map: class index " + std::to_string(p) + " out of range");
            color = palette[static_cast<std::size_t>(p)];
        }
        out.ppm.append(reinterpret_cast<const char*>(color.data()), 3);
    }
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t c = 0; c < class_names.size(); ++c)
        classes.push_back({{"index", c}, {"name", class_names[c]}, {"rgb", palette[c]}});
    out.legend = {{"classes", classes}, {"unlabeled", Rgb{0, 0, 0}}};
    return out;
}

}  // namespace docnn
