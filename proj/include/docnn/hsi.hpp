#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "docnn/tensor.hpp"

namespace docnn {

// Hyperspectral cube (H x W x B) with a label raster; label 0 is unlabeled,
// label l > 0 names class_names[l - 1].
struct HsiScene {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t bands = 0;
    Tensor cube;
    std::vector<std::uint16_t> labels;  // row-major, height * width
    std::vector<std::string> class_names;

    std::size_t num_classes() const { return class_names.size(); }
    std::uint16_t label_at(std::size_t row, std::size_t col) const { return labels[row * width + col]; }
    void validate() const;
};

// HSIC container v1: header.json, data.raw (f32 LE, band-sequential),
// labels.raw (u16 LE, row-major).
HsiScene load_scene(const std::filesystem::path& dir);
void save_scene(const HsiScene& scene, const std::filesystem::path& dir);

struct BandStats {
    Tensor mean;
    Tensor stddev;  // population std; clamped to 1 for constant bands
};

BandStats band_stats(const Tensor& cube);
std::pair<HsiScene, BandStats> standardize(const HsiScene& scene);

// Projection x -> ((x - mean) / scale) . components.
struct PcaModel {
    Tensor mean;                // [B]
    Tensor scale;               // [B]
    Tensor components;          // [B, K], orthonormal columns
    Tensor explained_variance;  // [K], nonincreasing
};

// Top-k eigenvectors of the pixel covariance (population normalization).
// Each component is sign-fixed so its largest-magnitude entry is positive.
// The returned model centers on the data mean with unit scale.
PcaModel pca_fit(const Tensor& cube, std::size_t k);
Tensor pca_apply(const Tensor& cube, const PcaModel& model);

// Standardize, then fit PCA on the standardized cube; the returned model
// applies both steps to raw pixels.
PcaModel fit_preprocessing(const HsiScene& scene, std::size_t k);

// Reflect-padded square windows around pixel centers.
class PatchExtractor {
public:
    PatchExtractor(const Tensor& projected, std::size_t size);

    Tensor extract(std::size_t row, std::size_t col) const;
    std::size_t size() const { return size_; }

private:
    Tensor padded_;
    std::size_t size_;
    std::size_t height_, width_;
};

Tensor extract_patch(const Tensor& projected, std::size_t row, std::size_t col, std::size_t size = 9);

struct SplitSpec {
    double train_fraction = 0.1;
    std::uint64_t seed = 0;
    std::size_t min_per_class = 1;
};

struct LabeledPixel {
    std::size_t row = 0;
    std::size_t col = 0;
    std::size_t label = 0;  // class index, 0-based

    bool operator==(const LabeledPixel&) const = default;
};

struct Split {
    std::vector<LabeledPixel> train;
    std::vector<LabeledPixel> test;
};

// Per class: max(min_per_class, round(fraction * n)) training pixels (capped at
// n, round half away from zero) drawn without replacement. Both lists are in
// row-major pixel order.
Split stratified_split(const HsiScene& scene, const SplitSpec& spec);

std::vector<LabeledPixel> labeled_pixels(const HsiScene& scene);

// Three-class fixture: 32 x 32 x 20, one vertical field per class, every
// pixel labeled. Class spectra are Gaussian bumps centred at B/4, B/2 and
// 3B/4 on a 0.5 baseline, plus i.i.d. Gaussian noise per band.
struct SyntheticSpec {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t bands = 20;
    double noise = 0.15;
    std::uint64_t seed = 7;
};

HsiScene synthetic_scene(const SyntheticSpec& spec = {});

}  // namespace docnn
