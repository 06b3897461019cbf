#include "docnn/hsi.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "docnn/rng.hpp"
#include "gemm.hpp"
#include "json.hpp"

namespace docnn {

namespace {

constexpr std::uint64_t kSplitStream = 0x53504c4954;  // "SPLIT"

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("failed writing " + path.string());
}

double round_half_away(double x) { return x < 0 ? -std::floor(-x + 0.5) : std::floor(x + 0.5); }

}  // namespace

void HsiScene::validate() const {
    if (width == 0 || height == 0 || bands == 0) throw std::invalid_argument("scene extents must be positive");
    if (cube.shape() != Shape{height, width, bands})
        throw std::invalid_argument("scene cube " + shape_string(cube.shape()) + " does not match header extents");
    if (labels.size() != height * width) throw std::invalid_argument("label raster size does not match scene");
    for (auto l : labels)
        if (l > class_names.size())
            throw std::invalid_argument("label " + std::to_string(l) + " exceeds class count " + std::to_string(class_names.size()));
}

HsiScene load_scene(const std::filesystem::path& dir) {
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(read_file(dir / "header.json"));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error((dir / "header.json").string() + ": " + e.what());
    }
    HsiScene s;
    try {
        s.width = header.at("width").get<std::size_t>();
        s.height = header.at("height").get<std::size_t>();
        s.bands = header.at("bands").get<std::size_t>();
        s.class_names = header.at("class_names").get<std::vector<std::string>>();
        if (header.value("dtype", "f32le") != "f32le") throw std::runtime_error("unsupported dtype (want f32le)");
        if (header.value("interleave", "bsq") != "bsq") throw std::runtime_error("unsupported interleave (want bsq)");
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error((dir / "header.json").string() + ": " + e.what());
    }
    if (s.width == 0 || s.height == 0 || s.bands == 0) throw std::runtime_error(dir.string() + ": scene extents must be positive");

    const std::size_t pixels = s.width * s.height;
    const std::string data = read_file(dir / "data.raw");
    if (data.size() != pixels * s.bands * 4)
        throw std::runtime_error((dir / "data.raw").string() + ": expected " + std::to_string(pixels * s.bands * 4) + " bytes, found " +
                                 std::to_string(data.size()));
    const std::string labels = read_file(dir / "labels.raw");
    if (labels.size() != pixels * 2)
        throw std::runtime_error((dir / "labels.raw").string() + ": expected " + std::to_string(pixels * 2) + " bytes, found " +
                                 std::to_string(labels.size()));

    s.cube = Tensor({s.height, s.width, s.bands});
    const auto* raw = reinterpret_cast<const unsigned char*>(data.data());
    auto cube = s.cube.data();
    for (std::size_t b = 0; b < s.bands; ++b)
        for (std::size_t p = 0; p < pixels; ++p) {
            const unsigned char* q = raw + 4 * (b * pixels + p);
            const std::uint32_t bits = std::uint32_t{q[0]} | (std::uint32_t{q[1]} << 8) | (std::uint32_t{q[2]} << 16) |
                                       (std::uint32_t{q[3]} << 24);
            cube[p * s.bands + b] = static_cast<double>(std::bit_cast<float>(bits));
        }
    s.labels.resize(pixels);
    const auto* lraw = reinterpret_cast<const unsigned char*>(labels.data());
    for (std::size_t p = 0; p < pixels; ++p) s.labels[p] = static_cast<std::uint16_t>(lraw[2 * p] | (lraw[2 * p + 1] << 8));

    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(dir.string() + ": " + e.what());
    }
    return s;
}

void save_scene(const HsiScene& scene, const std::filesystem::path& dir) {
    scene.validate();
    std::filesystem::create_directories(dir);
    const nlohmann::json header = {
        {"width", scene.width}, {"height", scene.height}, {"bands", scene.bands},
        {"dtype", "f32le"},     {"interleave", "bsq"},    {"class_names", scene.class_names},
    };
    write_file(dir / "header.json", header.dump(2) + "\n");

    const std::size_t pixels = scene.width * scene.height;
    std::string data;
    data.reserve(pixels * scene.bands * 4);
    const auto cube = scene.cube.data();
    for (std::size_t b = 0; b < scene.bands; ++b)
        for (std::size_t p = 0; p < pixels; ++p) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(cube[p * scene.bands + b]));
            for (int i = 0; i < 4; ++i) data.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
        }
    write_file(dir / "data.raw", data);

    std::string labels;
    labels.reserve(pixels * 2);
    for (auto l : scene.labels) {
        labels.push_back(static_cast<char>(l & 0xff));
        labels.push_back(static_cast<char>(l >> 8));
    }
    write_file(dir / "labels.raw", labels);
}

BandStats band_stats(const Tensor& cube) {
    if (cube.rank() != 3) throw std::invalid_argument("band_stats: expected H x W x B cube");
    const std::size_t bands = cube.extent(2), n = cube.extent(0) * cube.extent(1);
    BandStats s{Tensor({bands}), Tensor({bands})};
    const auto d = cube.data();
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t b = 0; b < bands; ++b) s.mean[b] += d[p * bands + b];
    for (std::size_t b = 0; b < bands; ++b) s.mean[b] /= static_cast<double>(n);
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t b = 0; b < bands; ++b) {
            const double x = d[p * bands + b] - s.mean[b];
            s.stddev[b] += x * x;
        }
    for (std::size_t b = 0; b < bands; ++b) {
        const double sd = std::sqrt(s.stddev[b] / static_cast<double>(n));
        s.stddev[b] = sd > 0.0 ? sd : 1.0;
    }
    return s;
}

std::pair<HsiScene, BandStats> standardize(const HsiScene& scene) {
    if (scene.cube.size() == 0 || scene.width * scene.height == 0) throw std::invalid_argument("standardize: empty cube");
    BandStats stats = band_stats(scene.cube);
    HsiScene out = scene;
    auto d = out.cube.data();
    const std::size_t bands = scene.bands;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (d[i] - stats.mean[i % bands]) / stats.stddev[i % bands];
    return {std::move(out), std::move(stats)};
}

PcaModel pca_fit(const Tensor& cube, std::size_t k) {
    if (cube.rank() != 3) throw std::invalid_argument("pca_fit: expected H x W x B cube");
    const std::size_t bands = cube.extent(2), n = cube.extent(0) * cube.extent(1);
    if (k == 0 || k > bands)
        throw std::invalid_argument("pca_fit: cannot keep " + std::to_string(k) + " components of " + std::to_string(bands) + " bands");

    PcaModel m;
    m.mean = band_stats(cube).mean;
    m.scale = Tensor({bands}, 1.0);

    const auto x = detail::as_matrix(cube, n, bands);
    const Eigen::RowVectorXd mu = Eigen::Map<const Eigen::RowVectorXd>(m.mean.data().data(), static_cast<Eigen::Index>(bands));
    const Eigen::MatrixXd centered = x.rowwise() - mu;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw std::runtime_error("pca_fit: eigendecomposition failed");
    // Eigen returns ascending eigenvalues.
    m.components = Tensor({bands, k});
    m.explained_variance = Tensor({k});
    for (std::size_t j = 0; j < k; ++j) {
        const auto src = static_cast<Eigen::Index>(bands - 1 - j);
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0) v = -v;
        for (std::size_t b = 0; b < bands; ++b) m.components[b * k + j] = v[static_cast<Eigen::Index>(b)];
        m.explained_variance[j] = std::max(0.0, solver.eigenvalues()[src]);
    }
    return m;
}

Tensor pca_apply(const Tensor& cube, const PcaModel& m) {
    if (cube.rank() != 3) throw std::invalid_argument("pca_apply: expected H x W x B cube");
    const std::size_t bands = cube.extent(2), n = cube.extent(0) * cube.extent(1);
    if (m.components.rank() != 2 || m.components.extent(0) != bands || m.mean.size() != bands || m.scale.size() != bands)
        throw std::invalid_argument("pca_apply: model fitted for a different band count");
    const std::size_t k = m.components.extent(1);
    Tensor normalized = cube;
    auto d = normalized.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (d[i] - m.mean[i % bands]) / m.scale[i % bands];
    Tensor out({cube.extent(0), cube.extent(1), k});
    detail::as_matrix(out, n, k).noalias() = detail::as_matrix(normalized, n, bands) * detail::as_matrix(m.components, bands, k);
    return out;
}

PcaModel fit_preprocessing(const HsiScene& scene, std::size_t k) {
    auto [standardized, stats] = standardize(scene);
    PcaModel m = pca_fit(standardized.cube, k);
    // The standardized data has zero mean, so the centering step folds into
    // the band means.
    m.mean = stats.mean;
    m.scale = stats.stddev;
    return m;
}

PatchExtractor::PatchExtractor(const Tensor& projected, std::size_t size)
    : padded_(), size_(size), height_(0), width_(0) {
    if (projected.rank() != 3) throw std::invalid_argument("PatchExtractor: expected H x W x K map");
    if (size % 2 == 0) throw std::invalid_argument("patch size must be odd");
    height_ = projected.extent(0);
    width_ = projected.extent(1);
    padded_ = pad_reflect(projected, size / 2);
}

Tensor PatchExtractor::extract(std::size_t row, std::size_t col) const {
    if (row >= height_ || col >= width_)
        throw std::invalid_argument("patch center (" + std::to_string(row) + ", " + std::to_string(col) + ") outside " +
                                    std::to_string(height_) + "x" + std::to_string(width_) + " scene");
    const std::size_t k = padded_.extent(2), pw = padded_.extent(1);
    Tensor out({size_, size_, k});
    const auto src = padded_.data();
    auto dst = out.data();
    // Padded (row, col) is the window's top-left corner.
    for (std::size_t dy = 0; dy < size_; ++dy)
        std::copy_n(&src[((row + dy) * pw + col) * k], size_ * k, &dst[dy * size_ * k]);
    return out;
}

Tensor extract_patch(const Tensor& projected, std::size_t row, std::size_t col, std::size_t size) {
    return PatchExtractor(projected, size).extract(row, col);
}

std::vector<LabeledPixel> labeled_pixels(const HsiScene& scene) {
    std::vector<LabeledPixel> out;
    for (std::size_t r = 0; r < scene.height; ++r)
        for (std::size_t c = 0; c < scene.width; ++c)
            if (const auto l = scene.label_at(r, c); l != 0) out.push_back({r, c, static_cast<std::size_t>(l - 1)});
    return out;
}

Split stratified_split(const HsiScene& scene, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0))
        throw std::invalid_argument("train_fraction must be in (0, 1]");
    std::vector<std::vector<LabeledPixel>> by_class(scene.num_classes());
    for (const auto& p : labeled_pixels(scene)) by_class[p.label].push_back(p);

    RngStream rng = RngStream::derive(spec.seed, kSplitStream);
    Split split;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& pixels = by_class[c];
        if (pixels.empty())
            throw std::invalid_argument("class " + std::to_string(c + 1) + " ('" + scene.class_names[c] + "') has no labeled pixels");
        const auto n = pixels.size();
        const auto wanted = static_cast<std::size_t>(round_half_away(spec.train_fraction * static_cast<double>(n)));
        const std::size_t take = std::min(n, std::max(spec.min_per_class, wanted));
        rng.shuffle(std::span<LabeledPixel>(pixels));
        split.train.insert(split.train.end(), pixels.begin(), pixels.begin() + static_cast<long>(take));
        split.test.insert(split.test.end(), pixels.begin() + static_cast<long>(take), pixels.end());
    }
    auto by_position = [&](const LabeledPixel& a, const LabeledPixel& b) { return a.row * scene.width + a.col < b.row * scene.width + b.col; };
    std::sort(split.train.begin(), split.train.end(), by_position);
    std::sort(split.test.begin(), split.test.end(), by_position);
    return split;
}

HsiScene synthetic_scene(const SyntheticSpec& spec) {
    constexpr std::size_t kClasses = 3;
    HsiScene s;
    s.height = spec.height;
    s.width = spec.width;
    s.bands = spec.bands;
    s.class_names = {"alpha", "beta", "gamma"};
    s.cube = Tensor({spec.height, spec.width, spec.bands});
    s.labels.resize(spec.height * spec.width);

    RngStream rng(spec.seed);
    const double nb = static_cast<double>(spec.bands);
    auto cube = s.cube.data();
    for (std::size_t r = 0; r < spec.height; ++r)
        for (std::size_t c = 0; c < spec.width; ++c) {
            const std::size_t cls = std::min(kClasses - 1, c * kClasses / spec.width);
            s.labels[r * spec.width + c] = static_cast<std::uint16_t>(cls + 1);
            const double center = nb * (static_cast<double>(cls) + 1.0) / (kClasses + 1.0);
            const double width = nb / 6.0;
            for (std::size_t b = 0; b < spec.bands; ++b) {
                const double z = (static_cast<double>(b) - center) / width;
                cube[(r * spec.width + c) * spec.bands + b] = 0.5 + std::exp(-0.5 * z * z) + spec.noise * rng.normal();
            }
        }
    return s;
}

}  // namespace docnn
