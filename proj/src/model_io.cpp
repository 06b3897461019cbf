#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "docnn/network.hpp"

namespace docnn {

namespace {

constexpr char kMagic[] = "DOCNN1";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kHeaderLen = kMagicLen + 8;

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

void put_f32(std::string& out, double value) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f32(const unsigned char* p) {
    const std::uint32_t bits = std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
                               (std::uint32_t{p[3]} << 24);
    return static_cast<double>(std::bit_cast<float>(bits));
}

[[noreturn]] void fail(LoadErrorKind kind, const std::filesystem::path& path, const std::string& msg) {
    throw LoadError(kind, path.string() + ": " + msg);
}

}  // namespace

nlohmann::json config_to_json(const NetworkConfig& c) {
    return {
        {"input_size", c.input_size},   {"in_channels", c.in_channels},
        {"mid_channels", c.mid_channels}, {"out_channels", c.out_channels},
        {"num_classes", c.num_classes}, {"layer_type", to_string(c.layer_type)},
        {"drc_enabled", c.drc_enabled}, {"d_mul", c.d_mul},
        {"kernel_size", c.kernel_size},
    };
}

NetworkConfig config_from_json(const nlohmann::json& j, NetworkConfig c) {
    if (!j.is_object()) throw std::invalid_argument("network config must be a JSON object");
    if (j.contains("variant")) c = variant_config(j.at("variant").get<std::string>(), c);
    c.input_size = j.value("input_size", c.input_size);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.mid_channels = j.value("mid_channels", c.mid_channels);
    c.out_channels = j.value("out_channels", c.out_channels);
    c.num_classes = j.value("num_classes", c.num_classes);
    if (j.contains("layer_type")) c.layer_type = parse_layer_type(j.at("layer_type").get<std::string>());
    c.drc_enabled = j.value("drc_enabled", c.drc_enabled);
    c.d_mul = j.value("d_mul", c.d_mul);
    c.kernel_size = j.value("kernel_size", c.kernel_size);
    return c;
}

void save(const Model& model, const std::filesystem::path& path) { save(model, path, nlohmann::json::object()); }

void save(const Model& model, const std::filesystem::path& path, const nlohmann::json& metadata) {
    nlohmann::json tensors = nlohmann::json::array();
    std::string blob;
    for (const auto& p : parameters(model)) {
        tensors.push_back({{"name", p.name}, {"shape", p.tensor->shape()}, {"offset", blob.size()}});
        for (double v : p.tensor->data()) put_f32(blob, v);
    }
    const nlohmann::json manifest = {
        {"format_version", model.format_version},
        {"config", config_to_json(model.config)},
        {"dtype", "f32le"},
        {"tensors", tensors},
        {"blob_bytes", blob.size()},
        {"metadata", metadata.is_null() ? nlohmann::json::object() : metadata},
    };
    const std::string text = manifest.dump();

    std::string out(kMagic, kMagicLen);
    put_u64(out, text.size());
    out += text;
    out += blob;

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("failed writing " + path.string());
}

std::pair<Model, nlohmann::json> load_with_metadata(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(LoadErrorKind::missing_file, path, "no such model file");
    const std::string bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());

    if (bytes.size() < kMagicLen) fail(LoadErrorKind::truncated, path, "file shorter than the magic string");
    if (bytes.compare(0, kMagicLen, kMagic) != 0) fail(LoadErrorKind::bad_magic, path, "not a DOCNN1 model file");
    if (bytes.size() < kHeaderLen) fail(LoadErrorKind::truncated, path, "missing manifest length");
    const std::uint64_t manifest_len = get_u64(raw + kMagicLen);
    if (bytes.size() - kHeaderLen < manifest_len) fail(LoadErrorKind::truncated, path, "manifest cut short");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.substr(kHeaderLen, manifest_len));
    } catch (const nlohmann::json::exception& e) {
        fail(LoadErrorKind::malformed, path, std::string("bad manifest: ") + e.what());
    }

    Model model;
    std::size_t blob_bytes = 0;
    std::map<std::string, std::pair<Shape, std::size_t>> entries;
    try {
        const auto version = manifest.at("format_version").get<std::uint32_t>();
        if (version != Model::kFormatVersion)
            fail(LoadErrorKind::version_mismatch, path,
                 "format version " + std::to_string(version) + ", expected " + std::to_string(Model::kFormatVersion));
        const NetworkConfig config = config_from_json(manifest.at("config"));
        RngStream rng(0);
        model = build(config, rng);
        blob_bytes = manifest.at("blob_bytes").get<std::size_t>();
        for (const auto& t : manifest.at("tensors"))
            entries[t.at("name").get<std::string>()] = {t.at("shape").get<Shape>(), t.at("offset").get<std::size_t>()};
    } catch (const nlohmann::json::exception& e) {
        fail(LoadErrorKind::malformed, path, std::string("bad manifest: ") + e.what());
    } catch (const std::invalid_argument& e) {
        fail(LoadErrorKind::malformed, path, e.what());
    }

    const std::size_t blob_start = kHeaderLen + manifest_len;
    if (bytes.size() - blob_start < blob_bytes) fail(LoadErrorKind::truncated, path, "tensor data cut short");

    for (auto& p : parameters(model)) {
        const auto it = entries.find(p.name);
        if (it == entries.end()) fail(LoadErrorKind::malformed, path, "missing tensor " + p.name);
        const auto& [shape, offset] = it->second;
        if (shape != p.tensor->shape())
            fail(LoadErrorKind::malformed, path,
                 "tensor " + p.name + " has shape " + shape_string(shape) + ", config implies " + shape_string(p.tensor->shape()));
        if (offset + 4 * p.tensor->size() > blob_bytes)
            fail(LoadErrorKind::malformed, path, "tensor " + p.name + " extends past the data section");
        const unsigned char* src = raw + blob_start + offset;
        auto dst = p.tensor->data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = get_f32(src + 4 * i);
    }
    return {std::move(model), manifest.value("metadata", nlohmann::json::object())};
}

Model load(const std::filesystem::path& path) { return load_with_metadata(path).first; }

void export_folded(const Model& model, const std::filesystem::path& path) {
    nlohmann::json metadata = {{"folded_from", to_string(model.config.layer_type)}};
    save(fold_model(model), path, metadata);
}

}  // namespace docnn
