#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spat/data/geometry.hpp"
#include "spat/data/image.hpp"

namespace spat {

inline constexpr std::size_t kDirectionalImages = 32;
inline constexpr int kCaseFormatVersion = 1;
inline constexpr int kDatasetFormatVersion = 1;

enum class InputMode { spat32, fullLight1 };

std::string to_string(InputMode mode);
InputMode parse_input_mode(const std::string& text);  // throws ConfigError

// Directional images are stored 0-based here; image k on disk (img_k.png,
// k = 1..32) lives at directional[k - 1].
struct ImageStack {
    std::string case_id;
    std::string site;
    double mm_per_px = 0.25;
    std::size_t width = 0;
    std::size_t height = 0;
    std::array<Image8, kDirectionalImages> directional;
    Image8 full_light;
    std::optional<Image8> dark;

    // Throws DataError if any image disagrees with width/height.
    void check_dims() const;
};

struct AnnotationSet {
    PrickLayout layout = PrickLayout::grid();
    std::array<std::optional<Polygon>, kPrickCount> polygons;  // indexed by prick id - 1
};

struct Case {
    ImageStack stack;
    AnnotationSet annotations;
    // Manifest members this version does not interpret; written back unchanged.
    nlohmann::json extra = nlohmann::json::object();
};

// One directory per case:
//   manifest.json, img_01.png .. img_32.png, full_light.png, optional dark.png
// See docs/dataset-format.md for the manifest schema.
Case load_case(const std::filesystem::path& dir);
// Writes into a sibling temp directory, then renames it over `dir`.
void save_case(const Case& c, const std::filesystem::path& dir);

nlohmann::json case_manifest(const Case& c);
// Throws DataError naming the offending member.
Case parse_case_manifest(const nlohmann::json& manifest);

BinaryMask union_gt_mask(const AnnotationSet& annotations, std::size_t width, std::size_t height);
// Per-prick rasterized ground truth; empty optional where no polygon exists.
std::array<std::optional<BinaryMask>, kPrickCount> prick_gt_masks(const AnnotationSet& annotations,
                                                                  std::size_t width, std::size_t height);

struct DatasetEntry {
    std::string case_id;
    std::string site;
    std::string dir;  // relative to the dataset root
    std::string sha256;
};

struct DatasetIndex {
    std::filesystem::path root;
    std::vector<DatasetEntry> cases;
    nlohmann::json generator = nlohmann::json::object();
    nlohmann::json extra = nlohmann::json::object();

    std::filesystem::path case_dir(const DatasetEntry& e) const { return root / e.dir; }
};

// Dataset root holds manifest.json listing the case directories.
DatasetIndex load_dataset(const std::filesystem::path& root);
void write_dataset_manifest(const DatasetIndex& index);
std::string dataset_manifest_text(const DatasetIndex& index);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
// Digest over every file of a case directory in a fixed order.
std::string case_digest(const std::filesystem::path& dir);

std::string read_text_file(const std::filesystem::path& path);
// Writes to a temp file in the same directory, then renames.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace spat
