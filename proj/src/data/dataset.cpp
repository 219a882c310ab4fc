#include "spat/data/dataset.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "spat/errors.hpp"

namespace spat {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(InputMode mode) { return mode == InputMode::spat32 ? "spat32" : "fullLight1"; }

InputMode parse_input_mode(const std::string& text) {
    if (text == "spat32") return InputMode::spat32;
    if (text == "fullLight1") return InputMode::fullLight1;
    throw ConfigError("unknown mode '" + text + "' (expected spat32 or fullLight1)");
}

void ImageStack::check_dims() const {
    auto check = [&](const Image8& img, const std::string& what) {
        if (img.width != width || img.height != height) {
            throw DataError("case " + case_id + ": " + what + " is " + std::to_string(img.width) + "x" +
                            std::to_string(img.height) + ", expected " + std::to_string(width) + "x" +
                            std::to_string(height));
        }
    };
    for (std::size_t k = 0; k < kDirectionalImages; ++k) check(directional[k], "image " + std::to_string(k + 1));
    check(full_light, "full-light image");
    if (dark) check(*dark, "dark image");
}

namespace {

std::string image_name(std::size_t index) {
    std::ostringstream os;
    os << "img_" << std::setw(2) << std::setfill('0') << index << ".png";
    return os.str();
}

const std::vector<std::string> kKnownCaseMembers = {
    "format", "version", "case_id", "site", "mm_per_pixel", "width", "height",
    "has_dark", "prick_layout", "annotations"};

template <typename V>
V member(const json& j, const char* key, const char* what) {
    if (!j.is_object() || !j.contains(key)) throw DataError(std::string(what) + ": missing member '" + key + "'");
    try {
        return j.at(key).get<V>();
    } catch (const json::exception& e) {
        throw DataError(std::string(what) + ": member '" + key + "' has the wrong type (" + e.what() + ")");
    }
}

Point parse_point(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        throw DataError(what + ": expected [x, y]");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

json point_json(Point p) { return json::array({p.x, p.y}); }

}  // namespace

json case_manifest(const Case& c) {
    json m = c.extra;
    const auto& s = c.stack;
    m["format"] = "spat-case";
    m["version"] = kCaseFormatVersion;
    m["case_id"] = s.case_id;
    m["site"] = s.site;
    m["mm_per_pixel"] = s.mm_per_px;
    m["width"] = s.width;
    m["height"] = s.height;
    m["has_dark"] = s.dark.has_value();
    json points = json::array();
    for (const auto& p : c.annotations.layout.points_mm) points.push_back(point_json(p));
    m["prick_layout"] = {{"origin", "image_center"}, {"units", "mm"}, {"points", points}};
    json ann = json::array();
    for (std::size_t i = 0; i < kPrickCount; ++i) {
        if (!c.annotations.polygons[i]) continue;
        json poly = json::array();
        for (const auto& p : *c.annotations.polygons[i]) poly.push_back(point_json(p));
        ann.push_back({{"prick", i + 1}, {"polygon", poly}});
    }
    m["annotations"] = ann;
    return m;
}

Case parse_case_manifest(const json& m) {
    const char* what = "case manifest";
    if (!m.is_object()) throw DataError("case manifest: top level must be an object");
    if (member<std::string>(m, "format", what) != "spat-case") throw DataError("case manifest: format is not 'spat-case'");
    if (member<int>(m, "version", what) < 1) throw DataError("case manifest: version must be >= 1");

    Case c;
    auto& s = c.stack;
    s.case_id = member<std::string>(m, "case_id", what);
    s.site = member<std::string>(m, "site", what);
    s.mm_per_px = member<double>(m, "mm_per_pixel", what);
    if (!(s.mm_per_px > 0.0)) throw DataError("case manifest: mm_per_pixel must be positive");
    s.width = member<std::size_t>(m, "width", what);
    s.height = member<std::size_t>(m, "height", what);
    if (s.width == 0 || s.height == 0) throw DataError("case manifest: width and height must be positive");

    const json layout = member<json>(m, "prick_layout", what);
    const json points = member<json>(layout, "points", "prick_layout");
    if (!points.is_array() || points.size() != kPrickCount) {
        throw DataError("case manifest: prick_layout.points must hold 12 points");
    }
    for (std::size_t i = 0; i < kPrickCount; ++i) {
        c.annotations.layout.points_mm[i] = parse_point(points[i], "prick_layout.points[" + std::to_string(i) + "]");
    }

    const json ann = member<json>(m, "annotations", what);
    if (!ann.is_array()) throw DataError("case manifest: annotations must be an array");
    for (const auto& a : ann) {
        const int prick = member<int>(a, "prick", "annotation");
        if (prick < 1 || prick > static_cast<int>(kPrickCount)) {
            throw DataError("annotation: prick " + std::to_string(prick) + " outside 1..12");
        }
        auto& slot = c.annotations.polygons[static_cast<std::size_t>(prick - 1)];
        if (slot) throw DataError("annotation: prick " + std::to_string(prick) + " annotated twice");
        const json poly = member<json>(a, "polygon", "annotation");
        if (!poly.is_array() || poly.size() < 3) {
            throw DataError("annotation for prick " + std::to_string(prick) + ": polygon needs >= 3 vertices");
        }
        Polygon p;
        for (const auto& v : poly) {
            Point q = parse_point(v, "annotation for prick " + std::to_string(prick));
            if (q.x < 0.0 || q.y < 0.0 || q.x > static_cast<double>(s.width) || q.y > static_cast<double>(s.height)) {
                throw DataError("annotation for prick " + std::to_string(prick) + ": vertex outside the image");
            }
            p.push_back(q);
        }
        slot = std::move(p);
    }

    for (auto it = m.begin(); it != m.end(); ++it) {
        if (std::find(kKnownCaseMembers.begin(), kKnownCaseMembers.end(), it.key()) == kKnownCaseMembers.end()) {
            c.extra[it.key()] = it.value();
        }
    }
    return c;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

namespace {

std::string unique_suffix() {
    static std::atomic<unsigned> counter{0};
    return std::to_string(::getpid()) + "-" + std::to_string(counter++);
}

}  // namespace

void write_text_file(const fs::path& path, std::string_view text) {
    fs::path tmp = path;
    tmp += ".tmp-" + unique_suffix();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw DataError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

Case load_case(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw DataError("no manifest.json in " + dir.string());
    json m;
    try {
        m = json::parse(read_text_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw DataError(manifest_path.string() + ": " + e.what());
    }
    Case c = parse_case_manifest(m);
    auto& s = c.stack;
    for (std::size_t k = 1; k <= kDirectionalImages; ++k) {
        const fs::path p = dir / image_name(k);
        if (!fs::exists(p)) throw DataError("case " + s.case_id + ": missing image index " + std::to_string(k) + " (" + p.string() + ")");
        s.directional[k - 1] = read_png(p);
    }
    if (!fs::exists(dir / "full_light.png")) throw DataError("case " + s.case_id + ": missing full_light.png");
    s.full_light = read_png(dir / "full_light.png");
    if (m.value("has_dark", false)) {
        if (!fs::exists(dir / "dark.png")) throw DataError("case " + s.case_id + ": manifest lists dark.png but it is missing");
        s.dark = read_png(dir / "dark.png");
    }
    s.check_dims();
    return c;
}

void save_case(const Case& c, const fs::path& dir) {
    c.stack.check_dims();
    const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
    fs::create_directories(parent);
    const fs::path tmp = parent / ("." + dir.filename().string() + ".tmp-" + unique_suffix());
    fs::create_directory(tmp);
    try {
        for (std::size_t k = 1; k <= kDirectionalImages; ++k) write_png(tmp / image_name(k), c.stack.directional[k - 1]);
        write_png(tmp / "full_light.png", c.stack.full_light);
        if (c.stack.dark) write_png(tmp / "dark.png", *c.stack.dark);
        write_text_file(tmp / "manifest.json", case_manifest(c).dump(2) + "\n");
        if (fs::exists(dir)) {
            const fs::path old = parent / ("." + dir.filename().string() + ".old-" + unique_suffix());
            fs::rename(dir, old);
            fs::rename(tmp, dir);
            fs::remove_all(old);
        } else {
            fs::rename(tmp, dir);
        }
    } catch (...) {
        std::error_code ec;
        fs::remove_all(tmp, ec);
        throw;
    }
}

BinaryMask union_gt_mask(const AnnotationSet& annotations, std::size_t width, std::size_t height) {
    BinaryMask out(width, height);
    for (const auto& poly : annotations.polygons) {
        if (!poly) continue;
        const BinaryMask m = rasterize_polygon(*poly, width, height);
        for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] |= m.bits[i];
    }
    return out;
}

std::array<std::optional<BinaryMask>, kPrickCount> prick_gt_masks(const AnnotationSet& annotations,
                                                                  std::size_t width, std::size_t height) {
    std::array<std::optional<BinaryMask>, kPrickCount> out;
    for (std::size_t i = 0; i < kPrickCount; ++i) {
        if (annotations.polygons[i]) out[i] = rasterize_polygon(*annotations.polygons[i], width, height);
    }
    return out;
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw DataError("SHA-256 computation failed");
    }
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text_file(path)); }

std::string case_digest(const fs::path& dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file()) names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    std::string acc;
    for (const auto& n : names) acc += n + '\0' + sha256_file(dir / n) + '\n';
    return sha256_hex(acc);
}

std::string dataset_manifest_text(const DatasetIndex& index) {
    json m = index.extra;
    m["format"] = "spat-dataset";
    m["version"] = kDatasetFormatVersion;
    m["generator"] = index.generator;
    json cases = json::array();
    for (const auto& e : index.cases) {
        cases.push_back({{"case_id", e.case_id}, {"site", e.site}, {"dir", e.dir}, {"sha256", e.sha256}});
    }
    m["cases"] = cases;
    return m.dump(2) + "\n";
}

void write_dataset_manifest(const DatasetIndex& index) {
    fs::create_directories(index.root);
    write_text_file(index.root / "manifest.json", dataset_manifest_text(index));
}

DatasetIndex load_dataset(const fs::path& root) {
    const fs::path path = root / "manifest.json";
    if (!fs::exists(path)) throw DataError("no dataset manifest.json in " + root.string());
    json m;
    try {
        m = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    const char* what = "dataset manifest";
    if (!m.is_object() || member<std::string>(m, "format", what) != "spat-dataset") {
        throw DataError("dataset manifest: format is not 'spat-dataset'");
    }
    if (member<int>(m, "version", what) < 1) throw DataError("dataset manifest: version must be >= 1");
    DatasetIndex index;
    index.root = root;
    if (m.contains("generator")) index.generator = m["generator"];
    const json cases = member<json>(m, "cases", what);
    if (!cases.is_array()) throw DataError("dataset manifest: cases must be an array");
    for (const auto& c : cases) {
        DatasetEntry e;
        e.case_id = member<std::string>(c, "case_id", "dataset case entry");
        e.site = member<std::string>(c, "site", "dataset case entry");
        e.dir = member<std::string>(c, "dir", "dataset case entry");
        e.sha256 = c.value("sha256", std::string{});
        index.cases.push_back(std::move(e));
    }
    for (auto it = m.begin(); it != m.end(); ++it) {
        if (it.key() != "format" && it.key() != "version" && it.key() != "generator" && it.key() != "cases") {
            index.extra[it.key()] = it.value();
        }
    }
    return index;
}

}  // namespace spat
