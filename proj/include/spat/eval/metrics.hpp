#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spat/data/dataset.hpp"
#include "spat/detect/detector.hpp"

namespace spat {

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    Confusion& operator+=(const Confusion& o);
};

Confusion confusion(const BinaryMask& pred, const BinaryMask& gt);  // throws ShapeError on dim mismatch
// 2TP / (2TP + FP + FN); 1.0 when both masks are empty.
double dice(const Confusion& c);
double dice(const BinaryMask& pred, const BinaryMask& gt);

// |A n B| / |A u B| over ascending pixel index lists; 0.0 when both are empty.
double iou(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);
double iou(const BinaryMask& a, const BinaryMask& b);

std::vector<std::size_t> mask_pixels(const BinaryMask& m);

inline constexpr double kClinicalAreaMm2 = 15.9;

struct GtWheal {
    std::size_t prick = 0;  // 0-based
    std::vector<std::size_t> pixels;
    double area_mm2 = 0.0;
};

// Rasterized ground-truth wheals with pixel-count areas. mm_per_px must be
// positive (ConfigError otherwise).
std::vector<GtWheal> gt_wheals(const AnnotationSet& annotations, std::size_t width, std::size_t height,
                               double mm_per_px);
// Keeps wheals with area_mm2 >= threshold.
std::vector<GtWheal> clinical_filter(const std::vector<GtWheal>& wheals, double area_threshold_mm2);

struct AccuracyPoint {
    double t = 0.0;
    double accuracy = 0.0;
};

// accuracy(t) = #{iou > t} / N. N = 0 yields nullopt.
std::optional<std::vector<AccuracyPoint>> accuracy_curve(const std::vector<double>& ious,
                                                         const std::vector<double>& thresholds);

// 0, 0.05, ..., 1 merged with 0.5 .. 0.9, ascending and de-duplicated.
std::vector<double> default_iou_thresholds();
inline const std::vector<double> kTableThresholds = {0.5, 0.6, 0.7, 0.8, 0.9};

struct EvalConfig {
    std::vector<double> iou_thresholds = default_iou_thresholds();
    double area_threshold_mm2 = kClinicalAreaMm2;
    DetectConfig detect;

    void validate() const;
};

struct PrickEval {
    std::size_t prick = 0;            // 0-based
    bool has_gt = false;
    bool clinically_relevant = false;
    double gt_area_mm2 = 0.0;
    bool matched = false;
    double iou = 0.0;
};

struct CaseEval {
    std::string case_id;
    Confusion pixels;
    double dice = 0.0;
    std::vector<PrickEval> pricks;
    MatchResult match;
};

// Evaluates one probability map at the case's own resolution.
CaseEval evaluate_case(const FloatMap& prob, const Case& c, const EvalConfig& config);

struct EvalReport {
    std::string mode;
    std::vector<CaseEval> cases;
    double dice = 0.0;           // pooled over all pixels
    double mean_case_dice = 0.0;
    std::vector<double> ious;    // clinically relevant ground-truth wheals only
    std::size_t relevant_wheals = 0;
    std::size_t total_wheals = 0;
    std::optional<std::vector<AccuracyPoint>> curve;

    double accuracy_at(double t) const;  // NaN when the curve is empty
};

EvalReport build_report(std::string mode, std::vector<CaseEval> cases, const EvalConfig& config);

nlohmann::json report_to_json(const EvalReport& r, bool include_cases = true);
std::string accuracy_csv(const EvalReport& r);
// Dice and accuracy at 0.5 .. 0.9, one row per report. Reports must cover
// the same case ids in the same order (DataError otherwise).
std::string table_report(const std::vector<EvalReport>& reports);

}  // namespace spat
