#include "spat/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "spat/errors.hpp"

namespace spat {

using nlohmann::json;

Confusion& Confusion::operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
}

Confusion confusion(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.width != gt.width || pred.height != gt.height) {
        throw ShapeError("mask dims differ: " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                         " vs " + std::to_string(gt.width) + "x" + std::to_string(gt.height));
    }
    Confusion c;
    for (std::size_t i = 0; i < pred.bits.size(); ++i) {
        const bool p = pred.bits[i] != 0, g = gt.bits[i] != 0;
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double dice(const Confusion& c) {
    const std::size_t denom = 2 * c.tp + c.fp + c.fn;
    return denom == 0 ? 1.0 : double(2 * c.tp) / double(denom);
}

double dice(const BinaryMask& pred, const BinaryMask& gt) { return dice(confusion(pred, gt)); }

double iou(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    std::size_t inter = 0, i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j]) ++i;
        else if (b[j] < a[i]) ++j;
        else {
            ++inter;
            ++i;
            ++j;
        }
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 0.0 : double(inter) / double(uni);
}

std::vector<std::size_t> mask_pixels(const BinaryMask& m) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
        if (m.bits[i]) out.push_back(i);
    }
    return out;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
    const Confusion c = confusion(a, b);
    const std::size_t uni = c.tp + c.fp + c.fn;
    return uni == 0 ? 0.0 : double(c.tp) / double(uni);
}

std::vector<GtWheal> gt_wheals(const AnnotationSet& annotations, std::size_t width, std::size_t height,
                               double mm_per_px) {
    if (!(mm_per_px > 0.0) || !std::isfinite(mm_per_px)) throw ConfigError("clinical filter needs a positive mm-per-pixel scale");
    std::vector<GtWheal> out;
    for (std::size_t i = 0; i < kPrickCount; ++i) {
        if (!annotations.polygons[i]) continue;
        GtWheal w;
        w.prick = i;
        w.pixels = mask_pixels(rasterize_polygon(*annotations.polygons[i], width, height));
        w.area_mm2 = double(w.pixels.size()) * mm_per_px * mm_per_px;
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<GtWheal> clinical_filter(const std::vector<GtWheal>& wheals, double threshold) {
    if (!(threshold > 0.0)) throw ConfigError("area threshold must be positive");
    std::vector<GtWheal> out;
    for (const auto& w : wheals) {
        if (w.area_mm2 >= threshold) out.push_back(w);
    }
    return out;
}

std::optional<std::vector<AccuracyPoint>> accuracy_curve(const std::vector<double>& ious,
                                                         const std::vector<double>& thresholds) {
    if (ious.empty()) return std::nullopt;
    std::vector<AccuracyPoint> out;
    for (double t : thresholds) {
        const auto above = std::count_if(ious.begin(), ious.end(), [t](double v) { return v > t; });
        out.push_back({t, double(above) / double(ious.size())});
    }
    return out;
}

std::vector<double> default_iou_thresholds() {
    std::vector<double> t;
    for (int i = 0; i <= 20; ++i) t.push_back(i / 20.0);
    for (double v : kTableThresholds) t.push_back(v);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }), t.end());
    return t;
}

void EvalConfig::validate() const {
    for (double t : iou_thresholds) {
        if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("IoU thresholds must lie in [0, 1]");
    }
    if (!(area_threshold_mm2 > 0.0)) throw ConfigError("area threshold must be positive");
    detect.validate();
}

CaseEval evaluate_case(const FloatMap& prob, const Case& c, const EvalConfig& cfg) {
    const auto& st = c.stack;
    if (prob.width != st.width || prob.height != st.height) {
        throw ShapeError("probability map " + std::to_string(prob.width) + "x" + std::to_string(prob.height) +
                         " does not match case " + st.case_id);
    }
    CaseEval ev;
    ev.case_id = st.case_id;
    const Detection det = detect_wheals(prob, st.mm_per_px, c.annotations.layout, cfg.detect);
    const BinaryMask gt = union_gt_mask(c.annotations, st.width, st.height);
    ev.pixels = confusion(det.mask, gt);
    ev.dice = dice(ev.pixels);

    const auto wheals = gt_wheals(c.annotations, st.width, st.height, st.mm_per_px);
    for (std::size_t i = 0; i < kPrickCount; ++i) {
        PrickEval p;
        p.prick = i;
        const auto w = std::find_if(wheals.begin(), wheals.end(), [i](const GtWheal& g) { return g.prick == i; });
        p.matched = det.match.prick_region[i].has_value();
        if (w != wheals.end()) {
            p.has_gt = true;
            p.gt_area_mm2 = w->area_mm2;
            p.clinically_relevant = w->area_mm2 >= cfg.area_threshold_mm2;
            p.iou = p.matched ? iou(det.match.regions[*det.match.prick_region[i]].pixels, w->pixels) : 0.0;
        }
        ev.pricks.push_back(p);
    }
    ev.match = det.match;
    return ev;
}

double EvalReport::accuracy_at(double t) const {
    if (!curve) return std::numeric_limits<double>::quiet_NaN();
    for (const auto& p : *curve) {
        if (std::abs(p.t - t) < 1e-12) return p.accuracy;
    }
    const auto above = std::count_if(ious.begin(), ious.end(), [t](double v) { return v > t; });
    return double(above) / double(ious.size());
}

EvalReport build_report(std::string mode, std::vector<CaseEval> cases, const EvalConfig& cfg) {
    EvalReport r;
    r.mode = std::move(mode);
    Confusion pooled;
    double dice_sum = 0.0;
    for (const auto& c : cases) {
        pooled += c.pixels;
        dice_sum += c.dice;
        for (const auto& p : c.pricks) {
            if (!p.has_gt) continue;
            ++r.total_wheals;
            if (p.clinically_relevant) r.ious.push_back(p.iou);
        }
    }
    r.relevant_wheals = r.ious.size();
    r.dice = dice(pooled);
    r.mean_case_dice = cases.empty() ? 0.0 : dice_sum / double(cases.size());
    r.curve = accuracy_curve(r.ious, cfg.iou_thresholds);
    r.cases = std::move(cases);
    return r;
}

json report_to_json(const EvalReport& r, bool include_cases) {
    json curve = nullptr;
    if (r.curve) {
        curve = json::array();
        for (const auto& p : *r.curve) curve.push_back({{"t", p.t}, {"accuracy", p.accuracy}});
    }
    json j = {{"mode", r.mode},
              {"cases", r.cases.size()},
              {"dice", r.dice},
              {"mean_case_dice", r.mean_case_dice},
              {"gt_wheals", r.total_wheals},
              {"clinically_relevant_wheals", r.relevant_wheals},
              {"ious", r.ious},
              {"accuracy_curve", curve}};
    if (include_cases) {
        json per_case = json::array();
        for (const auto& c : r.cases) {
            json pricks = json::array();
            for (const auto& p : c.pricks) {
                pricks.push_back({{"prick", p.prick + 1},
                                  {"has_gt", p.has_gt},
                                  {"clinically_relevant", p.clinically_relevant},
                                  {"gt_area_mm2", p.gt_area_mm2},
                                  {"matched", p.matched},
                                  {"iou", p.iou}});
            }
            per_case.push_back({{"case_id", c.case_id},
                                {"dice", c.dice},
                                {"tp", c.pixels.tp},
                                {"fp", c.pixels.fp},
                                {"fn", c.pixels.fn},
                                {"transform",
                                 {{"tx_mm", c.match.transform.tx_mm},
                                  {"ty_mm", c.match.transform.ty_mm},
                                  {"theta_deg", c.match.transform.theta_deg}}},
                                {"pricks", pricks}});
        }
        j["per_case"] = per_case;
    }
    return j;
}

std::string accuracy_csv(const EvalReport& r) {
    std::ostringstream os;
    os << "t,accuracy\n";
    if (r.curve) {
        char buf[64];
        for (const auto& p : *r.curve) {
            std::snprintf(buf, sizeof buf, "%.2f,%.6f\n", p.t, p.accuracy);
            os << buf;
        }
    }
    return os.str();
}

std::string table_report(const std::vector<EvalReport>& reports) {
    for (std::size_t k = 1; k < reports.size(); ++k) {
        bool same = reports[k].cases.size() == reports[0].cases.size();
        for (std::size_t i = 0; same && i < reports[0].cases.size(); ++i) {
            same = reports[k].cases[i].case_id == reports[0].cases[i].case_id;
        }
        if (!same) throw DataError("table_report: runs were evaluated on different case sets");
    }
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s %7s", "Method", "Dice");
    os << buf;
    for (double t : kTableThresholds) {
        std::snprintf(buf, sizeof buf, " %8s", ("acc@" + std::to_string(t).substr(0, 3)).c_str());
        os << buf;
    }
    os << '\n';
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, "%-12s %7.3f", r.mode.c_str(), r.dice);
        os << buf;
        for (double t : kTableThresholds) {
            const double a = r.accuracy_at(t);
            if (std::isnan(a)) std::snprintf(buf, sizeof buf, " %8s", "n/a");
            else std::snprintf(buf, sizeof buf, " %7.1f%%", 100.0 * a);
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace spat
