// Acceptance runner: one pass/fail line per criterion.
//
//   acceptance [--criterion N]... [--work DIR] [--write-reference]

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <unistd.h>

#include "gradcheck_suite.hpp"
#include "spat/detect/detector.hpp"
#include "spat/errors.hpp"
#include "spat/eval/metrics.hpp"
#include "spat/saliency/saliency.hpp"
#include "spat/synth/synth.hpp"
#include "spat/tensor/kernels.hpp"
#include "spat/train/trainer.hpp"

#ifndef SPAT_FIXTURE_DIR
#define SPAT_FIXTURE_DIR "."
#endif

using namespace spat;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Options {
    fs::path work;
    bool write_reference = false;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

// ---- 1 -------------------------------------------------------------------

Outcome gradient_oracle(const Options&) {
    double worst = 0.0;
    std::string worst_op;
    std::set<std::string> ops;
    for (unsigned seed = 1; seed <= 10; ++seed) {
        for (const auto& r : testutil::run_gradient_checks(seed, 1e-4)) {
            ops.insert(r.op);
            if (!(r.rel_error <= worst) || std::isnan(r.rel_error)) {
                worst = r.rel_error;
                worst_op = r.op + "/" + r.input;
            }
        }
    }
    return {worst <= 1e-3, std::to_string(ops.size()) + " op groups x 10 seeds, worst rel err " + fmt(worst, 6) +
                               " (" + worst_op + "), limit 1e-3"};
}

// ---- 2 -------------------------------------------------------------------

std::set<std::vector<std::size_t>> flood_fill(const BinaryMask& m, int conn) {
    std::vector<std::uint8_t> seen(m.bits.size(), 0);
    std::set<std::vector<std::size_t>> out;
    for (std::size_t s = 0; s < m.bits.size(); ++s) {
        if (!m.bits[s] || seen[s]) continue;
        std::vector<std::size_t> comp;
        std::deque<std::size_t> q{s};
        seen[s] = 1;
        while (!q.empty()) {
            const std::size_t i = q.front();
            q.pop_front();
            comp.push_back(i);
            const long x = long(i % m.width), y = long(i / m.width);
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if ((dx == 0 && dy == 0) || (conn == 4 && dx != 0 && dy != 0)) continue;
                    const long nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= long(m.width) || ny >= long(m.height)) continue;
                    const std::size_t j = std::size_t(ny) * m.width + std::size_t(nx);
                    if (m.bits[j] && !seen[j]) {
                        seen[j] = 1;
                        q.push_back(j);
                    }
                }
        }
        std::sort(comp.begin(), comp.end());
        out.insert(std::move(comp));
    }
    return out;
}

Outcome ccl_oracle(const Options&) {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> side(1, 64);
    std::uniform_real_distribution<double> dens(0.1, 0.9);
    std::size_t mismatches = 0, checked = 0;
    for (int trial = 0; trial < 500; ++trial) {
        BinaryMask m(side(rng), side(rng));
        std::bernoulli_distribution fg(dens(rng));
        for (auto& b : m.bits) b = fg(rng);
        for (int conn : {4, 8}) {
            std::set<std::vector<std::size_t>> got;
            for (auto& r : connected_components(m, conn)) got.insert(std::move(r.pixels));
            mismatches += got != flood_fill(m, conn);
            ++checked;
        }
    }
    return {mismatches == 0, std::to_string(checked) + " labellings, " + std::to_string(mismatches) + " differ from flood fill"};
}

// ---- 3 -------------------------------------------------------------------

Outcome transform_recovery(const Options&) {
    SynthConfig cfg;
    const GridSpec grid;
    std::size_t ok = 0;
    double worst_tx = 0, worst_ty = 0, worst_th = 0;
    for (std::size_t i = 0; i < 50; ++i) {
        const SynthCase sc = generate_case(cfg, case_seed(3, i));
        const auto& st = sc.data.stack;
        const BinaryMask gt = union_gt_mask(sc.data.annotations, st.width, st.height);
        const auto regions = connected_components(gt, 8, st.mm_per_px);
        const auto t = fit_rigid_transform(regions, sc.data.annotations.layout, grid,
                                           {st.width, st.height, st.mm_per_px}, DetectConfig{}.gate_mm);
        const double dx = std::abs(t.tx_mm - sc.transform.tx_mm), dy = std::abs(t.ty_mm - sc.transform.ty_mm),
                     dth = std::abs(t.theta_deg - sc.transform.theta_deg);
        worst_tx = std::max(worst_tx, dx);
        worst_ty = std::max(worst_ty, dy);
        worst_th = std::max(worst_th, dth);
        ok += dx <= grid.tx.step && dy <= grid.ty.step && dth <= grid.theta.step;
    }
    return {ok >= 48, std::to_string(ok) + "/50 within one grid step (need 48); worst |dtx| " + fmt(worst_tx, 2) +
                          " mm, |dty| " + fmt(worst_ty, 2) + " mm, |dtheta| " + fmt(worst_th, 2) + " deg"};
}

// ---- 4 -------------------------------------------------------------------

Outcome metric_oracles(const Options&) {
    std::vector<std::string> failures;
    auto check = [&](bool cond, const std::string& what) {
        if (!cond) failures.push_back(what);
    };
    // Prediction {0, 1, 2}, truth {1, 2, 3} on six pixels: TP 2, FP 1, FN 1.
    BinaryMask p(3, 2), g(3, 2);
    for (std::size_t i : {0, 1, 2}) p.bits[i] = 1;
    for (std::size_t i : {1, 2, 3}) g.bits[i] = 1;
    check(dice(p, g) == 4.0 / 6.0, "dice fixture");
    check(iou(p, g) == 2.0 / 4.0, "mask iou fixture");
    check(iou(std::vector<std::size_t>{0, 1, 2, 3, 4}, std::vector<std::size_t>{2, 3, 4, 5}) == 0.5, "region iou fixture");
    const auto acc = accuracy_curve({0.3, 0.7, 0.5, 0.9}, {0.5, 0.7});
    check(acc && (*acc)[0].accuracy == 0.5 && (*acc)[1].accuracy == 0.25, "accuracy fixture");
    check(dice(BinaryMask(2, 2), BinaryMask(2, 2)) == 1.0, "empty dice convention");

    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto ts = default_iou_thresholds();
    std::size_t non_monotone = 0;
    for (int s = 0; s < 100; ++s) {
        std::vector<double> ious(1 + rng() % 60);
        for (auto& v : ious) v = u(rng) < 0.1 ? 0.0 : u(rng);
        const auto c = *accuracy_curve(ious, ts);
        for (std::size_t k = 1; k < c.size(); ++k) non_monotone += c[k].accuracy > c[k - 1].accuracy;
    }
    check(non_monotone == 0, "accuracy curve increases somewhere");
    std::size_t violations = 0;
    for (int s = 0; s < 100; ++s) {
        BinaryMask a(1 + rng() % 40, 1 + rng() % 40);
        BinaryMask b(a.width, a.height);
        std::bernoulli_distribution fa(u(rng)), fb(u(rng));
        for (auto& v : a.bits) v = fa(rng);
        for (auto& v : b.bits) v = fb(rng);
        violations += iou(a, b) > dice(a, b);
    }
    check(violations == 0, "IoU exceeded Dice");
    std::string detail = failures.empty() ? "fixtures exact; 100 curves non-increasing; 100 mask pairs with IoU <= Dice"
                                          : "failed:";
    for (const auto& f : failures) detail += " " + f + ";";
    return {failures.empty(), detail};
}

// ---- 5 and 8: synth -> train -> eval ---------------------------------------

struct PipelineResult {
    EvalReport report;
    std::string report_json;
    double train_seconds = 0.0;
};

PipelineResult train_and_eval(const DatasetIndex& index, const Split& split, const TrainConfig& cfg,
                              const EvalConfig& ec) {
    std::vector<Sample> tr, va;
    std::vector<Case> val_cases;
    for (std::size_t i : split.train) tr.push_back(make_sample(load_case(index.case_dir(index.cases[i])), cfg));
    for (std::size_t i : split.val) {
        val_cases.push_back(load_case(index.case_dir(index.cases[i])));
        va.push_back(make_sample(val_cases.back(), cfg));
    }
    const auto t0 = Clock::now();
    TrainHistory history;
    const UNet model = train(tr, va, cfg, history, [&](const EpochRecord& r) {
        std::cout << "    [" << to_string(cfg.mode) << "] " << epoch_json(r).dump() << std::endl;
    });
    PipelineResult out;
    out.train_seconds = seconds_since(t0);
    tr.clear();
    NoGradGuard no_grad;
    std::vector<CaseEval> evals;
    for (const auto& c : val_cases) evals.push_back(evaluate_case(predict(model, cfg.mode, c.stack), c, ec));
    out.report = build_report(to_string(cfg.mode), std::move(evals), ec);
    out.report_json = report_to_json(out.report).dump(2) + "\n";
    return out;
}

Split split_for(const DatasetIndex& index, const TrainConfig& cfg) {
    std::vector<std::string> sites;
    for (const auto& e : index.cases) sites.push_back(e.site);
    return stratified_split(sites, cfg.train_ratio, cfg.seed);
}

const fs::path kReferenceFile = fs::path(SPAT_FIXTURE_DIR) / "acceptance_reference.json";

Outcome synthetic_benchmark(const Options& opt) {
    const auto t0 = Clock::now();
    const fs::path corpus = opt.work / "c5_corpus";
    fs::remove_all(corpus);
    const DatasetIndex index = generate_corpus(SynthConfig{}, 100, 42, corpus);

    TrainConfig cfg;
    cfg.epochs = 16;
    cfg.seed = 42;
    cfg.train_ratio = 0.8;
    cfg.target_width = 192;
    cfg.target_height = 128;
    const Split split = split_for(index, cfg);
    if (split.train.size() != 80 || split.val.size() != 20) {
        return {false, "split is " + std::to_string(split.train.size()) + "/" + std::to_string(split.val.size()) +
                           ", expected 80/20"};
    }
    const EvalConfig ec;
    cfg.mode = InputMode::spat32;
    const auto spat = train_and_eval(index, split, cfg, ec);
    cfg.mode = InputMode::fullLight1;
    const auto full = train_and_eval(index, split, cfg, ec);
    write_text_file(opt.work / "c5_report_spat32.json", spat.report_json);
    write_text_file(opt.work / "c5_report_fullLight1.json", full.report_json);
    const std::string table = table_report({spat.report, full.report});
    write_text_file(opt.work / "c5_table.txt", table);
    std::cout << table;

    const double d_spat = spat.report.dice, d_full = full.report.dice;
    const double acc = spat.report.accuracy_at(0.5);
    const double gap = d_spat - d_full;
    double need_dice = 0.60, need_gap = 0.05, need_acc = 0.70;
    std::string locked = "no reference fixture";
    if (opt.write_reference) {
        json ref = {{"spat32_dice", d_spat}, {"fullLight1_dice", d_full}, {"spat32_accuracy_0_5", acc},
                    {"dice_gap", gap}};
        write_text_file(kReferenceFile, ref.dump(2) + "\n");
        locked = "reference written to " + kReferenceFile.string();
    } else if (fs::exists(kReferenceFile)) {
        const json ref = json::parse(read_text_file(kReferenceFile));
        need_dice = std::max(need_dice, 0.9 * ref.at("spat32_dice").get<double>());
        need_gap = std::max(need_gap, 0.9 * ref.at("dice_gap").get<double>());
        need_acc = std::max(need_acc, 0.9 * ref.at("spat32_accuracy_0_5").get<double>());
        locked = "locked to reference with 10% slack";
    }
    fs::remove_all(corpus);
    const double elapsed = seconds_since(t0);
    const int cores = kernels::max_threads();
    const double budget = 30.0 * 60.0 * 4.0 / double(std::min(cores, 4));
    const bool a = d_spat >= need_dice, b = gap >= need_gap, c = acc >= need_acc, fast = elapsed <= budget;
    std::ostringstream os;
    os << "(a) spat32 Dice " << fmt(d_spat) << " >= " << fmt(need_dice) << (a ? " ok" : " FAIL") << "; (b) gap "
       << fmt(gap) << " (fullLight1 " << fmt(d_full) << ") >= " << fmt(need_gap) << (b ? " ok" : " FAIL")
       << "; (c) spat32 acc@0.5 " << fmt(acc) << " >= " << fmt(need_acc) << (c ? " ok" : " FAIL") << " over "
       << spat.report.relevant_wheals << " relevant wheals; " << fmt(elapsed / 60.0, 1) << " min on " << cores
       << " core(s), budget " << fmt(budget / 60.0, 0) << " min" << (fast ? "" : " FAIL") << "; " << locked;
    return {a && b && c && fast, os.str()};
}

Outcome determinism(const Options& opt) {
    SynthConfig sc;
    sc.width = 96;
    sc.height = 64;
    sc.mm_per_px = 0.5;
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 3;
    cfg.seed = 8;
    cfg.target_width = 96;
    cfg.target_height = 64;
    cfg.hidden_features = 8;
    cfg.norm_groups = 2;
    cfg.depth = 2;
    std::vector<std::string> reports, manifests;
    for (int run = 0; run < 2; ++run) {
        const fs::path corpus = opt.work / ("c8_corpus_" + std::to_string(run));
        fs::remove_all(corpus);
        const DatasetIndex index = generate_corpus(sc, 12, 8, corpus);
        manifests.push_back(read_text_file(corpus / "manifest.json"));
        const auto r = train_and_eval(index, split_for(index, cfg), cfg, EvalConfig{});
        write_text_file(opt.work / ("c8_report_" + std::to_string(run) + ".json"), r.report_json);
        reports.push_back(r.report_json);
        fs::remove_all(corpus);
    }
    const bool same = reports[0] == reports[1] && manifests[0] == manifests[1];
    return {same, same ? "two synth->train->eval runs gave byte-identical manifests and reports (" +
                             std::to_string(reports[0].size()) + " bytes, sha256 " + sha256_hex(reports[0]).substr(0, 12) + ")"
                       : "reports differ"};
}

// ---- 6 -------------------------------------------------------------------

UNetConfig saliency_model_config() {
    UNetConfig c;
    c.in_images = 32;
    c.hidden_features = 8;
    c.norm_groups = 2;
    c.depth = 2;
    c.height = 32;
    c.width = 48;
    return c;
}

Outcome saliency_checks(const Options&) {
    SynthConfig sc;
    sc.width = 48;
    sc.height = 32;
    sc.mm_per_px = 1.0;
    TrainConfig tc;
    tc.target_width = 48;
    tc.target_height = 32;
    std::vector<std::string> failures;
    double worst_sum = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto sample = make_sample(generate_case(sc, case_seed(61, seed)).data, tc);
        auto model = UNetD::build(saliency_model_config(), seed);
        const TensorD x(sample.input.shape(), std::vector<double>(sample.input.data().begin(), sample.input.data().end()));
        const TensorD y(sample.target.shape(), std::vector<double>(sample.target.data().begin(), sample.target.data().end()));
        const auto s = image_scores(input_gradients(model, x, y));
        worst_sum = std::max(worst_sum, std::abs(std::accumulate(s.begin(), s.end(), 0.0) - 1.0));

        // Permuting the images and the matching first-layer weight blocks
        // leaves the network function unchanged, so scores must follow.
        std::vector<std::size_t> perm(32);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), std::mt19937_64(seed + 100));
        auto permuted = UNetD::build(saliency_model_config(), seed);
        const auto& names = permuted.parameter_names();
        const std::size_t wi = std::size_t(std::find(names.begin(), names.end(), "enc0.conv1.weight") - names.begin());
        auto& w = permuted.parameters()[wi];
        const auto& w0 = model.parameters()[wi];
        const std::size_t oc = w.dim(0), ic = w.dim(1), plane = x.dim(2) * x.dim(3);
        std::vector<double> xv(x.numel());
        for (std::size_t k = 0; k < 32; ++k) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const std::size_t dst = 3 * k + ch, src = 3 * perm[k] + ch;
                std::copy_n(x.data().begin() + std::ptrdiff_t(src * plane), plane, xv.begin() + std::ptrdiff_t(dst * plane));
                for (std::size_t o = 0; o < oc; ++o)
                    for (std::size_t t = 0; t < 9; ++t) w.data()[(o * ic + dst) * 9 + t] = w0.data()[(o * ic + src) * 9 + t];
            }
        }
        const auto ps = image_scores(input_gradients(permuted, TensorD(x.shape(), xv), y));
        double worst = 0.0;
        for (std::size_t k = 0; k < 32; ++k) worst = std::max(worst, std::abs(ps[k] - s[perm[k]]));
        if (worst > 1e-9) failures.push_back("permutation seed " + std::to_string(seed) + " off by " + fmt(worst, 12));

        // Dead image: zero every first-layer weight reading image 9.
        auto dead = UNetD::build(saliency_model_config(), seed);
        auto& dw = dead.parameters()[wi];
        for (std::size_t o = 0; o < oc; ++o)
            for (std::size_t ch = 24; ch < 27; ++ch)
                for (std::size_t t = 0; t < 9; ++t) dw.data()[(o * ic + ch) * 9 + t] = 0.0;
        const auto ds = image_scores(input_gradients(dead, x, y));
        if (ds[8] != 0.0) failures.push_back("dead image scored " + fmt(ds[8], 12));
    }
    if (worst_sum > 1e-6) failures.push_back("scores sum off by " + fmt(worst_sum, 9));
    std::string detail = "5 seeds: max |sum - 1| " + fmt(worst_sum, 12) + ", dead image exactly 0, permutation equivariant";
    if (!failures.empty()) {
        detail = "failed:";
        for (const auto& f : failures) detail += " " + f + ";";
    }
    return {failures.empty(), detail};
}

// ---- 7 -------------------------------------------------------------------

Outcome clinical_filter_checks(const Options&) {
    AnnotationSet a;
    Polygon disc;
    const double s = 0.25, r_px = 4.5 / 2 / s;
    for (int k = 0; k < 256; ++k) {
        const double t = 2 * M_PI * k / 256;
        disc.push_back({60.0 + r_px * std::cos(t), 40.0 + r_px * std::sin(t)});
    }
    a.polygons[0] = disc;
    const auto w = gt_wheals(a, 120, 80, s);
    const double area = w.at(0).area_mm2;
    const bool close = std::abs(area - 15.9) <= 0.05 * 15.9;
    std::vector<GtWheal> fx(4);
    fx[0].area_mm2 = 15.0;
    fx[1].area_mm2 = 15.9;
    fx[2].area_mm2 = 15.899;
    fx[3].area_mm2 = 40.0;
    const auto kept = clinical_filter(fx, kClinicalAreaMm2);
    const bool filter_ok = kept.size() == 2 && kept[0].area_mm2 == 15.9 && kept[1].area_mm2 == 40.0;
    return {close && filter_ok, "4.5 mm disc rasterizes to " + fmt(area, 3) + " mm^2 (15.9 +/- 5%); filter keeps " +
                                    std::to_string(kept.size()) + " of 4 fixtures" + (filter_ok ? "" : " (expected 2)")};
}

struct Criterion {
    int id;
    const char* name;
    double limit_s;  // 0 = no runtime limit checked here
    std::function<Outcome(const Options&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria runner"};
    std::vector<int> which;
    Options opt;
    std::string work;
    app.add_option("--criterion", which, "Criterion number (repeatable; default all)")->check(CLI::Range(1, 8));
    app.add_option("--work", work, "Scratch directory");
    app.add_flag("--write-reference", opt.write_reference, "Record criterion 5 results as the locked reference");
    CLI11_PARSE(app, argc, argv);
    opt.work = work.empty() ? fs::temp_directory_path() / ("spat_acceptance_" + std::to_string(::getpid())) : fs::path(work);
    fs::create_directories(opt.work);

    const std::vector<Criterion> all = {
        {1, "gradient oracle", 60, gradient_oracle},
        {2, "CCL oracle", 30, ccl_oracle},
        {3, "transform recovery", 120, transform_recovery},
        {4, "metric oracles", 0, metric_oracles},
        {5, "synthetic benchmark", 0, synthetic_benchmark},
        {6, "saliency", 60, saliency_checks},
        {7, "clinical filter", 0, clinical_filter_checks},
        {8, "determinism", 0, determinism},
    };
    if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8};
    bool all_pass = true;
    for (const auto& c : all) {
        if (std::find(which.begin(), which.end(), c.id) == which.end()) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run(opt);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = seconds_since(t0);
        if (c.limit_s > 0 && secs > c.limit_s) {
            o.pass = false;
            o.detail += "; runtime " + fmt(secs, 1) + " s exceeds " + fmt(c.limit_s, 0) + " s";
        }
        std::cout << "criterion " << c.id << " (" << c.name << "): " << (o.pass ? "PASS" : "FAIL") << " - "
                  << o.detail << " [" << fmt(secs, 1) << " s]" << std::endl;
        all_pass &= o.pass;
    }
    if (work.empty()) fs::remove_all(opt.work);
    return all_pass ? 0 : 1;
}
