#include "commands.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "overlay.hpp"
#include "spat/errors.hpp"
#include "spat/eval/metrics.hpp"
#include "spat/saliency/saliency.hpp"
#include "spat/synth/synth.hpp"
#include "spat/tensor/ops.hpp"
#include "spat/train/trainer.hpp"

#ifndef SPAT_VERSION
#define SPAT_VERSION "unknown"
#endif

namespace spat::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json parse_json_file(const fs::path& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

fs::path data_root(const Args& a) {
    if (!a.data.empty()) return a.data;
    if (const char* env = std::getenv("SPAT_DATA_DIR"); env && *env) return env;
    throw ConfigError("no dataset given: pass --data or set SPAT_DATA_DIR");
}

fs::path output_dir(const Args& a) {
    if (a.out.empty()) throw ConfigError(a.command + " needs --out");
    fs::create_directories(a.out);
    return a.out;
}

void apply_threads(const Args& a) {
    if (a.threads < 0) throw ConfigError("--threads must be >= 0");
    if (a.threads > 0) omp_set_num_threads(a.threads);
}

void write_run_json(const fs::path& dir, const Args& a, const json& config, const json& seed) {
    json j = {{"tool", "spat"},
              {"version", SPAT_VERSION},
              {"command", a.command},
              {"argv", a.argv},
              {"seed", seed},
              {"threads", a.threads},
              {"config", config}};
    write_text_file(dir / "run.json", j.dump(2) + "\n");
}

Case load_checked(const DatasetIndex& index, const DatasetEntry& e) {
    const fs::path dir = index.case_dir(e);
    if (!e.sha256.empty() && case_digest(dir) != e.sha256) {
        throw DataError("case " + e.case_id + ": files do not match the manifest digest");
    }
    Case c = load_case(dir);
    if (c.stack.case_id != e.case_id) {
        throw DataError("case directory " + e.dir + " holds case '" + c.stack.case_id + "', manifest says '" +
                        e.case_id + "'");
    }
    return c;
}

GridAxis parse_axis(const std::string& text, GridAxis fallback, const char* name) {
    if (text.empty()) return fallback;
    GridAxis a;
    char c1 = 0, c2 = 0;
    std::istringstream is(text);
    if (!(is >> a.min >> c1 >> a.max >> c2 >> a.step) || c1 != ':' || c2 != ':' || !is.eof()) {
        throw ConfigError(std::string("--grid-") + name + " expects min:max:step, got '" + text + "'");
    }
    return a;
}

DetectConfig detect_config(const Args& a) {
    DetectConfig d;
    if (a.threshold) d.threshold = *a.threshold;
    if (a.connectivity) d.connectivity = *a.connectivity;
    if (a.min_area_px) d.min_area_px = *a.min_area_px;
    if (a.gate_mm) d.gate_mm = *a.gate_mm;
    d.grid.tx = parse_axis(a.grid_tx, d.grid.tx, "tx");
    d.grid.ty = parse_axis(a.grid_ty, d.grid.ty, "ty");
    d.grid.theta = parse_axis(a.grid_theta, d.grid.theta, "theta");
    d.validate();
    return d;
}

json axis_json(const GridAxis& g) { return {{"min", g.min}, {"max", g.max}, {"step", g.step}}; }

json detect_json(const DetectConfig& d) {
    return {{"threshold", d.threshold},
            {"connectivity", d.connectivity},
            {"min_area_px", d.min_area_px},
            {"gate_mm", d.gate_mm},
            {"grid", {{"tx_mm", axis_json(d.grid.tx)}, {"ty_mm", axis_json(d.grid.ty)}, {"theta_deg", axis_json(d.grid.theta)}}}};
}

// Cases named by --case, else the split recorded next to a model, else all.
std::vector<DatasetEntry> select_cases(const DatasetIndex& index, const Args& a, const std::string& model_dir) {
    if (!a.cases.empty()) {
        std::vector<DatasetEntry> out;
        for (const auto& id : a.cases) {
            const auto it = std::find_if(index.cases.begin(), index.cases.end(),
                                         [&](const DatasetEntry& e) { return e.case_id == id; });
            if (it == index.cases.end()) throw DataError("case '" + id + "' is not in the dataset");
            out.push_back(*it);
        }
        return out;
    }
    if (a.split != "auto" && a.split != "all" && a.split != "train" && a.split != "val") {
        throw ConfigError("--split must be auto, all, train or val");
    }
    const fs::path split_file = model_dir.empty() ? fs::path{} : fs::path(model_dir) / "split.json";
    if (a.split == "all" || (a.split == "auto" && (split_file.empty() || !fs::exists(split_file)))) {
        if (index.cases.empty()) throw DataError("dataset " + index.root.string() + " has no cases");
        return index.cases;
    }
    if (split_file.empty() || !fs::exists(split_file)) throw DataError("--split " + a.split + " needs a model with split.json");
    const json s = parse_json_file(split_file);
    const std::string key = a.split == "train" ? "train" : "val";
    std::set<std::string> wanted;
    for (const auto& id : s.at(key)) wanted.insert(id.get<std::string>());
    std::vector<DatasetEntry> out;
    for (const auto& e : index.cases)
        if (wanted.count(e.case_id)) out.push_back(e);
    if (out.size() != wanted.size()) throw DataError(split_file.string() + " names cases missing from the dataset");
    if (out.empty()) throw DataError("the " + key + " split in " + split_file.string() + " is empty; pass --split all");
    return out;
}

TrainedModel load_trained(const std::string& dir) {
    if (!fs::exists(dir)) throw DataError("model directory " + dir + " does not exist");
    return load_model(dir);
}

std::vector<std::uint16_t> to_u16(const FloatMap& m) {
    std::vector<std::uint16_t> v(m.values.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<std::uint16_t>(std::lround(std::clamp(m.values[i], 0.0f, 1.0f) * 65535.0f));
    }
    return v;
}

}  // namespace

int cmd_synth(const Args& a) {
    apply_threads(a);
    SynthConfig cfg;
    if (!a.config.empty()) from_json(parse_json_file(a.config), cfg);
    cfg.validate();
    const std::uint64_t seed = a.seed.value_or(0);
    if (a.n == 0) throw ConfigError("--n must be at least 1");
    const fs::path out = output_dir(a);
    json cj;
    to_json(cj, cfg);
    write_run_json(out, a, cj, seed);
    const DatasetIndex index = generate_corpus(cfg, a.n, seed, out);
    std::cout << "wrote " << index.cases.size() << " cases to " << out.string() << "\n";
    std::cout << "manifest sha256 " << sha256_file(out / "manifest.json") << "\n";
    return 0;
}

int cmd_train(const Args& a) {
    apply_threads(a);
    TrainConfig cfg;
    if (!a.config.empty()) from_json(parse_json_file(a.config), cfg);
    if (a.mode) cfg.mode = parse_input_mode(*a.mode);
    if (a.seed) cfg.seed = *a.seed;
    if (a.epochs) cfg.epochs = *a.epochs;
    cfg.validate();
    const fs::path root = data_root(a);
    const fs::path out = output_dir(a);
    json cj;
    to_json(cj, cfg);
    write_run_json(out, a, cj, cfg.seed);

    const DatasetIndex index = load_dataset(root);
    if (index.cases.empty()) throw DataError("dataset " + root.string() + " has no cases");
    std::vector<std::string> sites;
    for (const auto& e : index.cases) sites.push_back(e.site);
    const Split split = stratified_split(sites, cfg.train_ratio, cfg.seed);
    std::vector<Sample> train_set, val_set;
    json split_json = {{"seed", cfg.seed}, {"train_ratio", cfg.train_ratio}, {"train", json::array()}, {"val", json::array()}};
    for (std::size_t i : split.train) {
        train_set.push_back(make_sample(load_checked(index, index.cases[i]), cfg));
        split_json["train"].push_back(index.cases[i].case_id);
    }
    for (std::size_t i : split.val) {
        val_set.push_back(make_sample(load_checked(index, index.cases[i]), cfg));
        split_json["val"].push_back(index.cases[i].case_id);
    }
    write_text_file(out / "split.json", split_json.dump(2) + "\n");
    std::cout << "training " << to_string(cfg.mode) << " on " << train_set.size() << " cases, validating on "
              << val_set.size() << "\n";

    std::ofstream log(out / "train_log.jsonl");
    if (!log) throw DataError("cannot write " + (out / "train_log.jsonl").string());
    TrainHistory history;
    const UNet model = train(train_set, val_set, cfg, history, [&](const EpochRecord& r) {
        const std::string line = epoch_json(r).dump();
        log << line << '\n' << std::flush;
        std::cout << line << std::endl;
    });
    save_model(out, model, cfg);
    std::cout << "model saved to " << out.string() << "\n";
    return 0;
}

int cmd_predict(const Args& a) {
    apply_threads(a);
    if (a.models.size() != 1) throw ConfigError("predict needs exactly one --model");
    const TrainedModel tm = load_trained(a.models[0]);
    const DatasetIndex index = load_dataset(data_root(a));
    const auto cases = select_cases(index, a, a.models[0]);
    const fs::path out = output_dir(a);
    json cj;
    to_json(cj, tm.config);
    write_run_json(out, a, {{"model", a.models[0]}, {"train_config", cj}}, tm.config.seed);
    NoGradGuard no_grad;
    for (const auto& e : cases) {
        const Case c = load_checked(index, e);
        const FloatMap p = predict(tm.model, tm.config.mode, c.stack);
        fs::create_directories(out / e.case_id);
        write_float_map(out / e.case_id / "prob.map", p);
        write_png_gray16(out / e.case_id / "prob.png", p.width, p.height, to_u16(p));
    }
    std::cout << "wrote probability maps for " << cases.size() << " cases to " << out.string() << "\n";
    return 0;
}

int cmd_detect(const Args& a) {
    apply_threads(a);
    const DetectConfig dc = detect_config(a);
    if (a.models.size() > 1) throw ConfigError("detect takes at most one --model");
    if (a.models.empty() == a.maps.empty()) throw ConfigError("detect needs either --model or --maps");
    std::optional<TrainedModel> tm;
    if (!a.models.empty()) tm = load_trained(a.models[0]);
    const DatasetIndex index = load_dataset(data_root(a));
    const auto cases = select_cases(index, a, a.models.empty() ? std::string{} : a.models[0]);
    const fs::path out = output_dir(a);
    json source = tm ? json{{"model", a.models[0]}} : json{{"maps", a.maps}};
    write_run_json(out, a, {{"source", source}, {"detect", detect_json(dc)}},
                   tm ? json(tm->config.seed) : json(nullptr));
    NoGradGuard no_grad;
    std::size_t matched = 0;
    for (const auto& e : cases) {
        const Case c = load_checked(index, e);
        FloatMap p;
        if (tm) {
            p = predict(tm->model, tm->config.mode, c.stack);
        } else {
            p = read_float_map(fs::path(a.maps) / e.case_id / "prob.map");
            if (p.width != c.stack.width || p.height != c.stack.height) {
                throw DataError("probability map for " + e.case_id + " does not match the case size");
            }
        }
        const Detection d = detect_wheals(p, c.stack.mm_per_px, c.annotations.layout, dc);
        json j = match_to_json(d.match, c.stack.width, c.stack.mm_per_px);
        j["case_id"] = e.case_id;
        fs::create_directories(out / e.case_id);
        write_text_file(out / e.case_id / "detection.json", j.dump(2) + "\n");
        write_png(out / e.case_id / "overlay.png", render_overlay(c, d.match));
        matched += d.match.accepted.size();
    }
    std::cout << "detected " << matched << " wheals over " << cases.size() << " cases; results in " << out.string()
              << "\n";
    return 0;
}

int cmd_eval(const Args& a) {
    apply_threads(a);
    EvalConfig ec;
    if (!a.iou_thresholds.empty()) ec.iou_thresholds = a.iou_thresholds;
    if (a.area_threshold_mm2) ec.area_threshold_mm2 = *a.area_threshold_mm2;
    ec.detect = detect_config(a);
    ec.validate();

    // (label, model directory) per table row.
    std::vector<std::pair<std::string, std::string>> runs;
    if (!a.models.empty()) {
        if (!a.modes.empty() && a.modes.size() != a.models.size()) {
            throw ConfigError("give one --mode per --model, or none");
        }
        for (std::size_t i = 0; i < a.models.size(); ++i) runs.emplace_back(a.modes.empty() ? "" : a.modes[i], a.models[i]);
    } else {
        for (const auto& m : a.modes) runs.emplace_back(m, (fs::path(a.models_root) / m).string());
    }
    for (auto& [label, dir] : runs) {
        if (!label.empty()) parse_input_mode(label);
    }

    const DatasetIndex index = load_dataset(data_root(a));
    const auto cases = select_cases(index, a, runs.empty() ? std::string{} : runs[0].second);
    if (a.dry_run) {
        std::set<std::string> sites;
        std::size_t wheals = 0;
        for (const auto& e : cases) {
            const Case c = load_checked(index, e);
            c.stack.check_dims();
            sites.insert(c.stack.site);
            for (const auto& p : c.annotations.polygons) wheals += p.has_value();
        }
        for (const auto& [label, dir] : runs) load_trained(dir);
        if (!a.out.empty()) write_run_json(output_dir(a), a, {{"dry_run", true}}, nullptr);
        std::cout << "dataset ok: " << cases.size() << " cases, " << sites.size() << " sites, " << wheals
                  << " annotated wheals\n";
        return 0;
    }
    if (runs.empty()) throw ConfigError("eval needs --model or --mode");
    const fs::path out = output_dir(a);

    std::vector<TrainedModel> models;
    json run_cfg = {{"iou_thresholds", ec.iou_thresholds},
                    {"area_threshold_mm2", ec.area_threshold_mm2},
                    {"detect", detect_json(ec.detect)},
                    {"runs", json::array()}};
    json seeds = json::array();
    for (auto& [label, dir] : runs) {
        models.push_back(load_trained(dir));
        const auto& cfg = models.back().config;
        if (label.empty()) label = to_string(cfg.mode);
        if (parse_input_mode(label) != cfg.mode) {
            throw ConfigError("model " + dir + " was trained on " + to_string(cfg.mode) + ", not " + label);
        }
        run_cfg["runs"].push_back({{"label", label}, {"model", dir}});
        seeds.push_back(cfg.seed);
    }
    write_run_json(out, a, run_cfg, seeds);

    std::vector<Case> loaded;
    for (const auto& e : cases) loaded.push_back(load_checked(index, e));
    NoGradGuard no_grad;
    std::vector<EvalReport> reports;
    for (std::size_t r = 0; r < runs.size(); ++r) {
        const auto& [label, dir] = runs[r];
        std::vector<CaseEval> evals;
        for (const auto& c : loaded) {
            const FloatMap p = predict(models[r].model, models[r].config.mode, c.stack);
            evals.push_back(evaluate_case(p, c, ec));
            if (a.overlays) {
                fs::create_directories(out / "overlays" / label);
                write_png(out / "overlays" / label / (c.stack.case_id + ".png"), render_overlay(c, evals.back().match));
            }
        }
        reports.push_back(build_report(label, std::move(evals), ec));
        write_text_file(out / ("report_" + label + ".json"), report_to_json(reports.back()).dump(2) + "\n");
        write_text_file(out / ("accuracy_" + label + ".csv"), accuracy_csv(reports.back()));
    }
    const std::string table = table_report(reports);
    write_text_file(out / "table.txt", table);
    std::cout << table;
    return 0;
}

int cmd_saliency(const Args& a) {
    apply_threads(a);
    if (a.models.size() != 1) throw ConfigError("saliency needs exactly one --model");
    TrainedModel tm = load_trained(a.models[0]);
    if (tm.config.mode != InputMode::spat32) throw ConfigError("saliency needs a model trained on spat32");
    tm.model.set_requires_grad(false);
    const DatasetIndex index = load_dataset(data_root(a));
    const auto cases = select_cases(index, a, a.models[0]);
    const fs::path out = output_dir(a);
    json cj;
    to_json(cj, tm.config);
    write_run_json(out, a, {{"model", a.models[0]}, {"train_config", cj}}, tm.config.seed);

    std::vector<CaseScores> scores;
    for (const auto& e : cases) {
        const Case c = load_checked(index, e);
        Sample s = make_sample(c, tm.config);
        CaseScores cs;
        cs.case_id = e.case_id;
        const auto t = s.target.data();
        if (std::all_of(t.begin(), t.end(), [](float v) { return v == 0.0f; })) {
            NoGradGuard no_grad;
            const Tensor pred = tm.model.forward(s.input);
            std::vector<float> v(pred.numel());
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = pred.data()[i] >= 0.5f ? 1.0f : 0.0f;
            s.target = Tensor(pred.shape(), std::move(v));
            cs.fallback_target = true;
        }
        cs.scores = image_scores(input_gradients(tm.model, s.input, s.target));
        scores.push_back(cs);
    }
    write_text_file(out / "scores.csv", scores_csv(scores));
    write_text_file(out / "aggregate.json", aggregate_json(aggregate(scores), scores.size()).dump(2) + "\n");
    std::cout << "saliency scores for " << scores.size() << " cases written to " << out.string() << "\n";
    return 0;
}

}  // namespace spat::cli
