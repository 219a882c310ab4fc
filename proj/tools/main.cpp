#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>

#include "commands.hpp"
#include "spat/data/dataset.hpp"
#include "spat/errors.hpp"

namespace {

using spat::cli::Args;

constexpr int kUsage = 2;
constexpr int kInvariant = 3;

void add_common(CLI::App* sub, Args& a, bool needs_data) {
    sub->add_option("--out", a.out, "Output directory (created if absent)");
    sub->add_option("--threads", a.threads, "Cap on worker threads (0 = OpenMP default)");
    if (needs_data) sub->add_option("--data", a.data, "Dataset root (default: $SPAT_DATA_DIR)");
}

void add_case_selection(CLI::App* sub, Args& a) {
    sub->add_option("--case", a.cases, "Case id to process (repeatable; default: by --split)");
    sub->add_option("--split", a.split, "auto | all | train | val (auto: the model's validation split if recorded)");
}

void add_detect(CLI::App* sub, Args& a) {
    sub->add_option("--threshold", a.threshold, "Probability threshold for binarization");
    sub->add_option("--connectivity", a.connectivity, "Pixel connectivity, 4 or 8");
    sub->add_option("--min-area-px", a.min_area_px, "Smallest region considered for matching");
    sub->add_option("--gate-mm", a.gate_mm, "Largest prick-to-region distance accepted");
    sub->add_option("--grid-tx", a.grid_tx, "Translation grid in x, min:max:step in mm");
    sub->add_option("--grid-ty", a.grid_ty, "Translation grid in y, min:max:step in mm");
    sub->add_option("--grid-theta", a.grid_theta, "Rotation grid, min:max:step in degrees");
}

int run(std::vector<std::string> argv);

int dispatch(Args& a) {
    if (a.command == "synth") return spat::cli::cmd_synth(a);
    if (a.command == "train") return spat::cli::cmd_train(a);
    if (a.command == "predict") return spat::cli::cmd_predict(a);
    if (a.command == "detect") return spat::cli::cmd_detect(a);
    if (a.command == "eval") return spat::cli::cmd_eval(a);
    if (a.command == "saliency") return spat::cli::cmd_saliency(a);
    throw spat::ConfigError("unknown command '" + a.command + "'");
}

int rerun(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(spat::read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw spat::ConfigError(path + ": " + e.what());
    }
    if (!j.contains("argv") || !j["argv"].is_array()) throw spat::ConfigError(path + ": no argv recorded");
    std::vector<std::string> argv;
    for (const auto& s : j["argv"]) argv.push_back(s.get<std::string>());
    if (!argv.empty() && argv[0] == "rerun") throw spat::ConfigError(path + ": recorded run is itself a rerun");
    return run(argv);
}

int run(std::vector<std::string> argv) {
    Args a;
    a.argv = argv;
    std::string rerun_file;

    CLI::App app{"Wheal segmentation from multi-light skin prick test image stacks"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
    add_common(synth, a, false);
    synth->add_option("--n", a.n, "Number of cases")->required();
    synth->add_option("--seed", a.seed, "Corpus seed");
    synth->add_option("--config", a.config, "SynthConfig JSON");

    auto* train = app.add_subcommand("train", "Train a U-Net on a dataset");
    add_common(train, a, true);
    train->add_option("--config", a.config, "TrainConfig JSON");
    train->add_option("--mode", a.mode, "spat32 | fullLight1");
    train->add_option("--seed", a.seed, "Training seed (split, init, shuffling)");
    train->add_option("--epochs", a.epochs, "Number of epochs");

    auto* predict = app.add_subcommand("predict", "Write probability maps");
    add_common(predict, a, true);
    add_case_selection(predict, a);
    predict->add_option("--model", a.models, "Trained model directory")->required();

    auto* detect = app.add_subcommand("detect", "Detect and match wheals from a model or saved maps");
    add_common(detect, a, true);
    add_case_selection(detect, a);
    add_detect(detect, a);
    detect->add_option("--model", a.models, "Trained model directory");
    detect->add_option("--maps", a.maps, "Directory of <case_id>/prob.map files from predict");

    auto* eval = app.add_subcommand("eval", "Evaluate one or more models");
    add_common(eval, a, true);
    add_case_selection(eval, a);
    add_detect(eval, a);
    eval->add_option("--model", a.models, "Trained model directory (repeatable)");
    eval->add_option("--mode", a.modes, "Input mode per table row (repeatable); models default to <models-root>/<mode>");
    eval->add_option("--models-root", a.models_root, "Where --mode looks for models");
    eval->add_option("--iou-thresholds", a.iou_thresholds, "Comma-separated IoU thresholds")->delimiter(',');
    eval->add_option("--area-threshold-mm2", a.area_threshold_mm2, "Clinical relevance area threshold");
    eval->add_flag("--dry-run", a.dry_run, "Load and check the dataset only");
    eval->add_flag("--overlays", a.overlays, "Write contour overlays per case");

    auto* saliency = app.add_subcommand("saliency", "Per-image gradient saliency scores");
    add_common(saliency, a, true);
    add_case_selection(saliency, a);
    saliency->add_option("--model", a.models, "Trained spat32 model directory")->required();

    auto* again = app.add_subcommand("rerun", "Repeat the run recorded in a run.json");
    again->add_option("run_json", rerun_file, "Path to run.json")->required();

    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }
    if (again->parsed()) return rerun(rerun_file);
    a.command = app.get_subcommands().front()->get_name();
    return dispatch(a);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(std::vector<std::string>(argv + 1, argv + argc));
    } catch (const spat::InvariantError& e) {
        std::cerr << "spat: internal invariant violated: " << e.what() << "\n";
        return kInvariant;
    } catch (const spat::ConfigError& e) {
        std::cerr << "spat: configuration error: " << e.what() << "\n";
        return kUsage;
    } catch (const spat::DataError& e) {
        std::cerr << "spat: data error: " << e.what() << "\n";
        return kUsage;
    } catch (const spat::ShapeError& e) {
        std::cerr << "spat: shape error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "spat: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "spat: internal error: " << e.what() << "\n";
        return kInvariant;
    }
}
