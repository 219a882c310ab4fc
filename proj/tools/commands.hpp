#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace spat::cli {

// Every subcommand reads from this one bag of parsed flags.
struct Args {
    std::string command;
    std::vector<std::string> argv;  // as given, without the program name

    std::string data;
    std::string out;
    std::string config;
    std::optional<std::uint64_t> seed;
    int threads = 0;

    std::size_t n = 0;                 // synth
    std::optional<std::string> mode;   // train
    std::optional<std::size_t> epochs;

    std::vector<std::string> models;   // predict, detect, eval, saliency
    std::vector<std::string> modes;
    std::string models_root = "models";
    std::string maps;
    std::string split = "auto";
    std::vector<std::string> cases;
    bool dry_run = false;
    bool overlays = false;

    std::optional<double> threshold;
    std::optional<int> connectivity;
    std::optional<std::size_t> min_area_px;
    std::optional<double> gate_mm;
    std::string grid_tx, grid_ty, grid_theta;
    std::vector<double> iou_thresholds;
    std::optional<double> area_threshold_mm2;
};

int cmd_synth(const Args& a);
int cmd_train(const Args& a);
int cmd_predict(const Args& a);
int cmd_detect(const Args& a);
int cmd_eval(const Args& a);
int cmd_saliency(const Args& a);

}  // namespace spat::cli
