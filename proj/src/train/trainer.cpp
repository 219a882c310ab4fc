#include "spat/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "spat/errors.hpp"
#include "spat/model/input.hpp"
#include "spat/tensor/adam.hpp"
#include "spat/tensor/checkpoint.hpp"
#include "spat/tensor/ops.hpp"

namespace spat {

using nlohmann::json;

UNetConfig TrainConfig::unet_config() const {
    UNetConfig u;
    u.in_images = input_images(mode);
    u.hidden_features = hidden_features;
    u.depth = depth;
    u.norm_groups = norm_groups;
    u.height = target_height;
    u.width = target_width;
    return u;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("Adam eps must be positive");
    if (!(train_ratio > 0.0 && train_ratio <= 1.0)) throw ConfigError("train_ratio must lie in (0, 1]");
    unet_config().validate();
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"epochs", c.epochs},
             {"batch_size", c.batch_size},
             {"lr", c.lr},
             {"beta1", c.beta1},
             {"beta2", c.beta2},
             {"eps", c.eps},
             {"target_width", c.target_width},
             {"target_height", c.target_height},
             {"mode", to_string(c.mode)},
             {"seed", c.seed},
             {"train_ratio", c.train_ratio},
             {"hidden_features", c.hidden_features},
             {"depth", c.depth},
             {"norm_groups", c.norm_groups}};
}

void from_json(const json& j, TrainConfig& c) {
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    json defaults;
    to_json(defaults, c);
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!defaults.contains(it.key())) throw ConfigError("train config: unknown member '" + it.key() + "'");
    }
    auto get = [&](const char* key, auto& field) {
        if (!j.contains(key)) return;
        try {
            j.at(key).get_to(field);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("train config: bad value for '") + key + "': " + e.what());
        }
    };
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("lr", c.lr);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("eps", c.eps);
    get("target_width", c.target_width);
    get("target_height", c.target_height);
    if (j.contains("mode")) {
        if (!j["mode"].is_string()) throw ConfigError("train config: mode must be a string");
        c.mode = parse_input_mode(j["mode"].get<std::string>());
    }
    get("seed", c.seed);
    get("train_ratio", c.train_ratio);
    get("hidden_features", c.hidden_features);
    get("depth", c.depth);
    get("norm_groups", c.norm_groups);
}

Preprocessed preprocess(const ImageStack& stack, InputMode mode, std::size_t tw, std::size_t th) {
    stack.check_dims();
    if (tw == 0 || th == 0) throw ConfigError("target dims must be positive");
    Tensor raw = stack_to_input(stack, mode);
    Preprocessed p;
    {
        NoGradGuard no_grad;
        p.input = (tw == stack.width && th == stack.height) ? raw : ops::resize_bilinear(raw, th, tw);
    }
    p.mm_per_px_x = stack.mm_per_px * double(stack.width) / double(tw);
    p.mm_per_px_y = stack.mm_per_px * double(stack.height) / double(th);
    return p;
}

Tensor resize_mask_nearest(const BinaryMask& mask, std::size_t tw, std::size_t th) {
    std::vector<float> v(tw * th);
    for (std::size_t y = 0; y < th; ++y) {
        const std::size_t sy = std::min(mask.height - 1, (2 * y + 1) * mask.height / (2 * th));
        for (std::size_t x = 0; x < tw; ++x) {
            const std::size_t sx = std::min(mask.width - 1, (2 * x + 1) * mask.width / (2 * tw));
            v[y * tw + x] = mask.at(sx, sy) ? 1.0f : 0.0f;
        }
    }
    return Tensor({1, 1, th, tw}, std::move(v));
}

FloatMap resize_map(const FloatMap& map, std::size_t tw, std::size_t th) {
    if (map.width == tw && map.height == th) return map;
    NoGradGuard no_grad;
    Tensor t({1, 1, map.height, map.width}, map.values);
    Tensor r = ops::resize_bilinear(t, th, tw);
    FloatMap out(tw, th);
    std::copy(r.data().begin(), r.data().end(), out.values.begin());
    return out;
}

Split stratified_split(const std::vector<std::string>& sites, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("train_ratio must lie in (0, 1]");
    std::map<std::string, std::vector<std::size_t>> by_site;
    for (std::size_t i = 0; i < sites.size(); ++i) by_site[sites[i]].push_back(i);
    std::mt19937_64 rng(seed ^ 0x51e7u);
    Split s;
    for (auto& [site, idx] : by_site) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n_train = static_cast<std::size_t>(std::llround(double(idx.size()) * ratio));
        for (std::size_t k = 0; k < idx.size(); ++k) (k < n_train ? s.train : s.val).push_back(idx[k]);
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    return s;
}

Sample make_sample(const Case& c, const TrainConfig& cfg) {
    Sample s;
    s.case_id = c.stack.case_id;
    s.input = preprocess(c.stack, cfg.mode, cfg.target_width, cfg.target_height).input;
    const BinaryMask gt = union_gt_mask(c.annotations, c.stack.width, c.stack.height);
    s.target = resize_mask_nearest(gt, cfg.target_width, cfg.target_height);
    return s;
}

json epoch_json(const EpochRecord& r) {
    json j = {{"epoch", r.epoch}, {"loss", r.loss}, {"seconds", r.seconds}};
    j["val_dice"] = std::isnan(r.val_dice) ? json(nullptr) : json(r.val_dice);
    return j;
}

namespace {

Tensor stack_batch(const std::vector<Sample>& set, const std::vector<std::size_t>& idx, bool inputs) {
    const Tensor& first = inputs ? set[idx[0]].input : set[idx[0]].target;
    Shape shape = first.shape();
    shape[0] = idx.size();
    std::vector<float> v;
    v.reserve(shape_numel(shape));
    for (std::size_t i : idx) {
        const Tensor& t = inputs ? set[i].input : set[i].target;
        if (t.shape()[1] != shape[1] || t.shape()[2] != shape[2] || t.shape()[3] != shape[3]) {
            throw ShapeError("samples in one batch differ in shape");
        }
        v.insert(v.end(), t.data().begin(), t.data().end());
    }
    return Tensor(std::move(shape), std::move(v));
}

}  // namespace

double validation_dice(const UNet& model, const std::vector<Sample>& samples, double threshold) {
    NoGradGuard no_grad;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& s : samples) {
        const Tensor p = model.forward(s.input);
        const auto pd = p.data();
        const auto td = s.target.data();
        for (std::size_t i = 0; i < pd.size(); ++i) {
            const bool pr = pd[i] >= threshold, gt = td[i] > 0.5f;
            tp += pr && gt;
            fp += pr && !gt;
            fn += !pr && gt;
        }
    }
    const std::size_t d = 2 * tp + fp + fn;
    return d == 0 ? 1.0 : double(2 * tp) / double(d);
}

UNet train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set, const TrainConfig& cfg,
           TrainHistory& history, const EpochCallback& on_epoch) {
    cfg.validate();
    if (train_set.empty()) throw DataError("training set is empty");
    const UNetConfig ucfg = cfg.unet_config();
    for (const auto& s : train_set) {
        if (s.input.dim(1) != ucfg.input_channels() || s.input.dim(2) != cfg.target_height ||
            s.input.dim(3) != cfg.target_width) {
            throw ShapeError("sample " + s.case_id + " has input " + shape_string(s.input.shape()) +
                             ", config expects " + std::to_string(ucfg.input_channels()) + " channels at " +
                             std::to_string(cfg.target_width) + "x" + std::to_string(cfg.target_height));
        }
    }

    UNet model = UNet::build(ucfg, cfg.seed);
    AdamOptions opts;
    opts.lr = cfg.lr;
    opts.beta1 = cfg.beta1;
    opts.beta2 = cfg.beta2;
    opts.eps = cfg.eps;
    AdamState<float> adam(model.parameters(), opts);
    std::mt19937_64 rng(cfg.seed ^ 0x7a11u);

    history.epochs.clear();
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                               order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + cfg.batch_size)));
            const Tensor x = stack_batch(train_set, idx, true);
            const Tensor y = stack_batch(train_set, idx, false);
            model.zero_grad();
            Tensor loss = ops::bce_loss(model.forward(x), y);
            const double lv = loss.item();
            if (!std::isfinite(lv)) throw InvariantError("non-finite training loss at epoch " + std::to_string(e));
            loss.backward();
            adam_step<float>(model.parameters(), adam);
            loss_sum += lv * double(idx.size());
        }
        EpochRecord rec;
        rec.epoch = e;
        rec.loss = loss_sum / double(train_set.size());
        rec.val_dice = val_set.empty() ? std::numeric_limits<double>::quiet_NaN() : validation_dice(model, val_set);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return model;
}

FloatMap predict_tensor(const UNet& model, const Tensor& input, std::size_t out_w, std::size_t out_h) {
    NoGradGuard no_grad;
    const Tensor p = model.forward(input);
    FloatMap m(p.dim(3), p.dim(2));
    std::copy(p.data().begin(), p.data().end(), m.values.begin());
    return resize_map(m, out_w, out_h);
}

FloatMap predict(const UNet& model, InputMode mode, const ImageStack& stack) {
    const auto& c = model.config();
    if (c.in_images != input_images(mode)) {
        throw ConfigError("model expects " + std::to_string(c.in_images) + " input image(s) but mode " +
                          to_string(mode) + " supplies " + std::to_string(input_images(mode)));
    }
    const Preprocessed p = preprocess(stack, mode, c.width, c.height);
    return predict_tensor(model, p.input, stack.width, stack.height);
}

void save_model(const std::filesystem::path& dir, const UNet& model, const TrainConfig& cfg) {
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "model.spatw", named_parameters(model));
    json j;
    to_json(j, cfg);
    write_text_file(dir / "model.json", json{{"format", "spat-model"}, {"version", 1}, {"train_config", j}}.dump(2) + "\n");
}

TrainedModel load_model(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "model.json")) throw DataError("no model.json in " + dir.string());
    json j;
    try {
        j = json::parse(read_text_file(dir / "model.json"));
    } catch (const json::parse_error& e) {
        throw DataError((dir / "model.json").string() + ": " + e.what());
    }
    if (!j.is_object() || j.value("format", "") != "spat-model" || !j.contains("train_config")) {
        throw DataError((dir / "model.json").string() + ": not a spat-model description");
    }
    TrainConfig cfg;
    from_json(j["train_config"], cfg);
    cfg.validate();
    UNet model = unet_from_parameters(cfg.unet_config(), load_checkpoint(dir / "model.spatw"));
    return {std::move(model), cfg};
}

}  // namespace spat
