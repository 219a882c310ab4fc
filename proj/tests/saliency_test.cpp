#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "spat/errors.hpp"
#include "spat/saliency/saliency.hpp"
#include "spat/tensor/ops.hpp"

using namespace spat;

namespace {

constexpr std::size_t H = 16, W = 16;

UNetConfig sal_config() {
    UNetConfig c;
    c.in_images = 32;
    c.hidden_features = 8;
    c.norm_groups = 2;
    c.depth = 2;
    c.height = H;
    c.width = W;
    return c;
}

template <typename T>
BasicTensor<T> random_input(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<T> v(96 * H * W);
    for (auto& e : v) e = T(u(rng));
    return BasicTensor<T>({1, 96, H, W}, std::move(v));
}

template <typename T>
BasicTensor<T> disc_target() {
    std::vector<T> v(H * W, T(0));
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            if (std::hypot(x + 0.5 - 8.0, y + 0.5 - 8.0) < 4.0) v[y * W + x] = T(1);
    return BasicTensor<T>({1, 1, H, W}, std::move(v));
}

TensorD gradient_with_blocks(const std::vector<double>& block_scale) {
    std::vector<double> v(96 * 4);
    for (std::size_t k = 0; k < 32; ++k)
        for (std::size_t i = 0; i < 12; ++i) v[k * 12 + i] = block_scale[k] * (1.0 + 0.1 * double(i));
    return TensorD({1, 96, 2, 2}, std::move(v));
}

}  // namespace

TEST(InputGradients, MatchFiniteDifferences) {
    auto m = UNetD::build(sal_config(), 3);
    std::mt19937_64 rng(7);
    const auto x = random_input<double>(rng);
    const auto target = disc_target<double>();
    const auto g = input_gradients(m, x, target);
    ASSERT_EQ(g.shape(), x.shape());
    NoGradGuard ng;
    auto loss_at = [&](std::size_t i, double delta) {
        auto xp = x.clone();
        xp.data()[i] += delta;
        return ops::bce_loss(m.forward(xp), target).item();
    };
    std::uniform_int_distribution<std::size_t> pick(0, x.numel() - 1);
    const double h = 1e-5;
    for (int n = 0; n < 20; ++n) {
        const std::size_t i = pick(rng);
        const double fd = (loss_at(i, h) - loss_at(i, -h)) / (2 * h);
        EXPECT_NEAR(g.data()[i], fd, 1e-6 + 1e-4 * std::abs(fd)) << "index " << i;
    }
}

TEST(InputGradients, DeadImageScoresZero) {
    auto m = UNetD::build(sal_config(), 5);
    const auto& names = m.parameter_names();
    const auto it = std::find(names.begin(), names.end(), "enc0.conv1.weight");
    ASSERT_NE(it, names.end());
    auto& w = m.parameters()[std::size_t(it - names.begin())];
    const std::size_t out_c = w.dim(0), in_c = w.dim(1);
    const std::size_t dead = 12;  // image 13
    for (std::size_t o = 0; o < out_c; ++o)
        for (std::size_t ch = 3 * dead; ch < 3 * dead + 3; ++ch)
            for (std::size_t t = 0; t < 9; ++t) w.data()[(o * in_c + ch) * 9 + t] = 0.0;
    std::mt19937_64 rng(1);
    const auto s = image_scores(input_gradients(m, random_input<double>(rng), disc_target<double>()));
    EXPECT_EQ(s[dead], 0.0);
    for (std::size_t k = 0; k < 32; ++k)
        if (k != dead) {
            EXPECT_GT(s[k], 0.0) << k;
        }
}

TEST(InputGradients, RequiresTheFullStack) {
    auto c = sal_config();
    c.in_images = 1;
    auto m = UNetD::build(c, 1);
    std::mt19937_64 rng(1);
    std::vector<double> v(3 * H * W, 0.5);
    EXPECT_THROW(input_gradients(m, TensorD({1, 3, H, W}, v), disc_target<double>()), ConfigError);
}

TEST(ImageScores, UniformGradientGivesEqualShares) {
    const auto s = image_scores(TensorD({1, 96, 3, 3}, std::vector<double>(96 * 9, -0.25)));
    for (double v : s) EXPECT_NEAR(v, 1.0 / 32.0, 1e-15);
}

TEST(ImageScores, DirectSummationAndNormalization) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(2 * 96 * 3 * 2);
    for (auto& e : v) e = n(rng);
    const TensorD g({2, 96, 3, 2}, v);
    const auto s = image_scores(g);
    std::array<double, 32> want{};
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t ch = 0; ch < 96; ++ch)
            for (std::size_t i = 0; i < 6; ++i) {
                const double e = v[(b * 96 + ch) * 6 + i];
                want[ch / 3] += e * e;
            }
    const double total = std::accumulate(want.begin(), want.end(), 0.0);
    double sum = 0.0;
    for (std::size_t k = 0; k < 32; ++k) {
        EXPECT_NEAR(s[k], want[k] / total, 1e-14);
        sum += s[k];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(ImageScores, ScaleInvariantAndPermutationEquivariant) {
    std::vector<double> scale(32);
    for (std::size_t k = 0; k < 32; ++k) scale[k] = 0.1 + 0.05 * double(k % 7);
    const auto base = image_scores(gradient_with_blocks(scale));
    std::vector<double> doubled = scale;
    for (auto& v : doubled) v *= -3.0;
    const auto scaled = image_scores(gradient_with_blocks(doubled));
    for (std::size_t k = 0; k < 32; ++k) EXPECT_NEAR(scaled[k], base[k], 1e-14);

    std::vector<std::size_t> perm(32);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(4));
    std::vector<double> permuted(32);
    for (std::size_t k = 0; k < 32; ++k) permuted[k] = scale[perm[k]];
    const auto ps = image_scores(gradient_with_blocks(permuted));
    for (std::size_t k = 0; k < 32; ++k) EXPECT_NEAR(ps[k], base[perm[k]], 1e-14);
}

TEST(ImageScores, RejectsZeroAndBadShapes) {
    EXPECT_THROW(image_scores(TensorD({1, 96, 2, 2}, std::vector<double>(384, 0.0))), InvariantError);
    EXPECT_THROW(image_scores(TensorD({1, 3, 2, 2}, std::vector<double>(12, 1.0))), ShapeError);
}

TEST(Quantile, LinearInterpolation) {
    EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.25), 1.75);
    EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(quantile({7}, 0.75), 7.0);
    EXPECT_THROW(quantile({}, 0.5), DataError);
}

TEST(Aggregate, FiveNumberSummaryAndCsv) {
    std::vector<CaseScores> cases(5);
    for (std::size_t c = 0; c < 5; ++c) {
        cases[c].case_id = "c" + std::to_string(c);
        for (std::size_t k = 0; k < 32; ++k) cases[c].scores[k] = double(c + k);
    }
    cases[2].fallback_target = true;
    const auto s = aggregate(cases);
    EXPECT_DOUBLE_EQ(s[3].min, 3.0);
    EXPECT_DOUBLE_EQ(s[3].q25, 4.0);
    EXPECT_DOUBLE_EQ(s[3].median, 5.0);
    EXPECT_DOUBLE_EQ(s[3].max, 7.0);
    EXPECT_THROW(aggregate({}), DataError);
    const auto csv = scores_csv(cases);
    EXPECT_EQ(csv.substr(0, csv.find('\n')).find("case_id,img_1,"), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
    const auto j = aggregate_json(s, 5);
    EXPECT_EQ(j["images"].size(), 32u);
    EXPECT_EQ(j["images"][0]["image"], 1);
}
