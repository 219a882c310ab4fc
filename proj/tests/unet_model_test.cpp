#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "spat/errors.hpp"
#include "spat/model/input.hpp"
#include "spat/model/unet.hpp"
#include "spat/tensor/ops.hpp"
#include "test_util.hpp"

using namespace spat;
using spat::testutil::random_tensor;

namespace {

UNetConfig small_config(std::size_t in_images = 1, std::size_t depth = 2) {
    UNetConfig c;
    c.in_images = in_images;
    c.hidden_features = 8;
    c.norm_groups = 2;
    c.depth = depth;
    c.height = 16;
    c.width = 24;
    return c;
}

std::size_t block_params(std::size_t cin, std::size_t f) { return (f * cin * 9 + f) + 2 * f + (f * f * 9 + f) + 2 * f; }

}  // namespace

TEST(UNetBuild, SpatConfigTakes96Channels) {
    UNetConfig c;
    auto m = UNet::build(c, 1);
    EXPECT_EQ(m.parameter("enc0.conv1.weight").shape(), (Shape{64, 96, 3, 3}));
    EXPECT_EQ(m.parameter("head.weight").shape(), (Shape{1, 64, 3, 3}));
}

TEST(UNetBuild, BaselineTakes3Channels) {
    UNetConfig c;
    c.in_images = 1;
    auto m = UNet::build(c, 1);
    EXPECT_EQ(m.parameter("enc0.conv1.weight").shape(), (Shape{64, 3, 3, 3}));
}

TEST(UNetBuild, ParameterCountMatchesClosedForm) {
    for (std::size_t depth : {2, 3, 4}) {
        for (std::size_t images : {1, 32}) {
            UNetConfig c;
            c.in_images = images;
            c.depth = depth;
            const std::size_t f = 64;
            std::size_t expected = block_params(images * 3, f) + (depth - 1) * block_params(f, f) +
                                   block_params(f, f) + depth * block_params(2 * f, f) + (f * 9 + 1);
            EXPECT_EQ(UNet::build(c, 0).parameter_count(), expected) << depth << " " << images;
        }
    }
}

TEST(UNetBuild, LayerNamesFollowScheme) {
    auto m = UNet::build(small_config(), 0);
    const auto& n = m.parameter_names();
    EXPECT_EQ(n.front(), "enc0.conv1.weight");
    EXPECT_EQ(n.back(), "head.bias");
    for (const char* name : {"enc1.gn2.bias", "bottleneck.conv1.weight", "dec0.conv2.bias", "dec1.gn1.weight"}) {
        EXPECT_NE(std::find(n.begin(), n.end(), name), n.end()) << name;
    }
}

TEST(UNetBuild, SeedDeterminism) {
    auto a = UNet::build(small_config(), 5);
    auto b = UNet::build(small_config(), 5);
    auto c = UNet::build(small_config(), 6);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        const auto da = a.parameters()[i].data();
        const auto db = b.parameters()[i].data();
        const auto dc = c.parameters()[i].data();
        ASSERT_TRUE(std::equal(da.begin(), da.end(), db.begin()));
        any_diff |= !std::equal(da.begin(), da.end(), dc.begin());
    }
    EXPECT_TRUE(any_diff);
}

TEST(UNetBuild, GroupNormStartsAsIdentityAffine) {
    auto m = UNet::build(small_config(), 3);
    for (float v : m.parameter("enc0.gn1.weight").data()) EXPECT_EQ(v, 1.0f);
    for (float v : m.parameter("dec1.gn2.bias").data()) EXPECT_EQ(v, 0.0f);
}

TEST(UNetBuild, KaimingUniformBounds) {
    auto m = UNet::build(small_config(), 3);
    const float bound = std::sqrt(6.0f / float(3 * 9));
    const auto w = m.parameter("enc0.conv1.weight").data();
    float hi = 0.0f;
    for (float v : w) {
        EXPECT_LE(std::abs(v), bound);
        hi = std::max(hi, std::abs(v));
    }
    EXPECT_GT(hi, 0.5f * bound);
}

TEST(UNetBuild, RejectsBadConfig) {
    auto c = small_config();
    c.height = 18;
    EXPECT_THROW(UNet::build(c, 0), ConfigError);
    c = small_config();
    c.in_images = 2;
    EXPECT_THROW(UNet::build(c, 0), ConfigError);
    c = small_config();
    c.depth = 5;
    EXPECT_THROW(UNet::build(c, 0), ConfigError);
    c = small_config();
    c.norm_groups = 3;
    EXPECT_THROW(UNet::build(c, 0), ConfigError);
}

TEST(UNetForward, ShapeAndRange) {
    auto m = UNet::build(small_config(), 11);
    std::mt19937_64 rng(1);
    auto x = random_tensor<float>({2, 3, 16, 24}, rng, 0.0, 1.0);
    auto y = m.forward(x);
    EXPECT_EQ(y.shape(), (Shape{2, 1, 16, 24}));
    float lo = 1.0f, hi = 0.0f;
    for (float v : y.data()) {
        EXPECT_GT(v, 0.0f);
        EXPECT_LT(v, 1.0f);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    EXPECT_GT(hi - lo, 1e-4f);
}

TEST(UNetForward, ShapeIdentityOnDivisibleSizes) {
    auto m = UNet::build(small_config(1, 3), 2);
    std::mt19937_64 rng(2);
    for (auto [h, w] : std::vector<std::pair<std::size_t, std::size_t>>{{8, 8}, {16, 8}, {8, 32}, {24, 40}}) {
        auto y = m.forward(random_tensor<float>({1, 3, h, w}, rng, 0.0, 1.0));
        EXPECT_EQ(y.shape(), (Shape{1, 1, h, w}));
    }
}

TEST(UNetForward, RejectsMismatchedInput) {
    auto m = UNet::build(small_config(), 0);
    EXPECT_THROW(m.forward(Tensor({1, 6, 16, 24}, 0.0f)), ShapeError);
    EXPECT_THROW(m.forward(Tensor({1, 3, 18, 24}, 0.0f)), ShapeError);
    EXPECT_THROW(m.forward(Tensor({3, 16, 24}, 0.0f)), ShapeError);
}

TEST(UNetForward, EveryParameterReceivesGradient) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto m = UNet::build(small_config(32), seed);
        std::mt19937_64 rng(seed + 100);
        auto x = random_tensor<float>({2, 96, 16, 24}, rng, 0.0, 1.0);
        std::bernoulli_distribution coin(0.3);
        std::vector<float> t(2 * 16 * 24);
        for (auto& v : t) v = coin(rng) ? 1.0f : 0.0f;
        auto loss = ops::bce_loss(m.forward(x), Tensor({2, 1, 16, 24}, t));
        loss.backward();
        for (std::size_t i = 0; i < m.parameters().size(); ++i) {
            const auto g = m.parameters()[i].grad();
            const bool nonzero = std::any_of(g.begin(), g.end(), [](float v) { return v != 0.0f; });
            EXPECT_TRUE(nonzero) << m.parameter_names()[i] << " seed " << seed;
        }
    }
}

namespace {

// Boolean support propagation through the architecture: which output pixels
// can depend on the marked input pixels through convolution windows, pooling
// windows and interpolation taps. Group norm statistics are global and are
// handled by the tolerance in the test, not here.
using Support = std::vector<std::vector<bool>>;

Support dilate3(const Support& s) {
    const std::size_t h = s.size(), w = s[0].size();
    Support o(h, std::vector<bool>(w, false));
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const long yy = long(y) + dy, xx = long(x) + dx;
                    if (yy >= 0 && xx >= 0 && yy < long(h) && xx < long(w) && s[yy][xx]) o[y][x] = true;
                }
    return o;
}

Support pool2(const Support& s) {
    Support o(s.size() / 2, std::vector<bool>(s[0].size() / 2, false));
    for (std::size_t y = 0; y < o.size(); ++y)
        for (std::size_t x = 0; x < o[0].size(); ++x)
            o[y][x] = s[2 * y][2 * x] || s[2 * y + 1][2 * x] || s[2 * y][2 * x + 1] || s[2 * y + 1][2 * x + 1];
    return o;
}

// Half-pixel upsampling by 2: output i reads inputs floor((i - 1) / 2) and
// that index + 1, clamped.
Support up2(const Support& s) {
    const long h = long(s.size()), w = long(s[0].size());
    Support o(2 * h, std::vector<bool>(2 * w, false));
    auto taps = [](long i, long n) {
        const double src = (double(i) + 0.5) / 2.0 - 0.5;
        long a = long(std::floor(src));
        return std::pair{std::clamp(a, 0L, n - 1), std::clamp(a + 1, 0L, n - 1)};
    };
    for (long y = 0; y < 2 * h; ++y)
        for (long x = 0; x < 2 * w; ++x) {
            auto [y0, y1] = taps(y, h);
            auto [x0, x1] = taps(x, w);
            o[y][x] = s[y0][x0] || s[y0][x1] || s[y1][x0] || s[y1][x1];
        }
    return o;
}

Support unite(const Support& a, const Support& b) {
    Support o = a;
    for (std::size_t y = 0; y < a.size(); ++y)
        for (std::size_t x = 0; x < a[0].size(); ++x) o[y][x] = a[y][x] || b[y][x];
    return o;
}

Support unet_support(Support s, std::size_t depth) {
    std::vector<Support> skips;
    for (std::size_t l = 0; l < depth; ++l) {
        s = dilate3(dilate3(s));
        skips.push_back(s);
        s = pool2(s);
    }
    s = dilate3(dilate3(s));
    for (std::size_t l = depth; l-- > 0;) s = dilate3(dilate3(unite(skips[l], up2(s))));
    return dilate3(s);
}

}  // namespace

TEST(UNetForward, TilePermutationActsWithinReceptiveField) {
    UNetConfig c = small_config(1, 2);
    constexpr std::size_t N = 128;
    c.height = N;
    c.width = N;
    auto m = UNetD::build(c, 21);
    std::mt19937_64 rng(4);
    auto x = random_tensor<double>({1, 3, N, N}, rng, 0.0, 1.0);
    // Permute the pixels of the 4x4 tile at (4, 4) in every channel.
    auto xp = x.clone();
    std::vector<std::size_t> perm(16);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Support marked(N, std::vector<bool>(N, false));
    for (std::size_t ch = 0; ch < 3; ++ch) {
        for (std::size_t k = 0; k < 16; ++k) {
            const std::size_t sy = 4 + perm[k] / 4, sx = 4 + perm[k] % 4;
            const std::size_t dy = 4 + k / 4, dx = 4 + k % 4;
            xp.data()[(ch * N + dy) * N + dx] = x.data()[(ch * N + sy) * N + sx];
            marked[dy][dx] = true;
        }
    }
    const Support support = unet_support(marked, c.depth);
    std::size_t outside_count = 0;
    for (const auto& row : support)
        for (bool b : row) outside_count += !b;
    ASSERT_GT(outside_count, N * N / 2);

    auto y = m.forward(x);
    auto yp = m.forward(xp);
    double inside = 0.0, outside = 0.0;
    for (std::size_t yy = 0; yy < N; ++yy) {
        for (std::size_t xx = 0; xx < N; ++xx) {
            const double d = std::abs(y.data()[yy * N + xx] - yp.data()[yy * N + xx]);
            (support[yy][xx] ? inside : outside) = std::max(support[yy][xx] ? inside : outside, d);
        }
    }
    EXPECT_GT(inside, 0.0);
    // Outside the window support only the shared group-norm statistics move.
    EXPECT_LT(outside, 0.01 * inside);
}

TEST(UNetCheckpoint, RoundTripThroughEncodedBytes) {
    auto m = UNet::build(small_config(), 9);
    auto restored = unet_from_parameters(m.config(), decode_checkpoint(encode_checkpoint(named_parameters(m))));
    std::mt19937_64 rng(3);
    auto x = random_tensor<float>({1, 3, 16, 24}, rng, 0.0, 1.0);
    auto a = m.forward(x);
    auto b = restored.forward(x);
    EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(UNetCheckpoint, MissingOrMisshapedEntriesRejected) {
    auto m = UNet::build(small_config(), 9);
    auto params = named_parameters(m);
    auto wrong = params;
    wrong.pop_back();
    EXPECT_THROW(unet_from_parameters(m.config(), wrong), DataError);
    auto other = small_config();
    other.hidden_features = 16;
    other.norm_groups = 4;
    EXPECT_THROW(unet_from_parameters(other, params), DataError);
}

namespace {

ImageStack indexed_stack(std::size_t w, std::size_t h) {
    ImageStack s;
    s.case_id = "t";
    s.width = w;
    s.height = h;
    for (std::size_t k = 0; k < kDirectionalImages; ++k) {
        s.directional[k] = Image8(w, h, static_cast<std::uint8_t>(k + 1));
        s.directional[k].at(0, 0, 1) = 200;
    }
    s.full_light = Image8(w, h, 255);
    return s;
}

}  // namespace

TEST(StackToInput, Spat32BlocksFollowImageIndex) {
    auto t = stack_to_input(indexed_stack(4, 2), InputMode::spat32);
    ASSERT_EQ(t.shape(), (Shape{1, 96, 2, 4}));
    for (std::size_t k = 0; k < 32; ++k) {
        for (std::size_t c = 0; c < 3; ++c) {
            const float expect_corner = c == 1 ? 200.0f / 255.0f : float(k + 1) / 255.0f;
            EXPECT_FLOAT_EQ(t.data()[((k * 3 + c) * 2 + 0) * 4 + 0], expect_corner);
            EXPECT_FLOAT_EQ(t.data()[((k * 3 + c) * 2 + 1) * 4 + 3], float(k + 1) / 255.0f);
        }
    }
}

TEST(StackToInput, FullLightIsThreeChannels) {
    auto t = stack_to_input(indexed_stack(4, 2), InputMode::fullLight1);
    ASSERT_EQ(t.shape(), (Shape{1, 3, 2, 4}));
    for (float v : t.data()) EXPECT_EQ(v, 1.0f);
}

TEST(StackToInput, MissingImageNamesIndex) {
    auto s = indexed_stack(4, 2);
    s.directional[16] = Image8();
    try {
        stack_to_input(s, InputMode::spat32);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
    }
    EXPECT_NO_THROW(stack_to_input(s, InputMode::fullLight1));
}
