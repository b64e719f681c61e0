#include "eprobust/corruptions.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

using namespace eprobust;

namespace {

Tensor<float> gray(Shape s, float v = 0.5f) { return Tensor<float>::constant(std::move(s), v); }

}  // namespace

TEST_CASE("gaussian noise scale") {
    // mean |noise| of N(0, s^2) is s*sqrt(2/pi); mid-gray input keeps clipping negligible
    const auto x = gray({3, 8, 8});
    for (int sev = 1; sev <= 5; ++sev) {
        const double sigma = SeverityTable::builtin().value(CorruptionKind::gaussian_noise, sev);
        double mad = 0;
        Index count = 0;
        for (int i = 0; i < 1000; ++i) {
            const auto y = corrupt(x, {CorruptionKind::gaussian_noise, sev, std::uint64_t(i)});
            mad += (y.values() - x.values()).cwiseAbs().cast<double>().sum();
            count += y.size();
        }
        mad /= double(count);
        CHECK(mad == doctest::Approx(sigma * std::sqrt(2.0 / 3.14159265358979)).epsilon(0.05));
    }
}

TEST_CASE("noise is reproducible per seed and differs across seeds") {
    std::mt19937_64 rng(1);
    const auto x = oracle::random_tensor<float>({3, 8, 8}, rng, 0, 1);
    for (auto kind : all_corruption_kinds()) {
        CAPTURE(to_string(kind));
        const auto a = corrupt(x, {kind, 3, 11});
        CHECK(a == corrupt(x, {kind, 3, 11}));
        CHECK(a.shape() == x.shape());
        CHECK(a.values().minCoeff() >= 0.f);
        CHECK(a.values().maxCoeff() <= 1.f);
        if (is_noise_family(kind)) CHECK_FALSE(a == corrupt(x, {kind, 3, 12}));
        else CHECK(a == corrupt(x, {kind, 3, 12}));
    }
}

TEST_CASE("severity tables grow in distortion") {
    const auto& t = SeverityTable::builtin();
    for (int s = 1; s < 5; ++s) {
        CHECK(t.value(CorruptionKind::gaussian_noise, s) < t.value(CorruptionKind::gaussian_noise, s + 1));
        CHECK(t.value(CorruptionKind::shot_noise, s) > t.value(CorruptionKind::shot_noise, s + 1));
        CHECK(t.value(CorruptionKind::impulse_noise, s) < t.value(CorruptionKind::impulse_noise, s + 1));
        CHECK(t.value(CorruptionKind::gaussian_blur, s) < t.value(CorruptionKind::gaussian_blur, s + 1));
        CHECK(t.value(CorruptionKind::contrast, s) > t.value(CorruptionKind::contrast, s + 1));
        CHECK(t.value(CorruptionKind::brightness, s) < t.value(CorruptionKind::brightness, s + 1));
        CHECK(t.value(CorruptionKind::pixelate, s) > t.value(CorruptionKind::pixelate, s + 1));
    }
    CHECK_THROWS_AS(t.at(CorruptionKind::contrast, 6), CorruptionError);
    CHECK_THROWS_AS(t.at(CorruptionKind::contrast, 0), CorruptionError);
}

TEST_CASE("mean distortion rises with severity") {
    std::mt19937_64 rng(2);
    const auto x = oracle::random_tensor<float>({3, 16, 16}, rng, 0.1, 0.9);
    for (auto kind : all_corruption_kinds()) {
        CAPTURE(to_string(kind));
        double prev = -1;
        for (int s = 1; s <= 5; ++s) {
            double d = 0;
            for (std::uint64_t seed = 0; seed < 20; ++seed)
                d += (corrupt(x, {kind, s, seed}).values() - x.values()).cwiseAbs().cast<double>().mean();
            CHECK(d > prev);
            prev = d;
        }
    }
}

TEST_CASE("primitives on hand cases") {
    std::mt19937_64 rng(3);
    const auto x = oracle::random_tensor<float>({3, 6, 6}, rng, 0, 1);
    CHECK(contrast(x, 1.0) == x);
    CHECK(gaussian_blur(x, 0.0) == x);
    CHECK(pixelate(x, 1.0) == x);

    // zero contrast collapses each channel to its mean
    const auto flat = contrast(x, 0.0);
    for (Index c = 0; c < 3; ++c) {
        const auto seg = flat.values().segment(c * 36, 36);
        CHECK(seg.maxCoeff() - seg.minCoeff() < 1e-6f);
        CHECK(seg[0] == doctest::Approx(x.values().segment(c * 36, 36).mean()).epsilon(1e-5));
    }

    // blur keeps constants and the mean of an interior impulse
    CHECK(max_abs_diff(gaussian_blur(gray({1, 9, 9}, 0.3f), 1.0), gray({1, 9, 9}, 0.3f)) < 1e-6f);
    auto impulse = gray({1, 15, 15}, 0.f);
    impulse(0, 7, 7) = 1.f;
    const auto b = gaussian_blur(impulse, 0.8);
    CHECK(b.values().sum() == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(b(0, 7, 7) == b.values().maxCoeff());
    CHECK(b(0, 6, 7) == doctest::Approx(b(0, 8, 7)));

    // brightness on gray RGB adds to every channel; single channel adds directly
    CHECK(max_abs_diff(brightness(gray({3, 2, 2}, 0.4f), 0.1), gray({3, 2, 2}, 0.5f)) < 1e-6f);
    CHECK(max_abs_diff(brightness(gray({1, 2, 2}, 0.95f), 0.1), gray({1, 2, 2}, 1.f)) < 1e-6f);
    // hue and saturation survive: channel ratios are kept
    Tensor<float> rgb({3, 1, 1}, {0.6f, 0.3f, 0.15f});
    const auto br = brightness(rgb, 0.2);
    CHECK(br[0] == doctest::Approx(0.8));
    CHECK(br[1] / br[0] == doctest::Approx(0.5));
    CHECK(br[2] / br[0] == doctest::Approx(0.25));

    // pixelate of 4x4 to 2x2 averages quadrants
    Tensor<float> q({1, 4, 4});
    for (Index i = 0; i < 16; ++i) q[i] = float(i) / 16.f;
    const auto p = pixelate(q, 0.5);
    CHECK(p(0, 0, 0) == doctest::Approx((0 + 1 + 4 + 5) / 64.0));
    CHECK(p(0, 1, 1) == p(0, 0, 0));
    CHECK(p(0, 3, 3) == doctest::Approx((10 + 11 + 14 + 15) / 64.0));

    // impulse replaces about the configured fraction with 0 or 1
    std::mt19937_64 r2(4);
    const auto imp = impulse_noise(gray({3, 32, 32}), 0.2, r2);
    Index hit = 0;
    for (Index i = 0; i < imp.size(); ++i) {
        if (imp[i] != 0.5f) {
            CHECK((imp[i] == 0.f || imp[i] == 1.f));
            ++hit;
        }
    }
    CHECK(double(hit) / double(imp.size()) == doctest::Approx(0.2).epsilon(0.1));

    // shot noise is unbiased
    std::mt19937_64 r3(5);
    const auto sh = shot_noise(gray({3, 32, 32}, 0.3f), 50, r3);
    CHECK(sh.values().mean() == doctest::Approx(0.3).epsilon(0.03));
}

TEST_CASE("severity table parsing") {
    auto t = SeverityTable::parse("# c\n gaussian_noise.2 = 0.5  # trailing\ncontrast.1=0.3 0.4\n\n");
    CHECK(t.value(CorruptionKind::gaussian_noise, 2) == 0.5);
    CHECK(t.at(CorruptionKind::contrast, 1) == std::vector<double>{0.3, 0.4});
    CHECK_THROWS_AS(SeverityTable::parse("fog.1 = 2"), CorruptionError);
    CHECK_THROWS_AS(SeverityTable::parse("contrast.x = 2"), CorruptionError);
    CHECK_THROWS_AS(SeverityTable::parse("contrast.9 = 2"), CorruptionError);
    CHECK_THROWS_AS(SeverityTable::parse("contrast.1 = abc"), CorruptionError);
    CHECK_THROWS_AS(SeverityTable::parse("contrast.1 = 1\ncontrast.1 = 2"), CorruptionError);
    CHECK_THROWS_AS(SeverityTable::parse("contrast 1"), CorruptionError);
    CHECK_THROWS_AS(parse_corruption_kind("fog"), CorruptionError);
    for (auto k : all_corruption_kinds()) CHECK(parse_corruption_kind(to_string(k)) == k);
    CHECK_THROWS_AS(corrupt(Tensor<float>({8, 8}), {CorruptionKind::contrast, 1, 0}), ShapeError);
}

TEST_CASE("sweep") {
    auto d = synth_dataset(SynthKind::blobs, 40, {1, 8, 8}, 2, 7);
    // predicts class 0 iff the image is brighter on the left half
    Predictor pred = [](const Tensor<float>& x) {
        double l = 0, r = 0;
        for (Index i = 0; i < 8; ++i)
            for (Index j = 0; j < 8; ++j) (j < 4 ? l : r) += x(0, i, j);
        return l > r ? 0 : 1;
    };
    const auto g = corruption_sweep(d, pred, {CorruptionKind::gaussian_noise, CorruptionKind::contrast}, {1, 5}, 3);
    CHECK(g.clean_accuracy == evaluate(pred, d));
    REQUIRE(g.cells.size() == 4);
    CHECK(g.cells[0].kind == CorruptionKind::gaussian_noise);
    CHECK(g.cells[1].severity == 5);
    CHECK(g.cells[3].kind == CorruptionKind::contrast);
    for (const auto& c : g.cells) CHECK(c.n == 40);
    const auto again = corruption_sweep(d, pred, {CorruptionKind::gaussian_noise, CorruptionKind::contrast}, {1, 5}, 3);
    for (std::size_t i = 0; i < 4; ++i) CHECK(again.cells[i].accuracy == g.cells[i].accuracy);
    CHECK_THROWS_AS(corruption_sweep(d, pred, {CorruptionKind::contrast}, {7}, 3), CorruptionError);
}
