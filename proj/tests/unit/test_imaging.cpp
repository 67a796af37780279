#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "canny_reference.hpp"
#include "racer/imaging.hpp"
#include "racer/pgm.hpp"
#include "racer/simworld.hpp"

using namespace racer;
using namespace racer::imaging;

namespace {

Frame to_frame(const ref::Image& im) {
    std::vector<std::uint8_t> px(im.v.begin(), im.v.end());
    return Frame(im.w, im.h, std::move(px));
}

Frame step_frame() {
    Frame f(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 4; x < 8; ++x) f.pixels[static_cast<std::size_t>(y) * 8 + x] = 255;
    return f;
}

}  // namespace

TEST_CASE("crop_top removes floor(fraction*height) rows") {
    Frame f(160, 120);
    for (std::size_t i = 0; i < f.pixels.size(); ++i) f.pixels[i] = static_cast<std::uint8_t>(i % 251);
    const auto c = crop_top(f, 0.20);
    CHECK(c.width == 160);
    CHECK(c.height == 96);
    CHECK(std::equal(c.pixels.begin(), c.pixels.end(), f.pixels.begin() + 24 * 160));
    CHECK(crop_top(f, 0.0) == f);
    CHECK(crop_top(Frame(10, 64), 0.20).height == 52);
    CHECK_THROWS_AS(crop_top(f, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(crop_top(f, -0.1), std::invalid_argument);
}

TEST_CASE("gaussian_blur") {
    SUBCASE("constant image is preserved") {
        const auto out = gaussian_blur(Frame(20, 15, 128), 1.0);
        for (auto v : out.pixels) CHECK(v == 128);
    }
    SUBCASE("impulse response equals kernel weights") {
        Frame f(15, 15);
        f.pixels[7 * 15 + 7] = 255;
        const auto vals = gaussian_blur_values(f, 1.0);
        // Independent normalized discrete Gaussian, radius ceil(3 sigma) = 3.
        double z = 0.0;
        for (int i = -3; i <= 3; ++i) z += std::exp(-i * i / 2.0);
        const double center = 1.0 / z;
        CHECK(vals[7 * 15 + 7] == doctest::Approx(255.0 * center * center).epsilon(1e-12));
        for (int d = 1; d <= 3; ++d) {
            CHECK(vals[7 * 15 + 7 + d] == doctest::Approx(vals[7 * 15 + 7 - d]).epsilon(1e-12));
            CHECK(vals[(7 + d) * 15 + 7] == doctest::Approx(vals[(7 - d) * 15 + 7]).epsilon(1e-12));
        }
    }
    SUBCASE("separable pass equals direct 2D convolution") {
        for (const auto& im : ref::corpus()) {
            const auto fast = gaussian_blur_values(to_frame(im), 1.0);
            const auto slow = ref::blur2d_values(im, 1.0);
            double worst = 0.0;
            for (std::size_t i = 0; i < fast.size(); ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
            CHECK(worst < 1e-4);
        }
    }
    CHECK(gaussian_kernel(1.0).size() == 7);
    CHECK(gaussian_kernel(0.6).size() == 5);
    CHECK_THROWS_AS(gaussian_blur(Frame(5, 5), 0.0), std::invalid_argument);
}

TEST_CASE("sobel") {
    SUBCASE("constant image has no gradient") {
        const auto g = sobel(Frame(9, 7, 77));
        for (std::size_t i = 0; i < g.magnitude.size(); ++i) {
            CHECK(g.gx[i] == 0);
            CHECK(g.gy[i] == 0);
            CHECK(g.magnitude[i] == 0);
        }
    }
    SUBCASE("vertical step") {
        const auto g = sobel(step_frame());
        for (int y = 1; y < 7; ++y)
            for (int x : {3, 4}) {
                const auto i = g.index(x, y);
                CHECK(g.gx[i] == 1020);
                CHECK(g.gy[i] == 0);
                CHECK(g.direction[i] == Direction::deg0);
            }
    }
    SUBCASE("transpose swaps gx and gy") {
        const auto im = ref::corpus()[6];
        Frame f = to_frame(im), t(im.h, im.w);
        for (int y = 0; y < im.h; ++y)
            for (int x = 0; x < im.w; ++x) t.pixels[static_cast<std::size_t>(x) * im.h + y] = f.at(x, y);
        const auto g = sobel(f), gt = sobel(t);
        for (int y = 0; y < im.h; ++y)
            for (int x = 0; x < im.w; ++x) {
                CHECK(gt.gy[gt.index(y, x)] == g.gx[g.index(x, y)]);
                CHECK(gt.gx[gt.index(y, x)] == g.gy[g.index(x, y)]);
            }
    }
    SUBCASE("magnitude is the L2 norm and directions match the reference") {
        for (const auto& im : ref::corpus()) {
            const auto g = sobel(to_frame(im));
            const auto r = ref::sobel(im);
            for (std::size_t i = 0; i < g.magnitude.size(); ++i) {
                REQUIRE(g.gx[i] == r.gx[i]);
                REQUIRE(g.gy[i] == r.gy[i]);
                CHECK(std::abs(g.magnitude[i] - std::sqrt(static_cast<double>(r.mag2[i]))) <=
                      1e-6 * std::max(1.0, std::sqrt(static_cast<double>(r.mag2[i]))));
                if (r.mag2[i] > 0) CHECK(static_cast<int>(g.direction[i]) == r.bin[i]);
            }
        }
    }
    CHECK_THROWS_AS(sobel(Frame(2, 5)), std::invalid_argument);
    CHECK_THROWS_AS(sobel(Frame(5, 2)), std::invalid_argument);
}

TEST_CASE("non_max_suppression") {
    SUBCASE("all-zero stays zero") {
        const auto g = non_max_suppression(sobel(Frame(6, 6, 3)));
        for (auto m : g.magnitude) CHECK(m == 0);
    }
    SUBCASE("plateau keeps the first pixel in scan order") {
        const auto g = non_max_suppression(sobel(step_frame()));
        for (int y = 1; y < 7; ++y) {
            CHECK(g.magnitude[g.index(3, y)] == 1020);
            CHECK(g.magnitude[g.index(4, y)] == 0);
        }
    }
    SUBCASE("isolated maximum is kept") {
        GradientField g;
        g.width = g.height = 5;
        g.gx.assign(25, 0);
        g.gy.assign(25, 0);
        g.magnitude.assign(25, 0);
        g.direction.assign(25, Direction::deg45);
        g.magnitude[12] = 42;
        CHECK(non_max_suppression(g).magnitude[12] == 42);
    }
    SUBCASE("idempotent and equal to the reference") {
        for (const auto& im : ref::corpus()) {
            const auto once = non_max_suppression(sobel(to_frame(im)));
            const auto twice = non_max_suppression(once);
            CHECK(once.magnitude == twice.magnitude);
            const auto r = ref::nms(ref::sobel(im));
            for (std::size_t i = 0; i < r.size(); ++i)
                REQUIRE((once.magnitude[i] > 0) == (r[i] > 0));
        }
    }
}

TEST_CASE("hysteresis") {
    auto field = [](int w, int h) {
        GradientField g;
        g.width = w;
        g.height = h;
        const auto n = static_cast<std::size_t>(w) * h;
        g.gx.assign(n, 0);
        g.gy.assign(n, 0);
        g.magnitude.assign(n, 0);
        g.direction.assign(n, Direction::deg0);
        return g;
    };
    SUBCASE("all below low") {
        auto g = field(6, 6);
        std::fill(g.magnitude.begin(), g.magnitude.end(), 99.0f);
        const auto b = hysteresis(g);
        CHECK(std::count(b.bits.begin(), b.bits.end(), 1) == 0);
    }
    SUBCASE("weak chain attached to a strong pixel is kept") {
        auto g = field(10, 10);
        g.magnitude[g.index(1, 1)] = 300;
        for (int k = 2; k < 8; ++k) g.magnitude[g.index(k, k)] = 150;  // diagonal: 8-connected only
        g.magnitude[g.index(8, 2)] = 150;                               // weak, isolated
        const auto b = hysteresis(g);
        CHECK(b.bits[g.index(1, 1)] == 1);
        for (int k = 2; k < 8; ++k) CHECK(b.bits[g.index(k, k)] == 1);
        CHECK(b.bits[g.index(8, 2)] == 0);
        CHECK(std::count(b.bits.begin(), b.bits.end(), 1) == 7);
    }
    SUBCASE("exactly high is not strong, exactly low is weak") {
        auto g = field(5, 1);
        g.magnitude = {256, 100, 0, 257, 100};
        const auto b = hysteresis(g);
        CHECK(b.bits == std::vector<std::uint8_t>{0, 0, 0, 1, 1});
    }
    CHECK_THROWS_AS(hysteresis(field(3, 3), 200, 100), std::invalid_argument);
    CHECK_THROWS_AS(hysteresis(field(3, 3), -1, 100), std::invalid_argument);
}

TEST_CASE("resize_to_64") {
    SUBCASE("identity at 64x64") {
        BinaryImage b{64, 64, std::vector<std::uint8_t>(4096)};
        SplitMix64 rng(3);
        for (auto& v : b.bits) v = static_cast<std::uint8_t>(rng.below(2));
        const auto e = resize_to_64(b);
        CHECK(std::equal(e.bits.begin(), e.bits.end(), b.bits.begin()));
    }
    SUBCASE("all ones stay all ones") {
        const auto e = resize_to_64(BinaryImage{128, 128, std::vector<std::uint8_t>(128 * 128, 1)});
        CHECK(e.count() == 4096);
    }
    SUBCASE("aligned 2x2 block sets one pixel") {
        BinaryImage b{128, 128, std::vector<std::uint8_t>(128 * 128, 0)};
        for (int y : {20, 21})
            for (int x : {40, 41}) b.bits[static_cast<std::size_t>(y) * 128 + x] = 1;
        const auto e = resize_to_64(b);
        CHECK(e.count() == 1);
        CHECK(e.at(20, 10) == 1);
    }
    SUBCASE("half coverage is a tie that resolves to 1") {
        BinaryImage b{128, 128, std::vector<std::uint8_t>(128 * 128, 0)};
        b.bits[0] = b.bits[1] = 1;
        CHECK(resize_to_64(b).at(0, 0) == 1);
        b.bits[1] = 0;
        CHECK(resize_to_64(b).at(0, 0) == 0);
    }
}

TEST_CASE("full chain matches the brute-force reference bit for bit") {
    const auto images = ref::corpus();
    REQUIRE(images.size() >= 20);
    std::size_t total_edges = 0;
    for (const auto& im : images) {
        PipelineParams p;
        p.frame_width = im.w;
        p.frame_height = im.h;
        const auto e = preprocess(to_frame(im), p);
        const auto r = ref::canny64(im);
        CHECK(std::equal(e.bits.begin(), e.bits.end(), r.begin()));
        total_edges += e.count();
    }
    CHECK(total_edges > 0);
}

TEST_CASE("preprocess properties") {
    const auto track = sim::make_track("oval");
    SUBCASE("constant frame gives an empty map") { CHECK(preprocess(Frame(160, 120, 90)).count() == 0); }
    SUBCASE("centered straight pose gives a mirror-symmetric map") {
        const auto f = sim::render_camera(sim::start_state(track, 1.0), track, {}, RenderStyle::sim, 0);
        const auto e = preprocess(f);
        CHECK(e.count() > 0);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 32; ++x) CHECK(e.at(x, y) == e.at(63 - x, y));
    }
    SUBCASE("deterministic") {
        const auto f = sim::render_camera(sim::start_state(track, 3.0), track, {}, RenderStyle::real, 5);
        CHECK(preprocess(f) == preprocess(f));
    }
    SUBCASE("brightness shift on an unsaturated frame leaves the map unchanged") {
        auto f = sim::render_camera(sim::start_state(track, 2.0, 0.05), track, {}, RenderStyle::sim, 0);
        for (int c : {-30, -7, 12, 25}) {
            Frame g = f;
            bool saturated = false;
            for (auto& v : g.pixels) {
                const int s = v + c;
                saturated |= s < 0 || s > 255;
                v = static_cast<std::uint8_t>(std::clamp(s, 0, 255));
            }
            REQUIRE_FALSE(saturated);
            CHECK(preprocess(g) == preprocess(f));
        }
    }
}

TEST_CASE("pgm round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "racer_pgm_test";
    std::filesystem::create_directories(dir);
    Frame f(7, 5);
    for (std::size_t i = 0; i < f.pixels.size(); ++i) f.pixels[i] = static_cast<std::uint8_t>(i * 7);
    write_pgm(dir / "a.pgm", f);
    CHECK(read_pgm(dir / "a.pgm") == f);
    EdgeMap e;
    e.bits[5] = 1;
    write_edge_pgm(dir / "e.pgm", e);
    const auto back = read_pgm(dir / "e.pgm");
    CHECK(back.width == 64);
    CHECK(back.pixels[5] == 255);
    CHECK(back.pixels[6] == 0);
    std::filesystem::remove_all(dir);
}
