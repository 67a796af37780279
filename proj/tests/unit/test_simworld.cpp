#include "doctest.h"

#include <cmath>
#include <fstream>
#include <numbers>

#include "racer/imaging.hpp"
#include "racer/simworld.hpp"
#include "temp_dir.hpp"

using namespace racer;
using namespace racer::sim;

namespace {

constexpr double kPi = std::numbers::pi;

double seg_dist(Vec2 p, Vec2 a, Vec2 b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy);
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p.x - a.x - t * dx, p.y - a.y - t * dy);
}

double brute_distance(const Track& tr, Vec2 p) {
    const auto& v = tr.centerline();
    double best = 1e300;
    for (std::size_t i = 0; i < v.size(); ++i) best = std::min(best, seg_dist(p, v[i], v[(i + 1) % v.size()]));
    return best;
}

Policy constant(Action a) {
    return {"constant", [a](const imaging::Frame&, const VehicleState&) { return a; }};
}

}  // namespace

TEST_CASE("built-in tracks") {
    const auto oval = make_track("oval");
    const double exact = 12.0 + 2 * kPi * 1.5;
    CHECK(exact == doctest::Approx(21.4248).epsilon(1e-5));
    CHECK(std::abs(oval.length() - exact) / exact < 1e-3);
    CHECK(oval.length() <= exact);

    for (const auto& name : builtin_tracks()) {
        const auto tr = make_track(name);
        CAPTURE(name);
        CHECK(tr.segment_count() >= 64);
        CHECK(tr.width() == 0.76);
        // Brute-force pairwise check, independent of is_simple().
        const auto& v = tr.centerline();
        const std::size_t n = v.size();
        auto orient = [](Vec2 a, Vec2 b, Vec2 c) { return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x); };
        std::size_t crossings = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 2; j < n; ++j) {
                if (i == 0 && j == n - 1) continue;
                const Vec2 a = v[i], b = v[(i + 1) % n], c = v[j], d = v[(j + 1) % n];
                if (orient(a, b, c) * orient(a, b, d) < 0 && orient(c, d, a) * orient(c, d, b) < 0) ++crossings;
            }
        CHECK(crossings == 0);
        CHECK(tr.is_simple());
    }
    CHECK_THROWS_AS(make_track("moebius"), std::invalid_argument);

    const Track bowtie("bowtie", {{0, 0}, {1, 1}, {1, 0}, {0, 1}});
    CHECK_FALSE(bowtie.is_simple());
}

TEST_CASE("track file loading") {
    testing_support::TempDir dir;
    {
        std::ofstream f(dir / "square.txt");
        f << "# unit square\n0 0\n2 0\n2 2\n0 2\n";
    }
    const auto sq = load_track_file(dir / "square.txt");
    CHECK(sq.segment_count() == 4);
    CHECK(sq.length() == doctest::Approx(8.0));
    {
        std::ofstream f(dir / "bad.txt");
        f << "0 0\n1 x\n";
    }
    CHECK_THROWS(load_track_file(dir / "bad.txt"));
    CHECK_THROWS(load_track_file(dir / "missing.txt"));
}

TEST_CASE("vehicle kinematics") {
    const Track tr = make_track("oval");
    VehicleState s = start_state(tr);
    CHECK(s.heading == doctest::Approx(0.0));

    SUBCASE("straight step") {
        const auto n = step_vehicle(s, Action::front, tr);
        CHECK(n.x - s.x == doctest::Approx(1.0 / 15.0).epsilon(1e-12));
        CHECK(n.y == s.y);
        CHECK(n.heading == s.heading);
    }
    SUBCASE("full circle at left-high") {
        const double R = 0.16 / std::tan(30.0 * kPi / 180.0);
        CHECK(R == doctest::Approx(0.2771).epsilon(1e-3));
        const double period_steps = 2 * kPi * R / (1.0 / 15.0);
        CHECK(period_steps == doctest::Approx(26.1).epsilon(2e-3));
        // Simulated positions lie on one circle of radius R. Its center comes from the first three
        // positions because the explicit update lags the continuous-time circle by half a step.
        std::vector<Vec2> pts{{s.x, s.y}};
        auto st = s;
        double turned = 0;
        for (int k = 0; k < 26; ++k) {
            const auto n = step_vehicle(st, Action::left_high, tr);
            turned += normalize_angle(n.heading - st.heading);
            st = n;
            pts.push_back({st.x, st.y});
        }
        const Vec2 a = pts[0], b = pts[1], c = pts[2];
        const double d = 2 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
        const double a2 = a.x * a.x + a.y * a.y, b2 = b.x * b.x + b.y * b.y, c2 = c.x * c.x + c.y * c.y;
        const Vec2 center{(a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d,
                          (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d};
        double worst = 0;
        for (auto p : pts) worst = std::max(worst, std::abs(std::hypot(p.x - center.x, p.y - center.y) - R));
        CHECK(worst < 0.02 * R);
        CHECK(std::hypot(center.x - s.x, center.y - (s.y + R)) < 0.5 / 15.0 + 1e-3);
        CHECK(turned < 2 * kPi);
        CHECK(turned + normalize_angle(step_vehicle(st, Action::left_high, tr).heading - st.heading) > 2 * kPi);
    }
    SUBCASE("mirror symmetry of steering") {
        auto l = s, r = s;
        for (int k = 0; k < 10; ++k) {
            l = step_vehicle(l, Action::left_high, tr);
            r = step_vehicle(r, Action::right_high, tr);
            CHECK(l.x == doctest::Approx(r.x).epsilon(1e-12));
            CHECK(l.y - s.y == doctest::Approx(-(r.y - s.y)).epsilon(1e-12));
            CHECK(l.heading == doctest::Approx(-r.heading).epsilon(1e-12));
        }
    }
}

TEST_CASE("reward and off-track") {
    const Track tr = make_track("oval");
    const auto s0 = start_state(tr);
    CHECK(reward(s0, tr) == 0.0);
    CHECK_FALSE(off_track(s0, tr));

    // Along a straight, tangent is +x and left is +y.
    const auto in = start_state(tr, 3.0, 0.38 - 0.001);
    const auto out = start_state(tr, 3.0, 0.38 + 0.01);
    CHECK_FALSE(off_track(in, tr));
    CHECK(off_track(out, tr));
    CHECK(off_track(start_state(tr, 3.0, -0.39), tr));

    const auto ep = run_episode(oracle(tr), tr, RenderStyle::sim, 0.0, 2000, 1);
    REQUIRE(ep.terminal == Terminal::lap_complete);
    double prev = 0;
    bool half_checked = false;
    for (std::size_t i = 0; i < ep.steps.size(); ++i) {
        const auto& st = ep.steps[i];
        CHECK(st.reward > prev);
        prev = st.reward;
        if (!half_checked && i > 0 && st.state->lap_count == 0 && st.state->arc_progress >= tr.length() / 2) {
            CHECK(std::abs(ep.steps[i - 1].reward - 0.5) < 0.02);
            half_checked = true;
        }
    }
    CHECK(half_checked);
    CHECK(ep.steps.back().reward >= 1.0);
    CHECK(ep.steps[ep.steps.size() - 2].reward < 1.0);
    const double lap = lap_time(ep);
    CHECK(std::abs(lap - tr.length()) / tr.length() < 0.10);
}

TEST_CASE("windowed projection equals brute force on 10k poses") {
    SplitMix64 rng(31);
    for (const auto& name : builtin_tracks()) {
        const Track tr = make_track(name);
        for (int i = 0; i < 10000 / 3 + 1; ++i) {
            const double s = rng.uniform(0, tr.length());
            const auto st = start_state(tr, s, rng.uniform(-0.38, 0.38));
            const double hint = std::fmod(s + rng.uniform(-0.2, 0.2) + tr.length(), tr.length());
            const auto w = tr.project_windowed({st.x, st.y}, hint);
            const auto b = tr.project_brute({st.x, st.y});
            REQUIRE(w.distance == doctest::Approx(b.distance).epsilon(1e-12));
            REQUIRE(w.arc == doctest::Approx(b.arc).epsilon(1e-9));
        }
    }
}

TEST_CASE("indexed distance equals brute force on a 1 cm grid") {
    const Track tr = make_track("hairpin");
    double minx = 1e9, maxx = -1e9, miny = 1e9, maxy = -1e9;
    for (auto v : tr.centerline()) {
        minx = std::min(minx, v.x), maxx = std::max(maxx, v.x);
        miny = std::min(miny, v.y), maxy = std::max(maxy, v.y);
    }
    std::size_t points = 0;
    for (double y = miny - 0.6; y <= maxy + 0.6; y += 0.01)
        for (double x = minx - 0.6; x <= maxx + 0.6; x += 0.01) {
            const double d = tr.distance({x, y});
            const double ref = brute_distance(tr, {x, y});
            if (std::abs(d - ref) > 1e-12) REQUIRE(d == doctest::Approx(ref));
            ++points;
        }
    CHECK(points > 100000);
}

TEST_CASE("camera projection") {
    const CameraModel cam;
    const VehicleState s{1.0, 2.0, 0.0, 0.0, 0};
    // Bottom-center pixel center is half a pixel above the image edge.
    const double vfov = cam.vfov_deg();
    const auto g = pixel_to_ground(s, cam, cam.width / 2.0, cam.height - 0.5);
    REQUIRE(g);
    const double edge_ahead = cam.mount_height / std::tan((15.0 + vfov / 2) * kPi / 180.0);
    const auto g2 = pixel_to_ground(s, cam, cam.width / 2.0, cam.height - 1.5);
    REQUIRE(g2);
    const double footprint = g2->x - g->x;
    CHECK(footprint > 0);
    CHECK(std::abs((g->x - s.x) - edge_ahead) <= footprint);
    CHECK(g->y == doctest::Approx(s.y));
    // Above the horizon there is no ground.
    CHECK_FALSE(pixel_to_ground(s, cam, 80, 0.5).has_value());
}

TEST_CASE("rendering") {
    const Track tr = make_track("oval");
    const CameraModel cam;
    const auto st = start_state(tr, 1.0);

    const auto sim = render_camera(st, tr, cam, RenderStyle::sim, 5);
    CHECK(sim.width == 160);
    CHECK(sim.height == 120);
    CHECK(sim == render_camera(st, tr, cam, RenderStyle::sim, 99));

    bool symmetric = true;
    for (int y = 0; y < 120; ++y)
        for (int x = 0; x < 80; ++x) symmetric = symmetric && sim.at(x, y) == sim.at(159 - x, y);
    CHECK(symmetric);

    const auto real = render_camera(st, tr, cam, RenderStyle::real, 5);
    CHECK(real == render_camera(st, tr, cam, RenderStyle::real, 5));
    CHECK(real != render_camera(st, tr, cam, RenderStyle::real, 6));
    bool real_symmetric = true;
    for (int y = 0; y < 120; ++y)
        for (int x = 0; x < 80; ++x) real_symmetric = real_symmetric && real.at(x, y) == real.at(159 - x, y);
    CHECK_FALSE(real_symmetric);

    // On this pose the real-style edge map agrees with the sim one on most of its set pixels.
    const auto es = imaging::preprocess(sim);
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const auto er = imaging::preprocess(render_camera(st, tr, cam, RenderStyle::real, seed));
        std::size_t set = 0, agree = 0;
        for (std::size_t i = 0; i < er.bits.size(); ++i) {
            if (!er.bits[i]) continue;
            ++set;
            agree += es.bits[i];
        }
        CAPTURE(seed);
        REQUIRE(set > 0);
        CHECK(static_cast<double>(agree) / static_cast<double>(set) >= 0.80);
    }
}

TEST_CASE("oracle policy") {
    const Track tr = make_track("oval");
    CHECK(oracle_policy(start_state(tr, 1.0), tr) == Action::front);

    CHECK(nearest_action(22.5) == Action::left_med);
    CHECK(nearest_action(-22.5) == Action::right_med);
    CHECK(nearest_action(7.5) == Action::front);
    CHECK(nearest_action(-7.5) == Action::front);
    CHECK(nearest_action(22.6) == Action::left_high);
    CHECK(nearest_action(90) == Action::left_high);
    CHECK(nearest_action(-16) == Action::right_med);

    // Pure pursuit saturates at atan(2L / lookahead), short of the 22.5 degree midpoint.
    SplitMix64 rng(8);
    for (int i = 0; i < 2000; ++i) {
        auto pose = start_state(tr, rng.uniform(0, tr.length()), rng.uniform(-0.3, 0.3), rng.uniform(-kPi, kPi));
        const auto a = oracle_policy(pose, tr);
        CHECK(a != Action::left_high);
        CHECK(a != Action::right_high);
    }
    CHECK(std::atan(2 * 0.16 / 0.8) * 180 / kPi < 22.5);

    for (int k = 0; k < 10; ++k) {
        EpisodeOptions opt;
        opt.max_start_offset = 0.05;
        const auto ep = run_episode(oracle(tr), tr, RenderStyle::sim, 0.0, 2000, 1000 + k, opt);
        CHECK(ep.terminal == Terminal::lap_complete);
        CHECK(std::abs(ep.steps.front().state->y - tr.point_at(0).y) <= 0.05);
    }
    for (const auto& name : builtin_tracks()) {
        const Track t = make_track(name);
        CAPTURE(name);
        CHECK(run_episode(oracle(t), t, RenderStyle::sim, 0.0, 2000, 3).terminal == Terminal::lap_complete);
    }

    const auto left = run_episode(constant(Action::left_high), tr, RenderStyle::sim, 0.0, 2000, 1);
    CHECK(left.terminal == Terminal::off_track);
    CHECK(lap_time(left) <= 2.0);
}

TEST_CASE("command corruption") {
    SplitMix64 rng(1);
    for (int i = 0; i < 1000; ++i) CHECK(corrupt_action(Action::front, 0.0, rng) == Action::front);

    std::array<int, 5> counts{};
    for (int i = 0; i < 10000; ++i) ++counts[static_cast<std::size_t>(index_of(corrupt_action(Action::right_med, 1.0, rng)))];
    CHECK(counts[3] == 0);
    // Chi-square over four categories, 3 degrees of freedom, critical value 11.345 at 0.01.
    double chi2 = 0;
    for (int a : {0, 1, 2, 4}) chi2 += std::pow(counts[static_cast<std::size_t>(a)] - 2500.0, 2) / 2500.0;
    CHECK(chi2 < 11.345);

    int same = 0;
    for (int i = 0; i < 10000; ++i) same += corrupt_action(Action::left_high, 0.5, rng) == Action::left_high;
    CHECK(std::abs(same / 10000.0 - 0.5) <= 0.02);

    SplitMix64 a(9), b(9);
    for (int i = 0; i < 100; ++i) CHECK(corrupt_action(Action::front, 0.3, a) == corrupt_action(Action::front, 0.3, b));

    CHECK_THROWS_AS(corrupt_action(Action::front, 1.5, rng), std::invalid_argument);
    CHECK_THROWS_AS(corrupt_action(Action::front, -0.1, rng), std::invalid_argument);
}

TEST_CASE("episodes are deterministic") {
    const Track tr = make_track("serpentine");
    const auto a = run_episode(oracle(tr), tr, RenderStyle::real, 0.3, 200, 42);
    const auto b = run_episode(oracle(tr), tr, RenderStyle::real, 0.3, 200, 42);
    CHECK(a == b);
    const auto timeout = run_episode(oracle(tr), tr, RenderStyle::sim, 0.0, 20, 42);
    CHECK(timeout.terminal == Terminal::timeout);
    CHECK(timeout.steps.size() == 20);
}
