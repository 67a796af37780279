#include "doctest.h"

#include <fstream>
#include <sstream>

#include "filter_reference.hpp"
#include "racer/base64.hpp"
#include "racer/data.hpp"
#include "racer/errors.hpp"
#include "racer/rng.hpp"
#include "temp_dir.hpp"

using namespace racer;
using namespace racer::data;
using testing_support::TempDir;

namespace {

Episode make_episode(const std::vector<double>& rewards, std::uint64_t seed, Terminal terminal = Terminal::lap_complete,
                     int w = 8, int h = 6) {
    SplitMix64 rng(seed);
    Episode ep;
    ep.header.track = "oval";
    ep.header.width = w;
    ep.header.height = h;
    ep.header.policy = "test";
    ep.header.seed = seed;
    for (std::size_t t = 0; t < rewards.size(); ++t) {
        Step s;
        s.t = static_cast<int>(t);
        s.action = action_from_index(static_cast<int>(rng.below(kActionCount)));
        s.reward = rewards[t];
        s.frame = imaging::Frame(w, h);
        for (auto& p : s.frame.pixels) p = static_cast<std::uint8_t>(rng.below(256));
        if (t % 2 == 0) s.state = VehicleState{rng.uniform(), rng.uniform(), rng.uniform(-3, 3), rng.uniform(), 0};
        ep.steps.push_back(std::move(s));
    }
    ep.terminal = terminal;
    return ep;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    return lines;
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
    std::ofstream out(p);
    for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST_CASE("base64 RFC 4648 vectors") {
    const std::pair<std::string, std::string> cases[] = {{"", ""},         {"f", "Zg=="},         {"fo", "Zm8="},
                                                         {"foo", "Zm9v"},  {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="},
                                                         {"foobar", "Zm9vYmFy"}};
    for (const auto& [plain, coded] : cases) {
        std::vector<std::uint8_t> bytes(plain.begin(), plain.end());
        CHECK(base64_encode(bytes) == coded);
        CHECK(base64_decode(coded) == bytes);
    }
    CHECK_THROWS_AS(base64_decode("Zm9"), FormatError);
    CHECK_THROWS_AS(base64_decode("Zm9*"), FormatError);
}

TEST_CASE("episode round trip") {
    TempDir dir;
    const auto ep = make_episode({0.0, 0.01, 0.1 / 3.0, 0.5, 1.0}, 3);
    write_episode(ep, dir / "a.ep");
    const auto back = read_episode(dir / "a.ep");
    CHECK(back == ep);

    const auto lines = read_lines(dir / "a.ep");
    REQUIRE(lines.size() == ep.steps.size() + 2);
    CHECK(lines.front().find("\"type\":\"header\"") != std::string::npos);
    CHECK(lines.back().find("lap-complete") != std::string::npos);
}

TEST_CASE("episode parse errors") {
    TempDir dir;
    write_episode(make_episode({0.1, 0.2, 0.3}, 4), dir / "a.ep");
    auto lines = read_lines(dir / "a.ep");

    SUBCASE("missing terminal record") {
        lines.pop_back();
        write_lines(dir / "b.ep", lines);
        try {
            read_episode(dir / "b.ep");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("unterminated episode") != std::string::npos);
        }
    }
    SUBCASE("malformed line names its number") {
        lines[2] = "{not json";
        write_lines(dir / "b.ep", lines);
        try {
            read_episode(dir / "b.ep");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 3);
        }
    }
    SUBCASE("frame size differs from header") {
        auto j = nlohmann::json::parse(lines[2]);
        j["frame"] = base64_encode(std::vector<std::uint8_t>(47, 1));
        lines[2] = j.dump();
        write_lines(dir / "b.ep", lines);
        try {
            read_episode(dir / "b.ep");
            FAIL("expected FormatError");
        } catch (const ParseError&) {
            FAIL("size mismatch must not be a parse error");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("step t=1") != std::string::npos);
        }
    }
}

TEST_CASE("filter_episode examples") {
    auto keep = [](std::vector<double> r) { return filter_episode(make_episode(r, 1)); };
    CHECK(keep({0.1, 0.2, 0.3}) == std::vector<std::size_t>{0, 1, 2});
    CHECK(keep({0.1, 0.3, 0.2, 0.4}) == std::vector<std::size_t>{0, 1, 3});
    CHECK(keep({0.5, 0.4, 0.3}) == std::vector<std::size_t>{0});
    CHECK(keep({0.2, 0.2, 0.3}) == std::vector<std::size_t>{0, 2});
}

TEST_CASE("filter_episode matches the running-max oracle on 1000 sequences") {
    SplitMix64 rng(2024);
    for (int n = 0; n < 1000; ++n) {
        const auto len = 1 + rng.below(60);
        std::vector<double> r(len);
        // Small integer grid so ties are common.
        for (auto& v : r) v = static_cast<double>(rng.below(12)) / 10.0;
        const auto ep = make_episode(r, static_cast<std::uint64_t>(n), Terminal::timeout, 2, 2);
        const auto kept = filter_episode(ep);
        REQUIRE(kept == ref::running_max_keep(r));

        const auto f = filtered(ep);
        for (std::size_t i = 1; i < f.steps.size(); ++i) CHECK(f.steps[i].reward > f.steps[i - 1].reward);
        CHECK(filter_episode(f).size() == f.steps.size());
    }
}

TEST_CASE("filter_dataset report and off-track drop") {
    TempDir in, out;
    const std::vector<std::vector<double>> rewards = {{0.1, 0.2, 0.3, 0.4}, {0.1, 0.3, 0.2, 0.4, 0.35}, {0.0, 0.1, 0.2}};
    std::vector<Episode> eps;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        eps.push_back(make_episode(rewards[i], 10 + i, i == 2 ? Terminal::off_track : Terminal::lap_complete));
        write_episode(eps.back(), in / ("e" + std::to_string(i) + ".ep"));
    }
    const auto ds = build_index(in.path());
    REQUIRE(ds.entries.size() == 3);

    const auto result = filter_dataset(ds, out.path());
    const auto& rep = result.report;
    REQUIRE(rep.episodes.size() == 3);
    CHECK(rep.episodes[0].kept == 4);
    CHECK(rep.episodes[1].kept == 3);
    CHECK(rep.episodes[2].kept == 0);
    CHECK(rep.episodes[2].dropped_off_track);

    ActionCounts expect_kept{}, expect_dropped{};
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const auto oracle = ref::running_max_keep(rewards[i]);
        for (std::size_t t = 0; t < eps[i].steps.size(); ++t) {
            const bool kept = i != 2 && std::find(oracle.begin(), oracle.end(), t) != oracle.end();
            ++(kept ? expect_kept : expect_dropped)[static_cast<std::size_t>(index_of(eps[i].steps[t].action))];
        }
    }
    CHECK(rep.kept_per_action == expect_kept);
    CHECK(rep.dropped_per_action == expect_dropped);
    CHECK(rep.kept() == 7);
    CHECK(rep.dropped() == 5);

    const auto reopened = open_dataset(out.path());
    CHECK(reopened.entries.size() == 2);
    CHECK(reopened.total_steps() == 7);

    SUBCASE("monotone episode passes unchanged") {
        TempDir one, one_out;
        write_episode(eps[0], one / "a.ep");
        const auto r = filter_dataset(build_index(one.path()), one_out.path());
        CHECK(r.report.dropped() == 0);
        CHECK(read_episode(one_out / "a.ep") == eps[0]);
    }
}

TEST_CASE("dataset index and class balance") {
    TempDir dir;
    ActionCounts scan{};
    for (int i = 0; i < 4; ++i) {
        const auto ep = make_episode(std::vector<double>(25, 0.0), 100 + i);
        for (const auto& s : ep.steps) ++scan[static_cast<std::size_t>(index_of(s.action))];
        write_episode(ep, dir / ("z" + std::to_string(3 - i) + ".ep"));
    }
    const auto ds = build_index(dir.path());
    CHECK(ds.counts() == scan);
    CHECK(ds.total_steps() == 100);
    CHECK(std::is_sorted(ds.entries.begin(), ds.entries.end(),
                         [](const auto& a, const auto& b) { return a.file < b.file; }));
    CHECK(class_balance(ds).counts == scan);
    CHECK(open_dataset(dir.path()).counts() == scan);

    CHECK(class_balance(ActionCounts{7, 7, 7, 7, 7}).weights == std::array<double, 5>{1, 1, 1, 1, 1});
    const auto single = class_balance(ActionCounts{0, 0, 40, 0, 0});
    CHECK(single.weights == std::array<double, 5>{0, 0, 0.2, 0, 0});

    TempDir empty;
    CHECK_THROWS_AS(open_dataset(empty / "nope"), std::runtime_error);
}
