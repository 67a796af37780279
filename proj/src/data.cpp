#include "racer/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "racer/base64.hpp"
#include "racer/errors.hpp"

namespace racer::data {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json state_json(const VehicleState& s) {
    return json{{"x", s.x}, {"y", s.y}, {"heading", s.heading}, {"arc_progress", s.arc_progress},
                {"lap_count", s.lap_count}};
}

VehicleState parse_state(const json& j) {
    VehicleState s;
    j.at("x").get_to(s.x);
    j.at("y").get_to(s.y);
    j.at("heading").get_to(s.heading);
    j.at("arc_progress").get_to(s.arc_progress);
    j.at("lap_count").get_to(s.lap_count);
    return s;
}

}  // namespace

void write_episode(const Episode& episode, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const auto& h = episode.header;
    out << json{{"type", "header"},
                {"track", h.track},
                {"style", style_name(h.style)},
                {"width", h.width},
                {"height", h.height},
                {"dt", h.dt},
                {"policy", h.policy},
                {"seed", h.seed}}
               .dump()
        << '\n';
    for (const auto& s : episode.steps) {
        json j{{"type", "step"},
               {"t", s.t},
               {"action", index_of(s.action)},
               {"reward", s.reward},
               {"frame", base64_encode(s.frame.pixels)}};
        if (s.state) j["state"] = state_json(*s.state);
        out << j.dump() << '\n';
    }
    out << json{{"type", "terminal"}, {"terminal", terminal_name(episode.terminal)}}.dump() << '\n';
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

Episode read_episode(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    Episode ep;
    bool have_header = false;
    bool terminated = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (terminated) throw ParseError(lineno, path.string() + ": record after terminal");
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(lineno, path.string() + ": " + e.what());
        }
        try {
            const auto type = j.at("type").get<std::string>();
            if (!have_header) {
                if (type != "header") throw ParseError(lineno, path.string() + ": expected header record");
                auto& h = ep.header;
                j.at("track").get_to(h.track);
                h.style = parse_style(j.at("style").get<std::string>());
                j.at("width").get_to(h.width);
                j.at("height").get_to(h.height);
                j.at("dt").get_to(h.dt);
                j.at("policy").get_to(h.policy);
                j.at("seed").get_to(h.seed);
                if (h.width <= 0 || h.height <= 0) throw ParseError(lineno, "non-positive frame size in header");
                have_header = true;
            } else if (type == "step") {
                Step s;
                j.at("t").get_to(s.t);
                s.action = action_from_index(j.at("action").get<int>());
                j.at("reward").get_to(s.reward);
                if (!std::isfinite(s.reward)) throw ParseError(lineno, "non-finite reward");
                if (!ep.steps.empty() && s.t <= ep.steps.back().t)
                    throw ParseError(lineno, "step index not strictly increasing");
                auto pixels = base64_decode(j.at("frame").get<std::string>());
                const auto expected = static_cast<std::size_t>(ep.header.width) * ep.header.height;
                if (pixels.size() != expected)
                    throw FormatError(path.string() + ": step t=" + std::to_string(s.t) + " (line " +
                                      std::to_string(lineno) + ") has " + std::to_string(pixels.size()) +
                                      " frame bytes, header declares " + std::to_string(expected));
                s.frame = imaging::Frame(ep.header.width, ep.header.height, std::move(pixels));
                if (j.contains("state")) s.state = parse_state(j.at("state"));
                ep.steps.push_back(std::move(s));
            } else if (type == "terminal") {
                ep.terminal = parse_terminal(j.at("terminal").get<std::string>());
                terminated = true;
            } else {
                throw ParseError(lineno, "unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw ParseError(lineno, path.string() + ": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw ParseError(lineno, path.string() + ": " + e.what());
        }
    }
    if (!have_header) throw ParseError(lineno, path.string() + ": empty episode file");
    if (!terminated) throw ParseError(lineno, path.string() + ": unterminated episode");
    if (ep.steps.empty()) throw FormatError(path.string() + ": episode has no steps");
    return ep;
}

std::vector<std::size_t> filter_episode(const Episode& episode) {
    std::vector<std::size_t> kept;
    if (episode.steps.empty()) return kept;
    kept.push_back(0);
    double best = episode.steps[0].reward;
    for (std::size_t i = 1; i < episode.steps.size(); ++i) {
        if (episode.steps[i].reward > best) {
            kept.push_back(i);
            best = episode.steps[i].reward;
        }
    }
    return kept;
}

Episode filtered(const Episode& episode) {
    Episode out;
    out.header = episode.header;
    out.terminal = episode.terminal;
    for (auto i : filter_episode(episode)) out.steps.push_back(episode.steps[i]);
    return out;
}

ActionCounts Dataset::counts() const {
    ActionCounts c{};
    for (const auto& e : entries)
        for (std::size_t a = 0; a < c.size(); ++a) c[a] += e.counts[a];
    return c;
}

std::size_t Dataset::total_steps() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.steps;
    return n;
}

namespace {

ActionCounts count_actions(const Episode& ep) {
    ActionCounts c{};
    for (const auto& s : ep.steps) ++c[static_cast<std::size_t>(index_of(s.action))];
    return c;
}

void write_index(const Dataset& ds) {
    const auto path = ds.dir / kIndexFile;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    json header{{"type", "dataset"}, {"version", 1}};
    header["pipeline"] = ds.pipeline ? json(*ds.pipeline) : json(nullptr);
    out << header.dump() << '\n';
    for (const auto& e : ds.entries)
        out << json{{"file", e.file}, {"steps", e.steps}, {"counts", e.counts}}.dump() << '\n';
}

}  // namespace

Dataset build_index(const fs::path& dir, std::optional<imaging::PipelineParams> pipeline) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ep") files.push_back(e.path().filename().string());
    std::sort(files.begin(), files.end());
    Dataset ds{dir, pipeline, {}};
    for (const auto& f : files) {
        const auto ep = read_episode(dir / f);
        ds.entries.push_back({f, ep.steps.size(), count_actions(ep)});
    }
    write_index(ds);
    return ds;
}

Dataset open_dataset(const fs::path& dir) {
    const auto path = dir / kIndexFile;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset index " + path.string());
    Dataset ds;
    ds.dir = dir;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            if (lineno == 1) {
                if (j.at("type").get<std::string>() != "dataset") throw ParseError(lineno, "not a dataset index");
                if (!j.at("pipeline").is_null()) ds.pipeline = j.at("pipeline").get<imaging::PipelineParams>();
                continue;
            }
            DatasetEntry e;
            j.at("file").get_to(e.file);
            j.at("steps").get_to(e.steps);
            j.at("counts").get_to(e.counts);
            ds.entries.push_back(std::move(e));
        } catch (const json::exception& e) {
            throw ParseError(lineno, path.string() + ": " + e.what());
        }
    }
    return ds;
}

std::vector<Episode> load_episodes(const Dataset& dataset) {
    std::vector<Episode> out;
    out.reserve(dataset.entries.size());
    for (const auto& e : dataset.entries) out.push_back(read_episode(dataset.path_of(e)));
    return out;
}

std::size_t FilterReport::kept() const {
    std::size_t n = 0;
    for (auto c : kept_per_action) n += c;
    return n;
}

std::size_t FilterReport::dropped() const {
    std::size_t n = 0;
    for (auto c : dropped_per_action) n += c;
    return n;
}

std::string FilterReport::to_text() const {
    std::ostringstream os;
    for (const auto& e : episodes) {
        os << e.file << " total=" << e.total << " kept=" << e.kept << " dropped=" << (e.total - e.kept);
        if (e.dropped_off_track) os << " (off-track episode)";
        os << '\n';
    }
    os << "per-action kept:";
    for (auto c : kept_per_action) os << ' ' << c;
    os << "\nper-action dropped:";
    for (auto c : dropped_per_action) os << ' ' << c;
    os << "\ntotal kept=" << kept() << " dropped=" << dropped() << '\n';
    return os.str();
}

FilterResult filter_dataset(const Dataset& dataset, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    FilterResult result;
    result.dataset.dir = out_dir;
    result.dataset.pipeline = dataset.pipeline;
    for (const auto& entry : dataset.entries) {
        const auto ep = read_episode(dataset.path_of(entry));
        EpisodeReport rep{entry.file, ep.steps.size(), 0, ep.terminal == Terminal::off_track};
        std::vector<bool> keep(ep.steps.size(), false);
        if (!rep.dropped_off_track)
            for (auto i : filter_episode(ep)) keep[i] = true;
        Episode out{ep.header, {}, ep.terminal};
        for (std::size_t i = 0; i < ep.steps.size(); ++i) {
            const auto a = static_cast<std::size_t>(index_of(ep.steps[i].action));
            if (keep[i]) {
                ++result.report.kept_per_action[a];
                out.steps.push_back(ep.steps[i]);
            } else {
                ++result.report.dropped_per_action[a];
            }
        }
        rep.kept = out.steps.size();
        if (!out.steps.empty()) {
            write_episode(out, out_dir / entry.file);
            result.dataset.entries.push_back({entry.file, out.steps.size(), count_actions(out)});
        }
        result.report.episodes.push_back(rep);
    }
    write_index(result.dataset);
    return result;
}

ClassBalance class_balance(const ActionCounts& counts) {
    ClassBalance b;
    b.counts = counts;
    std::size_t total = 0;
    for (auto c : counts) total += c;
    for (std::size_t i = 0; i < counts.size(); ++i)
        b.weights[i] = counts[i] == 0 ? 0.0 : static_cast<double>(total) / (kActionCount * static_cast<double>(counts[i]));
    return b;
}

ClassBalance class_balance(const Dataset& dataset) {
    ActionCounts c{};
    for (const auto& ep : load_episodes(dataset)) {
        const auto ec = count_actions(ep);
        for (std::size_t a = 0; a < c.size(); ++a) c[a] += ec[a];
    }
    return class_balance(c);
}

}  // namespace racer::data
