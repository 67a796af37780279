#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "racer/episode.hpp"
#include "racer/imaging.hpp"

namespace racer::data {

using ActionCounts = std::array<std::size_t, kActionCount>;

/// Line-delimited JSON records: header, one line per step, terminal.
void write_episode(const Episode& episode, const std::filesystem::path& path);

/// Throws ParseError (with line number) on malformed records, FormatError on frame size mismatch.
Episode read_episode(const std::filesystem::path& path);

/// Reward-monotone filter: keeps step 0 and every step whose reward beats all previously kept rewards.
std::vector<std::size_t> filter_episode(const Episode& episode);

struct DatasetEntry {
    std::string file;
    std::size_t steps = 0;
    ActionCounts counts{};
};

/// A directory of `*.ep` files plus an `index` file listing them in canonical (sorted) order.
struct Dataset {
    std::filesystem::path dir;
    std::optional<imaging::PipelineParams> pipeline;
    std::vector<DatasetEntry> entries;

    ActionCounts counts() const;
    std::size_t total_steps() const;
    std::filesystem::path path_of(const DatasetEntry& e) const { return dir / e.file; }
};

inline constexpr const char* kIndexFile = "index";

/// Scans `dir` for episode files, writes the index, and returns the dataset.
Dataset build_index(const std::filesystem::path& dir, std::optional<imaging::PipelineParams> pipeline = {});

/// Reads an existing index. Throws std::runtime_error naming the path when it is missing.
Dataset open_dataset(const std::filesystem::path& dir);

std::vector<Episode> load_episodes(const Dataset& dataset);

struct EpisodeReport {
    std::string file;
    std::size_t total = 0;
    std::size_t kept = 0;
    bool dropped_off_track = false;
};

struct FilterReport {
    std::vector<EpisodeReport> episodes;
    ActionCounts kept_per_action{};
    ActionCounts dropped_per_action{};

    std::size_t kept() const;
    std::size_t dropped() const;
    std::string to_text() const;
};

struct FilterResult {
    Dataset dataset;
    FilterReport report;
};

/// Filters every episode into `out_dir`; off-track episodes are dropped wholesale.
FilterResult filter_dataset(const Dataset& dataset, const std::filesystem::path& out_dir);

/// Applies filter_episode in memory.
Episode filtered(const Episode& episode);

struct ClassBalance {
    ActionCounts counts{};
    std::array<double, kActionCount> weights{};
};

/// weights[i] = total / (5 * counts[i]), or 0 for an empty class. Counts come from a full scan.
ClassBalance class_balance(const Dataset& dataset);
ClassBalance class_balance(const ActionCounts& counts);

}  // namespace racer::data
