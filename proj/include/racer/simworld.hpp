#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "racer/episode.hpp"
#include "racer/imaging.hpp"
#include "racer/rng.hpp"

namespace racer::sim {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

/// Nearest point on the centerline.
struct Projection {
    double arc = 0.0;       // in [0, length)
    double distance = 0.0;  // >= 0
    double offset = 0.0;    // signed, positive to the left of travel
    std::size_t segment = 0;
};

/// Closed piecewise-linear track with a spatial index for nearest-segment queries.
class Track {
public:
    static constexpr double kDefaultWidth = 0.76;
    static constexpr double kDefaultLineWidth = 0.05;

    /// Vertices are closed implicitly (last connects to first). Throws std::invalid_argument
    /// for fewer than 3 vertices, degenerate segments, or non-positive width.
    Track(std::string name, std::vector<Vec2> centerline, double width = kDefaultWidth,
          double border_line_width = kDefaultLineWidth);

    const std::string& name() const { return name_; }
    const std::vector<Vec2>& centerline() const { return vertices_; }
    double width() const { return width_; }
    double border_line_width() const { return line_width_; }
    double length() const { return length_; }
    std::size_t segment_count() const { return vertices_.size(); }

    /// Point and unit tangent at arc length s (wrapped).
    Vec2 point_at(double s) const;
    Vec2 tangent_at(double s) const;

    Projection project_segment(Vec2 p, std::size_t segment) const;

    /// Exhaustive search over every segment. The reference for the faster paths.
    Projection project_brute(Vec2 p) const;

    /// Searches only segments whose arc range meets [hint - window, hint + window].
    Projection project_windowed(Vec2 p, double arc_hint, double window = 0.5) const;

    /// Nearest point if it lies within the spatial index reach (0.5 m), else nullopt.
    std::optional<Projection> project_nearby(Vec2 p) const;

    /// Distance to the centerline; uses the spatial index and falls back to brute force.
    double distance(Vec2 p) const;

    /// True when no two non-adjacent segments intersect.
    bool is_simple() const;

    static constexpr double kIndexReach = 0.5;

private:
    std::string name_;
    std::vector<Vec2> vertices_;
    std::vector<double> cumulative_;  // arc length at each vertex, plus total
    double width_;
    double line_width_;
    double length_ = 0.0;

    // Uniform grid of candidate segment lists.
    double cell_ = 0.1;
    double min_x_ = 0.0, min_y_ = 0.0;
    int cols_ = 0, rows_ = 0;
    std::vector<std::vector<std::uint32_t>> cells_;
};

/// Built-in tracks: "oval", "serpentine", "hairpin". Throws std::invalid_argument otherwise.
Track make_track(const std::string& name);

/// Plain-text vertex list, one "x y" pair per line.
Track load_track_file(const std::filesystem::path& path, double width = Track::kDefaultWidth);

std::vector<std::string> builtin_tracks();

struct VehicleParams {
    double speed = 1.0;       // m/s, constant
    double wheelbase = 0.16;  // m
    double dt = 1.0 / 15.0;   // s
    double projection_window = 0.5;
};

double normalize_angle(double a);

/// Places the vehicle at arc `s` with a lateral offset (positive left) and heading offset.
VehicleState start_state(const Track& track, double s = 0.0, double lateral = 0.0, double heading_offset = 0.0);

/// Constant-speed kinematic bicycle step; updates arc progress and lap count.
VehicleState step_vehicle(const VehicleState& state, Action action, const Track& track,
                          const VehicleParams& params = {});

/// Cumulative lap-progress fraction, lap_count + arc/length, clamped at 0.
double reward(const VehicleState& state, const Track& track);

bool off_track(const VehicleState& state, const Track& track);

struct CameraModel {
    int width = 160;
    int height = 120;
    double hfov_deg = 120.0;
    double mount_height = 0.12;
    double pitch_deg = -15.0;
    /// Ground beyond this horizontal distance shows the backdrop, like the room walls around a mat track.
    double view_distance = 2.5;

    double focal_px() const;
    double vfov_deg() const;
};

/// World ground point seen through the center of pixel (u, v), or nullopt when the ray
/// does not reach the ground within the view distance.
std::optional<Vec2> pixel_to_ground(const VehicleState& state, const CameraModel& camera, double u, double v);

namespace shade {
inline constexpr double asphalt = 40.0;
inline constexpr double border = 230.0;
inline constexpr double center_line = 140.0;
inline constexpr double surround = 120.0;
inline constexpr double sky = 200.0;
inline constexpr double dash_length = 0.3;
}  // namespace shade

/// Ground intensity at a world point.
double ground_intensity(const Track& track, Vec2 p);

/// Pinhole ray cast to the ground plane. "real" style adds reflections, a brightness
/// gradient, sensor noise and lens blur, all derived from `episode_seed` and the pose.
imaging::Frame render_camera(const VehicleState& state, const Track& track, const CameraModel& camera,
                             RenderStyle style, std::uint64_t episode_seed);

/// Nearest of the five steering angles; exact midpoints go to the smaller magnitude.
Action nearest_action(double steering_deg);

struct OracleParams {
    double lookahead = 0.8;
};

/// Pure pursuit toward the centerline point `lookahead` meters ahead.
Action oracle_policy(const VehicleState& state, const Track& track, const VehicleParams& vehicle = {},
                     const OracleParams& oracle = {});

/// With probability p, replaces the action by a uniform draw over the other four.
Action corrupt_action(Action action, double p, SplitMix64& rng);

struct Policy {
    std::string label;
    std::function<Action(const imaging::Frame&, const VehicleState&)> act;
};

Policy oracle(const Track& track);

struct EpisodeOptions {
    CameraModel camera;
    VehicleParams vehicle;
    double start_arc = 0.0;
    double max_start_offset = 0.05;  // uniform lateral offset, meters
    double max_start_heading_deg = 0.0;
};

/// One simulator instance: the vehicle on a track, a camera, and the corruption stream.
class Simulator {
public:
    Simulator(Track track, RenderStyle style, std::uint64_t seed, EpisodeOptions options = {});

    const Track& track() const { return track_; }
    const VehicleState& state() const { return state_; }
    RenderStyle style() const { return style_; }
    std::uint64_t seed() const { return seed_; }
    const EpisodeOptions& options() const { return options_; }

    imaging::Frame render() const;

    /// Applies the executed action and returns the new reward.
    double step(Action executed);

    double current_reward() const { return reward(state_, track_); }
    std::optional<Terminal> terminal() const;

    SplitMix64& corruption_rng() { return corruption_rng_; }

private:
    Track track_;
    RenderStyle style_;
    std::uint64_t seed_;
    EpisodeOptions options_;
    VehicleState state_;
    SplitMix64 corruption_rng_;
};

/// Render -> policy -> corrupt -> step, until a lap completes, the car leaves the track,
/// or max_steps elapse. Steps record the policy's commanded action and the post-step reward.
Episode run_episode(const Policy& policy, const Track& track, RenderStyle style, double corruption_p, int max_steps,
                    std::uint64_t seed, const EpisodeOptions& options = {});

inline double lap_time(const Episode& ep) { return static_cast<double>(ep.steps.size()) * ep.header.dt; }

}  // namespace racer::sim
