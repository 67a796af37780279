#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "racer/imaging.hpp"

namespace racer {

/// Discrete steering commands. Speed is constant and not part of the action.
enum class Action : int { left_high = 0, left_med = 1, front = 2, right_med = 3, right_high = 4 };

inline constexpr int kActionCount = 5;
inline constexpr std::array<Action, kActionCount> kAllActions = {Action::left_high, Action::left_med, Action::front,
                                                                 Action::right_med, Action::right_high};

/// Steering angle in degrees; positive turns left.
inline constexpr std::array<double, kActionCount> kSteeringDeg = {30.0, 15.0, 0.0, -15.0, -30.0};

inline int index_of(Action a) { return static_cast<int>(a); }

/// Throws std::invalid_argument when index is outside [0, 5).
Action action_from_index(int index);

std::string_view action_name(Action a);

double steering_deg(Action a);

enum class RenderStyle { sim, real };

std::string_view style_name(RenderStyle s);
RenderStyle parse_style(std::string_view name);

struct VehicleState {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;       // radians, (-pi, pi]
    double arc_progress = 0.0;  // meters along the centerline, [0, track length)
    int lap_count = 0;

    bool operator==(const VehicleState&) const = default;
};

enum class Terminal { lap_complete, off_track, timeout };

std::string_view terminal_name(Terminal t);
Terminal parse_terminal(std::string_view name);

struct EpisodeHeader {
    std::string track;
    RenderStyle style = RenderStyle::sim;
    int width = 160;
    int height = 120;
    double dt = 1.0 / 15.0;
    std::string policy;
    std::uint64_t seed = 0;

    bool operator==(const EpisodeHeader&) const = default;
};

/// One observation/action/reward record. `reward` is the reward after the action was applied.
struct Step {
    int t = 0;
    Action action = Action::front;
    double reward = 0.0;
    imaging::Frame frame;
    std::optional<VehicleState> state;

    bool operator==(const Step&) const = default;
};

struct Episode {
    EpisodeHeader header;
    std::vector<Step> steps;
    Terminal terminal = Terminal::timeout;

    bool operator==(const Episode&) const = default;
};

}  // namespace racer
