#include <cmath>
#include <numbers>

#include "racer/simworld.hpp"

namespace racer::sim {

double normalize_angle(double a) {
    a = std::fmod(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
    if (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
    return a;
}

VehicleState start_state(const Track& track, double s, double lateral, double heading_offset) {
    const Vec2 p = track.point_at(s);
    const Vec2 t = track.tangent_at(s);
    VehicleState st;
    st.x = p.x - lateral * t.y;
    st.y = p.y + lateral * t.x;
    st.heading = normalize_angle(std::atan2(t.y, t.x) + heading_offset);
    st.arc_progress = track.project_windowed({st.x, st.y}, s).arc;
    // A start just behind the line counts as the previous lap.
    st.lap_count = st.arc_progress > track.length() / 2 && s < track.length() / 2 ? -1 : 0;
    return st;
}

VehicleState step_vehicle(const VehicleState& state, Action action, const Track& track, const VehicleParams& params) {
    const double delta = steering_deg(action) * std::numbers::pi / 180.0;
    VehicleState next = state;
    next.x += params.speed * std::cos(state.heading) * params.dt;
    next.y += params.speed * std::sin(state.heading) * params.dt;
    next.heading = normalize_angle(state.heading + params.speed / params.wheelbase * std::tan(delta) * params.dt);

    next.arc_progress = track.project_windowed({next.x, next.y}, state.arc_progress, params.projection_window).arc;
    const double moved = next.arc_progress - state.arc_progress;
    if (moved < -track.length() / 2) ++next.lap_count;
    if (moved > track.length() / 2) --next.lap_count;
    return next;
}

double reward(const VehicleState& state, const Track& track) {
    return std::max(0.0, state.lap_count + state.arc_progress / track.length());
}

bool off_track(const VehicleState& state, const Track& track) {
    return track.distance({state.x, state.y}) > track.width() / 2;
}

Action nearest_action(double steering) {
    int best = 0;
    for (int i = 1; i < kActionCount; ++i) {
        const double d = std::abs(steering - kSteeringDeg[static_cast<std::size_t>(i)]);
        const double db = std::abs(steering - kSteeringDeg[static_cast<std::size_t>(best)]);
        if (d < db || (d == db && std::abs(kSteeringDeg[static_cast<std::size_t>(i)]) <
                                      std::abs(kSteeringDeg[static_cast<std::size_t>(best)])))
            best = i;
    }
    return static_cast<Action>(best);
}

Action oracle_policy(const VehicleState& state, const Track& track, const VehicleParams& vehicle,
                     const OracleParams& oracle) {
    const Vec2 target = track.point_at(state.arc_progress + oracle.lookahead);
    const double alpha = normalize_angle(std::atan2(target.y - state.y, target.x - state.x) - state.heading);
    const double steer = std::atan2(2.0 * vehicle.wheelbase * std::sin(alpha), oracle.lookahead);
    return nearest_action(steer * 180.0 / std::numbers::pi);
}

Action corrupt_action(Action action, double p, SplitMix64& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("corruption probability must lie in [0, 1]");
    // Both draws are always taken so the stream position does not depend on p.
    const bool replace = rng.uniform() < p;
    const int k = static_cast<int>(rng.below(kActionCount - 1));
    if (!replace) return action;
    return static_cast<Action>(k < index_of(action) ? k : k + 1);
}

}  // namespace racer::sim
