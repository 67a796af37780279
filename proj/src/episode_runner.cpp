#include "racer/simworld.hpp"

#include <numbers>

namespace racer::sim {

Policy oracle(const Track& track) {
    return {"oracle", [&track](const imaging::Frame&, const VehicleState& s) { return oracle_policy(s, track); }};
}

Simulator::Simulator(Track track, RenderStyle style, std::uint64_t seed, EpisodeOptions options)
    : track_(std::move(track)),
      style_(style),
      seed_(seed),
      options_(options),
      corruption_rng_(mix_seed(seed, 2)) {
    SplitMix64 start(mix_seed(seed, 1));
    const double lateral = start.uniform(-options_.max_start_offset, options_.max_start_offset);
    const double heading =
        start.uniform(-options_.max_start_heading_deg, options_.max_start_heading_deg) * std::numbers::pi / 180.0;
    state_ = start_state(track_, options_.start_arc, lateral, heading);
}

imaging::Frame Simulator::render() const {
    return render_camera(state_, track_, options_.camera, style_, mix_seed(seed_, 3));
}

double Simulator::step(Action executed) {
    state_ = step_vehicle(state_, executed, track_, options_.vehicle);
    return current_reward();
}

std::optional<Terminal> Simulator::terminal() const {
    if (state_.lap_count >= 1) return Terminal::lap_complete;
    if (off_track(state_, track_)) return Terminal::off_track;
    return std::nullopt;
}

Episode run_episode(const Policy& policy, const Track& track, RenderStyle style, double corruption_p, int max_steps,
                    std::uint64_t seed, const EpisodeOptions& options) {
    Simulator sim(track, style, seed, options);
    Episode ep;
    ep.header = {track.name(), style, options.camera.width, options.camera.height, options.vehicle.dt, policy.label, seed};
    ep.terminal = Terminal::timeout;
    for (int t = 0; t < max_steps; ++t) {
        Step step;
        step.t = t;
        step.frame = sim.render();
        step.state = sim.state();
        step.action = policy.act(step.frame, sim.state());
        const Action executed = corrupt_action(step.action, corruption_p, sim.corruption_rng());
        step.reward = sim.step(executed);
        ep.steps.push_back(std::move(step));
        if (const auto term = sim.terminal()) {
            ep.terminal = *term;
            break;
        }
    }
    return ep;
}

}  // namespace racer::sim
