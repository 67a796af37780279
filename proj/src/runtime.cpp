#include "racer/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "racer/errors.hpp"

namespace racer::runtime {

namespace {

using clock = std::chrono::steady_clock;

double micros(clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double, std::micro>(b - a).count();
}

}  // namespace

Prediction predict(const trainer::Checkpoint& ckpt, const imaging::Frame& frame) {
    const auto& p = ckpt.pipeline;
    if (frame.width != p.frame_width || frame.height != p.frame_height)
        throw ConfigMismatch("frame is " + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                             ", model expects " + std::to_string(p.frame_width) + "x" + std::to_string(p.frame_height));
    thread_local mixer::Tape<float> tape;

    Prediction out;
    const auto t0 = clock::now();
    const auto input = imaging::prepare_input(frame, p);
    const auto t1 = clock::now();
    const auto logits = mixer::forward(ckpt.params, std::span<const float>(input), tape);
    out.scores = mixer::score_actions(logits);
    out.action = action_from_index(out.scores.argmax());
    const auto t2 = clock::now();
    out.preprocess_us = micros(t0, t1);
    out.forward_us = micros(t1, t2);
    return out;
}

Percentiles percentiles(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("percentiles of an empty sample");
    std::sort(values.begin(), values.end());
    const auto rank = [&](double q) {
        auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
        return values[std::clamp<std::size_t>(k, 1, values.size()) - 1];
    };
    return {values.front(), rank(0.5), rank(0.95), values.back()};
}

std::string LatencyReport::to_text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1);
    const auto row = [&](const char* name, const Percentiles& p) {
        os << std::left << std::setw(11) << name << std::right << " min=" << p.min << "us median=" << p.median
           << "us p95=" << p.p95 << "us max=" << p.max << "us\n";
    };
    os << "iterations=" << iterations << " warmup=" << warmup << '\n';
    row("total", total);
    row("preprocess", preprocess);
    row("forward", forward);
    os << std::setprecision(3) << "median total " << total.median / 1000.0
       << " ms (reference figure: 2-3 ms on a modern CPU)\n";
    return os.str();
}

LatencyReport bench(const trainer::Checkpoint& ckpt, const imaging::Frame& frame, int iterations) {
    if (iterations < 10) throw std::invalid_argument("bench needs at least 10 iterations");
    for (int i = 0; i < kBenchWarmup; ++i) predict(ckpt, frame);

    std::vector<double> total, pre, fwd;
    total.reserve(static_cast<std::size_t>(iterations));
    pre.reserve(total.capacity());
    fwd.reserve(total.capacity());
    for (int i = 0; i < iterations; ++i) {
        const auto t0 = clock::now();
        const auto p = predict(ckpt, frame);
        const auto t1 = clock::now();
        total.push_back(micros(t0, t1));
        pre.push_back(p.preprocess_us);
        fwd.push_back(p.forward_us);
    }
    LatencyReport r;
    r.iterations = iterations;
    r.warmup = kBenchWarmup;
    r.total = percentiles(std::move(total));
    r.preprocess = percentiles(std::move(pre));
    r.forward = percentiles(std::move(fwd));
    return r;
}

sim::Policy model_policy(const trainer::Checkpoint& ckpt, std::string label) {
    return {std::move(label), [&ckpt](const imaging::Frame& frame, const VehicleState&) {
                return predict(ckpt, frame).action;
            }};
}

std::string TrialStats::to_text() const {
    std::ostringstream os;
    os << std::setprecision(4) << "completed=" << completed << "/" << trials << " completion_rate=" << completion_rate()
       << " off_track=" << off_track << " mean_lap_time=" << mean_lap_time << "s";
    return os.str();
}

TrialStats run_trials(const sim::Policy& policy, const sim::Track& track, RenderStyle style, double corruption_p,
                      int trials, std::uint64_t seed, int max_steps) {
    if (trials < 1) throw std::invalid_argument("trials must be >= 1");
    TrialStats stats;
    stats.trials = trials;
    double lap_sum = 0.0;
    for (int i = 0; i < trials; ++i) {
        const auto ep = sim::run_episode(policy, track, style, corruption_p, max_steps,
                                         mix_seed(seed, static_cast<std::uint64_t>(i)));
        if (ep.terminal == Terminal::lap_complete) {
            ++stats.completed;
            lap_sum += sim::lap_time(ep);
        } else if (ep.terminal == Terminal::off_track) {
            ++stats.off_track;
        }
    }
    if (stats.completed) stats.mean_lap_time = lap_sum / stats.completed;
    return stats;
}

}  // namespace racer::runtime
