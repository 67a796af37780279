#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "racer/episode.hpp"
#include "racer/imaging.hpp"
#include "racer/mixer.hpp"
#include "racer/simworld.hpp"
#include "racer/trainer.hpp"

namespace racer::runtime {

struct Prediction {
    Action action = Action::front;
    mixer::ActionScores scores;
    double preprocess_us = 0.0;
    double forward_us = 0.0;
};

/// preprocess -> forward -> score_actions -> argmax (lowest index on ties).
/// Throws ConfigMismatch when the frame size differs from the checkpoint's pipeline.
Prediction predict(const trainer::Checkpoint& ckpt, const imaging::Frame& frame);

struct Percentiles {
    double min = 0.0;
    double median = 0.0;
    double p95 = 0.0;
    double max = 0.0;
};

/// Nearest-rank percentiles of an unsorted sample.
Percentiles percentiles(std::vector<double> values);

struct LatencyReport {
    int iterations = 0;
    int warmup = 0;
    Percentiles total;
    Percentiles preprocess;
    Percentiles forward;

    std::string to_text() const;
};

inline constexpr int kBenchWarmup = 3;

/// Times `iterations` predict calls after kBenchWarmup untimed ones. Requires iterations >= 10.
LatencyReport bench(const trainer::Checkpoint& ckpt, const imaging::Frame& frame, int iterations);

/// Closed-loop driver backed by a checkpoint. The checkpoint must outlive the policy.
sim::Policy model_policy(const trainer::Checkpoint& ckpt, std::string label = "model");

struct TrialStats {
    int trials = 0;
    int completed = 0;
    int off_track = 0;
    double mean_lap_time = 0.0;  // over completed laps, seconds

    double completion_rate() const { return trials ? static_cast<double>(completed) / trials : 0.0; }
    std::string to_text() const;
};

inline constexpr int kDefaultMaxSteps = 1500;

/// `trials` closed-loop episodes; trial i uses seed mix_seed(seed, i).
TrialStats run_trials(const sim::Policy& policy, const sim::Track& track, RenderStyle style, double corruption_p,
                      int trials, std::uint64_t seed, int max_steps = kDefaultMaxSteps);

}  // namespace racer::runtime
