#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "racer/data.hpp"
#include "racer/episode.hpp"
#include "racer/imaging.hpp"
#include "racer/mixer.hpp"

namespace racer::trainer {

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 64;
    int epochs = 10;
    std::uint64_t seed = 0;
    bool shuffle = true;
    double val_fraction = 0.1;

    void validate() const;
};

struct TrainingMeta {
    std::uint64_t seed = 0;
    int epochs_run = 0;
    double learning_rate = 0.0;
    int batch_size = 0;
    double final_train_loss = 0.0;
    double final_val_loss = 0.0;
    double final_val_accuracy = 0.0;

    bool operator==(const TrainingMeta&) const = default;
};

struct Checkpoint {
    mixer::MixerConfig mixer;
    imaging::PipelineParams pipeline;
    TrainingMeta meta;
    mixer::Params<float> params;
};

inline constexpr std::array<char, 4> kCheckpointMagic = {'R', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: magic "RCKP", u32 LE version, u32 LE header length, canonical JSON header,
/// then every parameter as a little-endian float32 in checkpoint order.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// -log(probs[target]) evaluated as log-sum-exp(logits) - logits[target].
double cross_entropy(const mixer::ActionScores& scores, int target);

/// p <- p - lr * g. Throws NumericFailure before touching params if any gradient is NaN/Inf.
void sgd_step(mixer::Params<float>& params, const mixer::Params<float>& grads, double lr);

/// One preprocessed training example.
struct Sample {
    std::vector<float> input;
    int action = 0;
    std::size_t episode = 0;
};

std::vector<Sample> make_samples(std::span<const Episode> episodes, const imaging::PipelineParams& pipeline);

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;

    std::string to_text() const;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochMetrics> history;
    std::vector<std::size_t> val_episodes;
};

/// Episodes chosen for validation: round(val_fraction * n), at least one when n >= 2 and
/// val_fraction > 0, picked by a seeded shuffle of episode indices.
std::vector<std::size_t> split_validation(std::size_t episodes, double val_fraction, std::uint64_t seed);

/// Mini-batch SGD on the mean cross-entropy. Writes one line per epoch to `log` when given.
TrainResult train(std::span<const Episode> episodes, const imaging::PipelineParams& pipeline,
                  const mixer::MixerConfig& mixer_config, const TrainConfig& config, std::ostream* log = nullptr);

TrainResult train(const data::Dataset& dataset, const mixer::MixerConfig& mixer_config, const TrainConfig& config,
                  std::ostream* log = nullptr);

struct Metrics {
    std::size_t count = 0;
    double accuracy = 0.0;
    double mean_loss = 0.0;
    std::array<std::array<std::size_t, kActionCount>, kActionCount> confusion{};  // [true][predicted]

    std::string to_text() const;
};

Metrics evaluate(const mixer::Params<float>& params, std::span<const Sample> samples);

/// Throws ConfigMismatch when the frames do not match the checkpoint's pipeline.
Metrics evaluate(const Checkpoint& ckpt, std::span<const Episode> episodes);

/// Also checks the dataset's declared pipeline against the checkpoint's.
Metrics evaluate(const Checkpoint& ckpt, const data::Dataset& dataset);

}  // namespace racer::trainer
