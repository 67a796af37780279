#include "racer/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "racer/errors.hpp"
#include "racer/rng.hpp"

namespace racer::trainer {

using nlohmann::json;
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("val_fraction must lie in [0, 1)");
}

namespace {

json meta_json(const TrainingMeta& m) {
    return json{{"seed", m.seed},
                {"epochs_run", m.epochs_run},
                {"learning_rate", m.learning_rate},
                {"batch_size", m.batch_size},
                {"final_train_loss", m.final_train_loss},
                {"final_val_loss", m.final_val_loss},
                {"final_val_accuracy", m.final_val_accuracy}};
}

TrainingMeta parse_meta(const json& j) {
    TrainingMeta m;
    j.at("seed").get_to(m.seed);
    j.at("epochs_run").get_to(m.epochs_run);
    j.at("learning_rate").get_to(m.learning_rate);
    j.at("batch_size").get_to(m.batch_size);
    j.at("final_train_loss").get_to(m.final_train_loss);
    j.at("final_val_loss").get_to(m.final_val_loss);
    j.at("final_val_accuracy").get_to(m.final_val_accuracy);
    return m;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + static_cast<std::size_t>(i)]) << (8 * i);
    return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    const std::string header =
        json{{"format", "racer-mixer"}, {"mixer", ckpt.mixer}, {"pipeline", ckpt.pipeline}, {"meta", meta_json(ckpt.meta)}}
            .dump();
    std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    const auto payload = ckpt.params.values.size() * sizeof(float);
    const auto at = out.size();
    out.resize(at + payload);
    std::memcpy(out.data() + at, ckpt.params.values.data(), payload);
    return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12) throw CorruptionError("checkpoint truncated before header");
    if (!std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin()))
        throw FormatError("bad checkpoint magic");
    const auto version = get_u32(bytes, 4);
    if (version != kCheckpointVersion)
        throw UnsupportedVersion("unsupported checkpoint version " + std::to_string(version));
    const auto header_len = get_u32(bytes, 8);
    if (bytes.size() < 12 + static_cast<std::size_t>(header_len)) throw CorruptionError("checkpoint header truncated");
    Checkpoint ckpt;
    try {
        const auto j = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
        if (j.at("format").get<std::string>() != "racer-mixer") throw FormatError("unknown checkpoint format");
        ckpt.mixer = j.at("mixer").get<mixer::MixerConfig>();
        ckpt.pipeline = j.at("pipeline").get<imaging::PipelineParams>();
        ckpt.meta = parse_meta(j.at("meta"));
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad checkpoint header: ") + e.what());
    }
    ckpt.params = mixer::Params<float>(ckpt.mixer);
    const auto payload = bytes.size() - 12 - header_len;
    const auto expected = ckpt.params.values.size() * sizeof(float);
    if (payload != expected)
        throw CorruptionError("checkpoint payload is " + std::to_string(payload) + " bytes, expected " +
                              std::to_string(expected));
    std::memcpy(ckpt.params.values.data(), bytes.data() + 12 + header_len, expected);
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

double cross_entropy(const mixer::ActionScores& scores, int target) {
    if (target < 0 || target >= kActionCount) throw std::invalid_argument("target action out of range");
    mixer::Vector<double> logits(kActionCount);
    for (int i = 0; i < kActionCount; ++i) logits[i] = scores.logits[static_cast<std::size_t>(i)];
    return mixer::cross_entropy_from_logits(logits, target);
}

void sgd_step(mixer::Params<float>& params, const mixer::Params<float>& grads, double lr) {
    if (grads.values.size() != params.values.size()) throw std::invalid_argument("gradient shape mismatch");
    for (float g : grads.values)
        if (!std::isfinite(g)) throw NumericFailure("non-finite gradient");
    const auto step = static_cast<float>(lr);
    for (std::size_t i = 0; i < params.values.size(); ++i) params.values[i] -= step * grads.values[i];
}

std::vector<Sample> make_samples(std::span<const Episode> episodes, const imaging::PipelineParams& pipeline) {
    std::vector<Sample> out;
    for (std::size_t e = 0; e < episodes.size(); ++e) {
        const auto& h = episodes[e].header;
        if (h.width != pipeline.frame_width || h.height != pipeline.frame_height)
            throw ConfigMismatch("episode frames are " + std::to_string(h.width) + "x" + std::to_string(h.height) +
                                 ", pipeline expects " + std::to_string(pipeline.frame_width) + "x" +
                                 std::to_string(pipeline.frame_height));
        for (const auto& s : episodes[e].steps)
            out.push_back({imaging::prepare_input(s.frame, pipeline), index_of(s.action), e});
    }
    return out;
}

std::string EpochMetrics::to_text() const {
    std::ostringstream os;
    os << std::setprecision(6) << "epoch " << epoch << " train_loss=" << train_loss << " val_loss=" << val_loss
       << " val_acc=" << val_accuracy;
    return os.str();
}

std::vector<std::size_t> split_validation(std::size_t episodes, double val_fraction, std::uint64_t seed) {
    if (episodes < 2 || val_fraction <= 0.0) return {};
    auto n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(episodes)));
    n_val = std::clamp<std::size_t>(n_val, 1, episodes - 1);
    std::vector<std::size_t> idx(episodes);
    for (std::size_t i = 0; i < episodes; ++i) idx[i] = i;
    SplitMix64 rng(mix_seed(seed, 0x5917));
    shuffle(std::span<std::size_t>(idx), rng);
    idx.resize(n_val);
    std::sort(idx.begin(), idx.end());
    return idx;
}

Metrics evaluate(const mixer::Params<float>& params, std::span<const Sample> samples) {
    Metrics m;
    mixer::Tape<float> tape;
    double loss = 0.0;
    std::size_t correct = 0;
    for (const auto& s : samples) {
        const auto logits = mixer::forward(params, std::span<const float>(s.input), tape);
        const auto scores = mixer::score_actions(logits);
        const int pred = scores.argmax();
        loss += cross_entropy(scores, s.action);
        correct += pred == s.action;
        ++m.confusion[static_cast<std::size_t>(s.action)][static_cast<std::size_t>(pred)];
    }
    m.count = samples.size();
    if (m.count > 0) {
        m.accuracy = static_cast<double>(correct) / static_cast<double>(m.count);
        m.mean_loss = loss / static_cast<double>(m.count);
    }
    return m;
}

std::string Metrics::to_text() const {
    std::ostringstream os;
    os << std::setprecision(6) << "samples=" << count << " accuracy=" << accuracy << " mean_loss=" << mean_loss << '\n';
    os << "confusion (rows=true, cols=predicted):\n";
    for (const auto& row : confusion) {
        for (std::size_t j = 0; j < row.size(); ++j) os << (j ? " " : "") << std::setw(6) << row[j];
        os << '\n';
    }
    return os.str();
}

TrainResult train(std::span<const Episode> episodes, const imaging::PipelineParams& pipeline,
                  const mixer::MixerConfig& mixer_config, const TrainConfig& config, std::ostream* log) {
    config.validate();
    mixer_config.validate();
    if (episodes.empty()) throw std::invalid_argument("training dataset is empty");

    const auto samples = make_samples(episodes, pipeline);
    if (samples.empty()) throw std::invalid_argument("training dataset has no steps");

    TrainResult result;
    result.val_episodes = split_validation(episodes.size(), config.val_fraction, config.seed);
    std::vector<bool> is_val(episodes.size(), false);
    for (auto e : result.val_episodes) is_val[e] = true;
    std::vector<std::size_t> train_idx;
    std::vector<Sample> val_samples;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (is_val[samples[i].episode])
            val_samples.push_back(samples[i]);
        else
            train_idx.push_back(i);
    }

    auto& ckpt = result.checkpoint;
    ckpt.mixer = mixer_config;
    ckpt.pipeline = pipeline;
    ckpt.params = mixer::init_params<float>(mixer_config, config.seed);
    ckpt.meta.seed = config.seed;
    ckpt.meta.learning_rate = config.learning_rate;
    ckpt.meta.batch_size = config.batch_size;

    mixer::Params<float> grads(mixer_config);
    mixer::Tape<float> tape;
    SplitMix64 order_rng(mix_seed(config.seed, 0x0BDE));
    const auto batch = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        if (config.shuffle) shuffle(std::span<std::size_t>(train_idx), order_rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0, b = 0; start < train_idx.size(); start += batch, ++b) {
            const std::size_t end = std::min(start + batch, train_idx.size());
            const auto where = "epoch " + std::to_string(epoch) + " batch " + std::to_string(b);
            grads.set_zero();
            double batch_loss = 0.0;
            try {
                for (std::size_t k = start; k < end; ++k) {
                    const auto& s = samples[train_idx[k]];
                    mixer::forward(ckpt.params, std::span<const float>(s.input), tape);
                    batch_loss += mixer::backward(ckpt.params, tape, s.action, grads);
                }
                if (!std::isfinite(batch_loss)) throw NumericFailure("non-finite loss");
                const float scale = 1.0f / static_cast<float>(end - start);
                for (float& g : grads.values) g *= scale;
                sgd_step(ckpt.params, grads, config.learning_rate);
            } catch (const NumericFailure& e) {
                throw NumericFailure(std::string(e.what()) + " at " + where);
            }
            epoch_loss += batch_loss;
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.train_loss = train_idx.empty() ? 0.0 : epoch_loss / static_cast<double>(train_idx.size());
        if (!val_samples.empty()) {
            const auto vm = evaluate(ckpt.params, val_samples);
            em.val_loss = vm.mean_loss;
            em.val_accuracy = vm.accuracy;
        }
        result.history.push_back(em);
        if (log) *log << em.to_text() << std::endl;

        ckpt.meta.epochs_run = epoch;
        ckpt.meta.final_train_loss = em.train_loss;
        ckpt.meta.final_val_loss = em.val_loss;
        ckpt.meta.final_val_accuracy = em.val_accuracy;
    }
    return result;
}

namespace {

imaging::PipelineParams dataset_pipeline(const data::Dataset& dataset, const std::vector<Episode>& episodes) {
    if (dataset.pipeline) return *dataset.pipeline;
    imaging::PipelineParams p;
    if (!episodes.empty()) {
        p.frame_width = episodes.front().header.width;
        p.frame_height = episodes.front().header.height;
    }
    return p;
}

}  // namespace

TrainResult train(const data::Dataset& dataset, const mixer::MixerConfig& mixer_config, const TrainConfig& config,
                  std::ostream* log) {
    const auto episodes = data::load_episodes(dataset);
    return train(std::span<const Episode>(episodes), dataset_pipeline(dataset, episodes), mixer_config, config, log);
}

Metrics evaluate(const Checkpoint& ckpt, std::span<const Episode> episodes) {
    const auto samples = make_samples(episodes, ckpt.pipeline);
    return evaluate(ckpt.params, samples);
}

Metrics evaluate(const Checkpoint& ckpt, const data::Dataset& dataset) {
    if (dataset.pipeline && !(*dataset.pipeline == ckpt.pipeline))
        throw ConfigMismatch("dataset pipeline differs from the checkpoint's pipeline");
    const auto episodes = data::load_episodes(dataset);
    return evaluate(ckpt, std::span<const Episode>(episodes));
}

}  // namespace racer::trainer
