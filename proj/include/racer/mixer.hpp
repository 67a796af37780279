#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "racer/imaging.hpp"

namespace racer::mixer {

inline constexpr int kNumActions = 5;

struct MixerConfig {
    int image_size = 64;
    int patch_size = 8;
    int channels_in = 1;
    int dim = 128;
    int depth = 6;
    int num_classes = kNumActions;
    int token_hidden = 64;
    int channel_hidden = 512;

    int grid() const { return image_size / patch_size; }
    int tokens() const { return grid() * grid(); }
    int patch_values() const { return patch_size * patch_size * channels_in; }
    int input_values() const { return image_size * image_size * channels_in; }

    /// Throws std::invalid_argument when a dimension is non-positive or patches do not tile the image.
    void validate() const;

    bool operator==(const MixerConfig&) const = default;
};

void to_json(nlohmann::json& j, const MixerConfig& c);
void from_json(const nlohmann::json& j, MixerConfig& c);

enum class TensorKind { weight, bias, gamma, beta };

/// One parameter tensor inside the flat parameter buffer. Matrices are row-major, out x in.
struct TensorInfo {
    std::string name;
    TensorKind kind;
    int rows;
    int cols;
    std::size_t offset;

    std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

struct BlockLayout {
    std::size_t ln1_gamma, ln1_beta;
    std::size_t token_w1, token_b1, token_w2, token_b2;
    std::size_t ln2_gamma, ln2_beta;
    std::size_t channel_w1, channel_b1, channel_w2, channel_b2;
};

/// Indices into `tensors`, which is in checkpoint order.
struct Layout {
    std::vector<TensorInfo> tensors;
    std::size_t embed_w, embed_b;
    std::vector<BlockLayout> blocks;
    std::size_t head_ln_gamma, head_ln_beta, head_w, head_b;
    std::size_t total = 0;
};

Layout make_layout(const MixerConfig& config);

std::size_t count_params(const MixerConfig& config);

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// All network weights, stored contiguously in checkpoint order. Gradients use the same type.
template <typename T>
struct Params {
    MixerConfig config;
    Layout layout;
    std::vector<T, Eigen::aligned_allocator<T>> values;  // aligned so vectorized reductions do not depend on the address

    Params() = default;
    /// Zero-filled parameters of the right shape.
    explicit Params(const MixerConfig& c);

    const TensorInfo& info(std::size_t t) const { return layout.tensors[t]; }

    Eigen::Map<Matrix<T>> mat(std::size_t t) {
        const auto& i = info(t);
        return {values.data() + i.offset, i.rows, i.cols};
    }
    Eigen::Map<const Matrix<T>> mat(std::size_t t) const {
        const auto& i = info(t);
        return {values.data() + i.offset, i.rows, i.cols};
    }
    Eigen::Map<Vector<T>> vec(std::size_t t) {
        const auto& i = info(t);
        return {values.data() + i.offset, static_cast<Eigen::Index>(i.size())};
    }
    Eigen::Map<const Vector<T>> vec(std::size_t t) const {
        const auto& i = info(t);
        return {values.data() + i.offset, static_cast<Eigen::Index>(i.size())};
    }

    void set_zero() { std::fill(values.begin(), values.end(), T(0)); }
};

/// Weights ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)) drawn with splitmix64 in checkpoint order;
/// biases and LayerNorm betas 0, gammas 1.
template <typename T>
Params<T> init_params(const MixerConfig& config, std::uint64_t seed);

template <typename To, typename From>
Params<To> cast_params(const Params<From>& p) {
    Params<To> out(p.config);
    for (std::size_t i = 0; i < p.values.size(); ++i) out.values[i] = static_cast<To>(p.values[i]);
    return out;
}

/// Token matrix: row k is the row-major flattening of the patch at
/// (patch * (k / grid), patch * (k % grid)).
template <typename T>
Matrix<T> patchify(std::span<const float> image, const MixerConfig& config);

Matrix<float> patchify(const imaging::EdgeMap& edge, const MixerConfig& config);

template <typename T>
struct LayerNormCache {
    Matrix<T> xhat;
    Vector<T> rstd;
};

template <typename T>
struct BlockTape {
    Matrix<T> input;          // S x D
    LayerNormCache<T> ln1;
    Matrix<T> ln1_out;        // S x D
    Matrix<T> token_pre;      // Ht x D
    Matrix<T> token_act;      // Ht x D
    Matrix<T> mid;            // S x D, after token mixing residual
    LayerNormCache<T> ln2;
    Matrix<T> ln2_out;        // S x D
    Matrix<T> channel_pre;    // S x Hc
    Matrix<T> channel_act;    // S x Hc
};

/// Activations saved by forward for backward. Reusable across calls.
template <typename T>
struct Tape {
    Matrix<T> patches;        // S x P
    std::vector<BlockTape<T>> blocks;
    Matrix<T> final_tokens;   // S x D
    LayerNormCache<T> head_ln;
    Vector<T> pooled;         // D
    Vector<T> logits;         // C
    Matrix<T> scratch;        // S x D
};

/// Runs the network and fills `tape`. Throws NumericFailure naming the layer on NaN/Inf.
template <typename T>
Vector<T> forward(const Params<T>& params, std::span<const float> image, Tape<T>& tape);

template <typename T>
Vector<T> forward(const Params<T>& params, std::span<const float> image) {
    Tape<T> tape;
    return forward(params, image, tape);
}

template <typename T>
Vector<T> forward(const Params<T>& params, const imaging::EdgeMap& edge) {
    const auto in = imaging::to_input(edge);
    return forward(params, std::span<const float>(in));
}

struct ActionScores {
    std::array<double, kNumActions> logits{};
    std::array<double, kNumActions> probs{};

    /// Lowest index wins ties.
    int argmax() const;
};

/// Max-shifted softmax. Throws std::invalid_argument on non-finite logits.
ActionScores score_actions(std::span<const double> logits);

template <typename T>
ActionScores score_actions(const Vector<T>& logits) {
    std::array<double, kNumActions> l{};
    if (logits.size() != kNumActions) throw std::invalid_argument("expected 5 logits");
    for (int i = 0; i < kNumActions; ++i) l[static_cast<std::size_t>(i)] = static_cast<double>(logits[i]);
    return score_actions(std::span<const double>(l));
}

/// Adds the cross-entropy gradient for `target` to `grads` and returns the loss.
/// The tape must come from a forward pass with the same params.
template <typename T>
T backward(const Params<T>& params, const Tape<T>& tape, int target, Params<T>& grads);

template <typename T>
Params<T> backward(const Params<T>& params, const Tape<T>& tape, int target) {
    Params<T> grads(params.config);
    backward(params, tape, target, grads);
    return grads;
}

/// probs - one_hot(target), computed from logits with a max shift.
template <typename T>
Vector<T> logit_gradient(const Vector<T>& logits, int target);

/// log-sum-exp(logits) - logits[target].
template <typename T>
T cross_entropy_from_logits(const Vector<T>& logits, int target);

}  // namespace racer::mixer
