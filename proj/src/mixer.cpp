#include "racer/mixer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "racer/errors.hpp"
#include "racer/rng.hpp"

namespace racer::mixer {

void MixerConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || channels_in <= 0 || dim <= 0 || depth < 0 || num_classes <= 0 ||
        token_hidden <= 0 || channel_hidden <= 0)
        throw std::invalid_argument("mixer dimensions must be positive");
    if (image_size % patch_size != 0) throw std::invalid_argument("image_size must be divisible by patch_size");
    if (channels_in != 1) throw std::invalid_argument("only single-channel input is supported");
    if (num_classes != kNumActions) throw std::invalid_argument("num_classes must equal the action count (5)");
}

void to_json(nlohmann::json& j, const MixerConfig& c) {
    j = nlohmann::json{{"image_size", c.image_size},   {"patch_size", c.patch_size},
                       {"channels_in", c.channels_in}, {"dim", c.dim},
                       {"depth", c.depth},             {"num_classes", c.num_classes},
                       {"token_hidden", c.token_hidden}, {"channel_hidden", c.channel_hidden}};
}

void from_json(const nlohmann::json& j, MixerConfig& c) {
    j.at("image_size").get_to(c.image_size);
    j.at("patch_size").get_to(c.patch_size);
    j.at("channels_in").get_to(c.channels_in);
    j.at("dim").get_to(c.dim);
    j.at("depth").get_to(c.depth);
    j.at("num_classes").get_to(c.num_classes);
    j.at("token_hidden").get_to(c.token_hidden);
    j.at("channel_hidden").get_to(c.channel_hidden);
}

Layout make_layout(const MixerConfig& config) {
    config.validate();
    Layout l;
    auto add = [&](std::string name, TensorKind kind, int rows, int cols) {
        l.tensors.push_back({std::move(name), kind, rows, cols, l.total});
        l.total += static_cast<std::size_t>(rows) * cols;
        return l.tensors.size() - 1;
    };
    const int s = config.tokens();
    const int d = config.dim;
    l.embed_w = add("embed.w", TensorKind::weight, d, config.patch_values());
    l.embed_b = add("embed.b", TensorKind::bias, 1, d);
    for (int b = 0; b < config.depth; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        BlockLayout bl{};
        bl.ln1_gamma = add(p + "ln1.gamma", TensorKind::gamma, 1, d);
        bl.ln1_beta = add(p + "ln1.beta", TensorKind::beta, 1, d);
        bl.token_w1 = add(p + "token.w1", TensorKind::weight, config.token_hidden, s);
        bl.token_b1 = add(p + "token.b1", TensorKind::bias, 1, config.token_hidden);
        bl.token_w2 = add(p + "token.w2", TensorKind::weight, s, config.token_hidden);
        bl.token_b2 = add(p + "token.b2", TensorKind::bias, 1, s);
        bl.ln2_gamma = add(p + "ln2.gamma", TensorKind::gamma, 1, d);
        bl.ln2_beta = add(p + "ln2.beta", TensorKind::beta, 1, d);
        bl.channel_w1 = add(p + "channel.w1", TensorKind::weight, config.channel_hidden, d);
        bl.channel_b1 = add(p + "channel.b1", TensorKind::bias, 1, config.channel_hidden);
        bl.channel_w2 = add(p + "channel.w2", TensorKind::weight, d, config.channel_hidden);
        bl.channel_b2 = add(p + "channel.b2", TensorKind::bias, 1, d);
        l.blocks.push_back(bl);
    }
    l.head_ln_gamma = add("head.ln.gamma", TensorKind::gamma, 1, d);
    l.head_ln_beta = add("head.ln.beta", TensorKind::beta, 1, d);
    l.head_w = add("head.w", TensorKind::weight, config.num_classes, d);
    l.head_b = add("head.b", TensorKind::bias, 1, config.num_classes);
    return l;
}

std::size_t count_params(const MixerConfig& config) { return make_layout(config).total; }

template <typename T>
Params<T>::Params(const MixerConfig& c) : config(c), layout(make_layout(c)), values(layout.total, T(0)) {}

template <typename T>
Params<T> init_params(const MixerConfig& config, std::uint64_t seed) {
    Params<T> p(config);
    SplitMix64 rng(seed);
    for (const auto& t : p.layout.tensors) {
        T* data = p.values.data() + t.offset;
        switch (t.kind) {
            case TensorKind::weight: {
                const double bound = std::sqrt(1.0 / t.cols);
                for (std::size_t i = 0; i < t.size(); ++i) data[i] = static_cast<T>(rng.uniform(-bound, bound));
                break;
            }
            case TensorKind::gamma:
                std::fill(data, data + t.size(), T(1));
                break;
            case TensorKind::bias:
            case TensorKind::beta:
                std::fill(data, data + t.size(), T(0));
                break;
        }
    }
    return p;
}

template <typename T>
Matrix<T> patchify(std::span<const float> image, const MixerConfig& config) {
    const int n = config.image_size;
    const int ps = config.patch_size;
    if (image.size() != static_cast<std::size_t>(config.input_values()))
        throw std::invalid_argument("input has " + std::to_string(image.size()) + " values, expected " +
                                    std::to_string(config.input_values()));
    const int grid = config.grid();
    Matrix<T> out(config.tokens(), config.patch_values());
    for (int k = 0; k < config.tokens(); ++k) {
        const int r0 = ps * (k / grid);
        const int c0 = ps * (k % grid);
        for (int r = 0; r < ps; ++r)
            for (int c = 0; c < ps; ++c)
                out(k, r * ps + c) = static_cast<T>(image[static_cast<std::size_t>(r0 + r) * n + (c0 + c)]);
    }
    return out;
}

Matrix<float> patchify(const imaging::EdgeMap& edge, const MixerConfig& config) {
    const auto in = imaging::to_input(edge);
    return patchify<float>(std::span<const float>(in), config);
}

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
}

template <typename T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
    const T pdf = std::exp(T(-0.5) * x * x) * T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    return cdf + x * pdf;
}

template <typename T, typename Out>
void layer_norm(const Matrix<T>& x, const Eigen::Map<const Vector<T>>& gamma,
                const Eigen::Map<const Vector<T>>& beta, LayerNormCache<T>& cache, Out& out) {
    const auto rows = x.rows();
    const auto d = x.cols();
    cache.xhat.resize(rows, d);
    cache.rstd.resize(rows);
    out.resize(rows, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const T mean = x.row(r).mean();
        const T var = (x.row(r).array() - mean).square().mean();
        const T rstd = T(1) / std::sqrt(var + T(kLayerNormEps));
        cache.rstd[r] = rstd;
        cache.xhat.row(r) = (x.row(r).array() - mean) * rstd;
        out.row(r) = cache.xhat.row(r).array() * gamma.transpose().array() + beta.transpose().array();
    }
}

// dx for y = gamma * xhat + beta; accumulates dgamma/dbeta.
template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const LayerNormCache<T>& cache,
                              const Eigen::Map<const Vector<T>>& gamma, Eigen::Map<Vector<T>> dgamma,
                              Eigen::Map<Vector<T>> dbeta) {
    dgamma += (dy.array() * cache.xhat.array()).colwise().sum().transpose().matrix();
    dbeta += dy.colwise().sum().transpose();
    const T d = static_cast<T>(dy.cols());
    Matrix<T> dxhat = dy.array().rowwise() * gamma.transpose().array();
    Matrix<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const T sum = dxhat.row(r).sum();
        const T dot = dxhat.row(r).dot(cache.xhat.row(r));
        dx.row(r) = (cache.rstd[r] / d) * (d * dxhat.row(r).array() - sum - cache.xhat.row(r).array() * dot);
    }
    return dx;
}

template <typename M>
void check_finite(const M& m, const std::string& layer) {
    if (!m.allFinite()) throw NumericFailure("non-finite activation in " + layer);
}

}  // namespace

template <typename T>
Vector<T> forward(const Params<T>& params, std::span<const float> image, Tape<T>& tape) {
    const auto& cfg = params.config;
    const auto& L = params.layout;

    tape.patches = patchify<T>(image, cfg);
    Matrix<T> x = tape.patches * params.mat(L.embed_w).transpose();
    x.rowwise() += params.vec(L.embed_b).transpose();
    check_finite(x, "patch embedding");

    tape.blocks.resize(static_cast<std::size_t>(cfg.depth));
    for (int b = 0; b < cfg.depth; ++b) {
        const auto& bl = L.blocks[static_cast<std::size_t>(b)];
        auto& bt = tape.blocks[static_cast<std::size_t>(b)];
        bt.input = std::move(x);

        layer_norm(bt.input, params.vec(bl.ln1_gamma), params.vec(bl.ln1_beta), bt.ln1, bt.ln1_out);
        // Token mixing acts on each channel column across tokens.
        bt.token_pre.noalias() = params.mat(bl.token_w1) * bt.ln1_out;
        bt.token_pre.colwise() += params.vec(bl.token_b1);
        bt.token_act = bt.token_pre.unaryExpr([](T v) { return gelu(v); });
        bt.mid = bt.input;
        bt.mid.noalias() += params.mat(bl.token_w2) * bt.token_act;
        bt.mid.colwise() += params.vec(bl.token_b2);
        check_finite(bt.mid, "block " + std::to_string(b) + " token mixing");

        layer_norm(bt.mid, params.vec(bl.ln2_gamma), params.vec(bl.ln2_beta), bt.ln2, bt.ln2_out);
        bt.channel_pre.noalias() = bt.ln2_out * params.mat(bl.channel_w1).transpose();
        bt.channel_pre.rowwise() += params.vec(bl.channel_b1).transpose();
        bt.channel_act = bt.channel_pre.unaryExpr([](T v) { return gelu(v); });
        x = bt.mid;
        x.noalias() += bt.channel_act * params.mat(bl.channel_w2).transpose();
        x.rowwise() += params.vec(bl.channel_b2).transpose();
        check_finite(x, "block " + std::to_string(b) + " channel mixing");
    }

    tape.final_tokens = std::move(x);
    layer_norm(tape.final_tokens, params.vec(L.head_ln_gamma), params.vec(L.head_ln_beta), tape.head_ln,
               tape.scratch);
    tape.pooled = tape.scratch.colwise().mean().transpose();
    tape.logits = params.mat(L.head_w) * tape.pooled + params.vec(L.head_b);
    check_finite(tape.logits, "head");
    return tape.logits;
}

template <typename T>
Vector<T> logit_gradient(const Vector<T>& logits, int target) {
    if (target < 0 || target >= logits.size()) throw std::invalid_argument("target action out of range");
    const T m = logits.maxCoeff();
    Vector<T> p = (logits.array() - m).exp().matrix();
    p /= p.sum();
    p[target] -= T(1);
    return p;
}

template <typename T>
T cross_entropy_from_logits(const Vector<T>& logits, int target) {
    if (target < 0 || target >= logits.size()) throw std::invalid_argument("target action out of range");
    const T m = logits.maxCoeff();
    const T lse = m + std::log((logits.array() - m).exp().sum());
    return lse - logits[target];
}

template <typename T>
T backward(const Params<T>& params, const Tape<T>& tape, int target, Params<T>& grads) {
    const auto& cfg = params.config;
    const auto& L = params.layout;
    if (target < 0 || target >= cfg.num_classes) throw std::invalid_argument("target action out of range");
    if (grads.values.size() != params.values.size()) throw std::invalid_argument("gradient buffer shape mismatch");

    const Vector<T> dlogits = logit_gradient(tape.logits, target);
    grads.mat(L.head_w).noalias() += dlogits * tape.pooled.transpose();
    grads.vec(L.head_b) += dlogits;
    const Vector<T> dpooled = params.mat(L.head_w).transpose() * dlogits;

    // Mean pooling spreads the gradient evenly over tokens.
    Matrix<T> dhead = dpooled.transpose().replicate(cfg.tokens(), 1) / static_cast<T>(cfg.tokens());
    Matrix<T> dx = layer_norm_backward(dhead, tape.head_ln, params.vec(L.head_ln_gamma), grads.vec(L.head_ln_gamma),
                                       grads.vec(L.head_ln_beta));

    for (int b = cfg.depth - 1; b >= 0; --b) {
        const auto& bl = L.blocks[static_cast<std::size_t>(b)];
        const auto& bt = tape.blocks[static_cast<std::size_t>(b)];

        // Channel mixing: y = mid + gelu(ln2(mid) W1^T + b1) W2^T + b2
        grads.mat(bl.channel_w2).noalias() += dx.transpose() * bt.channel_act;
        grads.vec(bl.channel_b2) += dx.colwise().sum().transpose();
        Matrix<T> dch = dx * params.mat(bl.channel_w2);
        dch.array() *= bt.channel_pre.unaryExpr([](T v) { return gelu_grad(v); }).array();
        grads.mat(bl.channel_w1).noalias() += dch.transpose() * bt.ln2_out;
        grads.vec(bl.channel_b1) += dch.colwise().sum().transpose();
        const Matrix<T> dln2 = dch * params.mat(bl.channel_w1);
        Matrix<T> dmid = dx + layer_norm_backward(dln2, bt.ln2, params.vec(bl.ln2_gamma), grads.vec(bl.ln2_gamma),
                                                  grads.vec(bl.ln2_beta));

        // Token mixing: mid = x + W2 gelu(W1 ln1(x) + b1) + b2
        grads.mat(bl.token_w2).noalias() += dmid * bt.token_act.transpose();
        grads.vec(bl.token_b2) += dmid.rowwise().sum();
        Matrix<T> dtok = params.mat(bl.token_w2).transpose() * dmid;
        dtok.array() *= bt.token_pre.unaryExpr([](T v) { return gelu_grad(v); }).array();
        grads.mat(bl.token_w1).noalias() += dtok * bt.ln1_out.transpose();
        grads.vec(bl.token_b1) += dtok.rowwise().sum();
        const Matrix<T> dln1 = params.mat(bl.token_w1).transpose() * dtok;
        dx = dmid + layer_norm_backward(dln1, bt.ln1, params.vec(bl.ln1_gamma), grads.vec(bl.ln1_gamma),
                                        grads.vec(bl.ln1_beta));
    }

    grads.mat(L.embed_w).noalias() += dx.transpose() * tape.patches;
    grads.vec(L.embed_b) += dx.colwise().sum().transpose();
    return cross_entropy_from_logits(tape.logits, target);
}

int ActionScores::argmax() const {
    int best = 0;
    for (int i = 1; i < kNumActions; ++i)
        if (logits[static_cast<std::size_t>(i)] > logits[static_cast<std::size_t>(best)]) best = i;
    return best;
}

ActionScores score_actions(std::span<const double> logits) {
    if (logits.size() != kNumActions) throw std::invalid_argument("expected 5 logits");
    ActionScores s;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!std::isfinite(logits[i])) throw std::invalid_argument("non-finite logit");
        s.logits[i] = logits[i];
        m = std::max(m, logits[i]);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) sum += (s.probs[i] = std::exp(logits[i] - m));
    for (double& p : s.probs) p /= sum;
    return s;
}

#define RACER_INSTANTIATE(T)                                                                           \
    template struct Params<T>;                                                                         \
    template Params<T> init_params<T>(const MixerConfig&, std::uint64_t);                              \
    template Matrix<T> patchify<T>(std::span<const float>, const MixerConfig&);                        \
    template Vector<T> forward<T>(const Params<T>&, std::span<const float>, Tape<T>&);                   \
    template T backward<T>(const Params<T>&, const Tape<T>&, int, Params<T>&);                          \
    template Vector<T> logit_gradient<T>(const Vector<T>&, int);                                       \
    template T cross_entropy_from_logits<T>(const Vector<T>&, int);

RACER_INSTANTIATE(float)
RACER_INSTANTIATE(double)

#undef RACER_INSTANTIATE

}  // namespace racer::mixer
