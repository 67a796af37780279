#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

namespace racer::imaging {

/// 8-bit grayscale image, row-major.
struct Frame {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Frame() = default;
    Frame(int w, int h, std::uint8_t fill = 0);
    Frame(int w, int h, std::vector<std::uint8_t> data);

    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const Frame&) const = default;
};

/// Quantized gradient direction, modulo 180 degrees.
enum class Direction : std::uint8_t { deg0 = 0, deg45 = 1, deg90 = 2, deg135 = 3 };

struct GradientField {
    int width = 0;
    int height = 0;
    std::vector<float> gx;
    std::vector<float> gy;
    std::vector<float> magnitude;
    std::vector<Direction> direction;

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

/// Binary image with values in {0, 1}.
struct BinaryImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    bool operator==(const BinaryImage&) const = default;
};

/// The model's 64x64 binary input.
struct EdgeMap {
    static constexpr int kSize = 64;
    std::vector<std::uint8_t> bits = std::vector<std::uint8_t>(kSize * kSize, 0);

    std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * kSize + x]; }
    std::size_t count() const;

    bool operator==(const EdgeMap&) const = default;
};

enum class InputMode { canny, raw };

/// Everything that determines how a camera frame becomes a model input. Stored in
/// checkpoint and dataset headers so a model never sees a different pipeline.
struct PipelineParams {
    InputMode mode = InputMode::canny;
    int frame_width = 160;
    int frame_height = 120;
    double crop_fraction = 0.20;
    double blur_sigma = 1.0;
    double low_threshold = 100.0;
    double high_threshold = 256.0;
    double resize_threshold = 0.5;

    bool operator==(const PipelineParams&) const = default;
};

void to_json(nlohmann::json& j, const PipelineParams& p);
void from_json(const nlohmann::json& j, PipelineParams& p);

Frame crop_top(const Frame& frame, double fraction);

/// Normalized, truncated 1D Gaussian of size 2*ceil(3*sigma)+1.
std::vector<double> gaussian_kernel(double sigma);

/// Separable blur with replicated borders over a row-major plane.
std::vector<double> gaussian_blur_plane(std::span<const double> values, int width, int height, double sigma);

/// Separable blur with replicated borders, unrounded.
std::vector<double> gaussian_blur_values(const Frame& frame, double sigma);

/// Separable blur rounded back to 8 bits.
Frame gaussian_blur(const Frame& frame, double sigma);

GradientField sobel(const Frame& frame);

Direction quantize_direction(double gx, double gy);

GradientField non_max_suppression(const GradientField& g);

BinaryImage hysteresis(const GradientField& g, double low = 100.0, double high = 256.0);

/// Area-average downsample to 64x64, then binarize (average >= threshold -> 1).
EdgeMap resize_to_64(const BinaryImage& image, double threshold = 0.5);

/// Area-average downsample of a grayscale frame to size x size, scaled to [0, 1].
std::vector<float> resize_gray(const Frame& frame, int size);

/// Full edge pipeline: crop -> blur -> sobel -> nms -> hysteresis -> resize.
EdgeMap preprocess(const Frame& frame, const PipelineParams& params = {});

/// Frame -> flat 64*64 model input, honoring params.mode.
std::vector<float> prepare_input(const Frame& frame, const PipelineParams& params);

std::vector<float> to_input(const EdgeMap& edge);

}  // namespace racer::imaging
