#include "racer/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <stdexcept>
#include <string>

namespace racer::imaging {

Frame::Frame(int w, int h, std::uint8_t fill) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("frame dimensions must be positive");
    pixels.assign(static_cast<std::size_t>(w) * h, fill);
}

Frame::Frame(int w, int h, std::vector<std::uint8_t> data) : width(w), height(h), pixels(std::move(data)) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("frame dimensions must be positive");
    if (pixels.size() != static_cast<std::size_t>(w) * h)
        throw std::invalid_argument("pixel count " + std::to_string(pixels.size()) + " != " +
                                    std::to_string(w) + "x" + std::to_string(h));
}

std::size_t EdgeMap::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

const char* mode_name(InputMode m) { return m == InputMode::canny ? "canny" : "raw"; }

InputMode parse_mode(const std::string& s) {
    if (s == "canny") return InputMode::canny;
    if (s == "raw") return InputMode::raw;
    throw std::invalid_argument("unknown pipeline mode '" + s + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const PipelineParams& p) {
    j = nlohmann::json{{"mode", mode_name(p.mode)},
                       {"frame_width", p.frame_width},
                       {"frame_height", p.frame_height},
                       {"crop_fraction", p.crop_fraction},
                       {"blur_sigma", p.blur_sigma},
                       {"low_threshold", p.low_threshold},
                       {"high_threshold", p.high_threshold},
                       {"resize_threshold", p.resize_threshold}};
}

void from_json(const nlohmann::json& j, PipelineParams& p) {
    p.mode = parse_mode(j.at("mode").get<std::string>());
    j.at("frame_width").get_to(p.frame_width);
    j.at("frame_height").get_to(p.frame_height);
    j.at("crop_fraction").get_to(p.crop_fraction);
    j.at("blur_sigma").get_to(p.blur_sigma);
    j.at("low_threshold").get_to(p.low_threshold);
    j.at("high_threshold").get_to(p.high_threshold);
    j.at("resize_threshold").get_to(p.resize_threshold);
}

Frame crop_top(const Frame& frame, double fraction) {
    if (!(fraction >= 0.0 && fraction < 1.0))
        throw std::invalid_argument("crop fraction must lie in [0, 1)");
    const int removed = static_cast<int>(std::floor(fraction * frame.height));
    const int rows = frame.height - removed;
    if (rows <= 0) throw std::invalid_argument("crop leaves no rows");
    const auto begin = frame.pixels.begin() + static_cast<std::ptrdiff_t>(removed) * frame.width;
    return Frame(frame.width, rows, std::vector<std::uint8_t>(begin, frame.pixels.end()));
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("blur sigma must be positive");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

std::vector<double> gaussian_blur_plane(std::span<const double> values, int w, int h, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    if (values.size() != static_cast<std::size_t>(w) * h) throw std::invalid_argument("plane size mismatch");

    std::vector<double> tmp(values.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int sx = std::clamp(x + i, 0, w - 1);
                acc += k[static_cast<std::size_t>(i + radius)] * values[static_cast<std::size_t>(y) * w + sx];
            }
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    std::vector<double> out(tmp.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int sy = std::clamp(y + i, 0, h - 1);
                acc += k[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(sy) * w + x];
            }
            out[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    return out;
}

std::vector<double> gaussian_blur_values(const Frame& frame, double sigma) {
    const std::vector<double> plane(frame.pixels.begin(), frame.pixels.end());
    return gaussian_blur_plane(plane, frame.width, frame.height, sigma);
}

Frame gaussian_blur(const Frame& frame, double sigma) {
    const auto values = gaussian_blur_values(frame, sigma);
    Frame out(frame.width, frame.height);
    for (std::size_t i = 0; i < values.size(); ++i)
        out.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(values[i]), 0L, 255L));
    return out;
}

Direction quantize_direction(double gx, double gy) {
    double deg = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
    if (deg < 0.0) deg += 180.0;
    const int bin = static_cast<int>(std::lround(deg / 45.0)) % 4;
    return static_cast<Direction>(bin);
}

GradientField sobel(const Frame& frame) {
    if (frame.width < 3 || frame.height < 3) throw std::invalid_argument("sobel needs at least 3x3 pixels");
    const int w = frame.width;
    const int h = frame.height;
    GradientField g;
    g.width = w;
    g.height = h;
    const auto n = static_cast<std::size_t>(w) * h;
    g.gx.resize(n);
    g.gy.resize(n);
    g.magnitude.resize(n);
    g.direction.resize(n);

    auto px = [&](int x, int y) -> int { return frame.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)); };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                           (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
            const int gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                           (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
            const auto i = g.index(x, y);
            g.gx[i] = static_cast<float>(gx);
            g.gy[i] = static_cast<float>(gy);
            g.magnitude[i] = std::sqrt(static_cast<float>(gx * gx + gy * gy));
            g.direction[i] = quantize_direction(gx, gy);
        }
    }
    return g;
}

GradientField non_max_suppression(const GradientField& g) {
    // Neighbor offset that comes later in row-major scan order, per direction bin.
    static constexpr int kLater[4][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}};
    GradientField out = g;
    auto mag = [&](int x, int y) -> float {
        if (x < 0 || y < 0 || x >= g.width || y >= g.height) return 0.0f;
        return g.magnitude[g.index(x, y)];
    };
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            const auto i = g.index(x, y);
            const auto& d = kLater[static_cast<int>(g.direction[i])];
            const float m = g.magnitude[i];
            const float earlier = mag(x - d[0], y - d[1]);
            const float later = mag(x + d[0], y + d[1]);
            // Strict against the earlier neighbor so a plateau keeps its first pixel.
            out.magnitude[i] = (m > earlier && m >= later) ? m : 0.0f;
        }
    }
    return out;
}

BinaryImage hysteresis(const GradientField& g, double low, double high) {
    if (!(low >= 0.0) || low > high) throw std::invalid_argument("hysteresis needs 0 <= low <= high");
    BinaryImage out{g.width, g.height, std::vector<std::uint8_t>(g.magnitude.size(), 0)};
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            const auto i = g.index(x, y);
            if (g.magnitude[i] > high) {
                out.bits[i] = 1;
                queue.emplace_back(x, y);
            }
        }
    }
    while (!queue.empty()) {
        const auto [x, y] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx;
                const int ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= g.width || ny >= g.height) continue;
                const auto j = g.index(nx, ny);
                if (out.bits[j] == 0 && g.magnitude[j] >= low) {
                    out.bits[j] = 1;
                    queue.emplace_back(nx, ny);
                }
            }
        }
    }
    return out;
}

namespace {

struct Overlap {
    int source;
    std::int64_t length;
};

// Source pixels overlapping each destination cell, in units where a source pixel is
// `dst` wide and a destination cell is `src` wide, so all overlaps are integers.
std::vector<std::vector<Overlap>> area_overlaps(int src, int dst) {
    std::vector<std::vector<Overlap>> cells(static_cast<std::size_t>(dst));
    for (int j = 0; j < dst; ++j) {
        const std::int64_t lo = static_cast<std::int64_t>(j) * src;
        const std::int64_t hi = lo + src;
        for (int s = static_cast<int>(lo / dst); s < src && static_cast<std::int64_t>(s) * dst < hi; ++s) {
            const std::int64_t a = std::max<std::int64_t>(lo, static_cast<std::int64_t>(s) * dst);
            const std::int64_t b = std::min<std::int64_t>(hi, static_cast<std::int64_t>(s + 1) * dst);
            if (b > a) cells[static_cast<std::size_t>(j)].push_back({s, b - a});
        }
    }
    return cells;
}

template <typename Fn>
std::vector<std::int64_t> area_sums(int width, int height, int size, Fn value) {
    const auto cols = area_overlaps(width, size);
    const auto rows = area_overlaps(height, size);
    std::vector<std::int64_t> sums(static_cast<std::size_t>(size) * size, 0);
    for (int j = 0; j < size; ++j) {
        for (int i = 0; i < size; ++i) {
            std::int64_t acc = 0;
            for (const auto& r : rows[static_cast<std::size_t>(j)])
                for (const auto& c : cols[static_cast<std::size_t>(i)])
                    acc += r.length * c.length * value(c.source, r.source);
            sums[static_cast<std::size_t>(j) * size + i] = acc;
        }
    }
    return sums;
}

}  // namespace

EdgeMap resize_to_64(const BinaryImage& image, double threshold) {
    if (image.width < 1 || image.height < 1) throw std::invalid_argument("resize source is empty");
    constexpr int n = EdgeMap::kSize;
    const auto sums = area_sums(image.width, image.height, n, [&](int x, int y) {
        return static_cast<std::int64_t>(image.bits[static_cast<std::size_t>(y) * image.width + x]);
    });
    // Each cell's area is width*height in the scaled units.
    const double cell_area = static_cast<double>(image.width) * image.height;
    EdgeMap out;
    for (std::size_t i = 0; i < sums.size(); ++i)
        out.bits[i] = static_cast<double>(sums[i]) >= threshold * cell_area ? 1 : 0;
    return out;
}

std::vector<float> resize_gray(const Frame& frame, int size) {
    const auto sums = area_sums(frame.width, frame.height, size,
                                [&](int x, int y) { return static_cast<std::int64_t>(frame.at(x, y)); });
    const double scale = 1.0 / (255.0 * frame.width * frame.height);
    std::vector<float> out(sums.size());
    for (std::size_t i = 0; i < sums.size(); ++i) out[i] = static_cast<float>(sums[i] * scale);
    return out;
}

EdgeMap preprocess(const Frame& frame, const PipelineParams& params) {
    const Frame cropped = crop_top(frame, params.crop_fraction);
    const Frame blurred = gaussian_blur(cropped, params.blur_sigma);
    const GradientField thin = non_max_suppression(sobel(blurred));
    return resize_to_64(hysteresis(thin, params.low_threshold, params.high_threshold), params.resize_threshold);
}

std::vector<float> to_input(const EdgeMap& edge) { return {edge.bits.begin(), edge.bits.end()}; }

std::vector<float> prepare_input(const Frame& frame, const PipelineParams& params) {
    if (params.mode == InputMode::raw) return resize_gray(crop_top(frame, params.crop_fraction), EdgeMap::kSize);
    return to_input(preprocess(frame, params));
}

}  // namespace racer::imaging
