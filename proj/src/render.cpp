#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numbers>

#include "racer/simworld.hpp"

namespace racer::sim {

double CameraModel::focal_px() const {
    return (width / 2.0) / std::tan(hfov_deg * std::numbers::pi / 360.0);
}

double CameraModel::vfov_deg() const {
    return 2.0 * std::atan((height / 2.0) / focal_px()) * 180.0 / std::numbers::pi;
}

std::optional<Vec2> pixel_to_ground(const VehicleState& state, const CameraModel& camera, double u, double v) {
    const double f = camera.focal_px();
    const double xc = (u - camera.width / 2.0) / f;
    const double yc = (v - camera.height / 2.0) / f;
    const double down = -camera.pitch_deg * std::numbers::pi / 180.0;
    const double vertical = -std::sin(down) - yc * std::cos(down);
    if (vertical >= 0.0) return std::nullopt;
    const double t = camera.mount_height / -vertical;
    const double fwd = t * (std::cos(down) - yc * std::sin(down));
    const double right = t * xc;
    if (std::hypot(fwd, right) > camera.view_distance) return std::nullopt;
    const double c = std::cos(state.heading);
    const double s = std::sin(state.heading);
    return Vec2{state.x + fwd * c + right * s, state.y + fwd * s - right * c};
}

double ground_intensity(const Track& track, Vec2 p) {
    const auto pr = track.project_nearby(p);
    if (!pr) return shade::surround;
    const double half = track.width() / 2;
    const double d = pr->distance;
    if (d > half) return shade::surround;
    if (d >= half - track.border_line_width()) return shade::border;
    if (d <= track.border_line_width() / 2 && std::fmod(pr->arc, 2 * shade::dash_length) < shade::dash_length)
        return shade::center_line;
    return shade::asphalt;
}

namespace {

struct Blob {
    double cx, cy, sa, sb, angle, amplitude;
};

std::uint64_t pose_hash(const VehicleState& s) {
    std::uint64_t h = mix_seed(std::bit_cast<std::uint64_t>(s.x), std::bit_cast<std::uint64_t>(s.y));
    return mix_seed(h, std::bit_cast<std::uint64_t>(s.heading));
}

// Marble-floor look: three specular blobs, a brightness ramp, sensor noise, lens blur.
void apply_real_style(std::vector<double>& img, const CameraModel& cam, const VehicleState& state,
                      std::uint64_t episode_seed) {
    const int w = cam.width;
    const int h = cam.height;
    SplitMix64 scene(mix_seed(episode_seed, 0x5CE9E));
    std::array<Blob, 3> blobs{};
    for (auto& b : blobs) {
        b.cx = scene.uniform(0.0, w);
        b.cy = scene.uniform(0.45 * h, h);
        b.sa = scene.uniform(10.0, 24.0);
        b.sb = scene.uniform(8.0, 14.0);
        b.angle = scene.uniform(0.0, std::numbers::pi);
        b.amplitude = scene.uniform(60.0, 90.0);
    }
    const double ramp_dir = scene.uniform(0.0, 2.0 * std::numbers::pi);
    const double half_diag = std::hypot(w / 2.0, h / 2.0);

    SplitMix64 noise(mix_seed(episode_seed, pose_hash(state)));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            double v = img[static_cast<std::size_t>(y) * w + x];
            const double ramp = ((px - w / 2.0) * std::cos(ramp_dir) + (py - h / 2.0) * std::sin(ramp_dir)) / half_diag;
            v *= 1.0 + 0.2 * ramp;
            for (const auto& b : blobs) {
                const double dx = px - b.cx, dy = py - b.cy;
                const double ca = std::cos(b.angle), sa = std::sin(b.angle);
                const double u = (dx * ca + dy * sa) / b.sa;
                const double t = (-dx * sa + dy * ca) / b.sb;
                v += b.amplitude * std::exp(-0.5 * (u * u + t * t));
            }
            v += 6.0 * noise.normal();
            img[static_cast<std::size_t>(y) * w + x] = v;
        }
    }
    img = imaging::gaussian_blur_plane(img, w, h, 0.6);
}

}  // namespace

imaging::Frame render_camera(const VehicleState& state, const Track& track, const CameraModel& camera,
                             RenderStyle style, std::uint64_t episode_seed) {
    std::vector<double> img(static_cast<std::size_t>(camera.width) * camera.height);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const auto g = pixel_to_ground(state, camera, x + 0.5, y + 0.5);
            img[static_cast<std::size_t>(y) * camera.width + x] = g ? ground_intensity(track, *g) : shade::sky;
        }
    }
    if (style == RenderStyle::real) apply_real_style(img, camera, state, episode_seed);
    imaging::Frame out(camera.width, camera.height);
    for (std::size_t i = 0; i < img.size(); ++i)
        out.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(img[i]), 0L, 255L));
    return out;
}

}  // namespace racer::sim
