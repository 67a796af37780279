#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "racer/simworld.hpp"

namespace racer::sim {

namespace {

double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
Vec2 sub(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }

// Orientation-based proper or touching intersection of segments ab and cd.
bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
    auto orient = [](Vec2 p, Vec2 q, Vec2 r) {
        const double v = cross(sub(q, p), sub(r, p));
        return (v > 0) - (v < 0);
    };
    auto on_segment = [](Vec2 p, Vec2 q, Vec2 r) {
        return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) && std::min(p.y, q.y) <= r.y &&
               r.y <= std::max(p.y, q.y);
    };
    const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(a, b, c)) return true;
    if (o2 == 0 && on_segment(a, b, d)) return true;
    if (o3 == 0 && on_segment(c, d, a)) return true;
    if (o4 == 0 && on_segment(c, d, b)) return true;
    return false;
}

}  // namespace

Track::Track(std::string name, std::vector<Vec2> centerline, double width, double border_line_width)
    : name_(std::move(name)), vertices_(std::move(centerline)), width_(width), line_width_(border_line_width) {
    if (vertices_.size() < 3) throw std::invalid_argument("track needs at least 3 vertices");
    if (!(width_ > 0.0)) throw std::invalid_argument("track width must be positive");
    if (!(line_width_ > 0.0) || line_width_ >= width_ / 2) throw std::invalid_argument("bad border line width");
    const std::size_t n = vertices_.size();
    cumulative_.resize(n + 1);
    cumulative_[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 d = sub(vertices_[(i + 1) % n], vertices_[i]);
        const double len = std::hypot(d.x, d.y);
        if (!(len > 1e-9)) throw std::invalid_argument("degenerate track segment " + std::to_string(i));
        cumulative_[i + 1] = cumulative_[i] + len;
    }
    length_ = cumulative_[n];

    double max_x = -std::numeric_limits<double>::infinity(), max_y = max_x;
    min_x_ = min_y_ = std::numeric_limits<double>::infinity();
    for (const auto& v : vertices_) {
        min_x_ = std::min(min_x_, v.x);
        min_y_ = std::min(min_y_, v.y);
        max_x = std::max(max_x, v.x);
        max_y = std::max(max_y, v.y);
    }
    min_x_ -= kIndexReach + cell_;
    min_y_ -= kIndexReach + cell_;
    cols_ = static_cast<int>(std::ceil((max_x + kIndexReach + cell_ - min_x_) / cell_));
    rows_ = static_cast<int>(std::ceil((max_y + kIndexReach + cell_ - min_y_) / cell_));
    cells_.assign(static_cast<std::size_t>(cols_) * rows_, {});
    // A segment is registered in every cell its reach-expanded bounding box touches, so any
    // segment within kIndexReach of a point is a candidate for that point's cell.
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = vertices_[i];
        const Vec2 b = vertices_[(i + 1) % n];
        const int c0 = std::max(0, static_cast<int>(std::floor((std::min(a.x, b.x) - kIndexReach - min_x_) / cell_)));
        const int c1 = std::min(cols_ - 1, static_cast<int>(std::floor((std::max(a.x, b.x) + kIndexReach - min_x_) / cell_)));
        const int r0 = std::max(0, static_cast<int>(std::floor((std::min(a.y, b.y) - kIndexReach - min_y_) / cell_)));
        const int r1 = std::min(rows_ - 1, static_cast<int>(std::floor((std::max(a.y, b.y) + kIndexReach - min_y_) / cell_)));
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c)
                cells_[static_cast<std::size_t>(r) * cols_ + c].push_back(static_cast<std::uint32_t>(i));
    }
}

Vec2 Track::point_at(double s) const {
    s = std::fmod(s, length_);
    if (s < 0) s += length_;
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()) - 1, vertices_.size() - 1);
    const Vec2 a = vertices_[i];
    const Vec2 b = vertices_[(i + 1) % vertices_.size()];
    const double t = (s - cumulative_[i]) / (cumulative_[i + 1] - cumulative_[i]);
    return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
}

Vec2 Track::tangent_at(double s) const {
    s = std::fmod(s, length_);
    if (s < 0) s += length_;
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()) - 1, vertices_.size() - 1);
    const Vec2 d = sub(vertices_[(i + 1) % vertices_.size()], vertices_[i]);
    const double len = std::hypot(d.x, d.y);
    return {d.x / len, d.y / len};
}

Projection Track::project_segment(Vec2 p, std::size_t i) const {
    const Vec2 a = vertices_[i];
    const Vec2 b = vertices_[(i + 1) % vertices_.size()];
    const Vec2 ab = sub(b, a);
    const Vec2 ap = sub(p, a);
    const double len2 = ab.x * ab.x + ab.y * ab.y;
    const double t = std::clamp((ap.x * ab.x + ap.y * ab.y) / len2, 0.0, 1.0);
    const Vec2 q{a.x + t * ab.x, a.y + t * ab.y};
    Projection pr;
    pr.segment = i;
    pr.distance = std::hypot(p.x - q.x, p.y - q.y);
    pr.offset = cross(ab, ap) >= 0 ? pr.distance : -pr.distance;
    pr.arc = cumulative_[i] + t * (cumulative_[i + 1] - cumulative_[i]);
    if (pr.arc >= length_) pr.arc -= length_;
    return pr;
}

Projection Track::project_brute(Vec2 p) const {
    Projection best = project_segment(p, 0);
    for (std::size_t i = 1; i < vertices_.size(); ++i) {
        const auto pr = project_segment(p, i);
        if (pr.distance < best.distance) best = pr;
    }
    return best;
}

Projection Track::project_windowed(Vec2 p, double arc_hint, double window) const {
    std::optional<Projection> best;
    for (std::size_t i = 0; i < vertices_.size(); ++i) {
        // Circular distance from the hint to the segment's arc interval.
        const double lo = cumulative_[i], hi = cumulative_[i + 1];
        double gap = std::numeric_limits<double>::infinity();
        for (double shift : {-length_, 0.0, length_}) {
            const double h = arc_hint + shift;
            gap = std::min(gap, h < lo ? lo - h : (h > hi ? h - hi : 0.0));
        }
        if (gap > window) continue;
        const auto pr = project_segment(p, i);
        if (!best || pr.distance < best->distance) best = pr;
    }
    return best ? *best : project_brute(p);
}

std::optional<Projection> Track::project_nearby(Vec2 p) const {
    const int c = static_cast<int>(std::floor((p.x - min_x_) / cell_));
    const int r = static_cast<int>(std::floor((p.y - min_y_) / cell_));
    if (c < 0 || r < 0 || c >= cols_ || r >= rows_) return std::nullopt;
    std::optional<Projection> best;
    for (auto i : cells_[static_cast<std::size_t>(r) * cols_ + c]) {
        const auto pr = project_segment(p, i);
        if (!best || pr.distance < best->distance) best = pr;
    }
    if (!best || best->distance > kIndexReach) return std::nullopt;
    return best;
}

double Track::distance(Vec2 p) const {
    if (const auto pr = project_nearby(p)) return pr->distance;
    return project_brute(p).distance;
}

bool Track::is_simple() const {
    const std::size_t n = vertices_.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (j == i + 1 || (i == 0 && j == n - 1)) continue;  // adjacent segments share a vertex
            if (segments_intersect(vertices_[i], vertices_[(i + 1) % n], vertices_[j], vertices_[(j + 1) % n]))
                return false;
        }
    }
    return true;
}

namespace {

// Turtle-style centerline builder: straights and constant-radius arcs.
class PathBuilder {
public:
    PathBuilder& straight(double length, double step = 0.25) {
        const int n = std::max(1, static_cast<int>(std::ceil(length / step)));
        for (int i = 1; i <= n; ++i) {
            const double d = length * i / n;
            pts_.push_back({x_ + d * std::cos(h_), y_ + d * std::sin(h_)});
        }
        x_ += length * std::cos(h_);
        y_ += length * std::sin(h_);
        return *this;
    }

    /// Positive degrees turn left.
    PathBuilder& arc(double radius, double degrees, double step_deg = 2.0) {
        const double sign = degrees >= 0 ? 1.0 : -1.0;
        const double total = std::abs(degrees) * std::numbers::pi / 180.0;
        // Center lies to the left for left turns.
        const double cx = x_ - sign * radius * std::sin(h_);
        const double cy = y_ + sign * radius * std::cos(h_);
        const double start = std::atan2(y_ - cy, x_ - cx);
        const int n = std::max(1, static_cast<int>(std::ceil(std::abs(degrees) / step_deg)));
        for (int i = 1; i <= n; ++i) {
            const double a = start + sign * total * i / n;
            pts_.push_back({cx + radius * std::cos(a), cy + radius * std::sin(a)});
        }
        const double a = start + sign * total;
        x_ = cx + radius * std::cos(a);
        y_ = cy + radius * std::sin(a);
        h_ += sign * total;
        return *this;
    }

    std::vector<Vec2> close() const {
        std::vector<Vec2> out{{0.0, 0.0}};
        out.insert(out.end(), pts_.begin(), pts_.end());
        // The final point returns to the origin; drop the duplicate.
        if (std::hypot(out.back().x, out.back().y) > 1e-6)
            throw std::logic_error("track path does not close");
        out.pop_back();
        return out;
    }

private:
    double x_ = 0.0, y_ = 0.0, h_ = 0.0;
    std::vector<Vec2> pts_;
};

}  // namespace

std::vector<std::string> builtin_tracks() { return {"oval", "serpentine", "hairpin"}; }

Track make_track(const std::string& name) {
    if (name == "oval") {
        return Track(name, PathBuilder().straight(6.0).arc(1.5, 180).straight(6.0).arc(1.5, 180).close());
    }
    if (name == "serpentine") {
        // Each straight carries one S-bend; the two lateral shifts cancel.
        PathBuilder b;
        b.straight(1.5).arc(1.0, 45).arc(1.0, -45).straight(6.0 - 1.5 - 2.0 * std::sin(std::numbers::pi / 4));
        b.arc(1.5, 180);
        b.straight(1.5).arc(1.0, 45).arc(1.0, -45).straight(6.0 - 1.5 - 2.0 * std::sin(std::numbers::pi / 4));
        b.arc(1.5, 180);
        return Track(name, b.close());
    }
    if (name == "hairpin") {
        // Wide 1.5 m end, an S-bend that narrows the loop by 1.2 m, then one 0.9 m 180-degree turn.
        const double bend = std::acos(0.6) * 180.0 / std::numbers::pi;
        PathBuilder b;
        b.straight(6.0).arc(1.5, 180).straight(1.8).arc(1.5, bend).arc(1.5, -bend).straight(1.8).arc(0.9, 180);
        return Track(name, b.close());
    }
    throw std::invalid_argument("unknown track '" + name + "'");
}

Track load_track_file(const std::filesystem::path& path, double width) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<Vec2> pts;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
        std::istringstream ss(line);
        Vec2 p;
        if (!(ss >> p.x >> p.y))
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected 'x y'");
        pts.push_back(p);
    }
    return Track(path.stem().string(), std::move(pts), width);
}

}  // namespace racer::sim
