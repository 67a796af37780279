#include "racer/episode.hpp"

#include <stdexcept>
#include <string>

namespace racer {

Action action_from_index(int index) {
    if (index < 0 || index >= kActionCount) throw std::invalid_argument("action index " + std::to_string(index) + " out of range");
    return static_cast<Action>(index);
}

std::string_view action_name(Action a) {
    static constexpr std::array<std::string_view, kActionCount> names = {"left-high", "left-med", "front", "right-med",
                                                                        "right-high"};
    return names[static_cast<std::size_t>(index_of(a))];
}

double steering_deg(Action a) { return kSteeringDeg[static_cast<std::size_t>(index_of(a))]; }

std::string_view style_name(RenderStyle s) { return s == RenderStyle::sim ? "sim" : "real"; }

RenderStyle parse_style(std::string_view name) {
    if (name == "sim") return RenderStyle::sim;
    if (name == "real") return RenderStyle::real;
    throw std::invalid_argument("unknown render style '" + std::string(name) + "'");
}

std::string_view terminal_name(Terminal t) {
    switch (t) {
        case Terminal::lap_complete: return "lap-complete";
        case Terminal::off_track: return "off-track";
        case Terminal::timeout: return "timeout";
    }
    return "timeout";
}

Terminal parse_terminal(std::string_view name) {
    if (name == "lap-complete") return Terminal::lap_complete;
    if (name == "off-track") return Terminal::off_track;
    if (name == "timeout") return Terminal::timeout;
    throw std::invalid_argument("unknown terminal '" + std::string(name) + "'");
}

}  // namespace racer
