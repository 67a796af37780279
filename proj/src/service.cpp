#include "racer/service.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <iostream>

#include "racer/base64.hpp"
#include "racer/data.hpp"
#include "racer/errors.hpp"
#include "racer/runtime.hpp"

namespace racer::service {

using nlohmann::json;

std::uint16_t default_port() {
    if (const char* env = std::getenv("RACER_PORT")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0 && v < 65536) return static_cast<std::uint16_t>(v);
    }
    return kDefaultPort;
}

std::string_view mode_name(Mode m) {
    switch (m) {
        case Mode::idle: return "idle";
        case Mode::teleop: return "teleop";
        case Mode::policy: return "policy";
    }
    return "idle";
}

namespace {

std::vector<std::uint8_t> edge_bytes(const imaging::Frame& frame, const imaging::PipelineParams& pipeline) {
    std::vector<std::uint8_t> out(imaging::EdgeMap::kSize * imaging::EdgeMap::kSize);
    if (pipeline.mode == imaging::InputMode::canny) {
        const auto edge = imaging::preprocess(frame, pipeline);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = edge.bits[i] ? 255 : 0;
    } else {
        const auto gray = imaging::prepare_input(frame, pipeline);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(gray[i], 0.0f, 1.0f) * 255.0f));
    }
    return out;
}

}  // namespace

SessionCore::SessionCore(std::string id, std::shared_ptr<const trainer::Checkpoint> default_model)
    : id_(std::move(id)), default_model_(std::move(default_model)) {}

json SessionCore::ack(std::int64_t client_seq, std::string_view of) {
    return json{{"type", "ack"}, {"seq", ++out_seq_}, {"ack", client_seq}, {"of", of}, {"mode", mode_name(mode_)},
                {"recording", recording_}};
}

json SessionCore::error(std::optional<std::int64_t> client_seq, std::string_view code, const std::string& message) {
    json j{{"type", "error"}, {"seq", ++out_seq_}, {"code", code}, {"message", message}};
    if (client_seq) j["ack"] = *client_seq;
    return j;
}

json SessionCore::frame_message() {
    const auto& st = sim_->state();
    const auto& track = sim_->track();
    const auto& pipeline = model_ ? model_->pipeline : default_model_ ? default_model_->pipeline : imaging::PipelineParams{};
    json j{{"type", "frame"},
           {"seq", ++out_seq_},
           {"tick", ticks_},
           {"width", current_.width},
           {"height", current_.height},
           {"pixels", base64_encode(current_.pixels)},
           {"edge", base64_encode(edge_bytes(current_, pipeline))},
           {"state",
            {{"x", st.x},
             {"y", st.y},
             {"heading", st.heading},
             {"progress", st.arc_progress / track.length()},
             {"reward", sim_->current_reward()}}},
           {"mode", mode_name(mode_)},
           {"recording", recording_}};
    if (terminal_) j["terminal"] = terminal_name(*terminal_);
    return j;
}

std::vector<json> SessionCore::handle(std::string_view text) {
    json msg;
    try {
        msg = json::parse(text);
    } catch (const json::exception&) {
        return {error(std::nullopt, "bad-message", "message is not valid JSON")};
    }
    if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
        return {error(std::nullopt, "bad-message", "message needs a string 'type'")};
    if (!msg.contains("seq") || !msg["seq"].is_number_integer())
        return {error(std::nullopt, "bad-message", "message needs an integer 'seq'")};
    const auto seq = msg["seq"].get<std::int64_t>();
    if (last_client_seq_ && seq <= *last_client_seq_)
        return {error(seq, "bad-seq", "seq must increase; last was " + std::to_string(*last_client_seq_))};
    last_client_seq_ = seq;

    const auto type = msg["type"].get<std::string>();
    try {
        if (type == "start") return on_start(msg, seq);
        if (type == "action") return on_action(msg, seq);
        if (type == "record") return on_record(msg, seq);
        if (type == "save") return on_save(msg, seq);
        if (type == "stop") {
            mode_ = Mode::idle;
            recording_ = false;
            return {ack(seq, type)};
        }
    } catch (const json::exception& e) {
        return {error(seq, "bad-message", e.what())};
    }
    return {error(seq, "unknown-type", "unknown message type '" + type + "'")};
}

std::vector<json> SessionCore::on_start(const json& msg, std::int64_t seq) {
    const auto track_name = msg.at("track").get<std::string>();
    std::optional<sim::Track> track;
    try {
        track = sim::make_track(track_name);
    } catch (const std::invalid_argument&) {
        return {error(seq, "bad-track", "unknown track '" + track_name + "'")};
    }
    RenderStyle style = RenderStyle::sim;
    try {
        style = parse_style(msg.value("style", std::string("sim")));
    } catch (const std::invalid_argument& e) {
        return {error(seq, "bad-style", e.what())};
    }
    const auto mode_text = msg.value("mode", std::string("teleop"));
    Mode mode;
    if (mode_text == "teleop")
        mode = Mode::teleop;
    else if (mode_text == "policy")
        mode = Mode::policy;
    else
        return {error(seq, "bad-mode", "mode must be teleop or policy")};

    auto model = default_model_;
    if (msg.contains("model") && !msg["model"].is_null()) {
        const auto path = msg["model"].get<std::string>();
        try {
            model = std::make_shared<const trainer::Checkpoint>(trainer::load_checkpoint(path));
        } catch (const std::exception& e) {
            return {error(seq, "bad-model", e.what())};
        }
    }
    if (mode == Mode::policy && !model) return {error(seq, "bad-model", "policy mode needs a model")};
    const auto seed = msg.value("seed", std::uint64_t{0});

    sim_.emplace(std::move(*track), style, seed);
    if (model && (model->pipeline.frame_width != sim_->options().camera.width ||
                  model->pipeline.frame_height != sim_->options().camera.height)) {
        sim_.reset();
        mode_ = Mode::idle;
        return {error(seq, "bad-model", "model frame size does not match the camera")};
    }
    model_ = model;
    mode_ = mode;
    latched_ = Action::front;
    recording_ = false;
    ticks_ = 0;
    terminal_.reset();
    buffer_ = Episode{};
    buffer_.header = {track_name,
                      style,
                      sim_->options().camera.width,
                      sim_->options().camera.height,
                      sim_->options().vehicle.dt,
                      mode == Mode::teleop ? "teleop" : "model",
                      seed};
    current_ = sim_->render();
    auto reply = ack(seq, "start");
    return {reply, frame_message()};
}

std::vector<json> SessionCore::on_action(const json& msg, std::int64_t seq) {
    if (mode_ != Mode::teleop) return {error(seq, "bad-mode", "actions are accepted only in teleop mode")};
    const auto& a = msg.at("action");
    if (!a.is_number_integer()) return {error(seq, "bad-action", "action must be an integer 0..4")};
    const auto index = a.get<std::int64_t>();
    if (index < 0 || index >= kActionCount) return {error(seq, "bad-action", "action must be an integer 0..4")};
    latched_ = action_from_index(static_cast<int>(index));
    return {ack(seq, "action")};
}

std::vector<json> SessionCore::on_record(const json& msg, std::int64_t seq) {
    const auto& v = msg.at("on");
    bool on;
    if (v.is_boolean())
        on = v.get<bool>();
    else if (v.is_string() && (v == "on" || v == "off"))
        on = v == "on";
    else
        return {error(seq, "bad-message", "'on' must be a boolean or \"on\"/\"off\"")};
    if (on) {
        if (mode_ == Mode::idle) return {error(seq, "not-running", "start a session before recording")};
        recording_ = true;
        buffer_.steps.clear();
        buffer_.terminal = Terminal::timeout;
    } else {
        recording_ = false;
    }
    return {ack(seq, "record")};
}

std::vector<json> SessionCore::on_save(const json& msg, std::int64_t seq) {
    const auto path = msg.at("path").get<std::string>();
    if (buffer_.steps.empty()) return {error(seq, "empty-episode", "no recorded steps to save")};
    try {
        data::write_episode(buffer_, path);
    } catch (const std::exception& e) {
        return {error(seq, "io-error", e.what())};
    }
    auto reply = ack(seq, "save");
    reply["steps"] = buffer_.steps.size();
    reply["path"] = path;
    return {reply};
}

std::optional<json> SessionCore::tick() {
    if (mode_ == Mode::idle || !sim_) return std::nullopt;
    const Action action = mode_ == Mode::teleop ? latched_ : runtime::predict(*model_, current_).action;
    Step step;
    step.t = static_cast<int>(buffer_.steps.size());
    step.action = action;
    step.state = sim_->state();
    step.frame = std::move(current_);
    step.reward = sim_->step(action);
    if (recording_) buffer_.steps.push_back(std::move(step));
    ++ticks_;
    current_ = sim_->render();
    terminal_ = sim_->terminal();
    if (terminal_) {
        buffer_.terminal = *terminal_;
        recording_ = false;
    }
    auto frame = frame_message();
    frame["action"] = index_of(action);
    if (terminal_) mode_ = Mode::idle;
    return frame;
}

namespace {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using steady = std::chrono::steady_clock;

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket socket, std::string id, std::shared_ptr<const trainer::Checkpoint> model, double tick_hz)
        : ws_(std::move(socket)),
          timer_(ws_.get_executor()),
          core_(std::move(id), std::move(model)),
          period_(std::chrono::duration_cast<steady::duration>(std::chrono::duration<double>(1.0 / tick_hz))) {}

    void start() {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
            if (ec) return;
            self->next_tick_ = steady::now() + self->period_;
            self->schedule_tick();
            self->read();
        });
    }

private:
    void read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->close();
                return;
            }
            const auto text = beast::buffers_to_string(self->buffer_.data());
            self->buffer_.consume(self->buffer_.size());
            for (auto& reply : self->core_.handle(text)) self->enqueue(reply);
            self->flush();
            self->read();
        });
    }

    void schedule_tick() {
        timer_.expires_at(next_tick_);
        timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
            if (ec || self->closed_) return;
            try {
                if (auto frame = self->core_.tick()) self->enqueue(*frame);
            } catch (const std::exception& e) {
                std::cerr << "session " << self->core_.id() << ": tick failed: " << e.what() << '\n';
            }
            self->flush();
            // Fixed-rate deadlines; an overrun skips ahead instead of bursting to catch up.
            self->next_tick_ += self->period_;
            const auto now = steady::now();
            if (self->next_tick_ < now) self->next_tick_ = now + self->period_;
            self->schedule_tick();
        });
    }

    void enqueue(const json& msg) {
        if (msg.at("type") == "frame")
            frame_slot_ = msg.dump();  // latest wins; an unsent older frame is dropped
        else
            control_.push_back(msg.dump());
    }

    void flush() {
        if (writing_ || closed_) return;
        if (!control_.empty()) {
            out_ = std::move(control_.front());
            control_.pop_front();
        } else if (frame_slot_) {
            out_ = std::move(*frame_slot_);
            frame_slot_.reset();
        } else {
            return;
        }
        writing_ = true;
        ws_.text(true);
        ws_.async_write(net::buffer(out_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            self->writing_ = false;
            if (ec) {
                self->close();
                return;
            }
            self->flush();
        });
    }

    void close() {
        closed_ = true;
        timer_.cancel();
    }

    websocket::stream<beast::tcp_stream> ws_;
    net::steady_timer timer_;
    SessionCore core_;
    steady::duration period_;
    steady::time_point next_tick_;
    beast::flat_buffer buffer_;
    std::deque<std::string> control_;
    std::optional<std::string> frame_slot_;
    std::string out_;
    bool writing_ = false;
    bool closed_ = false;
};

}  // namespace

struct Server::Impl {
    ServerOptions options;
    net::io_context ioc{1};
    tcp::acceptor acceptor{ioc};
    std::uint64_t next_id = 0;

    void accept() {
        acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;
            std::make_shared<Connection>(std::move(socket), "s" + std::to_string(++next_id), options.default_model,
                                         options.tick_hz)
                ->start();
            accept();
        });
    }
};

Server::Server(ServerOptions options) : impl_(std::make_unique<Impl>()) {
    if (!(options.tick_hz > 0.0)) throw std::invalid_argument("tick rate must be positive");
    impl_->options = std::move(options);
    const tcp::endpoint endpoint(net::ip::make_address(impl_->options.address), impl_->options.port);
    auto& acc = impl_->acceptor;
    acc.open(endpoint.protocol());
    acc.set_option(net::socket_base::reuse_address(true));
    acc.bind(endpoint);
    acc.listen(net::socket_base::max_listen_connections);
    impl_->accept();
}

Server::~Server() = default;

std::uint16_t Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run(bool handle_signals) {
    std::optional<net::signal_set> signals;
    if (handle_signals) {
        signals.emplace(impl_->ioc, SIGINT, SIGTERM);
        signals->async_wait([this](beast::error_code, int) { impl_->ioc.stop(); });
    }
    impl_->ioc.run();
}

void Server::stop() { impl_->ioc.stop(); }

}  // namespace racer::service
