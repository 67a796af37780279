#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "racer/episode.hpp"
#include "racer/simworld.hpp"
#include "racer/trainer.hpp"

namespace racer::service {

inline constexpr std::uint16_t kDefaultPort = 8700;
inline constexpr double kTickHz = 15.0;

/// RACER_PORT when set and valid, else kDefaultPort.
std::uint16_t default_port();

enum class Mode { idle, teleop, policy };
std::string_view mode_name(Mode m);

/// Protocol state of one connection, free of any networking. The transport feeds it text
/// messages and calls tick() at the tick rate; everything it returns is sent to the client.
class SessionCore {
public:
    /// `default_model` drives policy sessions that do not name their own model; may be null.
    explicit SessionCore(std::string id, std::shared_ptr<const trainer::Checkpoint> default_model = nullptr);

    /// Replies to one client message: exactly one ack or error, plus the first frame after `start`.
    std::vector<nlohmann::json> handle(std::string_view text);

    /// One simulator step when running; returns the frame to publish.
    std::optional<nlohmann::json> tick();

    Mode mode() const { return mode_; }
    bool recording() const { return recording_; }
    std::size_t buffered_steps() const { return buffer_.steps.size(); }
    const std::string& id() const { return id_; }
    const sim::Simulator* simulator() const { return sim_ ? &*sim_ : nullptr; }

private:
    nlohmann::json ack(std::int64_t client_seq, std::string_view of);
    nlohmann::json error(std::optional<std::int64_t> client_seq, std::string_view code, const std::string& message);
    nlohmann::json frame_message();

    std::vector<nlohmann::json> on_start(const nlohmann::json& msg, std::int64_t seq);
    std::vector<nlohmann::json> on_action(const nlohmann::json& msg, std::int64_t seq);
    std::vector<nlohmann::json> on_record(const nlohmann::json& msg, std::int64_t seq);
    std::vector<nlohmann::json> on_save(const nlohmann::json& msg, std::int64_t seq);

    std::string id_;
    std::shared_ptr<const trainer::Checkpoint> default_model_;
    std::shared_ptr<const trainer::Checkpoint> model_;
    Mode mode_ = Mode::idle;
    std::optional<sim::Simulator> sim_;
    imaging::Frame current_;
    std::optional<Terminal> terminal_;
    Action latched_ = Action::front;
    bool recording_ = false;
    Episode buffer_;
    std::int64_t out_seq_ = 0;
    std::optional<std::int64_t> last_client_seq_;
    std::uint64_t ticks_ = 0;
};

struct ServerOptions {
    std::uint16_t port = kDefaultPort;  // 0 picks a free port
    std::string address = "127.0.0.1";
    std::shared_ptr<const trainer::Checkpoint> default_model;
    double tick_hz = kTickHz;
};

/// WebSocket server, one SessionCore per connection, all on one I/O thread.
class Server {
public:
    explicit Server(ServerOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    std::uint16_t port() const;
    /// Blocks until stop() or SIGINT/SIGTERM when `handle_signals` is set.
    void run(bool handle_signals = false);
    /// Safe to call from any thread.
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace racer::service
