#pragma once

#include "dtwin/motion/gateway.hpp"
#include "dtwin/twin/twin.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace dtwin::proxy {

struct ProxyOptions {
    std::string host = "127.0.0.1";
    int port = 0;
    std::chrono::milliseconds stream_period{50};
    std::chrono::milliseconds heartbeat{2000};
    std::size_t events_tail = 100;
    std::size_t spylog_tail = 200;
    int http_threads = 32;
    std::string cors_origin = "*";
    std::optional<std::filesystem::path> static_dir;  // console bundle served at "/"
};

// Aggregate view served to browsers. Never contains controller credentials.
nlohmann::ordered_json state_view(const twin::TwinState& s, const twin::Twin& tw, std::size_t events_tail,
                                  std::size_t spylog_tail);
nlohmann::ordered_json metrics_view(twin::Twin& tw, std::size_t windows = 120);

// Parses a POST /api/command body and runs it through the gateway. Throws
// motion::GatewayError (status 400 + field on schema errors).
motion::Ticket run_command(motion::MotionGateway& gw, const nlohmann::json& body);

// Browser-facing HTTP front of one twin.
//
//   GET  /api/state        aggregate view, 503 while the controller is down
//   GET  /api/stream       server-sent events: snapshot, then state frames
//   POST /api/command      {"kind":"pointer"|"jog"|"linear"|"do", ...} -> 202 + ticket
//   GET  /api/ticket/{id}  pending | done | failed
//   GET  /api/metrics      per-stream refresh windows
//   GET  /api/camera.jpg   camera panel image relayed from the controller
class Proxy {
  public:
    Proxy(twin::Twin& tw, motion::MotionGateway& gw, ProxyOptions opts = {});
    ~Proxy();
    Proxy(const Proxy&) = delete;
    Proxy& operator=(const Proxy&) = delete;

    int start();  // returns the bound port; throws std::runtime_error when taken
    void stop();
    int port() const { return port_; }
    std::string url() const;

    std::size_t stream_clients() const { return clients_; }

  private:
    struct Http;
    struct Frame {
        std::uint64_t id = 0;
        twin::TwinState state;
    };

    void install_routes();
    void frame_loop();
    Frame wait_frame(std::uint64_t after, std::chrono::milliseconds timeout) const;

    twin::Twin& twin_;
    motion::MotionGateway& gw_;
    ProxyOptions opts_;
    std::unique_ptr<Http> http_;
    int port_ = 0;
    std::thread server_thread_;
    std::thread frame_thread_;
    std::atomic<bool> stop_{false};
    std::atomic<std::size_t> clients_{0};

    mutable std::mutex frame_mu_;
    mutable std::condition_variable frame_cv_;
    Frame frame_;

    std::mutex camera_mu_;
    std::unique_ptr<wire::RwsClient> camera_client_;
};

}  // namespace dtwin::proxy
