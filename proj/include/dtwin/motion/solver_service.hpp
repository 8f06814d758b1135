#pragma once

#include "dtwin/kinematics/config.hpp"

#include <json.hpp>

#include <atomic>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace dtwin::motion {

// Line-delimited JSON solver protocol.
//
//   {"target":{"pos":[x,y,z],"quat":[w,x,y,z]},"seed":[j1..j6 deg]}
//     -> {"solution":[deg...],"converged":true,"iterations":n,"pos_err_mm":f}
//   {"fk":[j1..j6 deg]}
//     -> {"pose":{"pos":[x,y,z],"quat":[w,x,y,z]}}
//
// Failures reply {"error":"parse"|"invalid","message":...} plus "position"
// (byte offset) for parse errors or "field" for schema errors.
std::string handle_solver_line(const kin::DhTable& dh, const kin::SolverDefaults& defaults, std::string_view line);

nlohmann::json solve_request(const kin::Pose& target, const kin::JointConfig& seed);

class SolverError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Stream-socket server for the protocol above. One thread per connection;
// requests on a connection are answered in order.
class SolverService {
  public:
    SolverService(kin::DhTable dh, kin::SolverDefaults defaults, std::string host = "127.0.0.1", int port = 0);
    ~SolverService();
    SolverService(const SolverService&) = delete;
    SolverService& operator=(const SolverService&) = delete;

    int start();  // returns the bound port; throws SolverError when the endpoint is taken
    void stop();
    int port() const { return port_; }

  private:
    void accept_loop();
    void serve(int fd);

    kin::DhTable dh_;
    kin::SolverDefaults defaults_;
    std::string host_;
    int port_;
    int listen_fd_ = -1;
    std::atomic<bool> stop_{false};
    std::thread acceptor_;
    std::mutex mu_;
    std::set<int> clients_;
    std::vector<std::thread> workers_;
};

// Blocking client; one request in flight.
class SolverClient {
  public:
    SolverClient(const std::string& host, int port);
    ~SolverClient();
    SolverClient(const SolverClient&) = delete;
    SolverClient& operator=(const SolverClient&) = delete;

    // Sends one line, returns the parsed reply.
    nlohmann::json call(const std::string& line);
    nlohmann::json call(const nlohmann::json& request) { return call(request.dump()); }

    kin::IkResult solve(const kin::Pose& target, const kin::JointConfig& seed);
    kin::Pose fk(const kin::JointConfig& q);

  private:
    int fd_ = -1;
    std::string buffer_;
};

}  // namespace dtwin::motion
