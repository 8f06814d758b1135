#include "dtwin/motion/solver_service.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace dtwin::motion {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct FieldError {
    std::string field;
    std::string message;
};

std::array<double, 6> six(const json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 6) throw FieldError{field, field + " must be an array of 6 numbers"};
    std::array<double, 6> out{};
    for (std::size_t i = 0; i < 6; ++i) {
        if (!j[i].is_number()) throw FieldError{field, field + " must be an array of 6 numbers"};
        out[i] = j[i].get<double>();
        if (!std::isfinite(out[i])) throw FieldError{field, field + " must be finite"};
    }
    return out;
}

kin::Pose pose_of(const json& j) {
    if (!j.is_object() || !j.contains("pos") || !j.contains("quat")) {
        throw FieldError{"target", "target needs pos and quat"};
    }
    const auto& p = j.at("pos");
    const auto& q = j.at("quat");
    if (!p.is_array() || p.size() != 3 || !q.is_array() || q.size() != 4) {
        throw FieldError{"target", "pos needs 3 numbers and quat 4"};
    }
    kin::Pose pose;
    try {
        pose.position = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
        pose.orientation = kin::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                                            q[3].get<double>());
    } catch (const json::exception&) {
        throw FieldError{"target", "pos and quat must be numbers"};
    }
    if (!pose.position.allFinite() || !pose.orientation.coeffs().allFinite()) {
        throw FieldError{"target", "target must be finite"};
    }
    if (std::abs(pose.orientation.norm() - 1.0) > 1e-6) throw FieldError{"target.quat", "quat must be unit length"};
    return pose;
}

ordered_json pose_json(const kin::Pose& p) {
    ordered_json j;
    j["pos"] = {p.position.x(), p.position.y(), p.position.z()};
    j["quat"] = {p.orientation.w(), p.orientation.x(), p.orientation.y(), p.orientation.z()};
    return j;
}

std::string error_reply(std::string_view kind, const std::string& message, const char* key, json value) {
    ordered_json j;
    j["error"] = kind;
    j["message"] = message;
    j[key] = std::move(value);
    return j.dump();
}

bool send_all(int fd, std::string_view data) {
    while (!data.empty()) {
        const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n <= 0) {
            if (n < 0 && errno == EINTR) continue;
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

}  // namespace

json solve_request(const kin::Pose& target, const kin::JointConfig& seed) {
    json j;
    j["target"] = pose_json(target);
    j["seed"] = seed.degrees();
    return j;
}

std::string handle_solver_line(const kin::DhTable& dh, const kin::SolverDefaults& defaults, std::string_view line) {
    json req;
    try {
        req = json::parse(line);
    } catch (const json::parse_error& e) {
        return error_reply("parse", e.what(), "position", e.byte);
    }
    try {
        if (!req.is_object()) throw FieldError{"", "request must be a JSON object"};
        if (req.contains("fk")) {
            const auto q = kin::JointConfig::from_degrees(six(req.at("fk"), "fk"));
            ordered_json out;
            out["pose"] = pose_json(kin::forward_kinematics(dh, q));
            return out.dump();
        }
        if (!req.contains("target")) throw FieldError{"target", "missing target"};
        if (!req.contains("seed")) throw FieldError{"seed", "missing seed"};
        const kin::Pose target = pose_of(req.at("target"));
        const auto seed = kin::JointConfig::from_degrees(six(req.at("seed"), "seed"));
        const kin::IkResult r = kin::solve_ik(dh, defaults.problem(target, seed));
        ordered_json out;
        out["solution"] = r.solution.degrees();
        out["converged"] = r.converged;
        out["iterations"] = r.iterations;
        out["pos_err_mm"] = r.pos_err;
        return out.dump();
    } catch (const FieldError& e) {
        return error_reply("invalid", e.message, "field", e.field);
    } catch (const std::exception& e) {
        return error_reply("invalid", e.what(), "field", "");
    }
}

SolverService::SolverService(kin::DhTable dh, kin::SolverDefaults defaults, std::string host, int port)
    : dh_(std::move(dh)), defaults_(defaults), host_(std::move(host)), port_(port) {}

SolverService::~SolverService() { stop(); }

int SolverService::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw SolverError(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port_));
    if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        throw SolverError("solver host must be an IPv4 address: " + host_);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
        const std::string err = std::strerror(errno);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw SolverError("cannot listen on " + host_ + ":" + std::to_string(port_) + ": " + err);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    stop_ = false;
    acceptor_ = std::thread([this] { accept_loop(); });
    return port_;
}

void SolverService::stop() {
    if (listen_fd_ < 0) return;
    stop_ = true;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (acceptor_.joinable()) acceptor_.join();
    listen_fd_ = -1;
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(mu_);
        for (int fd : clients_) ::shutdown(fd, SHUT_RDWR);
        workers.swap(workers_);
    }
    for (auto& t : workers) t.join();
}

void SolverService::accept_loop() {
    while (!stop_) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (errno == EINTR) continue;
            return;
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        std::lock_guard lock(mu_);
        if (stop_) {
            ::close(fd);
            return;
        }
        clients_.insert(fd);
        workers_.emplace_back([this, fd] { serve(fd); });
    }
}

void SolverService::serve(int fd) {
    std::string buffer;
    char chunk[4096];
    while (!stop_) {
        const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t nl;
        bool ok = true;
        while (ok && (nl = buffer.find('\n')) != std::string::npos) {
            std::string line = buffer.substr(0, nl);
            buffer.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            ok = send_all(fd, handle_solver_line(dh_, defaults_, line) + "\n");
        }
        if (!ok) break;
    }
    std::lock_guard lock(mu_);
    clients_.erase(fd);
    ::close(fd);
}

SolverClient::SolverClient(const std::string& host, int port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
        throw SolverError("cannot resolve " + host);
    }
    for (addrinfo* a = res; a; a = a->ai_next) {
        fd_ = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
        if (fd_ < 0) continue;
        if (::connect(fd_, a->ai_addr, a->ai_addrlen) == 0) break;
        ::close(fd_);
        fd_ = -1;
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) throw SolverError("cannot connect to solver at " + host + ":" + std::to_string(port));
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

SolverClient::~SolverClient() {
    if (fd_ >= 0) ::close(fd_);
}

json SolverClient::call(const std::string& line) {
    if (!send_all(fd_, line + "\n")) throw SolverError("solver connection lost");
    char chunk[4096];
    std::size_t nl;
    while ((nl = buffer_.find('\n')) == std::string::npos) {
        const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) throw SolverError("solver connection closed");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
    const std::string reply = buffer_.substr(0, nl);
    buffer_.erase(0, nl + 1);
    return json::parse(reply);
}

kin::IkResult SolverClient::solve(const kin::Pose& target, const kin::JointConfig& seed) {
    const json r = call(solve_request(target, seed));
    if (r.contains("error")) throw SolverError(r.at("message").get<std::string>());
    kin::IkResult out;
    out.solution = kin::JointConfig::from_degrees(r.at("solution").get<std::array<double, 6>>());
    out.converged = r.at("converged").get<bool>();
    out.iterations = r.at("iterations").get<int>();
    out.pos_err = r.at("pos_err_mm").get<double>();
    return out;
}

kin::Pose SolverClient::fk(const kin::JointConfig& q) {
    json req;
    req["fk"] = q.degrees();
    const json r = call(req);
    if (r.contains("error")) throw SolverError(r.at("message").get<std::string>());
    kin::Pose p;
    const auto& pos = r.at("pose").at("pos");
    const auto& quat = r.at("pose").at("quat");
    p.position = {pos[0].get<double>(), pos[1].get<double>(), pos[2].get<double>()};
    p.orientation = kin::Quaterniond(quat[0].get<double>(), quat[1].get<double>(), quat[2].get<double>(),
                                     quat[3].get<double>());
    return p;
}

}  // namespace dtwin::motion
