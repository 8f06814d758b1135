#pragma once

#include "dtwin/kinematics/kinematics.hpp"

#include <atomic>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <mutex>
#include <vector>

namespace dtwin::twin {

struct TrajectoryRow {
    std::int64_t t_ms = 0;  // controller timestamp of the joints sample
    std::uint64_t seq = 0;
    kin::JointConfig q;
    kin::Pose pose;         // FK(q)
};

struct TcpRow {
    std::int64_t t_ms = 0;
    std::uint64_t seq = 0;
    kin::Pose pose;         // as reported by the controller
};

inline constexpr const char* kTrajectoryCsvHeader = "t_ms,j1,j2,j3,j4,j5,j6,x,y,z,qw,qx,qy,qz";

// Appends one row per accepted joints sample (and per robtarget sample)
// while recording. Bounded; the oldest rows are dropped first.
class TrajectoryRecorder {
  public:
    explicit TrajectoryRecorder(kin::DhTable dh, std::size_t capacity = 250 * 600);

    void start();
    void stop();
    bool recording() const { return recording_; }
    void clear();

    void on_joints(std::uint64_t seq, std::int64_t t_ms, const kin::JointConfig& q);
    void on_tcp(std::uint64_t seq, std::int64_t t_ms, const kin::Pose& pose);

    std::vector<TrajectoryRow> rows() const;
    std::vector<TcpRow> tcp_rows() const;

    // Degrees and mm, header kTrajectoryCsvHeader.
    void write_csv(std::ostream& os) const;

  private:
    kin::DhTable dh_;
    std::size_t capacity_;
    std::atomic<bool> recording_{false};
    mutable std::mutex mu_;
    std::deque<TrajectoryRow> rows_;
    std::deque<TcpRow> tcp_;
};

}  // namespace dtwin::twin
