#include "dtwin/twin/trajectory.hpp"

#include <ostream>

namespace dtwin::twin {

TrajectoryRecorder::TrajectoryRecorder(kin::DhTable dh, std::size_t capacity)
    : dh_(std::move(dh)), capacity_(capacity) {}

void TrajectoryRecorder::start() { recording_ = true; }
void TrajectoryRecorder::stop() { recording_ = false; }

void TrajectoryRecorder::clear() {
    std::lock_guard lock(mu_);
    rows_.clear();
    tcp_.clear();
}

void TrajectoryRecorder::on_joints(std::uint64_t seq, std::int64_t t_ms, const kin::JointConfig& q) {
    if (!recording_) return;
    TrajectoryRow row{t_ms, seq, q, kin::forward_kinematics(dh_, q)};
    std::lock_guard lock(mu_);
    rows_.push_back(std::move(row));
    if (rows_.size() > capacity_) rows_.pop_front();
}

void TrajectoryRecorder::on_tcp(std::uint64_t seq, std::int64_t t_ms, const kin::Pose& pose) {
    if (!recording_) return;
    std::lock_guard lock(mu_);
    tcp_.push_back({t_ms, seq, pose});
    if (tcp_.size() > capacity_) tcp_.pop_front();
}

std::vector<TrajectoryRow> TrajectoryRecorder::rows() const {
    std::lock_guard lock(mu_);
    return {rows_.begin(), rows_.end()};
}

std::vector<TcpRow> TrajectoryRecorder::tcp_rows() const {
    std::lock_guard lock(mu_);
    return {tcp_.begin(), tcp_.end()};
}

void TrajectoryRecorder::write_csv(std::ostream& os) const {
    const auto snapshot = rows();
    os << kTrajectoryCsvHeader << '\n';
    const auto old = os.precision(12);
    for (const auto& r : snapshot) {
        os << r.t_ms;
        for (double d : r.q.degrees()) os << ',' << d;
        const auto& p = r.pose.position;
        const auto& o = r.pose.orientation;
        os << ',' << p.x() << ',' << p.y() << ',' << p.z() << ',' << o.w() << ',' << o.x() << ',' << o.y() << ','
           << o.z() << '\n';
    }
    os.precision(old);
}

}  // namespace dtwin::twin
