#include "dtwin/emulator/motion_executor.hpp"

#include <stdexcept>

namespace dtwin::emu {

MotionExecutor::MotionExecutor(const kin::DhTable& dh, double tick_hz, double speed_scale,
                               kin::JointConfig start)
    : dh_(dh), tick_hz_(tick_hz), current_(dh.clamp(start)) {
    if (!(tick_hz > 0.0)) throw std::invalid_argument("tick rate must be positive");
    if (!(speed_scale > 0.0 && speed_scale <= 1.0)) {
        throw std::invalid_argument("speed scale must lie in (0, 1]");
    }
    for (std::size_t i = 0; i < kin::kJoints; ++i) {
        speed_[static_cast<Eigen::Index>(i)] = dh.speed_limits[i] * speed_scale;
    }
}

void MotionExecutor::enqueue(const kin::JointConfig& target, MotionSource source) {
    if (dh_.first_violation(target) >= 0) throw std::invalid_argument("motion target outside joint limits");
    (source == MotionSource::Program ? program_ : jog_).push_back(target);
}

void MotionExecutor::clear(MotionSource source) {
    (source == MotionSource::Program ? program_ : jog_).clear();
}

bool MotionExecutor::idle(MotionSource source) const {
    return (source == MotionSource::Program ? program_ : jog_).empty();
}

std::size_t MotionExecutor::pending(MotionSource source) const {
    return (source == MotionSource::Program ? program_ : jog_).size();
}

kin::Vec6 MotionExecutor::max_step() const { return speed_ / tick_hz_; }

double MotionExecutor::travel_time(const kin::JointConfig& from, const kin::JointConfig& to) const {
    return ((to.q - from.q).cwiseAbs().cwiseQuotient(speed_)).maxCoeff();
}

bool MotionExecutor::advance_toward(const kin::JointConfig& target) {
    const double dt = 1.0 / tick_hz_;
    const kin::Vec6 remaining = target.q - current_.q;
    const double t_rem = remaining.cwiseAbs().cwiseQuotient(speed_).maxCoeff();
    if (t_rem <= dt * (1.0 + 1e-9)) {
        current_ = target;
        return true;
    }
    current_.q += remaining * (dt / t_rem);
    return false;
}

void MotionExecutor::tick(bool program_enabled) {
    if (!jog_.empty()) {
        if (advance_toward(jog_.front())) jog_.pop_front();
        return;
    }
    if (program_enabled && !program_.empty()) {
        if (advance_toward(program_.front())) program_.pop_front();
    }
}

}  // namespace dtwin::emu
