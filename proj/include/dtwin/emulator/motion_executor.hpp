#pragma once

#include "dtwin/kinematics/dh_table.hpp"

#include <deque>

namespace dtwin::emu {

enum class MotionSource { Program, Jog };

// Joint-space MoveAbsJ executor. Each tick moves every joint along the
// straight line to the active target at a common rate chosen so that the
// slowest joint runs at its speed limit; all joints arrive together.
class MotionExecutor {
  public:
    MotionExecutor(const kin::DhTable& dh, double tick_hz, double speed_scale = 1.0,
                   kin::JointConfig start = {});

    void enqueue(const kin::JointConfig& target, MotionSource source);
    void clear(MotionSource source);

    // Jog targets always progress. Program targets progress only when
    // `program_enabled` and no jog target is pending.
    void tick(bool program_enabled);

    bool idle(MotionSource source) const;
    bool idle() const { return idle(MotionSource::Program) && idle(MotionSource::Jog); }
    std::size_t pending(MotionSource source) const;

    const kin::JointConfig& current() const { return current_; }
    double tick_hz() const { return tick_hz_; }
    // Largest joint step one tick may take, per joint (rad).
    kin::Vec6 max_step() const;

    // Nominal seconds to travel from `from` to `to`.
    double travel_time(const kin::JointConfig& from, const kin::JointConfig& to) const;

  private:
    bool advance_toward(const kin::JointConfig& target);

    kin::DhTable dh_;
    double tick_hz_;
    kin::Vec6 speed_;
    kin::JointConfig current_;
    std::deque<kin::JointConfig> program_;
    std::deque<kin::JointConfig> jog_;
};

}  // namespace dtwin::emu
