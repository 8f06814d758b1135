#pragma once

#include "dtwin/twin/refresh_stats.hpp"
#include "dtwin/wire/digest.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dtwin::bench {

// Outcome of one benchmark or property suite.
struct Result {
    std::string name;
    bool pass = false;
    std::string summary;
    nlohmann::ordered_json detail = nlohmann::ordered_json::object();
};

// Progress lines for long runs; may be empty.
using Progress = std::function<void(const std::string&)>;

// Set from a signal handler to end a long run early. The run then reports
// what it measured so far and fails.
extern std::atomic<bool> g_interrupted;

struct StreamSummary {
    std::string stream;
    std::size_t windows = 0;   // closed windows, warm-up included
    std::size_t warm_up = 0;
    double mean_period_ms = 0;  // over non-warm-up windows
    double max_period_ms = 0;
    double worst_identity_error = 0;  // max |period_ms * window_count - 1000|
};

nlohmann::ordered_json to_json(const StreamSummary& s);
StreamSummary summarize(const std::string& stream, const std::vector<twin::RefreshWindow>& windows);

struct RefreshOptions {
    std::chrono::seconds duration{60};
    int camera_delay_ms = 0;
    double max_joints_ms = 20.0;
    double max_io_ms = 30.0;
};

// Emulator and twin on loopback, idle program, polling for `duration`.
Result refresh(const RefreshOptions& opts, const Progress& progress = {});

struct CameraOptions {
    int camera_delay_ms = 150;
    int cycles = 2;
    std::chrono::seconds idle{6};
    double spike_factor = 3.0;
    double recovery_factor = 1.5;
};

// Idle baseline, then full cycles with a slow camera; compares the
// recognize windows and the windows after them against the baseline.
Result camera_dip(const CameraOptions& opts, const Progress& progress = {});

struct LinearOptions {
    int repetitions = 50;
    double dx_mm = 100.0;
    double tol_mm = 0.01;
};

// home -> +dx along base x through the motion gateway, repeated.
Result linear_repeat(const LinearOptions& opts, const Progress& progress = {});

struct TrajectoryOptions {
    double tol_aligned_mm = 1e-3;
    double tol_internal_mm = 1e-6;
};

// Records one stacking cycle and cross-checks the TCP paths.
Result trajectory(const TrajectoryOptions& opts, const Progress& progress = {});

// Property suites, no network except the protocol suite's loopback emulator.
Result kinematics_suite(std::uint64_t seed = 2024, const Progress& progress = {});
Result protocol_suite(std::uint64_t seed = 99, int cases = 10000, const Progress& progress = {});
Result workcell_suite(std::uint64_t seed = 7, int sequences = 10000, const Progress& progress = {});

}  // namespace dtwin::bench
