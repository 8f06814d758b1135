#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <stdexcept>
#include <string>

namespace twinctl {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailed = 1;
inline constexpr int kUsage = 2;

// A command ran but did not achieve its goal (exit 1).
class CommandFailed : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Set by SIGINT/SIGTERM.
extern std::atomic<bool> g_stop;

// Sleeps until a signal arrives or `seconds` elapse (<= 0: forever).
void wait_for_stop(double seconds = 0);

void add_bench_commands(CLI::App& app, int& exit_code);

// Per-thread refresh table from bench::to_json(StreamSummary) rows.
void print_stream_table(const nlohmann::ordered_json& streams);

}  // namespace twinctl
