#include "cli.hpp"

#include "dtwin/bench/bench.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>

namespace twinctl {

namespace {

struct BenchFlags {
    bool json = false;
    std::string report;
};

void progress_line(const std::string& msg) { std::cerr << "  " << msg << std::endl; }

int finish(const dtwin::bench::Result& r, const BenchFlags& f) {
    nlohmann::ordered_json out = {{"name", r.name}, {"pass", r.pass}, {"summary", r.summary}, {"detail", r.detail}};
    if (!f.report.empty()) std::ofstream(f.report) << out.dump(2) << "\n";
    if (f.json) {
        std::cout << out.dump() << std::endl;
    } else {
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.summary << std::endl;
    }
    return r.pass ? kOk : kFailed;
}

void print_refresh_table(const dtwin::bench::Result& r) { print_stream_table(r.detail.at("streams")); }

}  // namespace

void print_stream_table(const nlohmann::ordered_json& streams) {
    std::cout << std::left << std::setw(11) << "thread" << std::right << std::setw(9) << "windows" << std::setw(9)
              << "warm-up" << std::setw(16) << "mean period ms" << std::setw(15) << "max period ms" << std::setw(16)
              << "identity error" << "\n";
    int n = 1;
    for (const auto& s : streams) {
        std::cout << std::left << std::setw(11) << (std::to_string(n++) + " " + s.at("stream").get<std::string>())
                  << std::right << std::setw(9) << s.at("windows").get<std::size_t>() << std::setw(9)
                  << s.at("warm_up").get<std::size_t>() << std::setw(16) << std::fixed << std::setprecision(3)
                  << s.at("mean_period_ms").get<double>() << std::setw(15) << s.at("max_period_ms").get<double>()
                  << std::setw(16) << std::scientific << std::setprecision(1)
                  << s.at("worst_identity_error").get<double>() << std::defaultfloat << "\n";
    }
}

namespace {

CLI::App* bench_command(CLI::App& parent, const std::string& name, const std::string& help, BenchFlags& f) {
    auto* c = parent.add_subcommand(name, help);
    c->add_flag("--json", f.json, "Print the full report as one JSON object");
    c->add_option("--report", f.report, "Also write the full report to this file");
    return c;
}

}  // namespace

void add_bench_commands(CLI::App& app, int& exit_code) {
    auto* bench = app.add_subcommand("bench", "Loopback benchmarks and property suites");
    bench->require_subcommand(1);

    static BenchFlags flags;
    static dtwin::bench::RefreshOptions refresh;
    static int refresh_seconds = 60;
    auto* r = bench_command(*bench, "refresh", "Poll an idle emulator and print the per-thread period table", flags);
    r->add_option("--duration", refresh_seconds, "Seconds to poll")->capture_default_str()->check(CLI::PositiveNumber);
    r->add_option("--camera-delay-ms", refresh.camera_delay_ms, "Camera delay of the emulator")->capture_default_str();
    r->callback([&exit_code] {
        refresh.duration = std::chrono::seconds(refresh_seconds);
        const auto res = dtwin::bench::refresh(refresh, flags.json ? dtwin::bench::Progress{} : progress_line);
        if (!flags.json) print_refresh_table(res);
        exit_code = finish(res, flags);
    });

    static dtwin::bench::CameraOptions camera;
    static int idle_seconds = 6;
    auto* c = bench_command(*bench, "camera", "Refresh dip while the camera recognizes, over full cycles", flags);
    c->add_option("--camera-delay-ms", camera.camera_delay_ms, "Delay added to reads while recognizing")
        ->capture_default_str();
    c->add_option("--cycles", camera.cycles, "Stacking cycles to run")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--idle", idle_seconds, "Seconds of idle baseline")->capture_default_str()->check(CLI::PositiveNumber);
    c->callback([&exit_code] {
        camera.idle = std::chrono::seconds(idle_seconds);
        exit_code = finish(dtwin::bench::camera_dip(camera, flags.json ? dtwin::bench::Progress{} : progress_line), flags);
    });

    static dtwin::bench::LinearOptions linear;
    auto* l = bench_command(*bench, "linear", "Repeated home -> +dx linear moves through the gateway", flags);
    l->add_option("--repetitions", linear.repetitions, "Number of moves")->capture_default_str()->check(CLI::PositiveNumber);
    l->add_option("--dx", linear.dx_mm, "Offset along base x, mm")->capture_default_str();
    l->callback([&exit_code] {
        exit_code = finish(dtwin::bench::linear_repeat(linear, flags.json ? dtwin::bench::Progress{} : progress_line), flags);
    });

    static dtwin::bench::TrajectoryOptions traj;
    auto* t = bench_command(*bench, "trajectory", "Record one cycle and compare the TCP paths", flags);
    t->callback([&exit_code] {
        exit_code = finish(dtwin::bench::trajectory(traj, flags.json ? dtwin::bench::Progress{} : progress_line), flags);
    });

    static std::uint64_t seed = 0;
    static int cases = 10000;
    auto* k = bench_command(*bench, "kinematics", "Jacobian, FK oracle, IK convergence and step properties", flags);
    k->add_option("--seed", seed, "Random seed (0: default)");
    k->callback([&exit_code] {
        exit_code = finish(dtwin::bench::kinematics_suite(seed ? seed : 2024, flags.json ? dtwin::bench::Progress{} : progress_line),
                           flags);
    });

    auto* p = bench_command(*bench, "protocol", "Digest auth exchange and codec round trips", flags);
    p->add_option("--seed", seed, "Random seed (0: default)");
    p->add_option("--cases", cases, "Codec round-trip cases")->capture_default_str()->check(CLI::PositiveNumber);
    p->callback([&exit_code] {
        exit_code = finish(
            dtwin::bench::protocol_suite(seed ? seed : 99, cases, flags.json ? dtwin::bench::Progress{} : progress_line), flags);
    });

    static int sequences = 10000;
    auto* w = bench_command(*bench, "workcell", "Random action sequences against the workcell invariants", flags);
    w->add_option("--seed", seed, "Random seed (0: default)");
    w->add_option("--sequences", sequences, "Number of sequences")->capture_default_str()->check(CLI::PositiveNumber);
    w->callback([&exit_code] {
        exit_code = finish(
            dtwin::bench::workcell_suite(seed ? seed : 7, sequences, flags.json ? dtwin::bench::Progress{} : progress_line),
            flags);
    });
}

}  // namespace twinctl
