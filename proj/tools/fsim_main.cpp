// fsim: simulate Filippov solutions of piecewise-smooth systems and verify
// nonsmooth Lyapunov convergence certificates from scenario files.
//
// Exit codes: 0 all requested checks passed, 1 a check failed,
// 2 runtime or model error.

#include "fsim/fsim.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

namespace {

struct Overrides {
    double step = 0.0;
    double surface_tol = 0.0;
    double event_tol = 0.0;
    double tf = 0.0;
    int grid = 0;
    int sphere_samples = 0;
    std::string mode;
};

void apply(const Overrides& o, fsim::Scenario& scenario) {
    if (o.step > 0.0) scenario.sim.integrator.step = o.step;
    if (o.surface_tol > 0.0) scenario.sim.integrator.surface_tol = o.surface_tol;
    if (o.event_tol > 0.0) scenario.sim.integrator.event_tol = o.event_tol;
    if (o.tf > 0.0) scenario.sim.tf = o.tf;
    if (o.grid > 0) scenario.domain.samples_per_axis = o.grid;
    if (o.sphere_samples > 0) scenario.domain.sphere_samples = o.sphere_samples;
    scenario.sim.integrator.validate();
    scenario.domain.validate();
}

unsigned parse_mode(const std::string& text) {
    unsigned mode = 0;
    std::string tok;
    for (char c : text + ",") {
        if (c == ',' || c == ' ') {
            if (tok == "check1") mode |= fsim::kModeCheck1;
            else if (tok == "check2") mode |= fsim::kModeCheck2;
            else if (tok == "simulate") mode |= fsim::kModeSimulate;
            else if (tok == "all") mode |= fsim::kModeAll;
            else if (!tok.empty()) throw std::runtime_error("unknown mode '" + tok + "'");
            tok.clear();
        } else {
            tok += c;
        }
    }
    if (mode == 0) throw std::runtime_error("empty mode");
    return mode;
}

void print_summary(const fsim::RunReport& report) {
    if (report.trajectory)
        std::printf("trajectory: %zu samples, %zu events\n", report.trajectory->size(),
                    report.trajectory->events.size());
    if (report.convergence)
        std::printf("convergence: V monotone %s, int W = %.6g, tail sup W = %.3g (%s)\n",
                    report.convergence->v_monotone ? "yes" : "no",
                    report.convergence->integral_final, report.convergence->tail_sup,
                    report.convergence->w_converged ? "converged" : "not converged");
    if (report.inclusion)
        std::printf("inclusion: %.2f%% of %zu samples inside K[f]\n",
                    100.0 * report.inclusion->fraction, report.inclusion->checked);
    if (report.corollary2)
        std::printf("corollary2 certificate: %s\n", report.corollary2->pass ? "PASS" : "FAIL");
    if (report.corollary1)
        std::printf("corollary1 certificate: %s\n", report.corollary1->pass ? "PASS" : "FAIL");
}

int run_command(const std::string& scenario_path, const std::string& out_dir,
                const Overrides& overrides, unsigned forced_mode, unsigned mask) {
    fsim::Scenario scenario = fsim::load_scenario(scenario_path);
    apply(overrides, scenario);

    unsigned mode = scenario.mode;
    if (!overrides.mode.empty()) mode = parse_mode(overrides.mode);
    if (forced_mode) mode = forced_mode;
    mode &= mask ? mask : fsim::kModeAll;
    if (mode == 0) mode = mask;  // the subcommand's default when the scenario opts out

    const fsim::RunReport report = fsim::run_scenario(scenario, mode, out_dir);
    print_summary(report);
    return report.exit_status;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Filippov-solution simulator and nonsmooth Lyapunov certifier"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir = "fsim-out";
    Overrides overrides;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("scenario", scenario_path, "scenario file")->required();
        cmd->add_option("-o,--out", out_dir, "output directory");
        cmd->add_option("--step", overrides.step, "integrator base step");
        cmd->add_option("--surface-tol", overrides.surface_tol, "on-surface tolerance");
        cmd->add_option("--event-tol", overrides.event_tol, "event bisection tolerance");
        cmd->add_option("--tf", overrides.tf, "simulation end time");
        cmd->add_option("--grid", overrides.grid, "samples per axis for certification");
        cmd->add_option("--sphere-samples", overrides.sphere_samples, "sphere sample count");
    };

    CLI::App* check = app.add_subcommand("check", "verify the corollary hypotheses");
    add_common(check);
    check->add_option("--mode", overrides.mode, "check1, check2, or both (default: scenario mode)");

    CLI::App* simulate = app.add_subcommand("simulate", "integrate and write the trajectory");
    add_common(simulate);

    CLI::App* full = app.add_subcommand("report", "run the scenario's full pipeline");
    add_common(full);
    full->add_option("--mode", overrides.mode, "override the scenario mode");

    CLI11_PARSE(app, argc, argv);

    try {
        if (check->parsed())
            return run_command(scenario_path, out_dir, overrides, 0,
                               fsim::kModeCheck1 | fsim::kModeCheck2);
        if (simulate->parsed())
            return run_command(scenario_path, out_dir, overrides, fsim::kModeSimulate,
                               fsim::kModeSimulate);
        return run_command(scenario_path, out_dir, overrides, 0, fsim::kModeAll);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
