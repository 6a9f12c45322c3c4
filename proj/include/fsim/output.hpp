#pragma once

// File emission and pipeline orchestration. All numbers are written with 17
// significant digits so files round-trip doubles losslessly and identical
// runs produce byte-identical output.

#include "fsim/certify.hpp"
#include "fsim/scenario.hpp"
#include "fsim/simulate.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace fsim {

namespace detail {

inline std::string join_vec(std::span<const double> v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += format_double(v[i]);
    }
    return s;
}

} // namespace detail

/// Trajectory CSV: header t,x1..xn,region,sliding,V,W,intW.
inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj,
                                 const ConvergenceReport& conv) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "t";
    for (int i = 1; i <= traj.dimension; ++i) out << ",x" << i;
    out << ",region,sliding,V,W,intW\n";
    for (std::size_t k = 0; k < traj.size(); ++k) {
        out << detail::format_double(traj.times[k]);
        for (double xi : traj.states[k]) out << "," << detail::format_double(xi);
        out << "," << traj.regions[k].to_string();
        out << "," << (traj.sliding_any(k) ? 1 : 0);
        out << "," << detail::format_double(conv.v[k]);
        out << "," << detail::format_double(conv.w[k]);
        out << "," << detail::format_double(conv.int_w[k]);
        out << "\n";
    }
}

/// Plot-ready data: t, V, W columns.
inline void write_plot_data(const std::filesystem::path& path, const Trajectory& traj,
                            const ConvergenceReport& conv) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "# t V W\n";
    for (std::size_t k = 0; k < traj.size(); ++k)
        out << detail::format_double(traj.times[k]) << " " << detail::format_double(conv.v[k])
            << " " << detail::format_double(conv.w[k]) << "\n";
}

inline void write_certificate(const std::filesystem::path& path, const Certificate& cert,
                              const std::string& scenario_name) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "certificate:\n";
    out << "  kind: " << cert.kind << "\n";
    out << "  scenario: " << scenario_name << "\n";
    out << "  verdict: " << (cert.pass ? "PASS" : "FAIL") << "\n";
    out << "  r: " << detail::format_double(cert.r) << "\n";
    out << "  c: " << detail::format_double(cert.c) << "\n";
    out << "  sphere_min: " << detail::format_double(cert.sphere_min) << "\n";
    if (!cert.sphere_argmin.empty())
        out << "  sphere_argmin: " << detail::join_vec(cert.sphere_argmin) << "\n";
    out << "  grid_points: " << cert.grid_points << "\n";
    out << "  t_samples: " << cert.t_samples << "\n";
    out << "  tolerances:\n";
    out << "    surface_tol: " << detail::format_double(cert.tolerances.surface_tol) << "\n";
    out << "    xi_resolution: " << cert.tolerances.xi_resolution << "\n";
    out << "    vdot_tol: " << detail::format_double(cert.tolerances.vdot_tol) << "\n";
    out << "    traj_vdot_tol: " << detail::format_double(cert.tolerances.traj_vdot_tol) << "\n";
    out << "    bounds_tol: " << detail::format_double(cert.tolerances.bounds_tol) << "\n";
    out << "    regularity_tol: " << detail::format_double(cert.tolerances.regularity_tol) << "\n";
    out << "    safety: " << detail::format_double(cert.tolerances.safety) << "\n";
    for (const auto& h : cert.hypotheses) {
        out << "  hypothesis " << h.name << ":\n";
        out << "    pass: " << (h.pass ? "true" : "false") << "\n";
        out << "    margin: " << detail::format_double(h.margin) << "\n";
        if (!h.witness_x.empty()) {
            out << "    witness_x: " << detail::join_vec(h.witness_x) << "\n";
            out << "    witness_t: " << detail::format_double(h.witness_t) << "\n";
        }
        if (!h.detail.empty()) out << "    detail: " << h.detail << "\n";
    }
    if (!cert.notes.empty()) {
        out << "  notes:\n";
        for (const auto& n : cert.notes) out << "    - " << n << "\n";
    }
}

struct RunReport {
    std::optional<Certificate> corollary1;
    std::optional<Certificate> corollary2;
    std::optional<ConvergenceReport> convergence;
    std::optional<InclusionReport> inclusion;
    std::optional<Trajectory> trajectory;
    int exit_status = 0;  // 0 iff every requested check passed
};

/// Execute the requested pipeline and write trajectory.csv, plot.dat,
/// certificate_corollary{1,2}.txt, and run_report.txt into out_dir.
/// Model and integration failures propagate as exceptions; check failures
/// are reported through the exit status.
inline RunReport run_scenario(const Scenario& scenario, unsigned mode,
                              const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    RunReport report;

    const bool needs_trajectory = (mode & kModeSimulate) || (mode & kModeCheck1);
    if (needs_trajectory) {
        Trajectory traj = integrate(scenario.field, scenario.sim.x0, scenario.sim.t0,
                                    scenario.sim.tf, scenario.sim.integrator);
        report.convergence = barbalat_report(traj, scenario.lyapunov, scenario.triple.w,
                                             scenario.sim.tail_fraction, scenario.sim.conv_tol);
        report.inclusion =
            inclusion_check(scenario.field, traj, scenario.sim.integrator, scenario.sim.inclusion_tol);
        write_trajectory_csv(out_dir / "trajectory.csv", traj, *report.convergence);
        write_plot_data(out_dir / "plot.dat", traj, *report.convergence);
        report.trajectory = std::move(traj);
    }

    CertifyConfig cfg;
    cfg.safety = scenario.safety;
    if (mode & kModeCheck2) {
        report.corollary2 = check_corollary2(scenario.field, scenario.lyapunov, scenario.triple,
                                             scenario.domain, scenario.t_grid, cfg);
        write_certificate(out_dir / "certificate_corollary2.txt", *report.corollary2, scenario.name);
        if (!report.corollary2->pass) report.exit_status = 1;
    }
    if (mode & kModeCheck1) {
        report.corollary1 =
            check_corollary1(scenario.field, scenario.lyapunov, scenario.triple, scenario.domain,
                             *report.trajectory, scenario.sim.integrator, cfg);
        write_certificate(out_dir / "certificate_corollary1.txt", *report.corollary1, scenario.name);
        if (!report.corollary1->pass) report.exit_status = 1;
    }

    std::ofstream out(out_dir / "run_report.txt", std::ios::binary);
    out << "run:\n";
    out << "  scenario: " << scenario.name << "\n";
    out << "  mode:";
    if (mode & kModeCheck1) out << " check1";
    if (mode & kModeCheck2) out << " check2";
    if (mode & kModeSimulate) out << " simulate";
    out << "\n";
    out << "  field_validation: " << (scenario.field_validation.pass ? "pass" : "fail") << "\n";
    out << "  max_piece_norm: " << detail::format_double(scenario.field_validation.max_piece_norm)
        << "\n";
    if (report.trajectory) {
        const Trajectory& traj = *report.trajectory;
        out << "  trajectory:\n";
        out << "    samples: " << traj.size() << "\n";
        out << "    events: " << traj.events.size() << "\n";
        for (const Event& e : traj.events)
            out << "    - t: " << detail::format_double(e.time) << "  kind: " << to_string(e.kind)
                << "  surface: " << e.surface << "\n";
        out << "    final_state: " << detail::join_vec(traj.states.back()) << "\n";
    }
    if (report.convergence) {
        const ConvergenceReport& c = *report.convergence;
        out << "  convergence:\n";
        out << "    v_monotone: " << (c.v_monotone ? "true" : "false") << "\n";
        out << "    worst_increase: " << detail::format_double(c.worst_increase) << "\n";
        out << "    integral_of_w: " << detail::format_double(c.integral_final) << "\n";
        out << "    integral_bounded: " << (c.integral_bounded ? "true" : "false") << "\n";
        out << "    tail_sup_of_w: " << detail::format_double(c.tail_sup) << "\n";
        out << "    w_converged: " << (c.w_converged ? "true" : "false") << "\n";
        out << "    note: " << c.note << "\n";
    }
    if (report.inclusion) {
        const InclusionReport& i = *report.inclusion;
        out << "  inclusion:\n";
        out << "    checked: " << i.checked << "\n";
        out << "    compliant_fraction: " << detail::format_double(i.fraction) << "\n";
        out << "    worst_distance: " << detail::format_double(i.worst_distance) << "\n";
    }
    if (report.corollary2)
        out << "  corollary2: " << (report.corollary2->pass ? "PASS" : "FAIL") << "\n";
    if (report.corollary1)
        out << "  corollary1: " << (report.corollary1->pass ? "PASS" : "FAIL") << "\n";
    out << "  exit_status: " << report.exit_status << "\n";
    return report;
}

} // namespace fsim
