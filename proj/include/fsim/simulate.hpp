#pragma once

// Event-driven integration of Filippov solutions. Classical RK4 inside
// regions; surface crossings are located by bisection on the step; at a
// surface the one-sided normal velocities a+- decide between crossing and
// sliding. Sliding uses the unique tangential convex combination
// f_s = alpha f+ + (1-alpha) f-, alpha = a-/(a- - a+), which satisfies
// grad_g . f_s + dg/dt = 0 and lies in K[f] by construction.

#include "fsim/field.hpp"
#include "fsim/lyapunov.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace fsim {

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct IntegratorConfig {
    double step = 1e-3;            // base step h, time units
    double event_tol = 1e-9;       // event bisection tolerance, time units
    double surface_tol = 1e-9;     // on-surface band, state units
    long max_steps = 20'000'000;
    int sliding_check_period = 1;  // steps between sliding-exit checks

    void validate() const {
        if (step <= 0.0 || event_tol <= 0.0 || surface_tol <= 0.0)
            throw std::invalid_argument("integrator tolerances must be positive");
        if (event_tol >= step)
            throw std::invalid_argument("event tolerance must be smaller than the step");
        if (max_steps <= 0 || sliding_check_period <= 0)
            throw std::invalid_argument("step limits must be positive");
    }
};

enum class EventKind { Crossing, SlidingOnset, SlidingExit, NonUniqueBranch };

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::Crossing: return "crossing";
        case EventKind::SlidingOnset: return "sliding-onset";
        case EventKind::SlidingExit: return "sliding-exit";
        case EventKind::NonUniqueBranch: return "non-unique-branch";
    }
    return "?";
}

struct Event {
    double time = 0.0;
    EventKind kind = EventKind::Crossing;
    std::size_t surface = 0;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<RegionKey> regions;
    std::vector<std::vector<uint8_t>> sliding;  // per sample, per surface
    std::vector<Event> events;
    std::string field_id;
    int dimension = 0;

    std::size_t size() const { return times.size(); }

    bool sliding_any(std::size_t k) const {
        for (uint8_t f : sliding[k])
            if (f) return true;
        return false;
    }

    /// True when t lies within `window` of any recorded event time.
    bool near_event(double t, double window) const {
        for (const Event& e : events)
            if (std::fabs(t - e.time) <= window) return true;
        return false;
    }
};

namespace detail {

using FieldFn = std::function<void(std::span<const double>, double, Vec&)>;

inline void rk4_step(const FieldFn& f, std::span<const double> x, double t, double h, Vec& out) {
    const std::size_t n = x.size();
    Vec k1(n), k2(n), k3(n), k4(n), tmp(n);
    f(x, t, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
    f(tmp, t + 0.5 * h, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
    f(tmp, t + 0.5 * h, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
    f(tmp, t + h, k4);
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

} // namespace detail

namespace detail {

class Integrator {
public:
    Integrator(const PiecewiseField& field, const IntegratorConfig& cfg)
        : F_(field), cfg_(cfg) {}

    Trajectory run(std::span<const double> x0, double t0, double tf) {
        cfg_.validate();
        if (!(tf > t0)) throw std::invalid_argument("tf must exceed t0");
        if (x0.size() != static_cast<std::size_t>(F_.dimension()))
            throw std::invalid_argument("x0 has wrong dimension");

        traj_ = Trajectory{};
        traj_.field_id = F_.id();
        traj_.dimension = F_.dimension();

        x_.assign(x0.begin(), x0.end());
        t_ = t0;
        initialize_mode();
        record_sample();

        const double t_end_guard = tf - 1e-12 * std::max(1.0, std::fabs(tf));
        while (t_ < t_end_guard) {
            if (++steps_ > cfg_.max_steps)
                throw SimulationError("max step count exceeded at t=" + format_double(t_));
            const double h = std::min(cfg_.step, tf - t_);
            if (sliding_)
                sliding_step(h);
            else
                regular_step(h);
        }
        return std::move(traj_);
    }

private:
    // --- mode bookkeeping ---------------------------------------------------

    void initialize_mode() {
        RegionKey key = F_.region_of(x_, t_, cfg_.surface_tol);
        const std::size_t zeros = key.on_surface_count();
        if (zeros >= 2)
            throw SimulationError("initial state touches " + std::to_string(zeros) +
                                  " surfaces simultaneously; codimension >= 2 contact is not handled");
        if (zeros == 0) {
            sliding_ = false;
            key_ = key;
            return;
        }
        std::size_t s = 0;
        while (key.sign(s) != 0) ++s;
        classify_at_surface(key, s, /*arrival_sign=*/0);
    }

    // Decide slide/cross/stay at a point on surface s. `arrival_sign` is the
    // region sign we came from, or 0 when starting on the surface.
    void classify_at_surface(RegionKey key, std::size_t s, int arrival_sign) {
        RegionKey plus = key, minus = key;
        plus.set_sign(s, +1);
        minus.set_sign(s, -1);
        const auto& surf = F_.surfaces()[s];
        const Vec grad = surf.gradient(x_, t_, F_.params());
        const double gt = surf.g_t.evaluate(x_, t_, F_.params());
        const Vec f_plus = F_.piece_value(plus, x_, t_);
        const Vec f_minus = F_.piece_value(minus, x_, t_);
        const double a_plus = dot(grad, f_plus) + gt;
        const double a_minus = dot(grad, f_minus) + gt;

        if (a_minus >= 0.0 && a_plus <= 0.0) {
            // Both one-sided fields point toward the surface.
            sliding_ = true;
            sliding_surface_ = s;
            key_ = key;
            key_.set_sign(s, 0);
            push_event(EventKind::SlidingOnset, s);
            return;
        }
        sliding_ = false;
        if (a_minus > 0.0 && a_plus > 0.0) {
            key_ = plus;
            if (arrival_sign == -1) push_event(EventKind::Crossing, s);
            return;
        }
        if (a_minus < 0.0 && a_plus < 0.0) {
            key_ = minus;
            if (arrival_sign == +1) push_event(EventKind::Crossing, s);
            return;
        }
        // a- < 0 < a+: both sides point away; the solution is not unique.
        // Follow the arrival side (the + side when starting here) and say so.
        key_ = arrival_sign == -1 ? minus : plus;
        push_event(EventKind::NonUniqueBranch, s);
    }

    void push_event(EventKind kind, std::size_t surface) {
        if (!traj_.events.empty() && traj_.events.back().time > t_)
            throw SimulationError("event times not increasing");
        traj_.events.push_back({t_, kind, surface});
    }

    void record_sample() {
        traj_.times.push_back(t_);
        traj_.states.push_back(x_);
        traj_.regions.push_back(F_.region_of(x_, t_, cfg_.surface_tol));
        std::vector<uint8_t> flags(F_.surfaces().size(), 0);
        if (sliding_) flags[sliding_surface_] = 1;
        traj_.sliding.push_back(std::move(flags));
    }

    // --- regular (single region) stepping ------------------------------------

    FieldFn region_field(const RegionKey& key) const {
        const auto& exprs = F_.piece(key);
        const ParamMap& params = F_.params();
        return [&exprs, &params](std::span<const double> x, double t, Vec& out) {
            out.resize(exprs.size());
            for (std::size_t i = 0; i < exprs.size(); ++i) out[i] = exprs[i].evaluate(x, t, params);
        };
    }

    // Surface j has been left in the direction opposite its region sign when
    // g moves past the band on the wrong side.
    bool surface_triggered(std::size_t j, std::span<const double> x, double t) const {
        const double g = F_.surfaces()[j].value(x, t, F_.params());
        if (std::fabs(g) <= cfg_.surface_tol) return false;
        return (g > 0.0) != (key_.sign(j) > 0);
    }

    bool any_triggered(std::span<const double> x, double t, std::size_t skip,
                       std::size_t* which = nullptr) const {
        for (std::size_t j = 0; j < F_.surfaces().size(); ++j) {
            if (j == skip) continue;
            if (surface_triggered(j, x, t)) {
                if (which) *which = j;
                return true;
            }
        }
        return false;
    }

    void regular_step(double h) {
        const FieldFn f = region_field(key_);
        Vec x_end;
        rk4_step(f, x_, t_, h, x_end);
        std::size_t hit = 0;
        if (!any_triggered(x_end, t_ + h, npos, &hit)) {
            x_ = std::move(x_end);
            t_ += h;
            record_sample();
            return;
        }
        locate_and_handle_event(f, h, npos);
    }

    // Bisect the sub-step until the first trigger is bracketed within
    // event_tol, land there, project onto the surface, and reclassify.
    void locate_and_handle_event(const FieldFn& f, double h, std::size_t skip) {
        double lo = 0.0, hi = h;
        std::size_t surface = 0;
        Vec x_probe;
        while (hi - lo > cfg_.event_tol) {
            const double mid = 0.5 * (lo + hi);
            rk4_step(f, x_, t_, mid, x_probe);
            std::size_t which = 0;
            if (any_triggered(x_probe, t_ + mid, skip, &which)) {
                hi = mid;
                surface = which;
            } else {
                lo = mid;
            }
        }
        rk4_step(f, x_, t_, hi, x_probe);
        std::size_t which = surface;
        any_triggered(x_probe, t_ + hi, skip, &which);
        surface = which;

        x_ = std::move(x_probe);
        t_ += hi;
        project_onto_surface(surface);

        if (sliding_)
            throw SimulationError("contact with surface " + std::to_string(surface) +
                                  " while sliding on surface " + std::to_string(sliding_surface_) +
                                  " at t=" + format_double(t_) +
                                  "; codimension >= 2 sliding is not handled");
        const RegionKey here = F_.region_of(x_, t_, cfg_.surface_tol);
        if (here.on_surface_count() >= 2)
            throw SimulationError("simultaneous contact with " +
                                  std::to_string(here.on_surface_count()) +
                                  " surfaces at t=" + format_double(t_) +
                                  "; codimension >= 2 sliding is not handled");

        classify_at_surface(key_, surface, key_.sign(surface));
        record_sample();
    }

    void project_onto_surface(std::size_t s) {
        const auto& surf = F_.surfaces()[s];
        for (int it = 0; it < 3; ++it) {
            const double g = surf.value(x_, t_, F_.params());
            if (std::fabs(g) <= cfg_.surface_tol) return;
            const Vec grad = surf.gradient(x_, t_, F_.params());
            const double gg = dot(grad, grad);
            if (gg < 1e-30) return;  // degenerate normal; leave the point alone
            for (std::size_t i = 0; i < x_.size(); ++i) x_[i] -= g * grad[i] / gg;
        }
    }

    // --- sliding stepping -----------------------------------------------------

    struct SurfaceRates {
        double a_plus, a_minus, alpha;
    };

    SurfaceRates rates_at(std::size_t s, const RegionKey& base, std::span<const double> x,
                          double t) const {
        RegionKey plus = base, minus = base;
        plus.set_sign(s, +1);
        minus.set_sign(s, -1);
        const auto& surf = F_.surfaces()[s];
        const Vec grad = surf.gradient(x, t, F_.params());
        const double gt = surf.g_t.evaluate(x, t, F_.params());
        const double a_plus = dot(grad, F_.piece_value(plus, x, t)) + gt;
        const double a_minus = dot(grad, F_.piece_value(minus, x, t)) + gt;
        const double denom = a_minus - a_plus;
        const double alpha = std::fabs(denom) < 1e-14 ? 0.5 : a_minus / denom;
        return {a_plus, a_minus, alpha};
    }

    FieldFn sliding_field(std::size_t s, const RegionKey& base) const {
        RegionKey plus = base, minus = base;
        plus.set_sign(s, +1);
        minus.set_sign(s, -1);
        return [this, s, plus, minus, base](std::span<const double> x, double t, Vec& out) {
            const SurfaceRates r = rates_at(s, base, x, t);
            const double alpha = std::clamp(r.alpha, 0.0, 1.0);
            const Vec fp = F_.piece_value(plus, x, t);
            const Vec fm = F_.piece_value(minus, x, t);
            out.resize(fp.size());
            for (std::size_t i = 0; i < fp.size(); ++i)
                out[i] = alpha * fp[i] + (1.0 - alpha) * fm[i];
        };
    }

    void sliding_step(double h) {
        if (steps_ % cfg_.sliding_check_period == 0) {
            const SurfaceRates r = rates_at(sliding_surface_, key_, x_, t_);
            if (r.alpha < 0.0 || r.alpha > 1.0) {
                // Attraction lost: leave toward the side whose field now
                // points away from the surface.
                const std::size_t s = sliding_surface_;
                push_event(EventKind::SlidingExit, s);
                key_.set_sign(s, r.alpha > 1.0 ? +1 : -1);
                sliding_ = false;
                return;  // no time consumed; the next step is regular
            }
        }
        const FieldFn f = sliding_field(sliding_surface_, key_);
        Vec x_end;
        rk4_step(f, x_, t_, h, x_end);
        std::size_t hit = 0;
        if (any_triggered(x_end, t_ + h, sliding_surface_, &hit)) {
            locate_and_handle_event(f, h, sliding_surface_);
            return;
        }
        x_ = std::move(x_end);
        t_ += h;
        project_onto_surface(sliding_surface_);
        record_sample();
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    const PiecewiseField& F_;
    IntegratorConfig cfg_;
    Trajectory traj_;
    Vec x_;
    double t_ = 0.0;
    bool sliding_ = false;
    std::size_t sliding_surface_ = 0;
    RegionKey key_;
    long steps_ = 0;
};

} // namespace detail

/// Integrate a Filippov solution of the field from x0 over [t0, tf].
inline Trajectory integrate(const PiecewiseField& F, std::span<const double> x0, double t0,
                            double tf, const IntegratorConfig& cfg = {}) {
    return detail::Integrator(F, cfg).run(x0, t0, tf);
}

struct InclusionReport {
    std::size_t checked = 0;
    std::size_t compliant = 0;
    std::size_t excluded = 0;  // samples inside event windows
    double fraction = 1.0;
    double worst_distance = 0.0;
    double worst_time = 0.0;
};

/// Verifies dx/dt in K[f](x,t) along a trajectory: at interior samples away
/// from events, the finite-difference velocity must lie within `tol` of the
/// Filippov hull.
inline InclusionReport inclusion_check(const PiecewiseField& F, const Trajectory& traj,
                                       const IntegratorConfig& cfg, double tol = 1e-3) {
    if (traj.field_id != F.id())
        throw std::invalid_argument("trajectory was produced for a different field");
    InclusionReport report;
    const double window = 2.0 * cfg.step;
    Vec velocity(static_cast<std::size_t>(traj.dimension));
    for (std::size_t k = 1; k + 1 < traj.size(); ++k) {
        if (traj.near_event(traj.times[k], window)) {
            ++report.excluded;
            continue;
        }
        const double dt = traj.times[k + 1] - traj.times[k - 1];
        if (dt <= 0.0) continue;
        for (std::size_t i = 0; i < velocity.size(); ++i)
            velocity[i] = (traj.states[k + 1][i] - traj.states[k - 1][i]) / dt;
        const double dist =
            F.filippov_map(traj.states[k], traj.times[k], cfg.surface_tol).distance_to(velocity);
        ++report.checked;
        if (dist <= tol) {
            ++report.compliant;
        }
        if (dist > report.worst_distance) {
            report.worst_distance = dist;
            report.worst_time = traj.times[k];
        }
    }
    report.fraction = report.checked == 0
                          ? 1.0
                          : static_cast<double>(report.compliant) / static_cast<double>(report.checked);
    return report;
}

struct ConvergenceReport {
    std::vector<double> v;      // V(x(t_k), t_k)
    std::vector<double> w;      // W(x(t_k))
    std::vector<double> int_w;  // running trapezoid integral of W
    bool v_monotone = false;    // V non-increasing up to the slack
    double worst_increase = 0.0;
    bool integral_bounded = false;  // int W <= V(t0) + tol throughout
    double integral_final = 0.0;
    double tail_sup = 0.0;
    double tail_start_time = 0.0;
    bool w_converged = false;  // tail sup of W within tol of zero
    std::string note;
};

/// Convergence diagnostics along a trajectory: V monotonicity, the integral
/// bound int W <= V(x(t0), t0), and the tail supremum of W as the numerical
/// form of W(x(t)) -> 0.
inline ConvergenceReport barbalat_report(const Trajectory& traj, const PiecewiseScalar& V,
                                         const Expression& W, double tail_fraction = 0.25,
                                         double tol = 1e-4, double mono_slack = 1e-6) {
    if (traj.size() < 2) throw std::invalid_argument("trajectory too short");
    if (tail_fraction <= 0.0 || tail_fraction >= 1.0)
        throw std::invalid_argument("tail_fraction must lie in (0,1)");

    ConvergenceReport report;
    const std::size_t n = traj.size();
    report.v.resize(n);
    report.w.resize(n);
    report.int_w.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        report.v[k] = V.value(traj.states[k], traj.times[k]);
        report.w[k] = W.evaluate(traj.states[k], traj.times[k], V.params());
        if (k == 0) {
            report.int_w[k] = 0.0;
        } else {
            const double dt = traj.times[k] - traj.times[k - 1];
            report.int_w[k] = report.int_w[k - 1] + 0.5 * dt * (report.w[k] + report.w[k - 1]);
        }
    }

    report.worst_increase = 0.0;
    for (std::size_t k = 1; k < n; ++k)
        report.worst_increase = std::max(report.worst_increase, report.v[k] - report.v[k - 1]);
    report.v_monotone = report.worst_increase <= mono_slack;

    report.integral_bounded = true;
    for (std::size_t k = 0; k < n; ++k)
        if (report.int_w[k] > report.v[0] + tol) { report.integral_bounded = false; break; }
    report.integral_final = report.int_w.back();

    const double t0 = traj.times.front(), tf = traj.times.back();
    report.tail_start_time = tf - tail_fraction * (tf - t0);
    std::size_t tail_count = 0;
    double sup = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (traj.times[k] >= report.tail_start_time) {
            ++tail_count;
            sup = std::max(sup, report.w[k]);
        }
    }
    if (tail_count < 100)
        throw std::invalid_argument("tail window holds " + std::to_string(tail_count) +
                                    " samples; need at least 100");
    report.tail_sup = sup;
    report.w_converged = sup <= tol;
    report.note =
        "uniform continuity of W(x(t)) is assumed from confinement to a compact set, not verified";
    return report;
}

} // namespace fsim
