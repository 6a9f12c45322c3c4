#pragma once

// Numerical certification of the nonsmooth LaSalle-Yoshizawa hypotheses:
// pointwise over a sampled domain (all Filippov solutions) or along a single
// simulated trajectory. Verification is sampling-based; certificates record
// densities and tolerances and claim only that no violation was found at
// that resolution.

#include "fsim/field.hpp"
#include "fsim/lyapunov.hpp"
#include "fsim/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace fsim {

/// Verification domain: a ball of radius r inside the axis-aligned box D,
/// with grid and sphere sampling densities.
struct DomainSpec {
    Box box;
    double radius = 1.0;
    int samples_per_axis = 64;
    int sphere_samples = 128;

    void validate() const {
        if (box.bounds.empty()) throw std::invalid_argument("domain box is empty");
        if (!box.contains_origin()) throw std::invalid_argument("domain box must contain the origin");
        if (radius <= 0.0) throw std::invalid_argument("radius must be positive");
        if (radius > box.inscribed_radius())
            throw std::invalid_argument("ball of radius r must fit inside the box");
        if (samples_per_axis < 8) throw std::invalid_argument("need at least 8 samples per axis");
        if (sphere_samples < 8) throw std::invalid_argument("need at least 8 sphere samples");
    }

    std::vector<Vec> grid() const { return PiecewiseField::grid_points(box, samples_per_axis); }

    /// Deterministic samples of the sphere ||x|| = radius.
    std::vector<Vec> sphere() const {
        const int n = box.dimension();
        std::vector<Vec> pts;
        if (n == 1) {
            pts.push_back({-radius});
            pts.push_back({radius});
            return pts;
        }
        if (n == 2) {
            pts.reserve(static_cast<std::size_t>(sphere_samples));
            for (int k = 0; k < sphere_samples; ++k) {
                const double a = 2.0 * M_PI * static_cast<double>(k) / sphere_samples;
                pts.push_back({radius * std::cos(a), radius * std::sin(a)});
            }
            return pts;
        }
        std::mt19937 rng(97531u);
        std::normal_distribution<double> gauss(0.0, 1.0);
        pts.reserve(static_cast<std::size_t>(sphere_samples));
        while (pts.size() < static_cast<std::size_t>(sphere_samples)) {
            Vec x(static_cast<std::size_t>(n));
            for (auto& c : x) c = gauss(rng);
            const double nn = norm(x);
            if (nn < 1e-12) continue;
            for (auto& c : x) c *= radius / nn;
            pts.push_back(std::move(x));
        }
        return pts;
    }
};

struct CertifyConfig {
    double surface_tol = 1e-9;
    int xi_resolution = 32;
    double vdot_tol = 1e-6;        // grid check of sup Vdot <= -W
    double traj_vdot_tol = 1e-5;   // finite-difference check along a trajectory
    double bounds_tol = 1e-9;
    double definiteness_ball = 1e-3;
    double regularity_tol = 1e-6;
    double safety = 0.9;           // fraction of the sphere minimum used for c
    double event_window_steps = 2.0;  // exclusion half-width in units of the step
};

struct HypothesisResult {
    std::string name;
    bool pass = true;
    double margin = 0.0;  // worst slack; negative slack on a fail
    Vec witness_x;
    double witness_t = 0.0;
    std::string detail;
};

struct Certificate {
    std::string kind;  // "corollary1" or "corollary2"
    std::vector<HypothesisResult> hypotheses;
    double r = 0.0;
    double c = 0.0;
    double sphere_min = 0.0;
    Vec sphere_argmin;
    std::size_t grid_points = 0;
    std::size_t t_samples = 0;
    CertifyConfig tolerances;
    bool pass = false;
    std::vector<std::string> notes;

    const HypothesisResult* find(std::string_view name) const {
        for (const auto& h : hypotheses)
            if (h.name == name) return &h;
        return nullptr;
    }

    void finalize() {
        pass = true;
        for (const auto& h : hypotheses) pass = pass && h.pass;
    }
};

struct SublevelConstant {
    double c = 0.0;
    double sphere_min = 0.0;
    Vec argmin;
    bool degenerate = false;  // sampled sphere minimum was not positive
};

/// c = safety * min_{||x||=r} W1(x), sampled. The strict inequality
/// c < min W1 on the sphere demanded by the sublevel construction is kept by
/// the safety fraction.
inline SublevelConstant compute_c(const Expression& w1, const DomainSpec& spec,
                                  double safety = 0.9, const ParamMap& params = {}) {
    spec.validate();
    if (safety <= 0.0 || safety >= 1.0) throw std::invalid_argument("safety must lie in (0,1)");
    SublevelConstant out;
    out.sphere_min = std::numeric_limits<double>::infinity();
    for (const Vec& x : spec.sphere()) {
        const double v = w1.evaluate(x, 0.0, params);
        if (v < out.sphere_min) {
            out.sphere_min = v;
            out.argmin = x;
        }
    }
    if (out.sphere_min <= 0.0) {
        out.degenerate = true;
        out.c = 0.0;
        return out;
    }
    out.c = safety * out.sphere_min;
    return out;
}

/// x0 lies in the certified initial set {x in B_r | W2(x) <= c}.
inline bool initial_set_membership(std::span<const double> x0, const Expression& w2, double c,
                                   double r, const ParamMap& params = {}) {
    if (norm(x0) >= r) return false;  // open ball
    return w2.evaluate(x0, 0.0, params) <= c;
}

struct ContainmentReport {
    bool pass = true;
    std::vector<HypothesisResult> links;  // the three implications of the chain
};

/// Sampled containment chain {W2 <= c} subset {V <= c} subset {W1 <= c}
/// subset B_r that traps solutions in the sublevel construction.
inline ContainmentReport containment_check(const PiecewiseScalar& V, const ComparisonTriple& triple,
                                           double c, const DomainSpec& spec,
                                           std::span<const double> t_grid,
                                           const CertifyConfig& cfg = {}) {
    spec.validate();
    ContainmentReport report;
    HypothesisResult w2_to_v{"w2_sublevel_inside_v_sublevel", true,
                             std::numeric_limits<double>::infinity(), {}, 0.0,
                             "W2(x) <= c implies V(x,t) <= c"};
    HypothesisResult v_to_w1{"v_sublevel_inside_w1_sublevel", true,
                             std::numeric_limits<double>::infinity(), {}, 0.0,
                             "V(x,t) <= c implies W1(x) <= c"};
    HypothesisResult w1_to_ball{"w1_sublevel_inside_ball", true,
                                std::numeric_limits<double>::infinity(), {}, 0.0,
                                "W1(x) <= c implies ||x|| < r"};
    const ParamMap& params = V.params();
    for (const Vec& x : spec.grid()) {
        const double w1 = triple.w1.evaluate(x, 0.0, params);
        const double w2 = triple.w2.evaluate(x, 0.0, params);
        for (double t : t_grid) {
            const double v = V.value(x, t, cfg.surface_tol);
            if (w2 <= c) {
                const double slack = c - v;
                if (slack < w2_to_v.margin) {
                    w2_to_v.margin = slack;
                    w2_to_v.witness_x = x;
                    w2_to_v.witness_t = t;
                }
                if (slack < -cfg.bounds_tol) w2_to_v.pass = false;
            }
            if (v <= c) {
                const double slack = c - w1;
                if (slack < v_to_w1.margin) {
                    v_to_w1.margin = slack;
                    v_to_w1.witness_x = x;
                    v_to_w1.witness_t = t;
                }
                if (slack < -cfg.bounds_tol) v_to_w1.pass = false;
            }
        }
        if (w1 <= c) {
            const double slack = spec.radius - norm(x);
            if (slack < w1_to_ball.margin) {
                w1_to_ball.margin = slack;
                w1_to_ball.witness_x = x;
                w1_to_ball.witness_t = 0.0;
            }
            if (slack <= 0.0) w1_to_ball.pass = false;
        }
    }
    report.links = {w2_to_v, v_to_w1, w1_to_ball};
    for (const auto& l : report.links) report.pass = report.pass && l.pass;
    return report;
}

namespace detail {

inline HypothesisResult definiteness_hypothesis(std::string name, const Expression& w,
                                                const Box& box, Definiteness kind,
                                                const ParamMap& params, const CertifyConfig& cfg,
                                                int samples_per_axis) {
    const DefinitenessReport rep =
        check_definiteness(w, box, kind, params, samples_per_axis, cfg.definiteness_ball);
    HypothesisResult h;
    h.name = std::move(name);
    h.pass = rep.pass;
    h.margin = rep.min_off_ball == std::numeric_limits<double>::infinity() ? 0.0 : rep.min_off_ball;
    h.witness_x = rep.witness;
    h.detail = rep.pass ? "sampled definiteness holds" : rep.detail;
    return h;
}

inline HypothesisResult regularity_hypothesis(const PiecewiseScalar& V, const DomainSpec& spec,
                                              const CertifyConfig& cfg) {
    // Finitely many points and directions: origin plus a few grid points,
    // coordinate and diagonal directions.
    const int n = spec.box.dimension();
    std::vector<Vec> dirs;
    for (int i = 0; i < n; ++i) {
        Vec e(static_cast<std::size_t>(n), 0.0);
        e[static_cast<std::size_t>(i)] = 1.0;
        dirs.push_back(e);
        e[static_cast<std::size_t>(i)] = -1.0;
        dirs.push_back(e);
    }
    Vec diag(static_cast<std::size_t>(n), 1.0 / std::sqrt(static_cast<double>(n)));
    dirs.push_back(diag);

    std::vector<Vec> points;
    points.push_back(Vec(static_cast<std::size_t>(n), 0.0));
    std::mt19937 rng(777u);
    for (int k = 0; k < 6; ++k) {
        Vec x(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const auto& [lo, hi] = spec.box.bounds[static_cast<std::size_t>(i)];
            std::uniform_real_distribution<double> u(lo, hi);
            x[static_cast<std::size_t>(i)] = 0.5 * u(rng);  // stay inside the box
        }
        points.push_back(std::move(x));
    }

    HypothesisResult h;
    h.name = "lyapunov_regular_sampled";
    h.margin = std::numeric_limits<double>::infinity();
    for (const Vec& x : points) {
        const RegularityReport rep = check_regularity(V, x, 0.0, dirs, cfg.regularity_tol);
        for (const auto& d : rep.directions) {
            const double gap = std::fabs(d.right_derivative - d.generalized_derivative);
            const double slack = cfg.regularity_tol - gap;
            if (slack < h.margin) {
                h.margin = slack;
                h.witness_x = x;
            }
            if (d.verdict == RegularityVerdict::NotRegular) h.pass = false;
            if (d.verdict == RegularityVerdict::Inconclusive) h.pass = false;
        }
    }
    h.detail = h.pass ? "regular at all sampled points and directions"
                      : "regularity failed or was inconclusive at a sampled point";
    return h;
}

inline std::vector<std::pair<Vec, double>> grid_time_samples(const DomainSpec& spec,
                                                             std::span<const double> t_grid) {
    std::vector<std::pair<Vec, double>> samples;
    for (const Vec& x : spec.grid())
        for (double t : t_grid) samples.emplace_back(x, t);
    return samples;
}

} // namespace detail

/// Pointwise certification: every hypothesis of the all-solutions corollary
/// is sampled over the domain grid and t grid. A passing certificate states
/// that every Filippov solution starting in {W2 <= c} stays in B_r and
/// drives W to zero -- at the recorded sampling resolution.
inline Certificate check_corollary2(const PiecewiseField& F, const PiecewiseScalar& V,
                                    const ComparisonTriple& triple, const DomainSpec& spec,
                                    std::span<const double> t_grid, const CertifyConfig& cfg = {}) {
    spec.validate();
    if (!V.smooth_in_x())
        throw std::invalid_argument("the pointwise corollary requires V continuously differentiable in x");
    if (t_grid.empty()) throw std::invalid_argument("t_grid must be nonempty");

    Certificate cert;
    cert.kind = "corollary2";
    cert.r = spec.radius;
    cert.tolerances = cfg;
    cert.t_samples = t_grid.size();

    // f(0,t) uniformly bounded and pieces declared everywhere reachable.
    {
        const FieldValidationReport rep = F.validate(spec.box, t_grid, {16, cfg.surface_tol, 1e6});
        HypothesisResult h;
        h.name = "field_origin_bounded";
        h.pass = rep.pass;
        h.margin = rep.origin_bound - rep.max_origin_hull_radius;
        h.detail = "max hull radius of K[f](0,t) over the t grid: " +
                   detail::format_double(rep.max_origin_hull_radius);
        if (!rep.pass && !rep.findings.empty()) {
            h.witness_x = rep.findings.front().x;
            h.witness_t = rep.findings.front().t;
            h.detail = rep.findings.front().message;
        }
        cert.hypotheses.push_back(std::move(h));
    }

    cert.hypotheses.push_back(detail::definiteness_hypothesis(
        "w1_positive_definite", triple.w1, spec.box, Definiteness::PositiveDefinite, V.params(),
        cfg, spec.samples_per_axis));
    cert.hypotheses.push_back(detail::definiteness_hypothesis(
        "w2_positive_definite", triple.w2, spec.box, Definiteness::PositiveDefinite, V.params(),
        cfg, spec.samples_per_axis));
    cert.hypotheses.push_back(detail::definiteness_hypothesis(
        "w_positive_semidefinite", triple.w, spec.box, Definiteness::PositiveSemiDefinite,
        V.params(), cfg, spec.samples_per_axis));

    cert.hypotheses.push_back(detail::regularity_hypothesis(V, spec, cfg));

    const auto samples = detail::grid_time_samples(spec, t_grid);
    cert.grid_points = spec.grid().size();

    // W1 <= V <= W2 on the sampled domain.
    {
        const BoundsReport rep = check_bounds(V, triple, samples, cfg.bounds_tol);
        HypothesisResult h;
        h.name = "value_bounds";
        h.pass = rep.pass;
        h.margin = std::min(rep.worst_lower_margin, rep.worst_upper_margin);
        if (!rep.violations.empty()) {
            h.witness_x = rep.violations.front().x;
            h.witness_t = rep.violations.front().t;
        }
        h.detail = "worst lower margin " + detail::format_double(rep.worst_lower_margin) +
                   ", worst upper margin " + detail::format_double(rep.worst_upper_margin);
        cert.hypotheses.push_back(std::move(h));
    }

    // sup Vdot(x,t) <= -W(x) pointwise; an empty set satisfies vacuously.
    {
        HypothesisResult h;
        h.name = "derivative_bound";
        h.margin = std::numeric_limits<double>::infinity();
        std::size_t vacuous = 0;
        for (const auto& [x, t] : samples) {
            const Interval vdot =
                setvalued_derivative(V, F, x, t, cfg.surface_tol, cfg.xi_resolution);
            if (vdot.empty()) {
                ++vacuous;
                continue;
            }
            const double wx = triple.w.evaluate(x, t, V.params());
            const double slack = -wx - vdot.hi;
            if (slack < h.margin) {
                h.margin = slack;
                h.witness_x = x;
                h.witness_t = t;
            }
        }
        h.pass = h.margin >= -cfg.vdot_tol;
        h.detail = "worst slack of -W - sup Vdot over the grid" +
                   (vacuous ? " (" + std::to_string(vacuous) + " empty-set samples)" : std::string{});
        cert.hypotheses.push_back(std::move(h));
    }

    // r and c of the sublevel construction.
    const SublevelConstant cc = compute_c(triple.w1, spec, cfg.safety, V.params());
    cert.c = cc.c;
    cert.sphere_min = cc.sphere_min;
    cert.sphere_argmin = cc.argmin;
    {
        HypothesisResult h;
        h.name = "sublevel_constant";
        h.pass = !cc.degenerate;
        h.margin = cc.sphere_min - cc.c;
        h.witness_x = cc.argmin;
        h.detail = cc.degenerate ? "W1 is not positive on the sphere ||x|| = r"
                                 : "c = safety * min W1 on the sphere";
        cert.hypotheses.push_back(std::move(h));
    }

    if (!cc.degenerate) {
        const ContainmentReport rep = containment_check(V, triple, cc.c, spec, t_grid, cfg);
        for (const auto& l : rep.links) cert.hypotheses.push_back(l);
    }

    cert.notes.push_back("sampled verification: no violation found at the recorded resolution");
    cert.notes.push_back("regularity was tested along finitely many directions only");
    cert.finalize();
    return cert;
}

/// Certification along one simulated trajectory: the almost-everywhere
/// derivative bound is checked with central differences outside exclusion
/// windows around detected events, together with the value bounds, initial
/// set membership, and confinement to B_r.
inline Certificate check_corollary1(const PiecewiseField& F, const PiecewiseScalar& V,
                                    const ComparisonTriple& triple, const DomainSpec& spec,
                                    const Trajectory& traj, const IntegratorConfig& icfg,
                                    const CertifyConfig& cfg = {}) {
    spec.validate();
    if (traj.field_id != F.id())
        throw std::invalid_argument("trajectory was produced for a different field");
    if (traj.size() < 3) throw std::invalid_argument("trajectory too short");

    Certificate cert;
    cert.kind = "corollary1";
    cert.r = spec.radius;
    cert.tolerances = cfg;
    cert.grid_points = traj.size();
    cert.t_samples = traj.size();

    const std::vector<double> t_grid_default{traj.times.front(), traj.times.back()};
    {
        const FieldValidationReport rep = F.validate(spec.box, t_grid_default, {16, cfg.surface_tol, 1e6});
        HypothesisResult h;
        h.name = "field_origin_bounded";
        h.pass = rep.pass;
        h.margin = rep.origin_bound - rep.max_origin_hull_radius;
        h.detail = "max hull radius of K[f](0,t) at the horizon endpoints: " +
                   detail::format_double(rep.max_origin_hull_radius);
        cert.hypotheses.push_back(std::move(h));
    }

    cert.hypotheses.push_back(detail::definiteness_hypothesis(
        "w1_positive_definite", triple.w1, spec.box, Definiteness::PositiveDefinite, V.params(),
        cfg, spec.samples_per_axis));
    cert.hypotheses.push_back(detail::definiteness_hypothesis(
        "w2_positive_definite", triple.w2, spec.box, Definiteness::PositiveDefinite, V.params(),
        cfg, spec.samples_per_axis));
    cert.hypotheses.push_back(detail::definiteness_hypothesis(
        "w_positive_semidefinite", triple.w, spec.box, Definiteness::PositiveSemiDefinite,
        V.params(), cfg, spec.samples_per_axis));
    cert.hypotheses.push_back(detail::regularity_hypothesis(V, spec, cfg));

    const SublevelConstant cc = compute_c(triple.w1, spec, cfg.safety, V.params());
    cert.c = cc.c;
    cert.sphere_min = cc.sphere_min;
    cert.sphere_argmin = cc.argmin;
    {
        HypothesisResult h;
        h.name = "sublevel_constant";
        h.pass = !cc.degenerate;
        h.margin = cc.sphere_min - cc.c;
        h.witness_x = cc.argmin;
        h.detail = cc.degenerate ? "W1 is not positive on the sphere ||x|| = r"
                                 : "c = safety * min W1 on the sphere";
        cert.hypotheses.push_back(std::move(h));
    }

    // x(t0) in {x in B_r | W2(x) <= c}.
    {
        HypothesisResult h;
        h.name = "initial_membership";
        const Vec& x0 = traj.states.front();
        const double w2 = triple.w2.evaluate(x0, traj.times.front(), V.params());
        h.pass = !cc.degenerate && initial_set_membership(x0, triple.w2, cc.c, spec.radius, V.params());
        h.margin = std::min(cc.c - w2, spec.radius - norm(x0));
        h.witness_x = x0;
        h.witness_t = traj.times.front();
        h.detail = "W2(x0) = " + detail::format_double(w2) + ", c = " + detail::format_double(cc.c);
        cert.hypotheses.push_back(std::move(h));
    }

    // ||x(t)|| < r throughout.
    {
        HypothesisResult h;
        h.name = "confinement";
        h.margin = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < traj.size(); ++k) {
            const double slack = spec.radius - norm(traj.states[k]);
            if (slack < h.margin) {
                h.margin = slack;
                h.witness_x = traj.states[k];
                h.witness_t = traj.times[k];
            }
        }
        h.pass = h.margin > 0.0;
        h.detail = "min of r - ||x(t)|| along the trajectory";
        cert.hypotheses.push_back(std::move(h));
    }

    // W1 <= V <= W2 along the trajectory.
    {
        std::vector<std::pair<Vec, double>> samples;
        samples.reserve(traj.size());
        for (std::size_t k = 0; k < traj.size(); ++k) samples.emplace_back(traj.states[k], traj.times[k]);
        const BoundsReport rep = check_bounds(V, triple, samples, cfg.bounds_tol);
        HypothesisResult h;
        h.name = "value_bounds_on_trajectory";
        h.pass = rep.pass;
        h.margin = std::min(rep.worst_lower_margin, rep.worst_upper_margin);
        if (!rep.violations.empty()) {
            h.witness_x = rep.violations.front().x;
            h.witness_t = rep.violations.front().t;
        }
        h.detail = "worst lower margin " + detail::format_double(rep.worst_lower_margin) +
                   ", worst upper margin " + detail::format_double(rep.worst_upper_margin);
        cert.hypotheses.push_back(std::move(h));
    }

    // dV/dt <= -W(x) a.e.: central differences outside event windows.
    {
        HypothesisResult h;
        h.name = "derivative_bound_on_trajectory";
        h.margin = std::numeric_limits<double>::infinity();
        const double window = cfg.event_window_steps * icfg.step;
        std::size_t checked = 0;
        for (std::size_t k = 1; k + 1 < traj.size(); ++k) {
            if (traj.near_event(traj.times[k], window)) continue;
            const double dt = traj.times[k + 1] - traj.times[k - 1];
            if (dt <= 0.0) continue;
            const double dv = (V.value(traj.states[k + 1], traj.times[k + 1]) -
                               V.value(traj.states[k - 1], traj.times[k - 1])) /
                              dt;
            const double wx = triple.w.evaluate(traj.states[k], traj.times[k], V.params());
            const double slack = -wx - dv;
            ++checked;
            if (slack < h.margin) {
                h.margin = slack;
                h.witness_x = traj.states[k];
                h.witness_t = traj.times[k];
            }
        }
        h.pass = checked > 0 && h.margin >= -cfg.traj_vdot_tol;
        h.detail = "worst slack of -W - dV/dt over " + std::to_string(checked) +
                   " samples outside event windows";
        cert.hypotheses.push_back(std::move(h));
    }

    cert.notes.push_back("sampled verification: no violation found at the recorded resolution");
    cert.notes.push_back("regularity was tested along finitely many directions only");
    cert.notes.push_back(
        "the a.e. derivative bound excludes windows of half-width " +
        detail::format_double(cfg.event_window_steps * icfg.step) + " around detected events");
    cert.finalize();
    return cert;
}

} // namespace fsim
