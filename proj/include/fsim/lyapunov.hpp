#pragma once

// Piecewise-smooth Lyapunov candidates: Clarke generalized gradients from
// per-piece limit gradients, numerical directional derivatives with an
// explicit convergence test, a regularity classifier, and the set-valued
// derivative obtained by intersecting xi^T (K[f]; 1) over the gradient set.

#include "fsim/convex.hpp"
#include "fsim/expr.hpp"
#include "fsim/field.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace fsim {

namespace detail {

struct ScalarPiece {
    Expression value;
    std::vector<Expression> grad;
    Expression d_t;
};

} // namespace detail

struct ContinuityReport {
    bool pass = true;
    double worst_gap = 0.0;
    Vec witness_x;
    double witness_t = 0.0;
};

/// Piecewise-smooth scalar V(x,t) with its own surface list (independent of
/// any field's). Per-piece gradients and time partials are exact symbolic
/// derivatives. The non-differentiability set is the union of the surfaces.
class PiecewiseScalar {
public:
    PiecewiseScalar(int dimension, std::vector<SwitchingSurface> surfaces,
                    std::map<RegionKey, Expression> pieces, ParamMap params = {})
        : dimension_(dimension), surfaces_(std::move(surfaces)), params_(std::move(params)) {
        if (dimension_ < 1) throw ModelError("candidate dimension must be positive");
        if (pieces.empty()) throw ModelError("candidate needs at least one piece");
        for (auto& [key, expr] : pieces) {
            if (key.size() != surfaces_.size())
                throw ModelError("candidate region key '" + key.to_string() + "' has wrong arity");
            if (!key.is_open())
                throw ModelError("candidate piece keys must be open sign patterns");
            detail::ScalarPiece piece;
            piece.value = expr;
            for (int i = 0; i < dimension_; ++i) piece.grad.push_back(expr.d_state(i));
            piece.d_t = expr.d_time();
            pieces_.emplace(key, std::move(piece));
        }
    }

    /// Candidate with a single smooth piece (continuously differentiable in x).
    static PiecewiseScalar smooth(Expression v, int dimension, ParamMap params = {}) {
        std::map<RegionKey, Expression> pieces;
        pieces.emplace(RegionKey{}, std::move(v));
        return PiecewiseScalar(dimension, {}, std::move(pieces), std::move(params));
    }

    int dimension() const { return dimension_; }
    const std::vector<SwitchingSurface>& surfaces() const { return surfaces_; }
    const ParamMap& params() const { return params_; }

    /// True when V has one global piece, i.e. is smooth in x. The corollaries
    /// require this of V; |x|-style candidates are for the analysis toolkit.
    bool smooth_in_x() const { return surfaces_.empty(); }

    RegionKey region_of(std::span<const double> x, double t, double surface_tol = 1e-9) const {
        std::vector<int8_t> signs(surfaces_.size());
        for (std::size_t i = 0; i < surfaces_.size(); ++i) {
            const double g = surfaces_[i].value(x, t, params_);
            signs[i] = std::fabs(g) <= surface_tol ? int8_t{0} : (g > 0.0 ? int8_t{1} : int8_t{-1});
        }
        return RegionKey(std::move(signs));
    }

    double value(std::span<const double> x, double t, double surface_tol = 1e-9) const {
        const RegionKey key = region_of(x, t, surface_tol);
        // On a surface the adjacent pieces agree (continuity), so any
        // completion gives the value.
        const RegionKey use = key.is_open() ? key : key.completions().front();
        auto it = pieces_.find(use);
        if (it == pieces_.end())
            throw ModelError("no candidate piece for region '" + use.to_string() + "'");
        return it->second.value.evaluate(x, t, params_);
    }

    /// Clarke generalized gradient at (x,t) as a subset of R^{n+1}: the
    /// convex hull of (grad_x V_R, d_t V_R) over the adjacent pieces. The
    /// time partial rides along as the last coordinate so the (K[f]; 1)
    /// augmentation of the chain rule applies literally.
    ConvexSet clarke_gradient(std::span<const double> x, double t, double surface_tol = 1e-9) const {
        const RegionKey key = region_of(x, t, surface_tol);
        std::vector<Vec> vertices;
        for (const RegionKey& adjacent : key.completions()) {
            auto it = pieces_.find(adjacent);
            if (it == pieces_.end())
                throw ModelError("no candidate piece for region '" + adjacent.to_string() + "'");
            Vec v(static_cast<std::size_t>(dimension_) + 1);
            for (int i = 0; i < dimension_; ++i) v[static_cast<std::size_t>(i)] = it->second.grad[static_cast<std::size_t>(i)].evaluate(x, t, params_);
            v.back() = it->second.d_t.evaluate(x, t, params_);
            bool duplicate = false;
            for (const auto& w : vertices) {
                double diff = 0.0, scale = 0.0;
                for (std::size_t i = 0; i < v.size(); ++i) {
                    diff = std::max(diff, std::fabs(v[i] - w[i]));
                    scale = std::max({scale, std::fabs(v[i]), std::fabs(w[i])});
                }
                if (diff <= 1e-14 * std::max(1.0, scale)) { duplicate = true; break; }
            }
            if (!duplicate) vertices.push_back(std::move(v));
        }
        return ConvexSet(dimension_ + 1, std::move(vertices));
    }

    /// Samples each surface band and compares adjacent piece values; a
    /// locally Lipschitz candidate must be continuous across its surfaces.
    ContinuityReport validate_continuity(const Box& box, std::span<const double> t_grid,
                                         int samples_per_axis = 16, double tol = 1e-8) const {
        ContinuityReport report;
        if (surfaces_.empty()) return report;
        for (const Vec& x : PiecewiseField::grid_points(box, samples_per_axis)) {
            for (double t : t_grid) {
                const RegionKey key = region_of(x, t, 1e-7);
                if (key.is_open()) continue;
                double lo = std::numeric_limits<double>::infinity();
                double hi = -std::numeric_limits<double>::infinity();
                for (const RegionKey& adjacent : key.completions()) {
                    auto it = pieces_.find(adjacent);
                    if (it == pieces_.end())
                        throw ModelError("no candidate piece for region '" + adjacent.to_string() + "'");
                    const double v = it->second.value.evaluate(x, t, params_);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                const double gap = hi - lo;
                if (gap > report.worst_gap) {
                    report.worst_gap = gap;
                    report.witness_x = x;
                    report.witness_t = t;
                }
            }
        }
        report.pass = report.worst_gap <= tol;
        return report;
    }

private:
    int dimension_;
    std::vector<SwitchingSurface> surfaces_;
    std::map<RegionKey, detail::ScalarPiece> pieces_;
    ParamMap params_;
};

/// Comparison functions W1 <= V <= W2 and the decay bound W; smooth
/// expressions in x only.
struct ComparisonTriple {
    Expression w1, w2, w;
};

/// Result of a one-sided limit computed by extrapolated finite differences.
struct LimitEstimate {
    double value = 0.0;
    double error = std::numeric_limits<double>::infinity();  // last successive difference
    bool converged = false;
};

/// Right directional derivative V'(x; v) at fixed t: the limit of
/// [V(x+hv) - V(x)]/h over a halving h sequence with first-order Richardson
/// extrapolation and an explicit convergence test.
inline LimitEstimate directional_derivative(const PiecewiseScalar& V, std::span<const double> x,
                                            double t, std::span<const double> v,
                                            double tol = 1e-7) {
    if (norm(v) == 0.0) throw std::invalid_argument("direction must be nonzero");
    const double scale = 1.0 + norm(x);
    const double v0 = V.value(x, t);

    LimitEstimate est;
    Vec y(x.begin(), x.end());
    double h = 0.0625 * scale;
    double prev_q = 0.0, prev_ext = 0.0;
    for (int k = 0; k < 28; ++k, h *= 0.5) {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + h * v[i];
        const double q = (V.value(y, t) - v0) / h;
        if (k >= 1) {
            const double ext = 2.0 * q - prev_q;  // kills the O(h) term
            if (k >= 2) {
                est.error = std::fabs(ext - prev_ext);
                est.value = ext;
                if (est.error <= tol * std::max(1.0, std::fabs(ext))) {
                    est.converged = true;
                    return est;
                }
            }
            prev_ext = ext;
        }
        prev_q = q;
    }
    return est;
}

/// Generalized directional derivative V°(x; v): limsup of the difference
/// quotient over base points y -> x and h -> 0+, estimated by maximizing the
/// quotient over a shrinking deterministic stencil of base points. Finite
/// sampling only ever underestimates the sup, so the level maxima approach
/// the limsup from below for piecewise-smooth candidates.
inline LimitEstimate generalized_directional_derivative(const PiecewiseScalar& V,
                                                        std::span<const double> x, double t,
                                                        std::span<const double> v,
                                                        double tol = 1e-7) {
    const double vn = norm(v);
    if (vn == 0.0) throw std::invalid_argument("direction must be nonzero");
    const std::size_t n = x.size();
    const double scale = 1.0 + norm(x);

    // Stencil of base-point offsets: the origin, +-v, the coordinate axes,
    // and a few fixed pseudo-random directions.
    std::vector<Vec> stencil;
    stencil.push_back(Vec(n, 0.0));
    Vec vhat(v.begin(), v.end());
    for (auto& c : vhat) c /= vn;
    stencil.push_back(vhat);
    Vec mv = vhat;
    for (auto& c : mv) c = -c;
    stencil.push_back(mv);
    for (std::size_t i = 0; i < n; ++i) {
        Vec e(n, 0.0);
        e[i] = 1.0;
        stencil.push_back(e);
        e[i] = -1.0;
        stencil.push_back(e);
    }
    std::mt19937 rng(2654435761u);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int k = 0; k < 8; ++k) {
        Vec d(n);
        for (auto& c : d) c = gauss(rng);
        const double dn = norm(d);
        if (dn < 1e-12) continue;
        for (auto& c : d) c /= dn;
        stencil.push_back(d);
    }

    LimitEstimate est;
    Vec y(n), yh(n);
    double r = 0.05 * scale;
    double prev_level = 0.0;
    for (int level = 0; level < 22; ++level, r *= 0.5) {
        double m = -std::numeric_limits<double>::infinity();
        for (const Vec& d : stencil) {
            for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + r * d[i];
            const double vy = V.value(y, t);
            for (double hfrac : {0.5, 0.25, 0.125}) {
                const double h = r * hfrac;
                for (std::size_t i = 0; i < n; ++i) yh[i] = y[i] + h * v[i];
                m = std::max(m, (V.value(yh, t) - vy) / h);
            }
        }
        if (level >= 1) {
            est.error = std::fabs(m - prev_level);
            est.value = m;
            if (level >= 2 && est.error <= tol * std::max(1.0, std::fabs(m))) {
                est.converged = true;
                return est;
            }
        }
        prev_level = m;
    }
    return est;
}

/// Support-function route to V°(x; v): max over the generalized gradient of
/// xi . (v, 0). Exact for the representable piecewise-smooth class; used to
/// cross-check the sampling estimator.
inline double generalized_directional_derivative_support(const PiecewiseScalar& V,
                                                         std::span<const double> x, double t,
                                                         std::span<const double> v,
                                                         double surface_tol = 1e-9) {
    const ConvexSet grad = V.clarke_gradient(x, t, surface_tol);
    Vec dir(v.begin(), v.end());
    dir.push_back(0.0);  // no time component in the direction
    return grad.support_max(dir);
}

enum class RegularityVerdict { Regular, NotRegular, Inconclusive };

struct DirectionRegularity {
    Vec direction;
    double right_derivative = 0.0;
    double generalized_derivative = 0.0;   // support-function value
    double generalized_sampled = 0.0;      // limsup sampling estimate
    bool limits_converged = false;
    RegularityVerdict verdict = RegularityVerdict::Inconclusive;
};

struct RegularityReport {
    std::vector<DirectionRegularity> directions;
    bool regular = false;        // all tested directions regular
    bool inconclusive = false;   // some direction failed to converge
};

/// Tests V'(x; v) == V°(x; v) over the given directions. Verdicts rest on
/// finitely many directions; callers record that limitation.
inline RegularityReport check_regularity(const PiecewiseScalar& V, std::span<const double> x,
                                         double t, const std::vector<Vec>& directions,
                                         double tol = 1e-6) {
    if (directions.empty()) throw std::invalid_argument("directions must be nonempty");
    RegularityReport report;
    bool all_regular = true;
    for (const Vec& v : directions) {
        DirectionRegularity r;
        r.direction = v;
        const LimitEstimate right = directional_derivative(V, x, t, v);
        const LimitEstimate sampled = generalized_directional_derivative(V, x, t, v);
        r.right_derivative = right.value;
        r.generalized_sampled = sampled.value;
        r.generalized_derivative = generalized_directional_derivative_support(V, x, t, v);
        r.limits_converged = right.converged && sampled.converged;
        if (!r.limits_converged) {
            r.verdict = RegularityVerdict::Inconclusive;
            report.inconclusive = true;
            all_regular = false;
        } else if (std::fabs(r.right_derivative - r.generalized_derivative) <= tol) {
            r.verdict = RegularityVerdict::Regular;
        } else {
            r.verdict = RegularityVerdict::NotRegular;
            all_regular = false;
        }
        report.directions.push_back(std::move(r));
    }
    report.regular = all_regular && !report.inconclusive;
    return report;
}

/// Set-valued derivative: the intersection over xi in the generalized
/// gradient of the intervals xi^T (K[f](x,t); 1). Candidate xi are the
/// gradient polytope vertices, a convex-combination grid with weights in
/// multiples of 1/xi_resolution (so doubling the resolution refines the
/// grid monotonically), and the points along vertex pairs where a coordinate
/// of xi crosses zero. May legitimately be empty.
inline Interval setvalued_derivative(const PiecewiseScalar& V, const PiecewiseField& F,
                                     std::span<const double> x, double t,
                                     double surface_tol = 1e-9, int xi_resolution = 32) {
    if (V.dimension() != F.dimension()) throw std::invalid_argument("dimension mismatch");
    const ConvexSet grad = V.clarke_gradient(x, t, surface_tol);
    const ConvexSet K = F.filippov_map(x, t, surface_tol);

    // Augment the inclusion with the constant 1 time slot.
    std::vector<Vec> motions;
    motions.reserve(K.vertex_count());
    for (const auto& w : K.vertices()) {
        Vec m = w;
        m.push_back(1.0);
        motions.push_back(std::move(m));
    }

    const auto& vertices = grad.vertices();
    const std::size_t p = vertices.size();
    std::vector<Vec> candidates(vertices.begin(), vertices.end());

    auto push_combination = [&](std::span<const double> weights) {
        Vec xi(vertices[0].size(), 0.0);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t c = 0; c < xi.size(); ++c) xi[c] += weights[i] * vertices[i][c];
        candidates.push_back(std::move(xi));
    };

    if (p == 2) {
        for (int i = 1; i < xi_resolution; ++i) {
            const double s = static_cast<double>(i) / xi_resolution;
            const double w[2] = {1.0 - s, s};
            push_combination(w);
        }
    } else if (p > 2) {
        // Weights are compositions of `res` into p parts. Coarsen the grid
        // for many-vertex gradients to keep the enumeration bounded.
        const int res = p <= 4 ? xi_resolution : std::min(xi_resolution, 8);
        std::vector<int> parts(p, 0);
        Vec weights(p, 0.0);
        auto rec = [&](auto&& self, std::size_t slot, int remaining) -> void {
            if (slot == p - 1) {
                parts[slot] = remaining;
                for (std::size_t i = 0; i < p; ++i)
                    weights[i] = static_cast<double>(parts[i]) / res;
                push_combination(weights);
                return;
            }
            for (int take = remaining; take >= 0; --take) {
                parts[slot] = take;
                self(self, slot + 1, remaining - take);
            }
        };
        rec(rec, 0, res);
    }

    // Zero crossings of each coordinate along every vertex pair; envelope
    // kinks live there.
    for (std::size_t a = 0; a < p; ++a) {
        for (std::size_t b = a + 1; b < p; ++b) {
            for (std::size_t c = 0; c < vertices[a].size(); ++c) {
                const double va = vertices[a][c], vb = vertices[b][c];
                if ((va < 0.0 && vb > 0.0) || (va > 0.0 && vb < 0.0)) {
                    const double s = va / (va - vb);
                    Vec xi(vertices[a].size());
                    for (std::size_t i = 0; i < xi.size(); ++i)
                        xi[i] = vertices[a][i] + s * (vertices[b][i] - vertices[a][i]);
                    candidates.push_back(std::move(xi));
                }
            }
        }
    }

    Interval result{-std::numeric_limits<double>::infinity(),
                    std::numeric_limits<double>::infinity()};
    for (const Vec& xi : candidates) {
        Interval I;
        for (const Vec& m : motions) {
            const double s = dot(xi, m);
            I.lo = std::min(I.lo, s);
            I.hi = std::max(I.hi, s);
        }
        result.lo = std::max(result.lo, I.lo);
        result.hi = std::min(result.hi, I.hi);
    }
    return result;
}

struct BoundsViolation {
    Vec x;
    double t = 0.0;
    double amount = 0.0;
    bool upper = false;  // false: W1 <= V failed, true: V <= W2 failed
};

struct BoundsReport {
    bool pass = true;
    double worst_lower_margin = std::numeric_limits<double>::infinity();  // min of V - W1
    double worst_upper_margin = std::numeric_limits<double>::infinity();  // min of W2 - V
    std::vector<BoundsViolation> violations;
};

/// Verifies W1(x) <= V(x,t) <= W2(x) at every sample.
inline BoundsReport check_bounds(const PiecewiseScalar& V, const ComparisonTriple& triple,
                                 const std::vector<std::pair<Vec, double>>& samples,
                                 double tol = 1e-9) {
    BoundsReport report;
    for (const auto& [x, t] : samples) {
        const double v = V.value(x, t);
        const double w1 = triple.w1.evaluate(x, t, V.params());
        const double w2 = triple.w2.evaluate(x, t, V.params());
        report.worst_lower_margin = std::min(report.worst_lower_margin, v - w1);
        report.worst_upper_margin = std::min(report.worst_upper_margin, w2 - v);
        if (v - w1 < -tol) report.violations.push_back({x, t, w1 - v, false});
        if (w2 - v < -tol) report.violations.push_back({x, t, v - w2, true});
    }
    report.pass = report.violations.empty();
    return report;
}

enum class Definiteness { PositiveDefinite, PositiveSemiDefinite };

struct DefinitenessReport {
    bool pass = true;
    double origin_value = 0.0;
    double min_off_ball = std::numeric_limits<double>::infinity();
    Vec witness;
    std::string detail;
};

/// Sampling check: zero at the origin, nonnegative everywhere, and (for the
/// definite case) strictly positive outside a small ball.
inline DefinitenessReport check_definiteness(const Expression& w, const Box& box,
                                             Definiteness kind, const ParamMap& params = {},
                                             int samples_per_axis = 16, double ball = 1e-3,
                                             double tol = 1e-12) {
    DefinitenessReport report;
    Vec origin(box.bounds.size(), 0.0);
    report.origin_value = w.evaluate(origin, 0.0, params);
    if (std::fabs(report.origin_value) > tol) {
        report.pass = false;
        report.witness = origin;
        report.detail = "nonzero at the origin";
        return report;
    }
    for (const Vec& x : PiecewiseField::grid_points(box, samples_per_axis)) {
        const double v = w.evaluate(x, 0.0, params);
        if (v < -tol) {
            report.pass = false;
            report.witness = x;
            report.detail = "negative value";
            return report;
        }
        if (norm(x) > ball) {
            if (v < report.min_off_ball) {
                report.min_off_ball = v;
                if (kind == Definiteness::PositiveDefinite && v <= tol) {
                    report.pass = false;
                    report.witness = x;
                    report.detail = "not strictly positive off the origin ball";
                    return report;
                }
            }
        }
    }
    return report;
}

} // namespace fsim
