#pragma once

// Discontinuous right-hand sides represented as finitely many smooth pieces
// over the sign-regions of switching surfaces, plus the Filippov set-valued
// map. For this representable class the map equals the convex hull of the
// one-sided limit values of the pieces adjacent to a point.

#include "fsim/convex.hpp"
#include "fsim/expr.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fsim {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Smooth scalar g(x,t) whose zero set is a discontinuity locus. Partials
/// are exact symbolic derivatives taken at construction.
struct SwitchingSurface {
    std::string name;
    Expression g;
    std::vector<Expression> grad;  // dg/dx_i
    Expression g_t;                // dg/dt

    SwitchingSurface(std::string surface_name, Expression expr, int dimension)
        : name(std::move(surface_name)), g(std::move(expr)) {
        grad.reserve(static_cast<std::size_t>(dimension));
        for (int i = 0; i < dimension; ++i) grad.push_back(g.d_state(i));
        g_t = g.d_time();
    }

    double value(std::span<const double> x, double t, const ParamMap& params) const {
        return g.evaluate(x, t, params);
    }

    Vec gradient(std::span<const double> x, double t, const ParamMap& params) const {
        Vec out(grad.size());
        for (std::size_t i = 0; i < grad.size(); ++i) out[i] = grad[i].evaluate(x, t, params);
        return out;
    }
};

/// Sign vector in {-1, 0, +1}^m, one entry per surface; 0 marks "on-surface"
/// and appears only transiently (never as a piece key).
class RegionKey {
public:
    RegionKey() = default;
    explicit RegionKey(std::vector<int8_t> signs) : signs_(std::move(signs)) {
        for (int8_t s : signs_)
            if (s < -1 || s > 1) throw std::invalid_argument("region sign must be -1, 0, or +1");
    }

    static RegionKey from_string(std::string_view text) {
        std::vector<int8_t> signs;
        signs.reserve(text.size());
        for (char c : text) {
            switch (c) {
                case '-': signs.push_back(-1); break;
                case '+': signs.push_back(+1); break;
                case '0': signs.push_back(0); break;
                default: throw std::invalid_argument(std::string("invalid region sign character '") + c + "'");
            }
        }
        return RegionKey(std::move(signs));
    }

    std::size_t size() const { return signs_.size(); }
    int sign(std::size_t i) const { return signs_[i]; }
    void set_sign(std::size_t i, int8_t s) { signs_[i] = s; }

    bool is_open() const {
        for (int8_t s : signs_)
            if (s == 0) return false;
        return true;
    }

    std::size_t on_surface_count() const {
        std::size_t n = 0;
        for (int8_t s : signs_)
            if (s == 0) ++n;
        return n;
    }

    std::string to_string() const {
        std::string s;
        s.reserve(signs_.size());
        for (int8_t v : signs_) s += v < 0 ? '-' : (v > 0 ? '+' : '0');
        return s;
    }

    /// All sign patterns obtained by resolving every on-surface coordinate to
    /// -1 or +1; a single-element list when the key is already open.
    std::vector<RegionKey> completions() const {
        std::vector<std::size_t> zeros;
        for (std::size_t i = 0; i < signs_.size(); ++i)
            if (signs_[i] == 0) zeros.push_back(i);
        std::vector<RegionKey> out;
        const std::size_t count = std::size_t{1} << zeros.size();
        out.reserve(count);
        for (std::size_t mask = 0; mask < count; ++mask) {
            RegionKey k = *this;
            for (std::size_t b = 0; b < zeros.size(); ++b)
                k.signs_[zeros[b]] = (mask >> b) & 1 ? int8_t{1} : int8_t{-1};
            out.push_back(std::move(k));
        }
        return out;
    }

    friend bool operator<(const RegionKey& a, const RegionKey& b) { return a.signs_ < b.signs_; }
    friend bool operator==(const RegionKey& a, const RegionKey& b) { return a.signs_ == b.signs_; }

private:
    std::vector<int8_t> signs_;
};

struct Box {
    std::vector<std::pair<double, double>> bounds;  // (lo, hi) per axis

    int dimension() const { return static_cast<int>(bounds.size()); }

    bool contains_origin() const {
        for (const auto& [lo, hi] : bounds)
            if (lo > 0.0 || hi < 0.0) return false;
        return true;
    }

    /// Largest rho with the open ball B_rho contained in the box, assuming
    /// the box contains the origin.
    double inscribed_radius() const {
        double r = std::numeric_limits<double>::infinity();
        for (const auto& [lo, hi] : bounds) r = std::min({r, -lo, hi});
        return r;
    }
};

struct FieldValidationFinding {
    std::string message;
    Vec x;
    double t = 0.0;
};

struct FieldValidationReport {
    bool pass = true;
    double max_piece_norm = 0.0;
    double max_origin_hull_radius = 0.0;
    double origin_bound = 0.0;
    std::vector<FieldValidationFinding> findings;
};

struct FieldValidationConfig {
    int samples_per_axis = 16;
    double surface_tol = 1e-9;
    double origin_bound = 1e6;  // bound on the hull radius of K[f](0,t)
};

class PiecewiseField {
public:
    PiecewiseField(int dimension, std::vector<SwitchingSurface> surfaces,
                   std::map<RegionKey, std::vector<Expression>> pieces, ParamMap params = {})
        : dimension_(dimension),
          surfaces_(std::move(surfaces)),
          pieces_(std::move(pieces)),
          params_(std::move(params)) {
        if (dimension_ < 1) throw ModelError("field dimension must be positive");
        if (pieces_.empty()) throw ModelError("field needs at least one piece");
        for (const auto& [key, piece] : pieces_) {
            if (key.size() != surfaces_.size())
                throw ModelError("region key '" + key.to_string() + "' has wrong arity");
            if (!key.is_open())
                throw ModelError("piece keys must be open sign patterns, got '" + key.to_string() + "'");
            if (piece.size() != static_cast<std::size_t>(dimension_))
                throw ModelError("piece for region '" + key.to_string() + "' has wrong dimension");
        }
        id_ = describe();
    }

    int dimension() const { return dimension_; }
    const std::vector<SwitchingSurface>& surfaces() const { return surfaces_; }
    const std::map<RegionKey, std::vector<Expression>>& pieces() const { return pieces_; }
    const ParamMap& params() const { return params_; }

    /// Provenance identifier; trajectories carry it so certification can
    /// reject inputs produced for a different field.
    const std::string& id() const { return id_; }

    RegionKey region_of(std::span<const double> x, double t, double surface_tol = 1e-9) const {
        if (surface_tol <= 0.0) throw std::invalid_argument("surface_tol must be positive");
        std::vector<int8_t> signs(surfaces_.size());
        for (std::size_t i = 0; i < surfaces_.size(); ++i) {
            const double g = surfaces_[i].value(x, t, params_);
            signs[i] = std::fabs(g) <= surface_tol ? int8_t{0} : (g > 0.0 ? int8_t{1} : int8_t{-1});
        }
        return RegionKey(std::move(signs));
    }

    const std::vector<Expression>& piece(const RegionKey& key) const {
        auto it = pieces_.find(key);
        if (it == pieces_.end())
            throw ModelError("no piece declared for region '" + key.to_string() + "'");
        return it->second;
    }

    bool has_piece(const RegionKey& key) const { return pieces_.count(key) != 0; }

    /// One-sided limit value of the piece for `key` at (x,t). Pieces extend
    /// smoothly to their region closure, so plain evaluation is exact.
    Vec piece_value(const RegionKey& key, std::span<const double> x, double t) const {
        const auto& exprs = piece(key);
        Vec out(exprs.size());
        for (std::size_t i = 0; i < exprs.size(); ++i) out[i] = exprs[i].evaluate(x, t, params_);
        return out;
    }

    /// Classical evaluation away from every surface.
    Vec evaluate(std::span<const double> x, double t, double surface_tol = 1e-9) const {
        RegionKey key = region_of(x, t, surface_tol);
        if (!key.is_open())
            throw ModelError("field evaluated on a discontinuity surface; use filippov_map");
        return piece_value(key, x, t);
    }

    /// K[f](x,t): convex hull of the limit values of all pieces adjacent to
    /// x, i.e. all sign patterns compatible with the on-surface coordinates.
    ConvexSet filippov_map(std::span<const double> x, double t, double surface_tol = 1e-9) const {
        const RegionKey key = region_of(x, t, surface_tol);
        std::vector<Vec> vertices;
        for (const RegionKey& adjacent : key.completions()) {
            Vec v = piece_value(adjacent, x, t);
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
        return ConvexSet(dimension_, std::move(vertices));
    }

    /// Samples every piece over the box and the t grid: reports the largest
    /// piece norm, detects reachable regions without a declared piece, and
    /// flags the origin hull radius growing past the configured bound.
    FieldValidationReport validate(const Box& box, std::span<const double> t_grid,
                                   const FieldValidationConfig& cfg = {}) const {
        if (box.dimension() != dimension_) throw std::invalid_argument("box dimension mismatch");
        if (!box.contains_origin()) throw std::invalid_argument("box must contain the origin");

        FieldValidationReport report;
        report.origin_bound = cfg.origin_bound;

        std::vector<Vec> samples = grid_points(box, cfg.samples_per_axis);
        for (const Vec& x : samples) {
            for (double t : t_grid) {
                for (const auto& [key, exprs] : pieces_) {
                    double norm2 = 0.0;
                    for (const auto& e : exprs) {
                        const double v = e.evaluate(x, t, params_);
                        norm2 += v * v;
                    }
                    report.max_piece_norm = std::max(report.max_piece_norm, std::sqrt(norm2));
                }
                RegionKey key = region_of(x, t, cfg.surface_tol);
                for (const RegionKey& adjacent : key.completions()) {
                    if (!has_piece(adjacent)) {
                        report.pass = false;
                        report.findings.push_back(
                            {"reachable region '" + adjacent.to_string() + "' has no declared piece", x, t});
                    }
                }
            }
        }

        Vec origin(static_cast<std::size_t>(dimension_), 0.0);
        for (double t : t_grid) {
            const double radius = filippov_map(origin, t, cfg.surface_tol).max_vertex_norm();
            report.max_origin_hull_radius = std::max(report.max_origin_hull_radius, radius);
        }
        if (report.max_origin_hull_radius > cfg.origin_bound) {
            report.pass = false;
            report.findings.push_back(
                {"hull radius of K[f](0,t) exceeds bound " + detail::format_double(cfg.origin_bound),
                 origin, 0.0});
        }
        return report;
    }

    /// Per-axis sample values: a uniform grid over [lo, hi] with 0 inserted
    /// when the axis straddles it, so discontinuity loci along coordinate
    /// surfaces are always sampled.
    static std::vector<double> axis_samples(double lo, double hi, int count) {
        std::vector<double> vals;
        vals.reserve(static_cast<std::size_t>(count) + 1);
        if (count == 1) {
            vals.push_back(0.5 * (lo + hi));
        } else {
            for (int i = 0; i < count; ++i)
                vals.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
        }
        if (lo < 0.0 && hi > 0.0) {
            bool has_zero = false;
            for (double v : vals)
                if (v == 0.0) { has_zero = true; break; }
            if (!has_zero) {
                vals.push_back(0.0);
                std::sort(vals.begin(), vals.end());
            }
        }
        return vals;
    }

    static std::vector<Vec> grid_points(const Box& box, int per_axis) {
        std::vector<std::vector<double>> axes;
        std::size_t total = 1;
        for (const auto& [lo, hi] : box.bounds) {
            axes.push_back(axis_samples(lo, hi, per_axis));
            total *= axes.back().size();
            if (total > 20'000'000) throw std::invalid_argument("grid too large");
        }
        std::vector<Vec> pts;
        pts.reserve(total);
        Vec x(box.bounds.size());
        std::vector<std::size_t> idx(box.bounds.size(), 0);
        for (;;) {
            for (std::size_t i = 0; i < axes.size(); ++i) x[i] = axes[i][idx[i]];
            pts.push_back(x);
            std::size_t i = 0;
            while (i < axes.size() && ++idx[i] == axes[i].size()) idx[i++] = 0;
            if (i == axes.size()) break;
        }
        return pts;
    }

private:
    std::string describe() const {
        std::ostringstream os;
        os << "dim=" << dimension_ << ";";
        for (const auto& s : surfaces_) os << "surface " << s.name << "=" << s.g.to_string() << ";";
        for (const auto& [key, exprs] : pieces_) {
            os << "region " << key.to_string() << ":";
            for (const auto& e : exprs) os << e.to_string() << ",";
            os << ";";
        }
        for (const auto& [k, v] : params_) os << "param " << k << "=" << detail::format_double(v) << ";";
        return os.str();
    }

    int dimension_;
    std::vector<SwitchingSurface> surfaces_;
    std::map<RegionKey, std::vector<Expression>> pieces_;
    ParamMap params_;
    std::string id_;
};

} // namespace fsim
