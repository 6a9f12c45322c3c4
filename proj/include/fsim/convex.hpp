#pragma once

// Finitely generated convex sets: the values taken by the Filippov map and
// by Clarke generalized gradients. The represented set is the convex hull of
// the stored vertex list; the list is not required to be minimal.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace fsim {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Closed interval [lo, hi]; lo > hi encodes the empty set.
struct Interval {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    bool empty() const { return lo > hi; }
    double width() const { return empty() ? 0.0 : hi - lo; }
    bool contains(double v, double tol = 0.0) const {
        return !empty() && v >= lo - tol && v <= hi + tol;
    }
    bool is_singleton(double tol = 0.0) const { return !empty() && hi - lo <= tol; }
};

namespace detail {

// Gaussian elimination with partial pivoting; returns false when singular.
inline bool solve_dense(std::vector<std::vector<double>>& A, std::vector<double>& b) {
    const std::size_t n = A.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
        if (std::fabs(A[piv][col]) < 1e-14) return false;
        std::swap(A[piv], A[col]);
        std::swap(b[piv], b[col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double m = A[r][col] / A[col][col];
            if (m == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) A[r][c] -= m * A[col][c];
            b[r] -= m * b[col];
        }
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= A[i][c] * b[c];
        b[i] = s / A[i][i];
    }
    return true;
}

} // namespace detail

class ConvexSet {
public:
    ConvexSet(int dimension, std::vector<Vec> vertices)
        : dimension_(dimension), vertices_(std::move(vertices)) {
        if (dimension_ < 1) throw std::invalid_argument("ConvexSet dimension must be positive");
        if (vertices_.empty()) throw std::invalid_argument("ConvexSet requires at least one vertex");
        for (const auto& v : vertices_)
            if (static_cast<int>(v.size()) != dimension_)
                throw std::invalid_argument("ConvexSet vertex has wrong dimension");
    }

    static ConvexSet singleton(Vec v) {
        const int d = static_cast<int>(v.size());
        return ConvexSet(d, {std::move(v)});
    }

    int dimension() const { return dimension_; }
    const std::vector<Vec>& vertices() const { return vertices_; }
    std::size_t vertex_count() const { return vertices_.size(); }
    bool is_singleton() const { return vertices_.size() == 1; }

    /// Support values of the hull along direction xi (length = dimension).
    Interval support_interval(std::span<const double> xi) const {
        Interval I;
        for (const auto& v : vertices_) {
            const double s = dot(xi, v);
            I.lo = std::min(I.lo, s);
            I.hi = std::max(I.hi, s);
        }
        return I;
    }

    double support_max(std::span<const double> xi) const { return support_interval(xi).hi; }
    double support_min(std::span<const double> xi) const { return support_interval(xi).lo; }

    /// For one-dimensional sets: the interval [min vertex, max vertex].
    Interval as_interval() const {
        if (dimension_ != 1) throw std::logic_error("as_interval requires dimension 1");
        Interval I;
        for (const auto& v : vertices_) {
            I.lo = std::min(I.lo, v[0]);
            I.hi = std::max(I.hi, v[0]);
        }
        return I;
    }

    double max_vertex_norm() const {
        double m = 0.0;
        for (const auto& v : vertices_) m = std::max(m, norm(v));
        return m;
    }

    /// Euclidean distance from p to the hull. Exact for vertex counts up to
    /// `exact_limit` (projection onto every face candidate); beyond that a
    /// Frank-Wolfe iteration is used.
    double distance_to(std::span<const double> p, std::size_t exact_limit = 18) const {
        if (p.size() != static_cast<std::size_t>(dimension_))
            throw std::invalid_argument("point has wrong dimension");
        if (vertices_.size() <= exact_limit) return distance_exact(p);
        return distance_frank_wolfe(p);
    }

private:
    // Enumerate affinely independent vertex subsets of size <= dim+1, project
    // p onto each affine hull, and keep the nearest projection with
    // nonnegative barycentric weights. The nearest point of the hull lies on
    // some face, so this is exact.
    double distance_exact(std::span<const double> p) const {
        const std::size_t nv = vertices_.size();
        const std::size_t max_card = std::min<std::size_t>(nv, static_cast<std::size_t>(dimension_) + 1);
        double best = std::numeric_limits<double>::infinity();

        for (const auto& v : vertices_) {
            double d2 = 0.0;
            for (int i = 0; i < dimension_; ++i) d2 += (v[i] - p[i]) * (v[i] - p[i]);
            best = std::min(best, d2);
        }

        std::vector<std::size_t> idx;
        for (std::size_t card = 2; card <= max_card; ++card) {
            idx.assign(card, 0);
            for (std::size_t i = 0; i < card; ++i) idx[i] = i;
            for (;;) {
                best = std::min(best, subset_distance2(p, idx));
                // next combination
                std::size_t i = card;
                while (i-- > 0) {
                    if (idx[i] + (card - i) < nv) {
                        ++idx[i];
                        for (std::size_t j = i + 1; j < card; ++j) idx[j] = idx[j - 1] + 1;
                        break;
                    }
                    if (i == 0) { i = card + 1; break; }
                }
                if (i == card + 1) break;
            }
        }
        return std::sqrt(std::max(0.0, best));
    }

    double subset_distance2(std::span<const double> p, const std::vector<std::size_t>& idx) const {
        const std::size_t m = idx.size() - 1;  // free barycentric coordinates
        const Vec& v0 = vertices_[idx[0]];

        // Solve (B^T B) mu = B^T (p - v0) with columns B_j = v_{idx[j+1]} - v0.
        std::vector<std::vector<double>> G(m, std::vector<double>(m, 0.0));
        std::vector<double> rhs(m, 0.0);
        for (std::size_t a = 0; a < m; ++a) {
            const Vec& va = vertices_[idx[a + 1]];
            for (std::size_t b = a; b < m; ++b) {
                const Vec& vb = vertices_[idx[b + 1]];
                double s = 0.0;
                for (int i = 0; i < dimension_; ++i) s += (va[i] - v0[i]) * (vb[i] - v0[i]);
                G[a][b] = G[b][a] = s;
            }
            double s = 0.0;
            for (int i = 0; i < dimension_; ++i) s += (va[i] - v0[i]) * (p[i] - v0[i]);
            rhs[a] = s;
        }
        if (!detail::solve_dense(G, rhs)) return std::numeric_limits<double>::infinity();

        double mu0 = 1.0;
        for (double w : rhs) mu0 -= w;
        if (mu0 < -1e-12) return std::numeric_limits<double>::infinity();
        for (double w : rhs)
            if (w < -1e-12) return std::numeric_limits<double>::infinity();

        double d2 = 0.0;
        for (int i = 0; i < dimension_; ++i) {
            double q = mu0 * v0[i];
            for (std::size_t a = 0; a < m; ++a) q += rhs[a] * vertices_[idx[a + 1]][i];
            d2 += (q - p[i]) * (q - p[i]);
        }
        return d2;
    }

    double distance_frank_wolfe(std::span<const double> p) const {
        Vec z = vertices_[0];
        for (int it = 0; it < 4000; ++it) {
            Vec grad(dimension_);
            for (int i = 0; i < dimension_; ++i) grad[i] = z[i] - p[i];
            std::size_t best = 0;
            double bestdot = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < vertices_.size(); ++k) {
                const double d = dot(grad, vertices_[k]);
                if (d < bestdot) { bestdot = d; best = k; }
            }
            const Vec& s = vertices_[best];
            // Exact line search for the quadratic objective.
            double num = 0.0, den = 0.0;
            for (int i = 0; i < dimension_; ++i) {
                num += (z[i] - p[i]) * (z[i] - s[i]);
                den += (z[i] - s[i]) * (z[i] - s[i]);
            }
            if (den <= 1e-30) break;
            const double gamma = std::clamp(num / den, 0.0, 1.0);
            if (gamma <= 1e-16) break;
            for (int i = 0; i < dimension_; ++i) z[i] += gamma * (s[i] - z[i]);
        }
        Vec diff(dimension_);
        for (int i = 0; i < dimension_; ++i) diff[i] = z[i] - p[i];
        return norm(diff);
    }

    int dimension_;
    std::vector<Vec> vertices_;
};

} // namespace fsim
