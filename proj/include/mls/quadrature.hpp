#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "mls/geometry.hpp"

namespace mls {

/// Nodes (one per column) and positive weights over a box or its boundary.
struct QuadratureRule {
    Matrix nodes;
    Vector weights;

    int size() const { return static_cast<int>(weights.size()); }
};

/// n-point Gauss-Legendre nodes/weights on [-1,1]. Newton iteration on the
/// Legendre recurrence from the Chebyshev-like initial guesses; converges to
/// ~1e-15 in a handful of steps for any practical n.
inline std::pair<Vector, Vector> gauss_legendre_1d(int n) {
    if (n < 1) throw ConfigError("gauss_legendre_1d: need n >= 1");
    Vector x(n), w(n);
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double deriv = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            // Three-term recurrence for P_n(t) and P_n'(t).
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            deriv = n * (t * p1 - p0) / (t * t - 1.0);
            const double step = p1 / deriv;
            t -= step;
            if (std::abs(step) < 1e-15) break;
        }
        // One clean-up recurrence pass at the converged root.
        double p0 = 1.0, p1 = t;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        deriv = n * (t * p1 - p0) / (t * t - 1.0);
        x[i] = -t;
        x[n - 1 - i] = t;
        const double weight = 2.0 / ((1.0 - t * t) * deriv * deriv);
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    if (n % 2 == 1) x[n / 2] = 0.0;
    return {x, w};
}

namespace detail {

/// Map the [-1,1] rule onto [a,b].
inline std::pair<Vector, Vector> gl_on_interval(int n, double a, double b) {
    auto [x, w] = gauss_legendre_1d(n);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    return {Vector(mid + half * x.array()), Vector(half * w.array())};
}

}  // namespace detail

/// Tensor-product Gauss-Legendre rule with n nodes per axis over the box.
inline QuadratureRule gauss_legendre_box(const DomainBox& box, int n_per_axis) {
    if (n_per_axis < 1) throw ConfigError("gauss_legendre_box: need n >= 1");
    const int d = box.dim();
    std::vector<Vector> xs(d), ws(d);
    for (int i = 0; i < d; ++i)
        std::tie(xs[i], ws[i]) = detail::gl_on_interval(n_per_axis, box.lower[i], box.upper[i]);
    std::int64_t total = 1;
    for (int i = 0; i < d; ++i) total *= n_per_axis;
    QuadratureRule rule;
    rule.nodes.resize(d, total);
    rule.weights.resize(total);
    std::vector<int> it(d, 0);
    for (std::int64_t col = 0; col < total; ++col) {
        double w = 1.0;
        for (int i = 0; i < d; ++i) {
            rule.nodes(i, col) = xs[i][it[i]];
            w *= ws[i][it[i]];
        }
        rule.weights[col] = w;
        int axis = d - 1;
        while (axis >= 0 && ++it[axis] >= n_per_axis) {
            it[axis] = 0;
            --axis;
        }
    }
    return rule;
}

/// Composite rule: the box split into cells_per_axis^d equal cells, each with
/// a tensor Gauss-Legendre rule of n_per_cell nodes per axis. Suited to
/// integrands that vary on the cell scale (shape-function products).
inline QuadratureRule composite_box_rule(const DomainBox& box, int cells_per_axis,
                                         int n_per_cell) {
    if (cells_per_axis < 1 || n_per_cell < 1)
        throw ConfigError("composite_box_rule: cells and nodes must be >= 1");
    const int d = box.dim();
    std::vector<int> it(d, 0);
    std::int64_t ncells = 1;
    for (int i = 0; i < d; ++i) ncells *= cells_per_axis;
    std::vector<QuadratureRule> cells;
    cells.reserve(ncells);
    Vector lo(d), hi(d);
    for (std::int64_t c = 0; c < ncells; ++c) {
        for (int i = 0; i < d; ++i) {
            const double step = box.extent()[i] / cells_per_axis;
            lo[i] = box.lower[i] + it[i] * step;
            hi[i] = (it[i] == cells_per_axis - 1) ? box.upper[i] : lo[i] + step;
        }
        cells.push_back(gauss_legendre_box(DomainBox(lo, hi), n_per_cell));
        int axis = d - 1;
        while (axis >= 0 && ++it[axis] >= cells_per_axis) {
            it[axis] = 0;
            --axis;
        }
    }
    std::int64_t total = 0;
    for (const auto& r : cells) total += r.size();
    QuadratureRule rule;
    rule.nodes.resize(d, total);
    rule.weights.resize(total);
    std::int64_t at = 0;
    for (const auto& r : cells) {
        rule.nodes.middleCols(at, r.size()) = r.nodes;
        rule.weights.segment(at, r.size()) = r.weights;
        at += r.size();
    }
    return rule;
}

/// Rule over the boundary of the box: one (d-1)-dimensional composite
/// Gauss-Legendre patch per face, traversed lower face then upper face per
/// axis. For d = 1 the two endpoints carry unit weight. Corners never become
/// nodes (Gauss nodes are interior), so each belongs to one face by the
/// half-open convention.
inline QuadratureRule composite_boundary_rule(const DomainBox& box, int cells_per_axis,
                                              int n_per_cell) {
    const int d = box.dim();
    if (d == 1) {
        QuadratureRule rule;
        rule.nodes.resize(1, 2);
        rule.nodes(0, 0) = box.lower[0];
        rule.nodes(0, 1) = box.upper[0];
        rule.weights = Vector::Ones(2);
        return rule;
    }
    std::vector<Matrix> face_nodes;
    std::vector<Vector> face_weights;
    std::int64_t total = 0;
    for (int axis = 0; axis < d; ++axis) {
        // The face is a (d-1)-box over the remaining axes.
        Vector lo(d - 1), hi(d - 1);
        int at = 0;
        for (int i = 0; i < d; ++i) {
            if (i == axis) continue;
            lo[at] = box.lower[i];
            hi[at] = box.upper[i];
            ++at;
        }
        const QuadratureRule base =
            composite_box_rule(DomainBox(lo, hi), cells_per_axis, n_per_cell);
        for (int side = 0; side < 2; ++side) {
            Matrix nodes(d, base.size());
            for (int c = 0; c < base.size(); ++c) {
                int k = 0;
                for (int i = 0; i < d; ++i) {
                    if (i == axis)
                        nodes(i, c) = (side == 0) ? box.lower[axis] : box.upper[axis];
                    else
                        nodes(i, c) = base.nodes(k++, c);
                }
            }
            face_nodes.push_back(std::move(nodes));
            face_weights.push_back(base.weights);
            total += base.size();
        }
    }
    QuadratureRule rule;
    rule.nodes.resize(d, total);
    rule.weights.resize(total);
    std::int64_t at = 0;
    for (std::size_t f = 0; f < face_nodes.size(); ++f) {
        rule.nodes.middleCols(at, face_weights[f].size()) = face_nodes[f];
        rule.weights.segment(at, face_weights[f].size()) = face_weights[f];
        at += face_weights[f].size();
    }
    return rule;
}

}  // namespace mls
