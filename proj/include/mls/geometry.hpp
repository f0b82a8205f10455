#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mls/basis.hpp"
#include "mls/errors.hpp"
#include "mls/multi_index.hpp"

namespace mls {

/// Axis-aligned box [lower, upper].
struct DomainBox {
    Vector lower;
    Vector upper;

    DomainBox() = default;
    DomainBox(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) {
        if (lower.size() != upper.size()) throw ConfigError("DomainBox: dimension mismatch");
        for (int i = 0; i < lower.size(); ++i)
            if (!(lower[i] < upper[i])) throw ConfigError("DomainBox: lower must be < upper");
    }

    static DomainBox cube(int dim, double lo, double hi) {
        return DomainBox(Vector::Constant(dim, lo), Vector::Constant(dim, hi));
    }

    int dim() const { return static_cast<int>(lower.size()); }
    Vector extent() const { return upper - lower; }
    double shortest_side() const { return extent().minCoeff(); }
    double diameter() const { return extent().norm(); }
    double volume() const { return extent().prod(); }

    bool contains(const Eigen::Ref<const Vector>& x, double tol = 0.0) const {
        for (int i = 0; i < dim(); ++i)
            if (x[i] < lower[i] - tol || x[i] > upper[i] + tol) return false;
        return true;
    }

    /// Outward unit normal of the face nearest to x. Corners resolve to the
    /// lowest axis and then the lower side (the half-open edge convention).
    Vector outward_normal(const Eigen::Ref<const Vector>& x) const {
        int best_axis = 0;
        bool best_low = true;
        double best_dist = std::numeric_limits<double>::infinity();
        for (int i = 0; i < dim(); ++i) {
            const double dlo = std::abs(x[i] - lower[i]);
            const double dhi = std::abs(upper[i] - x[i]);
            if (dlo < best_dist) { best_dist = dlo; best_axis = i; best_low = true; }
            if (dhi < best_dist) { best_dist = dhi; best_axis = i; best_low = false; }
        }
        Vector n = Vector::Zero(dim());
        n[best_axis] = best_low ? -1.0 : 1.0;
        return n;
    }
};

/// Uniform bucket grid over a box. Exact for any query radius: the query
/// visits ceil(r/cell_side) rings of cells around the query point.
class GridIndex {
  public:
    GridIndex(const Matrix& points, const DomainBox& box, double cell_side)
        : lower_(box.lower), cell_side_(cell_side) {
        if (cell_side <= 0.0) throw ConfigError("GridIndex: cell side must be positive");
        const int d = box.dim();
        dims_.resize(d);
        for (int i = 0; i < d; ++i)
            dims_[i] = std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                                     std::ceil(box.extent()[i] / cell_side)));
        std::int64_t total = 1;
        for (int i = 0; i < d; ++i) {
            if (total > (1 << 26) / dims_[i])
                throw ConfigError("GridIndex: too many cells; increase cell side");
            total *= dims_[i];
        }
        cells_.assign(static_cast<std::size_t>(total), {});
        for (int j = 0; j < points.cols(); ++j)
            cells_[flat_cell(points.col(j))].push_back(j);
    }

    double cell_side() const { return cell_side_; }

    /// Indices j with ||x - p_j|| <= r, ascending.
    std::vector<int> query(const Matrix& points, const Eigen::Ref<const Vector>& x,
                           double r) const {
        std::vector<int> out;
        query(points, x, r, out);
        return out;
    }

    void query(const Matrix& points, const Eigen::Ref<const Vector>& x, double r,
               std::vector<int>& out) const {
        out.clear();
        const int d = static_cast<int>(dims_.size());
        const int rings = static_cast<int>(std::ceil(r / cell_side_));
        std::vector<std::int64_t> lo(d), hi(d), it(d);
        for (int i = 0; i < d; ++i) {
            const std::int64_t c = cell_coord(x[i], i);
            lo[i] = std::max<std::int64_t>(0, c - rings);
            hi[i] = std::min<std::int64_t>(dims_[i] - 1, c + rings);
            it[i] = lo[i];
        }
        const double r2 = r * r;
        while (true) {
            std::int64_t flat = 0;
            for (int i = 0; i < d; ++i) flat = flat * dims_[i] + it[i];
            for (int j : cells_[static_cast<std::size_t>(flat)])
                if ((points.col(j) - x).squaredNorm() <= r2) out.push_back(j);
            int axis = d - 1;
            while (axis >= 0 && ++it[axis] > hi[axis]) {
                it[axis] = lo[axis];
                --axis;
            }
            if (axis < 0) break;
        }
        std::sort(out.begin(), out.end());
    }

    /// Distance from x to the nearest indexed point; expanding ring search.
    double nearest_distance(const Matrix& points, const Eigen::Ref<const Vector>& x) const {
        const int d = static_cast<int>(dims_.size());
        double best = std::numeric_limits<double>::infinity();
        std::int64_t max_ring = 0;
        for (int i = 0; i < d; ++i) max_ring = std::max(max_ring, dims_[i]);
        for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
            visit_ring(points, x, ring, best);
            // Cells beyond this ring cannot hold anything closer than
            // (ring)*cell_side once a candidate was found.
            if (best < static_cast<double>(ring) * cell_side_) break;
        }
        return best;
    }

  private:
    std::int64_t cell_coord(double v, int axis) const {
        auto c = static_cast<std::int64_t>(std::floor((v - lower_[axis]) / cell_side_));
        return std::clamp<std::int64_t>(c, 0, dims_[axis] - 1);
    }

    std::int64_t flat_cell(const Eigen::Ref<const Vector>& x) const {
        std::int64_t flat = 0;
        for (int i = 0; i < static_cast<int>(dims_.size()); ++i)
            flat = flat * dims_[i] + cell_coord(x[i], i);
        return flat;
    }

    void visit_ring(const Matrix& points, const Eigen::Ref<const Vector>& x, std::int64_t ring,
                    double& best) const {
        const int d = static_cast<int>(dims_.size());
        std::vector<std::int64_t> lo(d), hi(d), it(d);
        std::vector<std::int64_t> center(d);
        for (int i = 0; i < d; ++i) {
            center[i] = cell_coord(x[i], i);
            lo[i] = std::max<std::int64_t>(0, center[i] - ring);
            hi[i] = std::min<std::int64_t>(dims_[i] - 1, center[i] + ring);
            it[i] = lo[i];
        }
        while (true) {
            bool on_shell = ring == 0;
            for (int i = 0; i < d && !on_shell; ++i)
                if (std::llabs(it[i] - center[i]) == ring) on_shell = true;
            if (on_shell) {
                std::int64_t flat = 0;
                for (int i = 0; i < d; ++i) flat = flat * dims_[i] + it[i];
                for (int j : cells_[static_cast<std::size_t>(flat)])
                    best = std::min(best, (points.col(j) - x).norm());
            }
            int axis = d - 1;
            while (axis >= 0 && ++it[axis] > hi[axis]) {
                it[axis] = lo[axis];
                --axis;
            }
            if (axis < 0) break;
        }
    }

    Vector lower_;
    double cell_side_;
    std::vector<std::int64_t> dims_;
    std::vector<std::vector<int>> cells_;
};

/// Scattered centers in a declared box. Immutable after construction (build
/// the index before sharing across threads; queries are read-only).
class PointSet {
  public:
    PointSet(Matrix points, DomainBox box) : points_(std::move(points)), box_(std::move(box)) {
        if (points_.rows() != box_.dim()) throw ConfigError("PointSet: dimension mismatch");
        if (points_.cols() == 0) throw ConfigError("PointSet: empty point set");
        const double tol = 1e-12 * box_.diameter();
        for (int j = 0; j < points_.cols(); ++j)
            if (!box_.contains(points_.col(j), tol))
                throw ConfigError("PointSet: point " + std::to_string(j) + " outside the box");
        reject_duplicates();
    }

    int dim() const { return static_cast<int>(points_.rows()); }
    int size() const { return static_cast<int>(points_.cols()); }
    const Matrix& points() const { return points_; }
    Eigen::Ref<const Vector> point(int j) const { return points_.col(j); }
    const DomainBox& box() const { return box_; }

    /// Build (or rebuild) the bucket index with the given cell side. Queries
    /// are exact for any radius; matching the side to the dominant query
    /// radius keeps them near-linear.
    void build_index(double cell_side) {
        index_ = std::make_shared<GridIndex>(points_, box_, cell_side);
    }
    bool has_index() const { return index_ != nullptr; }
    const GridIndex& index() const {
        if (!index_) throw ConfigError("PointSet: index not built");
        return *index_;
    }

    /// Exactly {j : ||x - p_j|| <= r}, ascending. Falls back to a linear scan
    /// when no index was built.
    std::vector<int> neighbors(const Eigen::Ref<const Vector>& x, double r) const {
        std::vector<int> out;
        neighbors(x, r, out);
        return out;
    }

    void neighbors(const Eigen::Ref<const Vector>& x, double r, std::vector<int>& out) const {
        if (r <= 0.0) throw ConfigError("neighbors: radius must be positive");
        if (index_) {
            index_->query(points_, x, r, out);
            return;
        }
        out.clear();
        const double r2 = r * r;
        for (int j = 0; j < points_.cols(); ++j)
            if ((points_.col(j) - x).squaredNorm() <= r2) out.push_back(j);
    }

    double nearest_distance(const Eigen::Ref<const Vector>& x) const {
        if (index_) return index_->nearest_distance(points_, x);
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < points_.cols(); ++j)
            best = std::min(best, (points_.col(j) - x).norm());
        return best;
    }

  private:
    void reject_duplicates() const {
        const double tol = 1e-14 * box_.diameter();
        GridIndex idx(points_, box_, std::max(tol, box_.diameter() /
                                                       std::max(1.0, std::pow(points_.cols(),
                                                                              1.0 / dim()))));
        std::vector<int> hits;
        for (int j = 0; j < points_.cols(); ++j) {
            idx.query(points_, points_.col(j), tol, hits);
            if (hits.size() > 1)
                throw ConfigError("PointSet: duplicate points " + std::to_string(hits[0]) +
                                  " and " + std::to_string(hits[1]));
        }
    }

    Matrix points_;
    DomainBox box_;
    std::shared_ptr<const GridIndex> index_;
};

struct QualityMetrics {
    double fill_distance = 0.0;      // h_{X,Omega}, probe-lattice estimate
    double separation_distance = 0.0;  // q_X
    double quasi_uniformity = 0.0;     // h/q
};

/// Tensor-product lattice over the box including both endpoints per axis.
/// When the spacing does not divide a side, the per-axis step shrinks to
/// extent/ceil(extent/spacing) so the endpoints stay included.
inline PointSet generate_regular_grid(const DomainBox& box, double spacing) {
    if (spacing <= 0.0) throw ConfigError("generate_regular_grid: spacing must be positive");
    if (spacing > box.shortest_side() * (1.0 + 1e-12))
        throw ConfigError("generate_regular_grid: spacing exceeds shortest box side");
    const int d = box.dim();
    std::vector<int> n(d);
    std::vector<double> step(d);
    std::int64_t total = 1;
    for (int i = 0; i < d; ++i) {
        const double ratio = box.extent()[i] / spacing;
        const double rounded = std::round(ratio);
        n[i] = (std::abs(ratio - rounded) < 1e-9 * std::max(1.0, ratio))
                   ? static_cast<int>(rounded)
                   : static_cast<int>(std::ceil(ratio));
        n[i] = std::max(n[i], 1);
        step[i] = box.extent()[i] / n[i];
        total *= n[i] + 1;
    }
    Matrix pts(d, total);
    std::vector<int> it(d, 0);
    for (std::int64_t col = 0; col < total; ++col) {
        for (int i = 0; i < d; ++i)
            pts(i, col) = (it[i] == n[i]) ? box.upper[i] : box.lower[i] + it[i] * step[i];
        int axis = d - 1;
        while (axis >= 0 && ++it[axis] > n[axis]) {
            it[axis] = 0;
            --axis;
        }
    }
    return PointSet(std::move(pts), box);
}

/// Probe-lattice estimate of sup_x min_j ||x - x_j|| over the box. A lower
/// estimate of the true supremum; the gap is bounded by half the probe cell
/// diagonal and shrinks as probe_resolution grows.
inline double fill_distance(const PointSet& points, const DomainBox& box, int probe_resolution) {
    if (points.size() == 0) throw ConfigError("fill_distance: empty point set");
    if (probe_resolution < 1) throw ConfigError("fill_distance: probe resolution must be >= 1");
    const int d = box.dim();
    // Local index sized for nearest-neighbor scans.
    const double side = box.diameter() / std::max(1.0, std::pow(points.size(), 1.0 / d));
    GridIndex idx(points.points(), box, side);
    std::vector<int> it(d, 0);
    std::vector<double> step(d);
    for (int i = 0; i < d; ++i) step[i] = box.extent()[i] / probe_resolution;
    Vector x(d);
    double worst = 0.0;
    while (true) {
        for (int i = 0; i < d; ++i) x[i] = box.lower[i] + it[i] * step[i];
        worst = std::max(worst, idx.nearest_distance(points.points(), x));
        int axis = d - 1;
        while (axis >= 0 && ++it[axis] > probe_resolution) {
            it[axis] = 0;
            --axis;
        }
        if (axis < 0) break;
    }
    return worst;
}

/// q_X = (1/2) min_{i != j} ||x_i - x_j||.
inline double separation_distance(const PointSet& points) {
    if (points.size() < 2) throw ConfigError("separation_distance: need at least 2 points");
    const int d = points.dim();
    const double side =
        points.box().diameter() / std::max(1.0, std::pow(points.size(), 1.0 / d));
    GridIndex idx(points.points(), points.box(), side);
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> hits;
    // Expanding search radius per point until a distinct neighbor shows up.
    for (int j = 0; j < points.size(); ++j) {
        double r = side;
        while (true) {
            idx.query(points.points(), points.point(j), r, hits);
            double local = std::numeric_limits<double>::infinity();
            for (int k : hits)
                if (k != j) local = std::min(local, (points.point(k) - points.point(j)).norm());
            if (std::isfinite(local)) {
                best = std::min(best, local);
                break;
            }
            if (r > points.box().diameter()) break;
            r *= 2.0;
        }
    }
    return 0.5 * best;
}

inline QualityMetrics quality_metrics(const PointSet& points, const DomainBox& box,
                                      int probe_resolution) {
    QualityMetrics m;
    m.fill_distance = fill_distance(points, box, probe_resolution);
    m.separation_distance = separation_distance(points);
    m.quasi_uniformity = m.fill_distance / m.separation_distance;
    return m;
}

inline std::vector<int> neighbors_in_ball(const PointSet& points,
                                          const Eigen::Ref<const Vector>& x, double radius) {
    return points.neighbors(x, radius);
}

struct UnisolvencyResult {
    bool unisolvent = false;
    double sigma_min = 0.0;
    double sigma_max = 0.0;
};

/// Numerical unisolvency proxy: the selected points determine P_m uniquely
/// iff the Q x #indices matrix of shifted-scaled basis values has full row
/// rank. Rank uses the singular-value cutoff Q * sigma_max * eps * 64.
inline UnisolvencyResult check_unisolvency(const PointSet& points, const std::vector<int>& indices,
                                           int m, double h, const Eigen::Ref<const Vector>& z) {
    if (indices.empty()) throw ConfigError("check_unisolvency: empty index list");
    MultiIndexSet mis(points.dim(), m);
    ScaledBasis basis(mis, z, h);
    Matrix B(mis.size(), static_cast<int>(indices.size()));
    Vector col;
    for (std::size_t c = 0; c < indices.size(); ++c) {
        basis.eval(points.point(indices[c]), col);
        B.col(static_cast<int>(c)) = col;
    }
    Eigen::JacobiSVD<Matrix> svd(B);
    const auto& sv = svd.singularValues();
    UnisolvencyResult r;
    r.sigma_max = sv.size() ? sv[0] : 0.0;
    r.sigma_min = sv.size() ? sv[sv.size() - 1] : 0.0;
    const double tol =
        mis.size() * r.sigma_max * std::numeric_limits<double>::epsilon() * 64.0;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > tol) ++rank;
    r.unisolvent = (rank == mis.size());
    return r;
}

}  // namespace mls
