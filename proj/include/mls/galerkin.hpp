#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mls/approximation.hpp"
#include "mls/mls_core.hpp"
#include "mls/parallel.hpp"
#include "mls/quadrature.hpp"

namespace mls {
namespace galerkin {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// -div(K grad u) + c u = f in the box, (K grad u).n + b u = g on its
/// boundary. Pure Robin data: no essential constraints anywhere.
struct EllipticProblem {
    std::function<Matrix(const Vector&)> K;
    std::function<double(const Vector&)> c;
    std::function<double(const Vector&)> b;  // boundary coefficient
    std::function<double(const Vector&)> f;
    std::function<double(const Vector&)> g;  // boundary datum
    DomainBox domain;

    /// Sampled sanity checks of the coercivity assumptions: K uniformly
    /// elliptic, c and b nonnegative with at least one bounded away from
    /// zero somewhere.
    void validate(int probe_per_axis = 9) const {
        const PointSet probes = generate_regular_grid(domain, domain.shortest_side() /
                                                                  probe_per_axis);
        double cmax = 0.0, bmax = 0.0;
        for (int j = 0; j < probes.size(); ++j) {
            const Vector x = probes.point(j);
            const Matrix k = K(x);
            if ((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-12 * k.cwiseAbs().maxCoeff())
                throw NumericalError("elliptic problem: K is not symmetric at a probe point");
            Eigen::SelfAdjointEigenSolver<Matrix> es(k, Eigen::EigenvaluesOnly);
            if (!(es.eigenvalues()[0] > 0.0))
                throw NumericalError("elliptic problem: K fails the ellipticity probe");
            const double cx = c(x);
            if (cx < 0.0) throw NumericalError("elliptic problem: c < 0 at a probe point");
            cmax = std::max(cmax, cx);
        }
        const QuadratureRule brule = composite_boundary_rule(domain, probe_per_axis, 1);
        for (int q = 0; q < brule.size(); ++q) {
            const double bx = b(brule.nodes.col(q));
            if (bx < 0.0) throw NumericalError("elliptic problem: b < 0 at a boundary probe");
            bmax = std::max(bmax, bx);
        }
        if (cmax <= 0.0 && bmax <= 0.0)
            throw NumericalError("elliptic problem: both c and b vanish; the form is not coercive");
    }
};

struct GalerkinSystem {
    SparseMatrix stiffness;
    Vector load;
    Vector coefficients;  // filled by solve
};

struct SolveInfo {
    double relative_residual = 0.0;
    int iterations = 0;  // 0 for the direct path
    std::string method;
};

/// Bubnov-Galerkin assembly over MLS shape functions: only index pairs with
/// overlapping supports are touched. Accumulation is dense per thread chunk
/// (N stays small here), merged in chunk order, then compressed to sparse.
inline GalerkinSystem assemble(const EllipticProblem& problem, const PointSet& points,
                               const MLSConfig& cfg, double h, const QuadratureRule& quad,
                               const QuadratureRule& bquad, int threads = 1) {
    problem.validate();
    const int n = points.size();
    const int d = points.dim();

    struct Partial {
        Matrix S;
        Vector load;
    };
    auto ensure = [&](Partial& p) {
        if (p.S.rows() != n) {
            p.S = Matrix::Zero(n, n);
            p.load = Vector::Zero(n);
        }
    };

    // Domain terms: grad a_i . K grad a_j + c a_i a_j and f a_j.
    std::vector<Partial> partials;
    parallel_chunks(quad.size(), threads, partials, [&](Partial& p, int begin, int end) {
        ensure(p);
        Evaluator ev(points, cfg, h);
        ShapeBundle bundle;
        Matrix grads;
        for (int q = begin; q < end; ++q) {
            const Vector x = quad.nodes.col(q);
            const double w = quad.weights[q];
            ev.shape_functions(x, 1, bundle);
            const int nj = static_cast<int>(bundle.J.size());
            grads.resize(d, nj);
            for (int axis = 0; axis < d; ++axis)
                grads.row(axis) = bundle.derivative(unit_index(d, axis)).transpose();
            const Matrix kg = problem.K(x) * grads;  // d x nj
            const double cx = problem.c(x);
            const double fx = problem.f(x);
            for (int jj = 0; jj < nj; ++jj) {
                const int gj = bundle.J[jj];
                p.load[gj] += w * fx * bundle.values[jj];
                for (int ii = 0; ii < nj; ++ii) {
                    const int gi = bundle.J[ii];
                    if (gi > gj) continue;  // upper triangle, mirrored later
                    p.S(gi, gj) += w * (grads.col(ii).dot(kg.col(jj)) +
                                        cx * bundle.values[ii] * bundle.values[jj]);
                }
            }
        }
    });

    // Boundary terms: b a_i a_j and g a_j.
    {
        Evaluator ev(points, cfg, h);
        ShapeBundle bundle;
        Partial& p = partials.front();
        ensure(p);
        for (int q = 0; q < bquad.size(); ++q) {
            const Vector x = bquad.nodes.col(q);
            const double w = bquad.weights[q];
            ev.shape_functions(x, 0, bundle);
            const int nj = static_cast<int>(bundle.J.size());
            const double bx = problem.b(x);
            const double gx = problem.g(x);
            for (int jj = 0; jj < nj; ++jj) {
                const int gj = bundle.J[jj];
                p.load[gj] += w * gx * bundle.values[jj];
                if (bx == 0.0) continue;
                for (int ii = 0; ii < nj; ++ii) {
                    const int gi = bundle.J[ii];
                    if (gi > gj) continue;
                    p.S(gi, gj) += w * bx * bundle.values[ii] * bundle.values[jj];
                }
            }
        }
    }

    Matrix dense = Matrix::Zero(n, n);
    Vector load = Vector::Zero(n);
    for (const auto& p : partials) {
        if (p.S.rows() != n) continue;
        dense += p.S;
        load += p.load;
    }
    dense.triangularView<Eigen::StrictlyLower>() =
        dense.triangularView<Eigen::StrictlyUpper>().transpose();

    GalerkinSystem sys;
    sys.stiffness = dense.sparseView();
    sys.stiffness.makeCompressed();
    sys.load = std::move(load);
    return sys;
}

/// Direct sparse SPD solve for moderate N, conjugate gradients beyond.
/// Either path must reach a relative residual of 1e-10.
inline SolveInfo solve(GalerkinSystem& sys) {
    const int n = static_cast<int>(sys.load.size());
    SolveInfo info;
    if (n <= 5000) {
        Eigen::SimplicialLDLT<SparseMatrix> ldlt(sys.stiffness);
        if (ldlt.info() != Eigen::Success)
            throw NumericalError("galerkin solve: sparse factorization failed (system not SPD?)");
        sys.coefficients = ldlt.solve(sys.load);
        info.method = "simplicial_ldlt";
    } else {
        Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper,
                                 Eigen::DiagonalPreconditioner<double>>
            cg(sys.stiffness);
        cg.setTolerance(1e-12);
        cg.setMaxIterations(20L * n);
        sys.coefficients = cg.solve(sys.load);
        info.iterations = static_cast<int>(cg.iterations());
        info.method = "diagonal_pcg";
        if (cg.info() != Eigen::Success) {
            const double dmax = sys.stiffness.diagonal().maxCoeff();
            const double dmin = sys.stiffness.diagonal().minCoeff();
            throw NumericalError(
                "galerkin solve: CG did not converge; residual " + std::to_string(cg.error()) +
                ", diagonal spread estimate " + std::to_string(dmax / std::max(dmin, 1e-300)));
        }
    }
    info.relative_residual =
        (sys.stiffness * sys.coefficients - sys.load).norm() / sys.load.norm();
    if (info.relative_residual > 1e-10)
        throw NumericalError("galerkin solve: residual " +
                             std::to_string(info.relative_residual) + " exceeds 1e-10");
    return info;
}

/// u_N at x from the solved coefficients.
inline double field_value(const Vector& coeffs, Evaluator& ev,
                          const Eigen::Ref<const Vector>& x) {
    ShapeBundle bundle;
    ev.shape_functions(x, 0, bundle);
    double s = 0.0;
    for (std::size_t c = 0; c < bundle.J.size(); ++c) s += bundle.values[c] * coeffs[bundle.J[c]];
    return s;
}

/// Exact manufactured solution u = sin(pi x1) cos(pi x2) (any dimension:
/// trailing axes enter through cos factors) with K = I in mind: f and g
/// follow from the strong form and the Robin condition.
struct Manufactured {
    std::function<double(const Vector&)> u;
    std::function<Vector(const Vector&)> grad_u;
    std::function<double(const Vector&)> laplace_u;
};

inline Manufactured manufactured_sincos(int dim) {
    auto value = [dim](const Vector& x) {
        double v = std::sin(M_PI * x[0]);
        for (int i = 1; i < dim; ++i) v *= std::cos(M_PI * x[i]);
        return v;
    };
    auto grad = [dim, value](const Vector& x) {
        Vector gr(dim);
        for (int i = 0; i < dim; ++i) {
            double v = (i == 0) ? M_PI * std::cos(M_PI * x[0]) : std::sin(M_PI * x[0]);
            for (int k = 1; k < dim; ++k) {
                if (k == i)
                    v *= -M_PI * std::sin(M_PI * x[k]);
                else
                    v *= std::cos(M_PI * x[k]);
            }
            gr[i] = v;
        }
        return gr;
    };
    auto laplace = [dim, value](const Vector& x) { return -dim * M_PI * M_PI * value(x); };
    return Manufactured{value, grad, laplace};
}

/// Named coefficient registry for the CLI. Unknown names are config errors.
inline std::function<Matrix(const Vector&)> kappa_from_registry(const std::string& name, int dim) {
    if (name == "identity_K")
        return [dim](const Vector&) { return Matrix::Identity(dim, dim); };
    if (name == "diag2_K")
        return [dim](const Vector&) { return Matrix(2.0 * Matrix::Identity(dim, dim)); };
    throw ConfigError("unknown kappa registry key '" + name + "'");
}

inline std::function<double(const Vector&)> scalar_from_registry(const std::string& name) {
    if (name == "constant_c" || name == "constant_b" || name == "one") return [](const Vector&) { return 1.0; };
    if (name == "zero") return [](const Vector&) { return 0.0; };
    if (name == "large_b") return [](const Vector&) { return 1000.0; };
    throw ConfigError("unknown scalar registry key '" + name + "'");
}

/// The manufactured Robin problem on the box: K from the registry must be
/// the identity for f, g to follow from the strong form.
inline std::pair<EllipticProblem, Manufactured> manufactured_problem(
    const DomainBox& box, const std::string& kappa_key = "identity_K",
    const std::string& c_key = "constant_c", const std::string& b_key = "constant_b") {
    if (kappa_key != "identity_K")
        throw ConfigError("manufactured problems require kappa = identity_K");
    const int d = box.dim();
    Manufactured mf = manufactured_sincos(d);
    EllipticProblem p;
    p.domain = box;
    p.K = kappa_from_registry(kappa_key, d);
    p.c = scalar_from_registry(c_key);
    p.b = scalar_from_registry(b_key);
    auto c_fn = p.c;
    auto b_fn = p.b;
    p.f = [mf, c_fn](const Vector& x) { return -mf.laplace_u(x) + c_fn(x) * mf.u(x); };
    p.g = [mf, b_fn, box](const Vector& x) {
        const Vector n = box.outward_normal(x);
        return mf.grad_u(x).dot(n) + b_fn(x) * mf.u(x);
    };
    return {p, mf};
}

/// Point layout for the PDE study. Scattered (a seeded quasi-uniform jitter
/// of the lattice) matches the theory's hypothesis and shows the classical
/// rate m; exact lattices superconverge past it through symmetric-stencil
/// cancellation.
enum class PointLayout { Scattered, Grid };

inline PointLayout layout_from_string(const std::string& name) {
    if (name == "scattered") return PointLayout::Scattered;
    if (name == "grid") return PointLayout::Grid;
    throw ConfigError("unknown layout '" + name + "' (expected scattered or grid)");
}

struct GalerkinStudyConfig {
    int m = 2;
    std::vector<double> h_chain{0.1, 0.05, 0.025};
    WeightKind weight_kind = WeightKind::WendlandC4;
    double delta_factor = 0.0;  // 0: 2m
    int gl_per_cell = 5;
    int dim = 2;
    DomainBox box;  // empty: [-0.5,0.5]^dim
    std::string kappa_key = "identity_K";
    std::string c_key = "constant_c";
    std::string b_key = "constant_b";
    PointLayout layout = PointLayout::Scattered;
    unsigned long long seed = 12345;
    double jitter = 0.25;  // in units of the spacing, for the scattered layout
    int threads = 1;

    double resolved_delta_factor() const { return delta_factor > 0 ? delta_factor : 2.0 * m; }
    DomainBox resolved_box() const {
        return box.dim() == 0 ? DomainBox::cube(dim, -0.5, 0.5) : box;
    }
    void validate() const {
        if (m < 1) throw ConfigError("galerkin study: m must be >= 1");
        if (h_chain.empty()) throw ConfigError("galerkin study: h_chain must not be empty");
        for (std::size_t i = 1; i < h_chain.size(); ++i)
            if (std::abs(h_chain[i] - 0.5 * h_chain[i - 1]) > 1e-9 * h_chain[i - 1])
                throw ConfigError("h_chain must halve");
        if (gl_per_cell < 1) throw ConfigError("galerkin study: gl_per_cell must be >= 1");
        if (jitter < 0.0 || jitter > 0.45)
            throw ConfigError("galerkin study: jitter must lie in [0, 0.45]");
    }
};

/// Centers for one study level: the lattice, optionally jittered by a
/// seeded uniform perturbation (clamped to the box).
inline PointSet study_points(const DomainBox& box, double spacing, PointLayout layout,
                             double jitter, unsigned long long seed) {
    PointSet grid = generate_regular_grid(box, spacing);
    if (layout == PointLayout::Grid || jitter == 0.0) return grid;
    Matrix pts = grid.points();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-jitter * spacing, jitter * spacing);
    for (int j = 0; j < pts.cols(); ++j)
        for (int i = 0; i < pts.rows(); ++i)
            pts(i, j) = std::clamp(pts(i, j) + u(rng), box.lower[i], box.upper[i]);
    return PointSet(std::move(pts), box);
}

struct GalerkinRow {
    double h = 0.0;
    int n_points = 0;
    double l2_error = 0.0;
    double h1_error = 0.0;  // W_2^1 norm of the error
    double l2_order = 0.0, h1_order = 0.0;  // 0 on the first row
    double residual = 0.0;
    double symmetry = 0.0;  // max |S - S^T| / max |S|
    std::string method;
};

struct GalerkinReport {
    GalerkinStudyConfig config;
    std::vector<GalerkinRow> rows;
};

/// W_2^1 error of u_N against the exact solution by composite quadrature.
inline std::pair<double, double> solution_errors(const PointSet& points, const Vector& coeffs,
                                                 const MLSConfig& cfg, double h,
                                                 const Manufactured& mf,
                                                 const QuadratureRule& quad, int threads = 1) {
    const int d = points.dim();
    struct Partial {
        double l2 = 0.0, h1 = 0.0;
    };
    std::vector<Partial> partials;
    parallel_chunks(quad.size(), threads, partials, [&](Partial& p, int begin, int end) {
        Evaluator ev(points, cfg, h);
        ShapeBundle bundle;
        for (int q = begin; q < end; ++q) {
            const Vector x = quad.nodes.col(q);
            ev.shape_functions(x, 1, bundle);
            double s = 0.0;
            Vector gs = Vector::Zero(d);
            for (std::size_t c = 0; c < bundle.J.size(); ++c) s += bundle.values[c] * coeffs[bundle.J[c]];
            for (int axis = 0; axis < d; ++axis) {
                const Vector& dv = bundle.derivative(unit_index(d, axis));
                for (std::size_t c = 0; c < bundle.J.size(); ++c)
                    gs[axis] += dv[c] * coeffs[bundle.J[c]];
            }
            const double diff = s - mf.u(x);
            const Vector gdiff = gs - mf.grad_u(x);
            p.l2 += quad.weights[q] * diff * diff;
            p.h1 += quad.weights[q] * (diff * diff + gdiff.squaredNorm());
        }
    });
    double l2 = 0.0, h1 = 0.0;
    for (const auto& p : partials) {
        l2 += p.l2;
        h1 += p.h1;
    }
    return {std::sqrt(l2), std::sqrt(h1)};
}

/// Manufactured-solution convergence: assemble, solve, measure the W_2^1
/// error, and report log2 order ratios between halvings.
inline GalerkinReport galerkin_convergence_study(const GalerkinStudyConfig& cfg) {
    cfg.validate();
    const DomainBox box = cfg.resolved_box();
    auto [problem, mf] = manufactured_problem(box, cfg.kappa_key, cfg.c_key, cfg.b_key);

    GalerkinReport report;
    report.config = cfg;
    for (double spacing : cfg.h_chain) {
        PointSet grid = study_points(box, spacing, cfg.layout, cfg.jitter, cfg.seed);
        const double delta = cfg.resolved_delta_factor() * spacing;
        grid.build_index(delta);
        const double scale = spacing * std::sqrt(static_cast<double>(box.dim())) / 2.0;
        MLSConfig mls_cfg;
        mls_cfg.m = cfg.m;
        mls_cfg.weight_kind = cfg.weight_kind;
        mls_cfg.delta_rule = DeltaRule::fixed(delta);

        const int cells = std::max(1, static_cast<int>(std::round(box.shortest_side() / spacing)));
        const QuadratureRule quad = composite_box_rule(box, cells, cfg.gl_per_cell);
        const QuadratureRule bquad = composite_boundary_rule(box, cells, cfg.gl_per_cell);

        GalerkinSystem sys = assemble(problem, grid, mls_cfg, scale, quad, bquad, cfg.threads);
        const Matrix dense = Matrix(sys.stiffness);
        const double symmetry =
            (dense - dense.transpose()).cwiseAbs().maxCoeff() / dense.cwiseAbs().maxCoeff();
        const SolveInfo info = solve(sys);
        const auto [l2, h1] =
            solution_errors(grid, sys.coefficients, mls_cfg, scale, mf, quad, cfg.threads);

        GalerkinRow row;
        row.h = spacing;
        row.n_points = grid.size();
        row.l2_error = l2;
        row.h1_error = h1;
        row.residual = info.relative_residual;
        row.symmetry = symmetry;
        row.method = info.method;
        if (!report.rows.empty()) {
            row.l2_order = std::log2(report.rows.back().l2_error / l2);
            row.h1_order = std::log2(report.rows.back().h1_error / h1);
        }
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace galerkin
}  // namespace mls
