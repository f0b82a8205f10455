#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mls/galerkin.hpp"
#include "support/oracles.hpp"

using mls::DeltaRule;
using mls::DomainBox;
using mls::Evaluator;
using mls::Matrix;
using mls::MLSConfig;
using mls::PointSet;
using mls::ShapeBundle;
using mls::Vector;
using namespace mls::galerkin;

namespace {

DomainBox square() { return DomainBox::cube(2, -0.5, 0.5); }

struct Setup {
    PointSet points;
    MLSConfig cfg;
    double scale;
    mls::QuadratureRule quad, bquad;
};

Setup make_setup(const DomainBox& box, double spacing, int m, int gl = 5) {
    PointSet grid = mls::generate_regular_grid(box, spacing);
    const double delta = 2.0 * m * spacing;
    grid.build_index(delta);
    MLSConfig cfg;
    cfg.m = m;
    cfg.delta_rule = DeltaRule::fixed(delta);
    const int cells = std::max(1, static_cast<int>(std::round(box.shortest_side() / spacing)));
    return Setup{std::move(grid), cfg, spacing * std::sqrt(box.dim()) / 2.0,
                 mls::composite_box_rule(box, cells, gl),
                 mls::composite_boundary_rule(box, cells, gl)};
}

}  // namespace

TEST(Manufactured, SatisfiesStrongFormAtRandomPoints) {
    // f and g were derived from u: residual substitution must vanish.
    auto [problem, mf] = manufactured_problem(square());
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 30; ++rep) {
        const Vector x = oracles::random_point_in(square(), rng);
        const double resid = -mf.laplace_u(x) + problem.c(x) * mf.u(x) - problem.f(x);
        EXPECT_NEAR(resid, 0.0, 1e-12);
    }
    // Robin datum on each face: g = grad u . n + b u.
    for (double t = -0.45; t <= 0.45; t += 0.1) {
        Vector e(2);
        e << 0.5, t;  // right face
        EXPECT_NEAR(problem.g(e), mf.grad_u(e)[0] + mf.u(e), 1e-13);
        e << t, -0.5;  // bottom face
        EXPECT_NEAR(problem.g(e), -mf.grad_u(e)[1] + mf.u(e), 1e-13);
    }
}

TEST(Assemble, StiffnessSymmetricToTheBit) {
    auto s = make_setup(square(), 0.1, 2);
    auto [problem, mf] = manufactured_problem(square());
    const auto sys = assemble(problem, s.points, s.cfg, s.scale, s.quad, s.bquad);
    const Matrix dense = Matrix(sys.stiffness);
    EXPECT_EQ((dense - dense.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Assemble, SparsityWithinOverlappingSupports) {
    auto s = make_setup(square(), 0.1, 2);
    auto [problem, mf] = manufactured_problem(square());
    const auto sys = assemble(problem, s.points, s.cfg, s.scale, s.quad, s.bquad);
    const double delta = 4.0 * 0.1;
    for (int k = 0; k < sys.stiffness.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(sys.stiffness, k); it; ++it)
            EXPECT_LT((s.points.point(it.row()) - s.points.point(it.col())).norm(), 2.0 * delta);
}

TEST(Assemble, ConstantFieldRowSums) {
    // (S 1)_i = integral of c a_i + boundary integral of b a_i: the gradient
    // term annihilates constants through the partition of unity.
    auto s = make_setup(square(), 0.125, 2);
    auto [problem, mf] = manufactured_problem(square());
    const auto sys = assemble(problem, s.points, s.cfg, s.scale, s.quad, s.bquad);
    const Vector row_sums = sys.stiffness * Vector::Ones(s.points.size());

    // Same quadrature, mass-style loads with f <- c and g <- b.
    EllipticProblem mass = problem;
    mass.f = problem.c;
    mass.g = problem.b;
    const auto mass_sys = assemble(mass, s.points, s.cfg, s.scale, s.quad, s.bquad);
    EXPECT_LT((row_sums - mass_sys.load).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Assemble, OneDimensionalBruteForceOracle) {
    // d=1, K=1, c=0, large Robin b: entries against a naive full N^2 loop
    // over the same quadrature using independently evaluated bundles.
    const DomainBox line = DomainBox::cube(1, 0.0, 1.0);
    auto s = make_setup(line, 0.1, 2, 6);
    EllipticProblem problem;
    problem.domain = line;
    problem.K = [](const Vector&) { return Matrix::Identity(1, 1); };
    problem.c = [](const Vector&) { return 0.0; };
    problem.b = [](const Vector&) { return 1000.0; };
    problem.f = [](const Vector& x) { return std::sin(x[0]); };
    problem.g = [](const Vector&) { return 1.0; };
    const auto sys = assemble(problem, s.points, s.cfg, s.scale, s.quad, s.bquad);

    const int n = s.points.size();
    Matrix naive = Matrix::Zero(n, n);
    Vector naive_load = Vector::Zero(n);
    Evaluator ev(s.points, s.cfg, s.scale);
    ShapeBundle bundle;
    auto accumulate = [&](const Vector& x, double w, bool boundary) {
        ev.shape_functions(x, boundary ? 0 : 1, bundle);
        Vector a = Vector::Zero(n), da = Vector::Zero(n);
        for (std::size_t c = 0; c < bundle.J.size(); ++c) {
            a[bundle.J[c]] = bundle.values[c];
            if (!boundary) da[bundle.J[c]] = bundle.derivative(mls::MultiIndex{1})[c];
        }
        if (boundary) {
            naive += w * 1000.0 * a * a.transpose();
            naive_load += w * problem.g(x) * a;
        } else {
            naive += w * da * da.transpose();
            naive_load += w * problem.f(x) * a;
        }
    };
    for (int q = 0; q < s.quad.size(); ++q) accumulate(s.quad.nodes.col(q), s.quad.weights[q], false);
    for (int q = 0; q < s.bquad.size(); ++q)
        accumulate(s.bquad.nodes.col(q), s.bquad.weights[q], true);

    EXPECT_LT((Matrix(sys.stiffness) - naive).cwiseAbs().maxCoeff(),
              1e-10 * naive.cwiseAbs().maxCoeff());
    EXPECT_LT((sys.load - naive_load).cwiseAbs().maxCoeff(), 1e-12 * naive_load.cwiseAbs().maxCoeff());
}

TEST(Solve, ResidualMeetsTargetAndDiagonalSystemIsExact) {
    GalerkinSystem diag;
    Matrix d = Matrix::Zero(4, 4);
    d.diagonal() << 1, 2, 3, 4;
    diag.stiffness = d.sparseView();
    diag.load = Vector::Ones(4);
    const auto info = solve(diag);
    EXPECT_LT(info.relative_residual, 1e-14);
    for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(diag.coefficients[i], 1.0 / (i + 1));

    auto s = make_setup(square(), 0.1, 2);
    auto [problem, mf] = manufactured_problem(square());
    auto sys = assemble(problem, s.points, s.cfg, s.scale, s.quad, s.bquad);
    const auto run = solve(sys);
    EXPECT_LE(run.relative_residual, 1e-10);
    EXPECT_LT((sys.stiffness * sys.coefficients - sys.load).norm(), 1e-10 * sys.load.norm());
}

TEST(Solve, GalerkinOrthogonalityResidual) {
    // a(u - u_N, a_j) at 20 sampled j, with a(u, a_j) computed from the exact
    // solution through quadrature. The identity holds only up to the
    // integration-by-parts defect of the rule, so measure with a dense one.
    auto s = make_setup(square(), 0.05, 2);
    const int cells = 2 * static_cast<int>(std::round(1.0 / 0.05));
    s.quad = mls::composite_box_rule(square(), cells, 5);
    s.bquad = mls::composite_boundary_rule(square(), cells, 5);
    auto [problem, mf] = manufactured_problem(square());
    auto sys = assemble(problem, s.points, s.cfg, s.scale, s.quad, s.bquad);
    solve(sys);

    const int n = s.points.size();
    Vector a_u = Vector::Zero(n);  // a(u, a_j) by quadrature
    Evaluator ev(s.points, s.cfg, s.scale);
    ShapeBundle bundle;
    for (int q = 0; q < s.quad.size(); ++q) {
        const Vector x = s.quad.nodes.col(q);
        const double w = s.quad.weights[q];
        ev.shape_functions(x, 1, bundle);
        const Vector gu = mf.grad_u(x);
        for (std::size_t c = 0; c < bundle.J.size(); ++c) {
            double grad_term = 0.0;
            for (int axis = 0; axis < 2; ++axis)
                grad_term += bundle.derivative(mls::unit_index(2, axis))[c] * gu[axis];
            a_u[bundle.J[c]] += w * (grad_term + problem.c(x) * mf.u(x) * bundle.values[c]);
        }
    }
    for (int q = 0; q < s.bquad.size(); ++q) {
        const Vector x = s.bquad.nodes.col(q);
        ev.shape_functions(x, 0, bundle);
        for (std::size_t c = 0; c < bundle.J.size(); ++c)
            a_u[bundle.J[c]] += s.bquad.weights[q] * problem.b(x) * mf.u(x) * bundle.values[c];
    }
    const Vector a_un = sys.stiffness * sys.coefficients;
    std::mt19937_64 rng(11);
    const double scale = sys.load.norm();
    for (int rep = 0; rep < 20; ++rep) {
        const int j = static_cast<int>(rng() % n);
        EXPECT_LE(std::abs(a_u[j] - a_un[j]), 1e-8 * scale) << "row " << j;
    }
}

TEST(Study, ManufacturedOrderAndMonotoneErrors) {
    GalerkinStudyConfig cfg;
    cfg.h_chain = {0.1, 0.05};
    cfg.gl_per_cell = 4;
    const auto rep = galerkin_convergence_study(cfg);
    ASSERT_EQ(rep.rows.size(), 2u);
    EXPECT_LT(rep.rows[1].h1_error, rep.rows[0].h1_error);
    EXPECT_LT(rep.rows[1].l2_error, rep.rows[0].l2_error);
    EXPECT_LE(rep.rows[1].l2_error, rep.rows[1].h1_error);  // norm inclusion
    EXPECT_LE(rep.rows[1].residual, 1e-10);
    EXPECT_NEAR(rep.rows[1].h1_order, 2.0, 0.5);
}

TEST(Study, QuadratureDensityInvariance) {
    GalerkinStudyConfig cfg;
    cfg.h_chain = {0.1};
    cfg.gl_per_cell = 4;
    const auto coarse = galerkin_convergence_study(cfg);
    cfg.gl_per_cell = 8;
    cfg.threads = 3;  // also exercises the chunked assembly path
    const auto fine = galerkin_convergence_study(cfg);
    EXPECT_LT(std::abs(coarse.rows[0].h1_error - fine.rows[0].h1_error) / fine.rows[0].h1_error,
              0.01);
}

TEST(Study, RegistryValidation) {
    GalerkinStudyConfig cfg;
    cfg.kappa_key = "unknown_K";
    cfg.h_chain = {0.1};
    EXPECT_THROW(galerkin_convergence_study(cfg), mls::ConfigError);
    EXPECT_THROW(layout_from_string("helix"), mls::ConfigError);
    EXPECT_NO_THROW(scalar_from_registry("large_b"));
}

TEST(Problem, ValidationCatchesNonCoercive) {
    EllipticProblem p;
    p.domain = square();
    p.K = [](const Vector&) { return Matrix::Identity(2, 2); };
    p.c = [](const Vector&) { return 0.0; };
    p.b = [](const Vector&) { return 0.0; };
    p.f = [](const Vector&) { return 1.0; };
    p.g = [](const Vector&) { return 0.0; };
    EXPECT_THROW(p.validate(), mls::NumericalError);
    p.c = [](const Vector& x) { return -1.0; };
    EXPECT_THROW(p.validate(), mls::NumericalError);
    p.c = [](const Vector&) { return 1.0; };
    EXPECT_NO_THROW(p.validate());
    p.K = [](const Vector&) { return Matrix(-Matrix::Identity(2, 2)); };
    EXPECT_THROW(p.validate(), mls::NumericalError);
}

TEST(ScatteredLayout, DeterministicAndQuasiUniform) {
    const auto a = study_points(square(), 0.1, PointLayout::Scattered, 0.25, 99);
    const auto b = study_points(square(), 0.1, PointLayout::Scattered, 0.25, 99);
    EXPECT_EQ(a.points(), b.points());
    const auto c = study_points(square(), 0.1, PointLayout::Scattered, 0.25, 100);
    EXPECT_NE(a.points(), c.points());
    EXPECT_GE(mls::separation_distance(a), 0.02);
    EXPECT_LE(mls::fill_distance(a, square(), 100), 0.1);
    const auto grid = study_points(square(), 0.1, PointLayout::Grid, 0.25, 99);
    EXPECT_EQ(grid.size(), 121);
    EXPECT_DOUBLE_EQ(mls::separation_distance(grid), 0.05);
}
