#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mls/mls_core.hpp"
#include "support/oracles.hpp"

using mls::BasisMode;
using mls::DeltaRule;
using mls::DomainBox;
using mls::Evaluator;
using mls::Matrix;
using mls::MLSConfig;
using mls::MultiIndex;
using mls::PointSet;
using mls::ShapeBundle;
using mls::Vector;
using mls::WeightKind;

namespace {

MLSConfig config(int m, double delta_factor = 0.0) {
    MLSConfig cfg;
    cfg.m = m;
    cfg.delta_rule = DeltaRule::proportional(delta_factor > 0 ? delta_factor
                                                              : 2.0 * std::max(m, 1) + 0.5);
    return cfg;
}

DomainBox square() { return DomainBox::cube(2, -0.5, 0.5); }

}  // namespace

TEST(ConeConstants, FormulaValues) {
    // theta -> pi/2 (sin = 1), m = 1: C2 = 64/3.
    const auto near_right = mls::cone_constants(M_PI / 2.0 - 1e-9, 1.0, 1);
    EXPECT_NEAR(near_right.c2, 64.0 / 3.0, 1e-5);
    // m doubled quadruples C2.
    const auto m1 = mls::cone_constants(0.7, 1.0, 1);
    const auto m2 = mls::cone_constants(0.7, 1.0, 2);
    EXPECT_NEAR(m2.c2 / m1.c2, 4.0, 1e-12);
    // theta = pi/6, m = 2, r = 1: C2 = 16*(1.5)^2*4/(3*0.25) = 192.
    const auto c = mls::cone_constants(M_PI / 6.0, 1.0, 2);
    EXPECT_NEAR(c.c2, 192.0, 1e-10);
    EXPECT_NEAR(c.h0, 1.0 / 192.0, 1e-14);
    EXPECT_THROW(mls::cone_constants(0.0, 1.0, 1), mls::ConfigError);
    EXPECT_THROW(mls::cone_constants(2.0, 1.0, 1), mls::ConfigError);
    EXPECT_THROW(mls::cone_constants(0.5, -1.0, 1), mls::ConfigError);
}

TEST(Assemble, ShepardDegreeZero) {
    auto grid = mls::generate_regular_grid(square(), 0.25);
    grid.build_index(0.6);
    Vector x(2);
    x << 0.05, -0.1;
    MLSConfig cfg = config(0);
    cfg.delta_rule = DeltaRule::fixed(0.6);
    const auto sys = mls::assemble_local_system(grid, x, cfg, 0.25);
    ASSERT_EQ(sys.A.rows(), 1);
    double wsum = 0.0;
    for (int j : sys.J) wsum += mls::phi(WeightKind::WendlandC4, (grid.point(j) - x).norm() / 0.6);
    EXPECT_NEAR(sys.A(0, 0), wsum, 1e-14 * wsum);
    EXPECT_NEAR(sys.lambda_min, wsum, 1e-12 * wsum);
    // Shepard lambda and weights.
    const Vector lambda = mls::solve_lambda(sys, x);
    EXPECT_NEAR(lambda[0], 1.0 / wsum, 1e-14 / wsum);
    const auto bundle = mls::shape_functions(grid, x, cfg, 0.25, 0);
    EXPECT_NEAR(bundle.values.sum(), 1.0, 1e-13);
    for (int c = 0; c < bundle.values.size(); ++c) EXPECT_GE(bundle.values[c], 0.0);
}

TEST(Assemble, SymmetricFourNeighborCase) {
    // z = x at the centroid of a symmetric 4-point cross: first-degree rows
    // of A vanish against the constant column by odd symmetry.
    Matrix pts(2, 4);
    pts.col(0) << 0.2, 0.0;
    pts.col(1) << -0.2, 0.0;
    pts.col(2) << 0.0, 0.2;
    pts.col(3) << 0.0, -0.2;
    PointSet ps(pts, square());
    MLSConfig cfg = config(1);
    cfg.delta_rule = DeltaRule::fixed(0.5);
    const auto sys = mls::assemble_local_system(ps, Vector::Zero(2), cfg, 0.2);
    ASSERT_EQ(sys.A.rows(), 3);
    EXPECT_NEAR(sys.A(0, 1), 0.0, 1e-15);
    EXPECT_NEAR(sys.A(0, 2), 0.0, 1e-15);
    EXPECT_EQ(sys.A, Matrix(sys.A.transpose()));  // symmetric to the bit
}

TEST(Assemble, MatchesNaiveTripleLoop) {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        auto ps = oracles::jittered_grid(square(), 0.1, 0.3, rng);
        ps.build_index(0.45);
        const Vector x = oracles::random_point_in(square(), rng, 0.05);
        MLSConfig cfg = config(2);
        cfg.delta_rule = DeltaRule::fixed(0.45);
        const auto sys = mls::assemble_local_system(ps, x, cfg, 0.1);
        const Matrix oracle =
            oracles::naive_local_gram(ps, x, 2, WeightKind::WendlandC4, 0.45, 0.1);
        EXPECT_LT((sys.A - oracle).cwiseAbs().maxCoeff(), 1e-13 * oracle.cwiseAbs().maxCoeff());
    }
}

TEST(Assemble, ErrorsNameTheFailure) {
    auto grid = mls::generate_regular_grid(square(), 0.25);
    grid.build_index(0.05);
    Vector x(2);
    x << 0.1, 0.1;  // cell center: nearest node at distance ~0.17
    MLSConfig cfg = config(1);
    cfg.delta_rule = DeltaRule::fixed(0.05);
    EXPECT_THROW(mls::assemble_local_system(grid, x, cfg, 0.25), mls::CoverageError);

    // Collinear-only coverage cannot determine a linear polynomial.
    Matrix line(2, 5);
    for (int j = 0; j < 5; ++j) line.col(j) << -0.4 + 0.2 * j, 0.0;
    PointSet collinear(line, square());
    MLSConfig cfg1 = config(1);
    cfg1.delta_rule = DeltaRule::fixed(0.3);
    try {
        mls::assemble_local_system(collinear, Vector::Zero(2), cfg1, 0.2);
        FAIL() << "expected DeficientNeighborhoodError";
    } catch (const mls::DeficientNeighborhoodError& e) {
        EXPECT_GT(e.sigma_max, 0.0);
        EXPECT_LT(e.sigma_min, 1e-10 * e.sigma_max);
    }
}

TEST(SolveLambda, ResidualAndUnitRhs) {
    std::mt19937_64 rng(23);
    for (int rep = 0; rep < 10; ++rep) {
        auto ps = oracles::jittered_grid(square(), 0.1, 0.25, rng);
        ps.build_index(0.5);
        const Vector x = oracles::random_point_in(square(), rng, 0.02);
        MLSConfig cfg = config(2);
        cfg.delta_rule = DeltaRule::fixed(0.5);
        const auto sys = mls::assemble_local_system(ps, x, cfg, 0.1);
        const Vector lambda = mls::solve_lambda(sys, x);
        // With z = x the right-hand side is e0; residual within 1e-12 relative.
        Vector e0 = Vector::Zero(sys.A.rows());
        e0[0] = 1.0;
        EXPECT_LT((sys.A * lambda - e0).norm(), 1e-12 * e0.norm());
    }
}

TEST(ShapeFunctions, PartitionOfUnityAndCompactSupport) {
    std::mt19937_64 rng(31);
    for (int m : {0, 1, 2, 3}) {
        auto ps = oracles::jittered_grid(square(), 0.1, 0.2, rng);
        const MLSConfig cfg = config(m);
        Evaluator ev(ps, cfg, 0.1);
        ShapeBundle bundle;
        for (int rep = 0; rep < 20; ++rep) {
            const Vector x = oracles::random_point_in(square(), rng);
            ev.shape_functions(x, 0, bundle);
            EXPECT_NEAR(bundle.values.sum(), 1.0, 1e-12);
            // Assembly never touches points with ||x - x_j|| > delta.
            for (int j : bundle.J)
                EXPECT_LE((ps.point(j) - x).norm(), ev.support_radius() * (1 + 1e-15));
        }
    }
}

TEST(ShapeFunctions, PolynomialReproduction) {
    std::mt19937_64 rng(37);
    for (int m : {0, 1, 2, 3}) {
        auto ps = oracles::jittered_grid(square(), 0.12, 0.25, rng);
        const MLSConfig cfg = config(m);
        Evaluator ev(ps, cfg, 0.12);
        mls::MultiIndexSet poly(2, m);
        ShapeBundle bundle;
        for (int rep = 0; rep < 25; ++rep) {
            const Vector x = oracles::random_point_in(square(), rng);
            ev.shape_functions(x, 0, bundle);
            for (const auto& gamma : poly.indices()) {
                double sum = 0.0;
                for (std::size_t c = 0; c < bundle.J.size(); ++c)
                    sum += bundle.values[c] * oracles::monomial(ps.point(bundle.J[c]), gamma);
                EXPECT_NEAR(sum, oracles::monomial(x, gamma), 1e-10)
                    << "m=" << m << " gamma order " << mls::order(gamma);
            }
        }
    }
}

TEST(ShapeFunctions, DerivativeReproduction) {
    std::mt19937_64 rng(41);
    for (int m : {1, 2, 3}) {
        auto ps = oracles::jittered_grid(square(), 0.12, 0.25, rng);
        const double h = 0.12;
        const MLSConfig cfg = config(m);
        Evaluator ev(ps, cfg, h);
        mls::MultiIndexSet poly(2, m);
        mls::MultiIndexSet derivs(2, std::min(m, 2));
        ShapeBundle bundle;
        for (int rep = 0; rep < 15; ++rep) {
            const Vector x = oracles::random_point_in(square(), rng);
            ev.shape_functions(x, std::min(m, 2), bundle);
            for (const auto& beta : derivs.indices()) {
                const Vector& dv = bundle.derivative(beta);
                for (const auto& gamma : poly.indices()) {
                    double sum = 0.0;
                    for (std::size_t c = 0; c < bundle.J.size(); ++c)
                        sum += dv[c] * oracles::monomial(ps.point(bundle.J[c]), gamma);
                    const double expect = oracles::monomial_derivative(x, gamma, beta);
                    EXPECT_NEAR(sum, expect, 1e-8 * std::pow(h, -mls::order(beta)))
                        << "m=" << m << " |beta|=" << mls::order(beta);
                }
            }
        }
    }
}

TEST(ShapeFunctions, MatchesWeightedLeastSquaresOracle) {
    std::mt19937_64 rng(43);
    for (int rep = 0; rep < 20; ++rep) {
        const int m = 1 + static_cast<int>(rng() % 3);  // m <= 3
        auto ps = oracles::jittered_grid(square(), 0.1, 0.3, rng);
        const double delta = 2.0 * std::max(m, 1) * 0.1;
        MLSConfig cfg = config(m);
        cfg.delta_rule = DeltaRule::fixed(delta);
        Evaluator ev(ps, cfg, 0.1);
        const Vector x = oracles::random_point_in(square(), rng, 0.05);
        ShapeBundle bundle;
        ev.shape_functions(x, 0, bundle);
        const Vector oracle =
            oracles::wls_shape_functions(ps, x, m, WeightKind::WendlandC4, delta, bundle.J);
        for (int c = 0; c < bundle.values.size(); ++c)
            EXPECT_NEAR(bundle.values[c], oracle[c], 1e-9) << "m=" << m;
    }
}

TEST(DerivativeEngine, MatchesFiniteDifferences) {
    std::mt19937_64 rng(47);
    ShapeBundle bundle;
    for (int rep = 0; rep < 15; ++rep) {
        const int m = 2 + static_cast<int>(rng() % 2);
        auto ps = oracles::jittered_grid(square(), 0.1, 0.25, rng);
        const double h = 0.1;
        const MLSConfig cfg = config(m);
        Evaluator ev(ps, cfg, h);
        const Vector x = oracles::random_point_in(square(), rng, 0.05);
        ev.shape_functions(x, 2, bundle);
        const int n = ps.size();

        // First derivatives: central differences with step 1e-5 h.
        for (int axis = 0; axis < 2; ++axis) {
            const double step = 1e-5 * h;
            Vector xp = x, xm = x;
            xp[axis] += step;
            xm[axis] -= step;
            const Vector fd = (oracles::dense_shape_values(ev, xp, n) -
                               oracles::dense_shape_values(ev, xm, n)) /
                              (2.0 * step);
            ev.shape_functions(x, 2, bundle);
            const Vector& an = bundle.derivative(mls::unit_index(2, axis));
            double worst = 0.0;
            for (std::size_t c = 0; c < bundle.J.size(); ++c)
                worst = std::max(worst, std::abs(an[c] - fd[bundle.J[c]]));
            EXPECT_LT(worst, 5e-6 * fd.cwiseAbs().maxCoeff());
        }

        // Pure second derivatives: second-order central stencil, step 1e-4 h.
        for (int axis = 0; axis < 2; ++axis) {
            const double step = 1e-4 * h;
            Vector xp = x, xm = x;
            xp[axis] += step;
            xm[axis] -= step;
            const Vector f0 = oracles::dense_shape_values(ev, x, n);
            const Vector fd = (oracles::dense_shape_values(ev, xp, n) - 2.0 * f0 +
                               oracles::dense_shape_values(ev, xm, n)) /
                              (step * step);
            MultiIndex beta(2, 0);
            beta[axis] = 2;
            ev.shape_functions(x, 2, bundle);
            const Vector& an = bundle.derivative(beta);
            double worst = 0.0;
            for (std::size_t c = 0; c < bundle.J.size(); ++c)
                worst = std::max(worst, std::abs(an[c] - fd[bundle.J[c]]));
            EXPECT_LT(worst, 5e-4 * fd.cwiseAbs().maxCoeff());
        }

        // Mixed second derivative via the cross stencil.
        {
            const double step = 1e-4 * h;
            Vector xpp = x, xpm = x, xmp = x, xmm = x;
            xpp[0] += step; xpp[1] += step;
            xpm[0] += step; xpm[1] -= step;
            xmp[0] -= step; xmp[1] += step;
            xmm[0] -= step; xmm[1] -= step;
            const Vector fd =
                (oracles::dense_shape_values(ev, xpp, n) - oracles::dense_shape_values(ev, xpm, n) -
                 oracles::dense_shape_values(ev, xmp, n) + oracles::dense_shape_values(ev, xmm, n)) /
                (4.0 * step * step);
            ev.shape_functions(x, 2, bundle);
            const Vector& an = bundle.derivative(MultiIndex{1, 1});
            double worst = 0.0;
            for (std::size_t c = 0; c < bundle.J.size(); ++c)
                worst = std::max(worst, std::abs(an[c] - fd[bundle.J[c]]));
            EXPECT_LT(worst, 5e-4 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
        }
    }
}

TEST(DerivativeEngine, DerivativeOfUnitPartitionVanishes) {
    std::mt19937_64 rng(53);
    auto ps = oracles::jittered_grid(square(), 0.1, 0.2, rng);
    const MLSConfig cfg = config(2);
    Evaluator ev(ps, cfg, 0.1);
    ShapeBundle bundle;
    for (int rep = 0; rep < 20; ++rep) {
        const Vector x = oracles::random_point_in(square(), rng);
        ev.shape_functions(x, 2, bundle);
        for (const auto& [beta, dv] : bundle.derivatives)
            EXPECT_NEAR(dv.sum(), 0.0, 1e-8 * std::pow(0.1, -mls::order(beta)))
                << "beta order " << mls::order(beta);
    }
}

TEST(DerivativeEngine, RequestedSubsetOnly) {
    std::mt19937_64 rng(59);
    auto ps = oracles::jittered_grid(square(), 0.1, 0.2, rng);
    Evaluator ev(ps, config(3), 0.1);
    ShapeBundle full, part;
    const Vector x = oracles::random_point_in(square(), rng, 0.05);
    ev.shape_functions(x, 2, full);
    ev.shape_functions(x, std::vector<MultiIndex>{{2, 0}}, part);
    // The closure of (2,0) carries (1,0) and (2,0) but not the x2 derivatives.
    EXPECT_EQ(part.derivatives.size(), 2u);
    EXPECT_TRUE(part.derivative(MultiIndex{1, 0}).isApprox(full.derivative(MultiIndex{1, 0}), 1e-12));
    EXPECT_TRUE(part.derivative(MultiIndex{2, 0}).isApprox(full.derivative(MultiIndex{2, 0}), 1e-12));
    EXPECT_THROW(part.derivative(MultiIndex{0, 1}), mls::ConfigError);
    EXPECT_THROW(ev.shape_functions(x, 3, full), mls::ConfigError);
}

TEST(Stability, ShiftedScaledStaysPutUnscaledDecays) {
    // lambda_min stays within a constant factor for the shifted-scaled basis
    // and decreases monotonically for global monomials as h -> 0.
    std::vector<double> shifted, unscaled;
    for (double spacing : {0.1, 0.05, 0.025}) {
        auto grid = mls::generate_regular_grid(square(), spacing);
        const double delta = 4.0 * spacing;
        grid.build_index(delta);
        const double scale = spacing * std::sqrt(2.0) / 2.0;
        Matrix samples(2, 9);
        int c = 0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) samples.col(c++) << -0.4 + 0.4 * i, -0.4 + 0.4 * j;
        MLSConfig cfg = config(2);
        cfg.delta_rule = DeltaRule::fixed(delta);
        auto rep = mls::stability_report(grid, cfg, scale, samples, 0);
        shifted.push_back(rep.min_lambda_min);
        cfg.basis_mode = BasisMode::UnscaledGlobal;
        rep = mls::stability_report(grid, cfg, scale, samples, 0);
        unscaled.push_back(rep.min_lambda_min);
    }
    const double spread = *std::max_element(shifted.begin(), shifted.end()) /
                          *std::min_element(shifted.begin(), shifted.end());
    EXPECT_LT(spread, 4.0);
    for (std::size_t i = 1; i < unscaled.size(); ++i) EXPECT_LT(unscaled[i], unscaled[i - 1]);
}

TEST(Stability, ShepardLebesgueIsOne) {
    auto grid = mls::generate_regular_grid(square(), 0.1);
    MLSConfig cfg = config(0);
    Matrix samples(2, 3);
    samples.col(0) << 0.0, 0.0;
    samples.col(1) << 0.21, -0.13;
    samples.col(2) << -0.499, 0.499;
    const auto rep = mls::stability_report(grid, cfg, 0.1, samples, 0);
    ASSERT_EQ(rep.betas.size(), 1u);
    for (int s = 0; s < 3; ++s) EXPECT_NEAR(rep.lebesgue_per_sample(0, s), 1.0, 1e-12);
}

TEST(DerivativeEngine, EvaluationAtACenterHitsTheRadialLimit) {
    // x equal to a data site exercises the r = 0 weight-derivative branch
    // (gradient 0, Hessian phi''(0)/delta^2 I) inside the assembly.
    auto grid = mls::generate_regular_grid(square(), 0.1);
    const double delta = 0.4;
    grid.build_index(delta);
    MLSConfig cfg = config(2);
    cfg.delta_rule = DeltaRule::fixed(delta);
    Evaluator ev(grid, cfg, 0.1);
    Vector x(2);
    x << -0.1, 0.2;  // a grid node
    ShapeBundle bundle;
    ev.shape_functions(x, 2, bundle);
    EXPECT_NEAR(bundle.values.sum(), 1.0, 1e-12);
    const int n = grid.size();
    // First-derivative finite-difference cross-check across the node.
    const double step = 1e-6;
    Vector xp = x, xm = x;
    xp[0] += step;
    xm[0] -= step;
    const Vector fd =
        (oracles::dense_shape_values(ev, xp, n) - oracles::dense_shape_values(ev, xm, n)) /
        (2 * step);
    ev.shape_functions(x, 2, bundle);
    const Vector& an = bundle.derivative(MultiIndex{1, 0});
    for (std::size_t c = 0; c < bundle.J.size(); ++c)
        EXPECT_NEAR(an[c], fd[bundle.J[c]], 1e-5 * fd.cwiseAbs().maxCoeff());
}

TEST(SolveLambda, UnscaledModeUsesMonomialRightHandSide) {
    auto grid = mls::generate_regular_grid(square(), 0.1);
    MLSConfig cfg = config(2);
    cfg.basis_mode = BasisMode::UnscaledGlobal;
    Vector x(2);
    x << 0.17, -0.23;
    const auto sys = mls::assemble_local_system(grid, x, cfg, 0.1);
    EXPECT_EQ(sys.scale, 1.0);
    EXPECT_EQ(sys.center.cwiseAbs().maxCoeff(), 0.0);
    const Vector lambda = mls::solve_lambda(sys, x);
    mls::MultiIndexSet mis(2, 2);
    const Vector rhs = mls::ScaledBasis(mis, sys.center, sys.scale).eval(x);
    EXPECT_LT((sys.A * lambda - rhs).norm(), 1e-10 * rhs.norm());
}

TEST(UnscaledMode, RejectsShapeEvaluation) {
    auto grid = mls::generate_regular_grid(square(), 0.1);
    MLSConfig cfg = config(2);
    cfg.basis_mode = BasisMode::UnscaledGlobal;
    Evaluator ev(grid, cfg, 0.1);
    ShapeBundle bundle;
    EXPECT_THROW(ev.shape_functions(Vector::Zero(2), 0, bundle), mls::ConfigError);
    EXPECT_GT(ev.lambda_min_at(Vector::Zero(2)), 0.0);
}
