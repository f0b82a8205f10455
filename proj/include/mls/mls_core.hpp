#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mls/basis.hpp"
#include "mls/geometry.hpp"
#include "mls/weights.hpp"

namespace mls {

/// How the weight support radius delta is obtained.
struct DeltaRule {
    enum class Kind { Fixed, ProportionalToH };
    Kind kind = Kind::ProportionalToH;
    double value = 4.0;

    static DeltaRule fixed(double delta) { return {Kind::Fixed, delta}; }
    static DeltaRule proportional(double c) { return {Kind::ProportionalToH, c}; }

    double resolve(double h) const {
        const double delta = (kind == Kind::Fixed) ? value : value * h;
        if (delta <= 0.0) throw ConfigError("DeltaRule: resolved support radius must be positive");
        return delta;
    }
};

/// ShiftedScaled centers the basis at the evaluation point and scales by the
/// mesh size; UnscaledGlobal keeps plain monomials (z = 0, h = 1) and exists
/// only to expose how the local Gram matrix degenerates without the shift.
enum class BasisMode { ShiftedScaled, UnscaledGlobal };

struct MLSConfig {
    int m = 2;
    WeightKind weight_kind = WeightKind::WendlandC4;
    DeltaRule delta_rule = DeltaRule::proportional(4.0);
    BasisMode basis_mode = BasisMode::ShiftedScaled;
};

/// Snapshot of the weighted local system at one evaluation point.
struct LocalSystem {
    std::vector<int> J;     // active neighbor indices
    Matrix A;               // Q x Q Gram matrix P W P^T
    Vector W;               // weights over J
    Matrix P;               // Q x #J basis values at the neighbors
    double lambda_min = 0;  // smallest eigenvalue of A
    Vector center;          // basis shift z
    double scale = 1.0;     // basis scale h
    int m = 0;
};

/// Shape-function values and derivatives at one point. a_j(x) = 0 is implied
/// for every j outside J.
struct ShapeBundle {
    std::vector<int> J;
    Vector values;
    std::vector<std::pair<MultiIndex, Vector>> derivatives;  // |beta| >= 1, graded order
    double lambda_min = 0.0;
    bool used_diagonal_shift = false;

    const Vector& derivative(const MultiIndex& beta) const {
        if (order(beta) == 0) return values;
        for (const auto& [b, v] : derivatives)
            if (b == beta) return v;
        throw ConfigError("ShapeBundle: derivative not computed for requested multi-index");
    }
};

namespace detail {

/// Where D^gamma w lives in (value, gradient, Hessian) for |gamma| <= 2.
struct WeightSlot {
    int kind = 0;  // 0 value, 1 gradient component, 2 Hessian entry
    int i = 0, k = 0;

    static WeightSlot of(const MultiIndex& gamma) {
        WeightSlot s;
        s.kind = order(gamma);
        int first = -1, second = -1;
        for (std::size_t a = 0; a < gamma.size(); ++a)
            for (int rep = 0; rep < gamma[a]; ++rep) {
                if (first < 0)
                    first = static_cast<int>(a);
                else
                    second = static_cast<int>(a);
            }
        s.i = std::max(first, 0);
        s.k = std::max(second, s.i);
        return s;
    }
};

/// Bookkeeping for one set of requested derivative multi-indices: the downset
/// closure in graded order plus Leibniz/recursion term lists.
struct DerivPlan {
    bool built = false;
    std::vector<MultiIndex> cached_request;
    std::vector<MultiIndex> gammas;  // closure; gammas[0] = 0
    int max_order = 0;
    // recursion[g]: (beta_slot, dA_slot, binom) terms of the A^{-1} identity
    std::vector<std::vector<std::tuple<int, int, double>>> recursion;
    // lambda_terms[b]: (v_gamma_slot, eta_slot, binom * eta! * h^{-|eta|})
    std::vector<std::vector<std::tuple<int, int, double>>> lambda_terms;
    // shape_terms[b]: (weight_slot, lambda_slot, binom) of the product rule
    std::vector<std::vector<std::tuple<int, int, double>>> shape_terms;
    std::vector<WeightSlot> weight_slots;

    bool matches(const std::vector<MultiIndex>& requested) const {
        return built && requested == cached_request;
    }

    void build(const std::vector<MultiIndex>& requested, int dim, double scale) {
        built = true;
        cached_request = requested;
        gammas.clear();
        std::map<MultiIndex, int> pos;
        MultiIndexSet candidates(dim, 2);
        max_order = 0;
        for (const auto& g : candidates.indices()) {
            bool keep = order(g) == 0;
            for (const auto& b : requested)
                if (leq(g, b)) keep = true;
            if (keep) {
                pos[g] = static_cast<int>(gammas.size());
                gammas.push_back(g);
                max_order = std::max(max_order, order(g));
            }
        }
        const int n = static_cast<int>(gammas.size());
        recursion.assign(n, {});
        lambda_terms.assign(n, {});
        shape_terms.assign(n, {});
        weight_slots.clear();
        for (const auto& g : gammas) weight_slots.push_back(WeightSlot::of(g));
        for (int gi = 0; gi < n; ++gi) {
            const MultiIndex& g = gammas[gi];
            for (int bi = 0; bi < n; ++bi) {
                const MultiIndex& b = gammas[bi];
                if (!leq(b, g)) continue;
                if (bi != gi)
                    recursion[gi].emplace_back(bi, pos.at(sub(g, b)), binomial(g, b));
                lambda_terms[gi].emplace_back(
                    pos.at(sub(g, b)), bi,
                    binomial(g, b) * factorial(b) * std::pow(scale, -order(b)));
                shape_terms[gi].emplace_back(pos.at(sub(g, b)), bi, binomial(g, b));
            }
        }
    }
};

}  // namespace detail

/// Evaluates MLS shape functions and their analytic derivatives. Holds
/// reusable workspace: share one instance per thread; distinct instances over
/// the same immutable PointSet may run concurrently.
class Evaluator {
  public:
    Evaluator(const PointSet& points, MLSConfig cfg, double h)
        : points_(&points),
          cfg_(cfg),
          scale_(cfg.basis_mode == BasisMode::UnscaledGlobal ? 1.0 : h),
          delta_(cfg.delta_rule.resolve(h)),
          mis_(points.dim(), cfg.m),
          center_buf_(Vector::Zero(points.dim())) {
        if (h <= 0.0) throw ConfigError("Evaluator: h must be positive");
    }

    const MultiIndexSet& multi_indices() const { return mis_; }
    double scale() const { return scale_; }
    double support_radius() const { return delta_; }
    int shifted_solve_count() const { return shifted_solves_; }

    /// Values plus every derivative with |beta| <= deriv_order.
    void shape_functions(const Eigen::Ref<const Vector>& x, int deriv_order, ShapeBundle& out) {
        shape_functions(x, betas_up_to(deriv_order), out);
    }

    /// Values plus derivatives for the requested multi-indices (the engine
    /// also fills in their downset closure, which it needs anyway).
    void shape_functions(const Eigen::Ref<const Vector>& x,
                         const std::vector<MultiIndex>& betas, ShapeBundle& out) {
        if (cfg_.basis_mode == BasisMode::UnscaledGlobal)
            throw ConfigError("shape functions are unavailable in the unscaled diagnostic mode");
        int max_order = 0;
        for (const auto& b : betas) max_order = std::max(max_order, order(b));
        if (max_order > 2) throw ConfigError("derivative order above 2 is not supported");
        if (max_order > weight_smoothness(cfg_.weight_kind))
            throw ConfigError("weight kind '" + to_string(cfg_.weight_kind) + "' is not C^" +
                              std::to_string(max_order));
        if (!plan_.matches(betas)) plan_.build(betas, points_->dim(), scale_);

        assemble(x, plan_.max_order);
        factorize(x, out.used_diagonal_shift);
        solve_lambda_derivatives();
        combine_shapes(out);
        out.J = J_;
        out.lambda_min = lambda_min_;
    }

    /// Assemble-only entry: the local Gram system and its smallest eigenvalue.
    LocalSystem local_system(const Eigen::Ref<const Vector>& x) {
        if (!plan_.matches({})) plan_.build({}, points_->dim(), scale_);
        assemble(x, 0);
        const int nj = static_cast<int>(J_.size());
        LocalSystem sys;
        sys.J = J_;
        sys.A = A_[0];
        sys.W = wvals_.head(nj);
        sys.P = P_.leftCols(nj);
        sys.lambda_min = lambda_min_;
        sys.center = center_buf_;
        sys.scale = scale_;
        sys.m = cfg_.m;
        return sys;
    }

    double lambda_min_at(const Eigen::Ref<const Vector>& x) {
        if (!plan_.matches({})) plan_.build({}, points_->dim(), scale_);
        assemble(x, 0);
        return lambda_min_;
    }

  private:
    std::vector<MultiIndex> betas_up_to(int deriv_order) const {
        if (deriv_order < 0 || deriv_order > 2)
            throw ConfigError("derivative order must be 0, 1, or 2");
        std::vector<MultiIndex> betas;
        MultiIndexSet all(points_->dim(), deriv_order);
        for (const auto& b : all.indices())
            if (order(b) >= 1) betas.push_back(b);
        return betas;
    }

    void assemble(const Eigen::Ref<const Vector>& x, int weight_order) {
        const int q = mis_.size();
        if (cfg_.basis_mode == BasisMode::ShiftedScaled)
            center_buf_ = x;
        else
            center_buf_.setZero();

        points_->neighbors(x, delta_, J_);
        if (J_.empty()) {
            std::ostringstream os;
            os << "no coverage at x = (" << x.transpose() << "), support radius " << delta_;
            throw CoverageError(os.str());
        }
        const int nj = static_cast<int>(J_.size());
        const int ng = (weight_order == 0) ? 1 : static_cast<int>(plan_.gammas.size());
        if (P_.rows() != q || P_.cols() < nj) P_.resize(q, std::max<Eigen::Index>(nj, P_.cols()));
        if (wvals_.size() < nj) wvals_.resize(nj);
        if (Wd_.rows() < ng || Wd_.cols() < nj)
            Wd_.resize(std::max<Eigen::Index>(ng, Wd_.rows()), std::max<Eigen::Index>(nj, Wd_.cols()));
        A_.resize(std::max(ng, 1));
        for (int g = 0; g < ng; ++g) {
            A_[g].resize(q, q);
            A_[g].setZero();
        }

        const ScaledBasis basis(mis_, center_buf_, scale_);
        double wmax = 0.0;
        for (int c = 0; c < nj; ++c) {
            const int j = J_[c];
            basis.eval(points_->point(j), col_buf_);
            P_.col(c) = col_buf_;

            const double r = (x - points_->point(j)).norm();
            const double t = r / delta_;
            double value = 0.0, p1 = 0.0, p2 = 0.0;
            if (t < 1.0) {
                value = phi(cfg_.weight_kind, t);
                if (weight_order >= 1) p1 = phi_d1(cfg_.weight_kind, t);
                if (weight_order >= 2) p2 = phi_d2(cfg_.weight_kind, t);
            }
            wvals_[c] = value;
            wmax = std::max(wmax, value);

            for (int g = 0; g < ng; ++g) {
                double wg;
                if (g == 0) {
                    wg = value;
                } else if (t >= 1.0) {
                    wg = 0.0;
                } else {
                    const auto& slot = plan_.weight_slots[g];
                    if (r == 0.0) {
                        // Even extension at the center: gradient 0, Hessian
                        // phi''(0)/delta^2 I.
                        wg = (slot.kind == 2 && slot.i == slot.k)
                                 ? phi_d2(cfg_.weight_kind, 0.0) / (delta_ * delta_)
                                 : 0.0;
                    } else if (slot.kind == 1) {
                        wg = p1 / delta_ * (x[slot.i] - points_->point(j)[slot.i]) / r;
                    } else {
                        const double ui = (x[slot.i] - points_->point(j)[slot.i]) / r;
                        const double uk = (x[slot.k] - points_->point(j)[slot.k]) / r;
                        wg = (p2 / (delta_ * delta_)) * ui * uk +
                             (p1 / (delta_ * r)) * ((slot.i == slot.k ? 1.0 : 0.0) - ui * uk);
                    }
                }
                Wd_(g, c) = wg;
                if (wg == 0.0) continue;
                // Upper triangle; mirrored below so A is symmetric to the bit.
                for (int i = 0; i < q; ++i) {
                    const double wpi = wg * P_(i, c);
                    for (int k = i; k < q; ++k) A_[g](i, k) += wpi * P_(k, c);
                }
            }
        }
        if (wmax == 0.0) {
            std::ostringstream os;
            os << "no coverage at x = (" << x.transpose()
               << "): all neighbors sit on the support boundary";
            throw CoverageError(os.str());
        }
        for (int g = 0; g < ng; ++g)
            A_[g].triangularView<Eigen::StrictlyLower>() =
                A_[g].triangularView<Eigen::StrictlyUpper>().transpose();

        es_.compute(A_[0], Eigen::EigenvaluesOnly);
        lambda_min_ = es_.eigenvalues()[0];
        lambda_max_ = es_.eigenvalues()[q - 1];
        const double tol =
            64.0 * q * std::numeric_limits<double>::epsilon() * std::max(lambda_max_, 0.0);
        if (!(lambda_min_ > tol)) fail_deficient(x);
    }

    void factorize(const Eigen::Ref<const Vector>& x, bool& used_shift) {
        used_shift = false;
        llt_.compute(A_[0]);
        if (llt_.info() == Eigen::Success) return;
        // Marginal neighborhood: one flagged diagonal nudge before giving up.
        Matrix shifted = A_[0];
        shifted.diagonal().array() += 1e-12 * A_[0].trace() / mis_.size();
        llt_.compute(shifted);
        used_shift = true;
        ++shifted_solves_;
        if (llt_.info() == Eigen::Success) return;
        fail_deficient(x);
    }

    [[noreturn]] void fail_deficient(const Eigen::Ref<const Vector>& x) {
        const auto uni = check_unisolvency(*points_, J_, cfg_.m, scale_, center_buf_);
        std::ostringstream os;
        os << "deficient neighborhood at x = (" << x.transpose()
           << "): sigma_min = " << uni.sigma_min << ", sigma_max = " << uni.sigma_max
           << ", lambda_min = " << lambda_min_;
        throw DeficientNeighborhoodError(os.str(), uni.sigma_min, uni.sigma_max);
    }

    /// v_{gamma,eta} = D^gamma(A^{-1}) e_eta via the differentiated identity
    /// A^{-1} A = I, then lambda^{(beta)} by Leibniz against
    /// D^eta p(center) = eta! h^{-|eta|} e_eta.
    void solve_lambda_derivatives() {
        const int q = mis_.size();
        const int ng = static_cast<int>(plan_.gammas.size());
        v_.resize(ng);
        for (int eta = 0; eta < ng; ++eta) {
            const int slot = mis_.position(plan_.gammas[eta]);
            if (v_[eta].rows() != q || v_[eta].cols() != ng) v_[eta].resize(q, ng);
            if (slot < 0) {
                v_[eta].setZero();  // |eta| > m annihilates every basis entry
                continue;
            }
            rhs_buf_ = Vector::Zero(q);
            rhs_buf_[slot] = 1.0;
            v_[eta].col(0) = llt_.solve(rhs_buf_);
            for (int g = 1; g < ng; ++g) {
                rhs_buf_.setZero();
                for (const auto& [beta_slot, da_slot, coeff] : plan_.recursion[g])
                    rhs_buf_.noalias() += coeff * (A_[da_slot] * v_[eta].col(beta_slot));
                v_[eta].col(g) = -llt_.solve(rhs_buf_);
            }
        }
        if (lambda_.rows() != q || lambda_.cols() != ng) lambda_.resize(q, ng);
        lambda_.setZero();
        for (int b = 0; b < ng; ++b)
            for (const auto& [vslot, eta_slot, coeff] : plan_.lambda_terms[b])
                lambda_.col(b).noalias() += coeff * v_[eta_slot].col(vslot);
    }

    void combine_shapes(ShapeBundle& out) {
        const int nj = static_cast<int>(J_.size());
        const int ng = static_cast<int>(plan_.gammas.size());
        if (C_.rows() != ng || C_.cols() < nj)
            C_.resize(ng, std::max<Eigen::Index>(nj, C_.cols()));
        C_.leftCols(nj).noalias() = lambda_.transpose() * P_.leftCols(nj);

        out.values.resize(nj);
        for (int j = 0; j < nj; ++j) out.values[j] = Wd_(0, j) * C_(0, j);
        out.derivatives.clear();
        for (int b = 0; b < ng; ++b) {
            if (order(plan_.gammas[b]) == 0) continue;
            Vector dv = Vector::Zero(nj);
            for (const auto& [wslot, lslot, coeff] : plan_.shape_terms[b])
                for (int j = 0; j < nj; ++j) dv[j] += coeff * Wd_(wslot, j) * C_(lslot, j);
            out.derivatives.emplace_back(plan_.gammas[b], std::move(dv));
        }
    }

    const PointSet* points_;
    MLSConfig cfg_;
    double scale_;
    double delta_;
    MultiIndexSet mis_;
    Vector center_buf_;
    detail::DerivPlan plan_;

    std::vector<int> J_;
    Matrix P_;
    Vector wvals_;
    Matrix Wd_;
    std::vector<Matrix> A_;
    Eigen::SelfAdjointEigenSolver<Matrix> es_;
    Eigen::LLT<Matrix> llt_;
    std::vector<Matrix> v_;
    Matrix lambda_;
    Matrix C_;
    Vector rhs_buf_;
    Vector col_buf_;
    double lambda_min_ = 0.0;
    double lambda_max_ = 0.0;
    int shifted_solves_ = 0;
};

inline LocalSystem assemble_local_system(const PointSet& points,
                                         const Eigen::Ref<const Vector>& x, const MLSConfig& cfg,
                                         double h) {
    Evaluator ev(points, cfg, h);
    return ev.local_system(x);
}

/// Solve A lambda = p(x). With the shifted-scaled basis centered at x the
/// right-hand side is the first unit vector.
inline Vector solve_lambda(const LocalSystem& sys, const Eigen::Ref<const Vector>& x) {
    MultiIndexSet mis(static_cast<int>(sys.center.size()), sys.m);
    ScaledBasis basis(mis, sys.center, sys.scale);
    Eigen::LLT<Matrix> llt(sys.A);
    if (llt.info() != Eigen::Success)
        throw DeficientNeighborhoodError("solve_lambda: local system is not positive definite",
                                         0.0, 0.0);
    return llt.solve(basis.eval(x));
}

inline ShapeBundle shape_functions(const PointSet& points, const Eigen::Ref<const Vector>& x,
                                   const MLSConfig& cfg, double h, int deriv_order) {
    Evaluator ev(points, cfg, h);
    ShapeBundle out;
    ev.shape_functions(x, deriv_order, out);
    return out;
}

struct StabilityReport {
    std::vector<MultiIndex> betas;  // zero multi-index first, then graded order
    Vector lambda_min_per_sample;
    Matrix lebesgue_per_sample;  // #betas x #samples (empty in unscaled mode)
    double min_lambda_min = 0.0;
    Vector max_lebesgue;  // per beta
};

/// Per-sample smallest eigenvalues and Lebesgue sums L_beta = sum_j
/// |D^beta a_j|. The unscaled diagnostic mode produces eigenvalues only.
inline StabilityReport stability_report(const PointSet& points, const MLSConfig& cfg, double h,
                                        const Matrix& samples, int deriv_order) {
    if (samples.cols() == 0) throw ConfigError("stability_report: empty sample list");
    StabilityReport rep;
    Evaluator ev(points, cfg, h);
    const int ns = static_cast<int>(samples.cols());
    rep.lambda_min_per_sample.resize(ns);
    const bool shapes = cfg.basis_mode == BasisMode::ShiftedScaled;
    if (shapes) {
        MultiIndexSet all(points.dim(), std::min(deriv_order, 2));
        rep.betas = all.up_to_order(deriv_order);
        rep.lebesgue_per_sample.resize(static_cast<int>(rep.betas.size()), ns);
    }
    ShapeBundle bundle;
    for (int s = 0; s < ns; ++s) {
        if (shapes) {
            ev.shape_functions(samples.col(s), deriv_order, bundle);
            rep.lambda_min_per_sample[s] = bundle.lambda_min;
            for (std::size_t b = 0; b < rep.betas.size(); ++b)
                rep.lebesgue_per_sample(static_cast<int>(b), s) =
                    bundle.derivative(rep.betas[b]).cwiseAbs().sum();
        } else {
            rep.lambda_min_per_sample[s] = ev.lambda_min_at(samples.col(s));
        }
    }
    rep.min_lambda_min = rep.lambda_min_per_sample.minCoeff();
    if (shapes) rep.max_lebesgue = rep.lebesgue_per_sample.rowwise().maxCoeff();
    return rep;
}

struct ConeConstants {
    double c2 = 0.0;
    double h0 = 0.0;
};

/// C2 = 16 (1+sin t)^2 m^2 / (3 sin^2 t), h0 = r / C2. Diagnostic only: the
/// cone parameters are never numerically instantiated by the harness.
inline ConeConstants cone_constants(double theta, double r, int m) {
    if (!(theta > 0.0 && theta < M_PI / 2.0))
        throw ConfigError("cone_constants: theta must lie in (0, pi/2)");
    if (r <= 0.0) throw ConfigError("cone_constants: radius must be positive");
    if (m < 1) throw ConfigError("cone_constants: degree must be >= 1");
    const double s = std::sin(theta);
    ConeConstants c;
    c.c2 = 16.0 * (1.0 + s) * (1.0 + s) * m * m / (3.0 * s * s);
    c.h0 = r / c.c2;
    return c;
}

}  // namespace mls
