#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "mls/errors.hpp"
#include "mls/types.hpp"

namespace mls {

/// Radial profiles phi: positive on [0,1/2], supported in [0,1], even
/// extension smooth at 0. The weight is w_j(x) = phi(||x - x_j|| / delta).
enum class WeightKind {
    WendlandC4,  // (1-t)_+^6 (35 t^2 + 18 t + 3)
    WendlandC2,  // (1-t)_+^4 (4 t + 1)
    BumpCinf,    // exp(-t^2 / (1 - t^2)) on [0,1), normalized so phi(0) = 1
};

inline std::string to_string(WeightKind kind) {
    switch (kind) {
        case WeightKind::WendlandC4: return "wendland_c4";
        case WeightKind::WendlandC2: return "wendland_c2";
        case WeightKind::BumpCinf: return "bump";
    }
    return "?";
}

inline WeightKind weight_kind_from_string(const std::string& name) {
    if (name == "wendland_c4") return WeightKind::WendlandC4;
    if (name == "wendland_c2") return WeightKind::WendlandC2;
    if (name == "bump") return WeightKind::BumpCinf;
    throw ConfigError("unknown weight kind '" + name +
                      "' (expected wendland_c4, wendland_c2, bump)");
}

/// Continuous derivatives of the even extension at t = 0 (and everywhere).
inline int weight_smoothness(WeightKind kind) {
    switch (kind) {
        case WeightKind::WendlandC4: return 4;
        case WeightKind::WendlandC2: return 2;
        case WeightKind::BumpCinf: return 64;  // C-infinity for any practical order
    }
    return 0;
}

/// phi(t). The t >= 1 branch returns an exact zero so that supports stay
/// bit-exact for sparse assembly.
inline double phi(WeightKind kind, double t) {
    if (t < 0.0) throw ConfigError("phi: negative argument");
    if (t >= 1.0) return 0.0;
    switch (kind) {
        case WeightKind::WendlandC4: {
            const double s = 1.0 - t;
            const double s2 = s * s;
            return s2 * s2 * s2 * (35.0 * t * t + 18.0 * t + 3.0);
        }
        case WeightKind::WendlandC2: {
            const double s = 1.0 - t;
            const double s2 = s * s;
            return s2 * s2 * (4.0 * t + 1.0);
        }
        case WeightKind::BumpCinf:
            return std::exp(-t * t / (1.0 - t * t));
    }
    return 0.0;
}

/// phi'(t) for t in [0,1); zero outside. Hand-derived closed forms.
inline double phi_d1(WeightKind kind, double t) {
    if (t < 0.0) throw ConfigError("phi_d1: negative argument");
    if (t >= 1.0) return 0.0;
    switch (kind) {
        case WeightKind::WendlandC4: {
            const double s = 1.0 - t;
            const double s2 = s * s;
            return -56.0 * t * (s2 * s2 * s) * (5.0 * t + 1.0);
        }
        case WeightKind::WendlandC2: {
            const double s = 1.0 - t;
            return -20.0 * t * s * s * s;
        }
        case WeightKind::BumpCinf: {
            const double u = 1.0 - t * t;
            return phi(kind, t) * (-2.0 * t / (u * u));
        }
    }
    return 0.0;
}

/// phi''(t) for t in [0,1); zero outside.
inline double phi_d2(WeightKind kind, double t) {
    if (t < 0.0) throw ConfigError("phi_d2: negative argument");
    if (t >= 1.0) return 0.0;
    switch (kind) {
        case WeightKind::WendlandC4: {
            const double s = 1.0 - t;
            const double s2 = s * s;
            return 56.0 * (s2 * s2) * (35.0 * t * t - 4.0 * t - 1.0);
        }
        case WeightKind::WendlandC2: {
            const double s = 1.0 - t;
            return s * s * (80.0 * t - 20.0);
        }
        case WeightKind::BumpCinf: {
            const double u = 1.0 - t * t;
            const double g1 = -2.0 * t / (u * u);
            const double g2 = -2.0 * (1.0 + 3.0 * t * t) / (u * u * u);
            return phi(kind, t) * (g2 + g1 * g1);
        }
    }
    return 0.0;
}

/// min over [0, 1/2] of phi: the weight mass any in-support-core neighbor is
/// guaranteed to carry. Diagnostic only; all provided kinds decrease on
/// [0, 1], so the minimum sits at 1/2.
inline double phi_min_inner(WeightKind kind) { return phi(kind, 0.5); }

struct WeightFunction {
    WeightKind kind = WeightKind::WendlandC4;
    double support_radius = 1.0;  // delta
};

struct WeightDerivatives {
    double value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};

/// w_j(x) = phi(||x - x_j||/delta) and, when requested, its gradient and
/// Hessian by the radial chain rule. The r -> 0 limit is taken through the
/// even extension: gradient 0, Hessian (phi''(0)/delta^2) I.
inline WeightDerivatives weight_and_derivatives(const WeightFunction& w,
                                                const Eigen::Ref<const Eigen::VectorXd>& x,
                                                const Eigen::Ref<const Eigen::VectorXd>& xj,
                                                int max_order) {
    if (w.support_radius <= 0.0) throw ConfigError("weight: support radius must be positive");
    if (max_order < 0 || max_order > 2)
        throw ConfigError("weight: derivative order must be 0, 1, or 2");
    if (max_order > weight_smoothness(w.kind))
        throw ConfigError("weight: kind '" + to_string(w.kind) + "' is not C^" +
                          std::to_string(max_order));

    const int d = static_cast<int>(x.size());
    WeightDerivatives out;
    if (max_order >= 1) out.gradient = Eigen::VectorXd::Zero(d);
    if (max_order >= 2) out.hessian = Eigen::MatrixXd::Zero(d, d);

    const Eigen::VectorXd diff = x - xj;
    const double r = diff.norm();
    const double t = r / w.support_radius;
    if (t >= 1.0) return out;  // exact zeros outside the closed support ball

    out.value = phi(w.kind, t);
    if (max_order == 0) return out;

    const double delta = w.support_radius;
    if (r == 0.0) {
        if (max_order >= 2)
            out.hessian = (phi_d2(w.kind, 0.0) / (delta * delta)) *
                          Eigen::MatrixXd::Identity(d, d);
        return out;  // phi'(0) = 0 for even extensions
    }

    const Eigen::VectorXd u = diff / r;
    const double p1 = phi_d1(w.kind, t);
    out.gradient = (p1 / delta) * u;
    if (max_order >= 2) {
        const double p2 = phi_d2(w.kind, t);
        const double radial = p2 / (delta * delta);
        const double tangential = p1 / (delta * r);
        out.hessian = radial * (u * u.transpose()) +
                      tangential * (Eigen::MatrixXd::Identity(d, d) - u * u.transpose());
    }
    return out;
}

}  // namespace mls
