#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "mls/multi_index.hpp"
#include "mls/types.hpp"

namespace mls {

/// Shifted-scaled monomial basis for P_m: p_alpha(x) = ((x-z)/h)^alpha.
/// Centering at the evaluation point and scaling by the mesh size keep the
/// local Gram matrix conditioned independently of the mesh level.
class ScaledBasis {
  public:
    ScaledBasis(const MultiIndexSet& set, Vector center, double scale)
        : set_(&set), center_(std::move(center)), scale_(scale) {
        if (scale_ <= 0.0) throw ConfigError("ScaledBasis: scale must be positive");
        if (center_.size() != set_->dim()) throw ConfigError("ScaledBasis: center/dim mismatch");
    }

    const MultiIndexSet& multi_indices() const { return *set_; }
    const Vector& center() const { return center_; }
    double scale() const { return scale_; }

    /// All Q basis values at x, by recurrence over the graded order.
    void eval(const Eigen::Ref<const Vector>& x, Vector& out) const {
        const int q = set_->size();
        out.resize(q);
        out[0] = 1.0;
        for (int s = 1; s < q; ++s) {
            const int axis = set_->parent_axis(s);
            out[s] = out[set_->parent_slot(s)] * ((x[axis] - center_[axis]) / scale_);
        }
    }

    Vector eval(const Eigen::Ref<const Vector>& x) const {
        Vector out;
        eval(x, out);
        return out;
    }

    /// Componentwise D^beta of the basis at x. Slots with beta !<= alpha are
    /// exactly zero; the others are (falling factorial) * h^{-|beta|} times
    /// the monomial of the reduced exponent.
    Vector eval_derivative(const Eigen::Ref<const Vector>& x, const MultiIndex& beta) const {
        Vector vals = eval(x);
        const int q = set_->size();
        Vector out = Vector::Zero(q);
        const double hfac = std::pow(scale_, -order(beta));
        for (int s = 0; s < q; ++s) {
            const MultiIndex& a = (*set_)[s];
            if (!leq(beta, a)) continue;
            const int lower = set_->position(sub(a, beta));
            out[s] = falling_factorial(a, beta) * hfac * vals[lower];
        }
        return out;
    }

  private:
    const MultiIndexSet* set_;
    Vector center_;
    double scale_;
};

inline Vector eval_basis(const ScaledBasis& basis, const Eigen::Ref<const Vector>& x) {
    return basis.eval(x);
}

inline Vector eval_basis_derivative(const ScaledBasis& basis, const Eigen::Ref<const Vector>& x,
                                    const MultiIndex& beta) {
    return basis.eval_derivative(x, beta);
}

}  // namespace mls
