#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mls/errors.hpp"

namespace mls {

/// Exponent vector of a d-variate monomial.
using MultiIndex = std::vector<int>;

inline int order(const MultiIndex& a) { return std::accumulate(a.begin(), a.end(), 0); }

inline bool leq(const MultiIndex& a, const MultiIndex& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] > b[i]) return false;
    return true;
}

inline MultiIndex sub(const MultiIndex& a, const MultiIndex& b) {
    MultiIndex r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline MultiIndex unit_index(int d, int axis) {
    MultiIndex e(d, 0);
    e[axis] = 1;
    return e;
}

inline double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

inline double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    k = std::min(k, n - k);
    double b = 1.0;
    for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
    return b;
}

/// alpha! = prod_i alpha_i!
inline double factorial(const MultiIndex& a) {
    double f = 1.0;
    for (int ai : a) f *= factorial(ai);
    return f;
}

/// binom(alpha, beta) = prod_i binom(alpha_i, beta_i)
inline double binomial(const MultiIndex& a, const MultiIndex& b) {
    double r = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) r *= binomial(a[i], b[i]);
    return r;
}

/// Falling factorial a_i!/(a_i-b_i)! per component, zero when b !<= a.
inline double falling_factorial(const MultiIndex& a, const MultiIndex& b) {
    double r = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (b[i] > a[i]) return 0.0;
        for (int k = 0; k < b[i]; ++k) r *= (a[i] - k);
    }
    return r;
}

/// All d-variate multi-indices with |alpha| <= m in graded lexicographic
/// order (degree first, then lexicographic with the leading axis dominant).
/// The layout is fixed globally: every matrix/vector indexed by basis slot
/// uses this ordering, and slot 0 is always the zero multi-index.
class MultiIndexSet {
  public:
    static constexpr int kMaxDegree = 6;

    MultiIndexSet(int dim, int max_degree) : dim_(dim), max_degree_(max_degree) {
        if (dim < 1) throw ConfigError("MultiIndexSet: dimension must be positive");
        if (max_degree < 0) throw ConfigError("MultiIndexSet: degree must be nonnegative");
        if (max_degree > kMaxDegree)
            throw ConfigError("MultiIndexSet: degree " + std::to_string(max_degree) +
                              " unsupported (max " + std::to_string(kMaxDegree) + ")");
        MultiIndex cur(dim, 0);
        for (int k = 0; k <= max_degree; ++k) emit_degree(cur, 0, k);
        for (std::size_t q = 0; q < indices_.size(); ++q) position_[indices_[q]] = static_cast<int>(q);
        build_recurrence();
    }

    int dim() const { return dim_; }
    int max_degree() const { return max_degree_; }
    int size() const { return static_cast<int>(indices_.size()); }

    const MultiIndex& operator[](int q) const { return indices_[q]; }
    const std::vector<MultiIndex>& indices() const { return indices_; }

    /// Slot of alpha, or -1 when |alpha| > m or alpha has a negative entry.
    int position(const MultiIndex& a) const {
        for (int ai : a)
            if (ai < 0) return -1;
        auto it = position_.find(a);
        return it == position_.end() ? -1 : it->second;
    }

    /// For slot q > 0: the axis whose exponent was lowered and the slot of
    /// the lowered index. Lets monomial evaluation run as one multiply per
    /// slot in graded order.
    int parent_axis(int q) const { return parent_axis_[q]; }
    int parent_slot(int q) const { return parent_slot_[q]; }

    /// Multi-indices with |beta| <= k, in this set's order.
    std::vector<MultiIndex> up_to_order(int k) const {
        std::vector<MultiIndex> out;
        for (const auto& a : indices_)
            if (order(a) <= k) out.push_back(a);
        return out;
    }

  private:
    void emit_degree(MultiIndex& cur, int axis, int remaining) {
        if (axis == dim_ - 1) {
            cur[axis] = remaining;
            indices_.push_back(cur);
            return;
        }
        for (int e = remaining; e >= 0; --e) {
            cur[axis] = e;
            emit_degree(cur, axis + 1, remaining - e);
        }
        cur[axis] = 0;
    }

    void build_recurrence() {
        parent_axis_.assign(indices_.size(), -1);
        parent_slot_.assign(indices_.size(), -1);
        for (std::size_t q = 1; q < indices_.size(); ++q) {
            const MultiIndex& a = indices_[q];
            for (int i = 0; i < dim_; ++i) {
                if (a[i] > 0) {
                    MultiIndex lower = a;
                    lower[i] -= 1;
                    parent_axis_[q] = i;
                    parent_slot_[q] = position_.at(lower);
                    break;
                }
            }
        }
    }

    int dim_;
    int max_degree_;
    std::vector<MultiIndex> indices_;
    std::map<MultiIndex, int> position_;
    std::vector<int> parent_axis_;
    std::vector<int> parent_slot_;
};

}  // namespace mls
