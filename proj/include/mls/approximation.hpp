#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mls/mls_core.hpp"
#include "mls/parallel.hpp"
#include "mls/quadrature.hpp"

namespace mls {

/// Data values u(x_j) aligned with the point ordering.
struct DataSamples {
    Vector values;

    static DataSamples from(const PointSet& points, const std::function<double(const Vector&)>& u) {
        DataSamples d;
        d.values.resize(points.size());
        for (int j = 0; j < points.size(); ++j) d.values[j] = u(points.point(j));
        return d;
    }

    void validate(const PointSet& points) const {
        if (values.size() != points.size())
            throw ConfigError("DataSamples: length does not match the point count");
        if (!values.allFinite()) throw ConfigError("DataSamples: non-finite value");
    }
};

/// D^beta s_{u,X}(x) = sum_j D^beta a_j(x) u(x_j).
inline double evaluate(const PointSet& points, const DataSamples& data,
                       const Eigen::Ref<const Vector>& x, const MLSConfig& cfg, double h,
                       const MultiIndex& beta) {
    data.validate(points);
    Evaluator ev(points, cfg, h);
    ShapeBundle bundle;
    if (order(beta) == 0)
        ev.shape_functions(x, 0, bundle);
    else
        ev.shape_functions(x, std::vector<MultiIndex>{beta}, bundle);
    const Vector& dv = bundle.derivative(beta);
    double sum = 0.0;
    for (std::size_t c = 0; c < bundle.J.size(); ++c) sum += dv[c] * data.values[bundle.J[c]];
    return sum;
}

/// Exact reference: returns D^beta u(x), or nothing where that derivative is
/// singular (such points are skipped and counted by the error norms).
struct Reference {
    std::function<std::optional<double>(const Vector&, const MultiIndex&)> deriv;

    std::optional<double> operator()(const Vector& x, const MultiIndex& beta) const {
        return deriv(x, beta);
    }
};

/// u(x) = ||x||^lambda with closed-form derivatives up to order 2. At the
/// exact origin a derivative evaluates to 0 when it exists there
/// (lambda - |beta| >= 1) and reports singular otherwise.
inline Reference radial_power_reference(double lambda) {
    return Reference{[lambda](const Vector& x, const MultiIndex& beta) -> std::optional<double> {
        const int o = order(beta);
        if (o > 2) throw ConfigError("radial_power_reference: |beta| <= 2 only");
        const double r = x.norm();
        if (r == 0.0) {
            if (o == 0) return 0.0;
            if (lambda - o >= 1.0) return 0.0;
            return std::nullopt;
        }
        if (o == 0) return std::pow(r, lambda);
        int i = -1, k = -1;
        for (int a = 0; a < static_cast<int>(beta.size()); ++a)
            for (int rep = 0; rep < beta[a]; ++rep) (i < 0 ? i : k) = a;
        if (o == 1) return lambda * std::pow(r, lambda - 2.0) * x[i];
        const double r4 = std::pow(r, lambda - 4.0);
        double v = lambda * (lambda - 2.0) * r4 * x[i] * x[k];
        if (i == k) v += lambda * std::pow(r, lambda - 2.0);
        return v;
    }};
}

/// Reference built from a polynomial in monomial form (value + derivatives).
inline Reference polynomial_reference(const std::vector<std::pair<MultiIndex, double>>& terms) {
    return Reference{[terms](const Vector& x, const MultiIndex& beta) -> std::optional<double> {
        double sum = 0.0;
        for (const auto& [gamma, coeff] : terms) {
            if (!leq(beta, gamma)) continue;
            double v = coeff * falling_factorial(gamma, beta);
            const MultiIndex rest = sub(gamma, beta);
            for (std::size_t a = 0; a < rest.size(); ++a)
                for (int e = 0; e < rest[a]; ++e) v *= x[static_cast<int>(a)];
            sum += v;
        }
        return sum;
    }};
}

struct NormKey {
    int q = 2;  // 2 or 0 standing for infinity
    MultiIndex beta;

    bool operator<(const NormKey& other) const {
        if (q != other.q) return q < other.q;
        return beta < other.beta;
    }
};

inline std::string norm_label(const NormKey& key) {
    std::string s = (key.q == 2) ? "L2_a" : "Linf_a";
    for (int b : key.beta) s += std::to_string(b);
    return s;
}

struct ErrorReport {
    std::map<NormKey, double> errors;
    std::map<NormKey, int> skipped;  // singular reference nodes, per L-inf key
    double min_lambda_min = std::numeric_limits<double>::infinity();
    std::map<MultiIndex, double> max_lebesgue;
    int shifted_solves = 0;
};

/// L2 errors by quadrature and L-inf errors on the probe mesh for every
/// requested derivative. One shape evaluation per node serves all betas;
/// lambda_min and Lebesgue-sum extremes are aggregated on the way.
inline ErrorReport error_norms(const PointSet& points, const DataSamples& data,
                               const Reference& reference, const MLSConfig& cfg, double h,
                               const std::vector<MultiIndex>& betas, const QuadratureRule& rule,
                               const Matrix& probe_nodes, int threads = 1) {
    data.validate(points);
    struct Partial {
        std::map<NormKey, double> l2;
        std::map<NormKey, double> linf;
        std::map<NormKey, int> skipped;
        double min_lambda = std::numeric_limits<double>::infinity();
        std::map<MultiIndex, double> max_leb;
        int shifted = 0;
    };
    std::vector<MultiIndex> requested;
    for (const auto& b : betas)
        if (order(b) >= 1) requested.push_back(b);

    auto visit = [&](Partial& p, Evaluator& ev, ShapeBundle& bundle, const Vector& x, double w,
                     bool is_l2) {
        ev.shape_functions(x, requested, bundle);
        p.min_lambda = std::min(p.min_lambda, bundle.lambda_min);
        if (bundle.used_diagonal_shift) ++p.shifted;
        for (const auto& beta : betas) {
            const Vector& dv = bundle.derivative(beta);
            auto& leb = p.max_leb[beta];
            leb = std::max(leb, dv.cwiseAbs().sum());
            double s = 0.0;
            for (std::size_t c = 0; c < bundle.J.size(); ++c)
                s += dv[c] * data.values[bundle.J[c]];
            const auto ref = reference(x, beta);
            const NormKey key{is_l2 ? 2 : 0, beta};
            if (!ref) {
                ++p.skipped[key];
                continue;
            }
            const double diff = s - *ref;
            if (is_l2)
                p.l2[key] += w * diff * diff;
            else {
                auto& cur = p.linf[key];
                cur = std::max(cur, std::abs(diff));
            }
        }
    };

    const int total = rule.size() + static_cast<int>(probe_nodes.cols());
    std::vector<Partial> partials;
    parallel_chunks(total, threads, partials, [&](Partial& p, int begin, int end) {
        Evaluator ev(points, cfg, h);
        ShapeBundle bundle;
        Vector x(points.dim());
        for (int i = begin; i < end; ++i) {
            if (i < rule.size()) {
                x = rule.nodes.col(i);
                visit(p, ev, bundle, x, rule.weights[i], true);
            } else {
                x = probe_nodes.col(i - rule.size());
                visit(p, ev, bundle, x, 0.0, false);
            }
        }
    });

    ErrorReport out;
    for (auto& p : partials) {
        for (auto& [k, v] : p.l2) out.errors[k] += v;
        for (auto& [k, v] : p.linf) {
            auto& cur = out.errors[k];
            cur = std::max(cur, v);
        }
        for (auto& [k, v] : p.skipped) out.skipped[k] += v;
        out.min_lambda_min = std::min(out.min_lambda_min, p.min_lambda);
        for (auto& [b, v] : p.max_leb) {
            auto& cur = out.max_lebesgue[b];
            cur = std::max(cur, v);
        }
        out.shifted_solves += p.shifted;
    }
    for (auto& [k, v] : out.errors)
        if (k.q == 2) v = std::sqrt(v);
    return out;
}

/// Probe lattice over the box at the given spacing (endpoint inclusive).
inline Matrix probe_lattice(const DomainBox& box, double spacing) {
    const PointSet grid = generate_regular_grid(box, spacing);
    return grid.points();
}

struct StudyConfig {
    double lambda = 1.5;
    int m = 2;
    std::vector<double> h_chain{0.1, 0.05, 0.025, 0.0125};
    int n_quad_per_axis = 200;
    double probe_spacing = 0.005;
    WeightKind weight_kind = WeightKind::WendlandC4;
    double delta_factor = 0.0;  // 0: default 2m
    int alpha_max_order = -1;   // -1: derived from lambda and m
    int dim = 2;
    DomainBox box;  // empty: [-0.5, 0.5]^dim
    int stability_sample_per_axis = 20;
    int probe_resolution = 400;
    int threads = 1;

    double resolved_delta_factor() const { return delta_factor > 0 ? delta_factor : 2.0 * m; }

    /// Derivative columns follow the shape of the reference: only orders
    /// whose D^beta u stays bounded are measured, and only along the first
    /// axis as in the reported tables.
    int resolved_alpha_order() const {
        if (alpha_max_order >= 0) return alpha_max_order;
        const int by_lambda = static_cast<int>(std::floor(lambda));
        return std::max(0, std::min({m, 2, by_lambda}));
    }

    DomainBox resolved_box() const {
        return box.dim() == 0 ? DomainBox::cube(dim, -0.5, 0.5) : box;
    }

    void validate() const {
        if (m < 0) throw ConfigError("study: m must be nonnegative");
        if (h_chain.empty()) throw ConfigError("study: h_chain must not be empty");
        for (double h : h_chain)
            if (h <= 0) throw ConfigError("study: h values must be positive");
        for (std::size_t i = 1; i < h_chain.size(); ++i)
            if (std::abs(h_chain[i] - 0.5 * h_chain[i - 1]) > 1e-9 * h_chain[i - 1])
                throw ConfigError("h_chain must halve");
        if (n_quad_per_axis < 1) throw ConfigError("study: n_quad_per_axis must be positive");
        if (probe_spacing <= 0) throw ConfigError("study: probe_spacing must be positive");
        if (alpha_max_order > 2) throw ConfigError("study: alpha_max_order above 2 is unsupported");
    }
};

struct ConvergenceRow {
    double h = 0.0;       // grid spacing (the chain value)
    double scale = 0.0;   // basis scale handed to the MLS kernel
    double delta = 0.0;   // support radius
    double fill_estimate = 0.0;
    std::map<NormKey, double> errors;
    std::map<NormKey, double> orders;  // empty on the first row
    std::map<NormKey, int> skipped;
    double lambda_min_min = 0.0;
    std::map<MultiIndex, double> lebesgue_max;
    int shifted_solves = 0;
};

struct ConvergenceReport {
    StudyConfig config;
    std::vector<MultiIndex> alphas;
    std::vector<ConvergenceRow> rows;
    bool exact = false;  // all errors at rounding level; orders not meaningful
};

/// The measurement protocol behind the reported order tables: regular grids
/// over the box, delta = (2m) h, basis scale = the grid fill distance, L2 by
/// tensor Gauss-Legendre, L-inf on the fine probe mesh, orders as log2 ratios
/// between consecutive halvings.
inline ConvergenceReport run_convergence_study(
    const StudyConfig& cfg, const std::function<Reference()>& make_reference = nullptr) {
    cfg.validate();
    const DomainBox box = cfg.resolved_box();
    const int d = box.dim();
    ConvergenceReport report;
    report.config = cfg;

    const int max_alpha = cfg.resolved_alpha_order();
    for (int k = 0; k <= max_alpha; ++k) {
        MultiIndex a(d, 0);
        a[0] = k;
        report.alphas.push_back(a);
    }

    const Reference reference =
        make_reference ? make_reference() : radial_power_reference(cfg.lambda);
    const QuadratureRule rule = gauss_legendre_box(box, cfg.n_quad_per_axis);
    const Matrix probe = probe_lattice(box, cfg.probe_spacing);

    for (double spacing : cfg.h_chain) {
        PointSet grid = generate_regular_grid(box, spacing);
        const double delta = cfg.resolved_delta_factor() * spacing;
        grid.build_index(delta);
        const double scale = spacing * std::sqrt(static_cast<double>(d)) / 2.0;

        MLSConfig mls_cfg;
        mls_cfg.m = cfg.m;
        mls_cfg.weight_kind = cfg.weight_kind;
        mls_cfg.delta_rule = DeltaRule::fixed(delta);

        DataSamples data = DataSamples::from(grid, [&](const Vector& x) {
            const auto v = reference(x, MultiIndex(d, 0));
            if (!v) throw NumericalError("study: reference undefined at a center");
            return *v;
        });

        const auto errs = error_norms(grid, data, reference, mls_cfg, scale, report.alphas, rule,
                                      probe, cfg.threads);

        ConvergenceRow row;
        row.h = spacing;
        row.scale = scale;
        row.delta = delta;
        row.fill_estimate = fill_distance(grid, box, cfg.probe_resolution);
        row.errors = errs.errors;
        row.skipped = errs.skipped;
        row.lambda_min_min = errs.min_lambda_min;
        row.lebesgue_max = errs.max_lebesgue;
        row.shifted_solves = errs.shifted_solves;
        if (!report.rows.empty()) {
            const auto& prev = report.rows.back();
            for (const auto& [key, err] : row.errors) {
                const double before = prev.errors.at(key);
                if (before > 0 && err > 0) row.orders[key] = std::log2(before / err);
            }
        }
        report.rows.push_back(std::move(row));
    }

    // Exact-data studies (polynomial u in P_m) bottom out at rounding level.
    double worst = 0.0;
    for (const auto& row : report.rows)
        for (const auto& [key, err] : row.errors) worst = std::max(worst, err);
    report.exact = worst < 1e-10;
    return report;
}

struct StabilityStudyConfig {
    int m = 2;
    std::vector<double> h_chain{0.1, 0.05, 0.025, 0.0125};
    WeightKind weight_kind = WeightKind::WendlandC4;
    double delta_factor = 0.0;  // 0: 2m
    int sample_per_axis = 20;
    int deriv_max_order = -1;  // -1: min(m, 2)
    int dim = 2;
    DomainBox box;

    double resolved_delta_factor() const { return delta_factor > 0 ? delta_factor : 2.0 * m; }
    int resolved_deriv_order() const {
        return deriv_max_order >= 0 ? deriv_max_order : std::min(m, 2);
    }
    DomainBox resolved_box() const {
        return box.dim() == 0 ? DomainBox::cube(dim, -0.5, 0.5) : box;
    }
    void validate() const {
        if (m < 0) throw ConfigError("stability study: m must be nonnegative");
        if (h_chain.empty()) throw ConfigError("stability study: h_chain must not be empty");
        for (std::size_t i = 1; i < h_chain.size(); ++i)
            if (std::abs(h_chain[i] - 0.5 * h_chain[i - 1]) > 1e-9 * h_chain[i - 1])
                throw ConfigError("h_chain must halve");
        if (sample_per_axis < 1) throw ConfigError("stability study: sample_per_axis must be >= 1");
        if (deriv_max_order > 2)
            throw ConfigError("stability study: deriv_max_order above 2 is unsupported");
    }
};

struct StabilityStudyRow {
    double h = 0.0;
    double scale = 0.0;
    double delta = 0.0;
    double lambda_min_shifted = 0.0;
    double lambda_min_unscaled = 0.0;
    Vector max_lebesgue;  // aligned with report betas
};

struct StabilityStudyReport {
    StabilityStudyConfig config;
    std::vector<MultiIndex> betas;
    std::vector<StabilityStudyRow> rows;
};

/// lambda_min and Lebesgue-sum series over the h chain, in both basis modes,
/// sampled on a fixed lattice over the box.
inline StabilityStudyReport run_stability_study(const StabilityStudyConfig& cfg) {
    cfg.validate();
    const DomainBox box = cfg.resolved_box();
    StabilityStudyReport report;
    report.config = cfg;
    const Matrix samples = probe_lattice(box, box.shortest_side() / cfg.sample_per_axis);
    for (double spacing : cfg.h_chain) {
        PointSet grid = generate_regular_grid(box, spacing);
        const double delta = cfg.resolved_delta_factor() * spacing;
        grid.build_index(delta);
        const double scale = spacing * std::sqrt(static_cast<double>(box.dim())) / 2.0;
        MLSConfig shifted;
        shifted.m = cfg.m;
        shifted.weight_kind = cfg.weight_kind;
        shifted.delta_rule = DeltaRule::fixed(delta);
        MLSConfig unscaled = shifted;
        unscaled.basis_mode = BasisMode::UnscaledGlobal;

        const auto rep_s = stability_report(grid, shifted, scale, samples, cfg.resolved_deriv_order());
        const auto rep_u = stability_report(grid, unscaled, scale, samples, 0);

        StabilityStudyRow row;
        row.h = spacing;
        row.scale = scale;
        row.delta = delta;
        row.lambda_min_shifted = rep_s.min_lambda_min;
        row.lambda_min_unscaled = rep_u.min_lambda_min;
        row.max_lebesgue = rep_s.max_lebesgue;
        if (report.betas.empty()) report.betas = rep_s.betas;
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace mls
