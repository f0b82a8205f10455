#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mls/approximation.hpp"
#include "mls/galerkin.hpp"
#include "mls/geometry.hpp"

namespace mls {

/// 17 significant digits (round-trip safe), locale-independent ('.' always).
inline std::string format_full(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline std::string format_order(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 2);
    return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Point sets: CSV (one row per point, no header) and JSON {"dim", "points"}.

inline void save_points_csv(const PointSet& points, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    for (int j = 0; j < points.size(); ++j) {
        for (int i = 0; i < points.dim(); ++i) {
            if (i) out << ',';
            out << format_full(points.point(j)[i]);
        }
        out << '\n';
    }
}

inline Matrix load_points_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            double v = 0.0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size())
                throw ConfigError(path + ":" + std::to_string(lineno) + ": bad number '" + cell +
                                  "'");
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError(path + ": no points");
    Matrix pts(rows.front().size(), rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j)
        for (std::size_t i = 0; i < rows[j].size(); ++i)
            pts(static_cast<int>(i), static_cast<int>(j)) = rows[j][i];
    return pts;
}

inline void save_points_json(const PointSet& points, const std::string& path) {
    nlohmann::json j;
    j["dim"] = points.dim();
    auto& arr = j["points"] = nlohmann::json::array();
    for (int c = 0; c < points.size(); ++c) {
        nlohmann::json p = nlohmann::json::array();
        for (int i = 0; i < points.dim(); ++i) p.push_back(points.point(c)[i]);
        arr.push_back(std::move(p));
    }
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

inline Matrix load_points_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(path + ": invalid JSON: " + e.what());
    }
    if (!j.contains("dim") || !j.contains("points"))
        throw ConfigError(path + ": expected {\"dim\", \"points\"}");
    const int d = j["dim"].get<int>();
    const auto& arr = j["points"];
    Matrix pts(d, arr.size());
    int c = 0;
    for (const auto& p : arr) {
        if (static_cast<int>(p.size()) != d) throw ConfigError(path + ": point/dim mismatch");
        for (int i = 0; i < d; ++i) pts(i, c) = p[i].get<double>();
        ++c;
    }
    return pts;
}

// ---------------------------------------------------------------------------
// Convergence report: orders CSV in the tables' layout + JSON sidecar.

inline void save_orders_csv(const ConvergenceReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    std::vector<NormKey> keys;
    for (int q : {2, 0})
        for (const auto& a : report.alphas) keys.push_back(NormKey{q, a});
    out << "h";
    for (const auto& k : keys) out << ',' << norm_label(k) << "_err";
    for (const auto& k : keys) out << ',' << norm_label(k) << "_order";
    out << '\n';
    for (std::size_t r = 0; r < report.rows.size(); ++r) {
        const auto& row = report.rows[r];
        out << format_full(row.h);
        for (const auto& k : keys) out << ',' << format_full(row.errors.at(k));
        for (const auto& k : keys) {
            out << ',';
            if (report.exact)
                out << "exact";
            else if (row.orders.count(k))
                out << format_order(row.orders.at(k));
            else
                out << '-';
        }
        out << '\n';
    }
}

inline nlohmann::json report_to_json(const ConvergenceReport& report) {
    nlohmann::json j;
    j["lambda"] = report.config.lambda;
    j["m"] = report.config.m;
    j["weight_kind"] = to_string(report.config.weight_kind);
    j["delta_factor"] = report.config.resolved_delta_factor();
    j["n_quad_per_axis"] = report.config.n_quad_per_axis;
    j["probe_spacing"] = report.config.probe_spacing;
    j["exact"] = report.exact;
    auto& alphas = j["alphas"] = nlohmann::json::array();
    for (const auto& a : report.alphas) alphas.push_back(a);
    auto& rows = j["rows"] = nlohmann::json::array();
    for (const auto& row : report.rows) {
        nlohmann::json r;
        r["h"] = row.h;
        r["scale"] = row.scale;
        r["delta"] = row.delta;
        r["fill_estimate"] = row.fill_estimate;
        r["lambda_min_min"] = row.lambda_min_min;
        r["shifted_solves"] = row.shifted_solves;
        for (const auto& [k, v] : row.errors) r["errors"][norm_label(k)] = v;
        for (const auto& [k, v] : row.orders) r["orders"][norm_label(k)] = v;
        for (const auto& [k, v] : row.skipped) r["skipped"][norm_label(k)] = v;
        for (const auto& [b, v] : row.lebesgue_max) {
            std::string name = "a";
            for (int e : b) name += std::to_string(e);
            r["lebesgue_max"][name] = v;
        }
        rows.push_back(std::move(r));
    }
    return j;
}

inline void save_report_json(const ConvergenceReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << report_to_json(report).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Stability report: lambda_min and Lebesgue series over h, both basis modes.

inline std::string beta_label(const MultiIndex& b) {
    std::string s = "a";
    for (int e : b) s += std::to_string(e);
    return s;
}

inline void save_stability_csv(const StabilityStudyReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << "h,lambda_min_shifted,lambda_min_unscaled";
    for (const auto& b : report.betas) out << ",L_" << beta_label(b) << "_max";
    out << '\n';
    for (const auto& row : report.rows) {
        out << format_full(row.h) << ',' << format_full(row.lambda_min_shifted) << ','
            << format_full(row.lambda_min_unscaled);
        for (int i = 0; i < row.max_lebesgue.size(); ++i)
            out << ',' << format_full(row.max_lebesgue[i]);
        out << '\n';
    }
}

inline nlohmann::json stability_to_json(const StabilityStudyReport& report) {
    nlohmann::json j;
    j["m"] = report.config.m;
    j["weight_kind"] = to_string(report.config.weight_kind);
    j["w_min_inner"] = phi_min_inner(report.config.weight_kind);
    j["delta_factor"] = report.config.resolved_delta_factor();
    j["sample_per_axis"] = report.config.sample_per_axis;
    auto& betas = j["betas"] = nlohmann::json::array();
    for (const auto& b : report.betas) betas.push_back(b);
    auto& rows = j["rows"] = nlohmann::json::array();
    for (const auto& row : report.rows) {
        nlohmann::json r;
        r["h"] = row.h;
        r["scale"] = row.scale;
        r["delta"] = row.delta;
        r["lambda_min_shifted"] = row.lambda_min_shifted;
        r["lambda_min_unscaled"] = row.lambda_min_unscaled;
        for (std::size_t b = 0; b < report.betas.size(); ++b)
            r["lebesgue_max"][beta_label(report.betas[b])] = row.max_lebesgue[static_cast<int>(b)];
        rows.push_back(std::move(r));
    }
    return j;
}

inline void save_stability_json(const StabilityStudyReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << stability_to_json(report).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Galerkin report.

inline void save_galerkin_csv(const galerkin::GalerkinReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << "h,n_points,L2_err,L2_order,W21_err,W21_order,residual,symmetry,method\n";
    for (std::size_t r = 0; r < report.rows.size(); ++r) {
        const auto& row = report.rows[r];
        out << format_full(row.h) << ',' << row.n_points << ',' << format_full(row.l2_error)
            << ',' << (r == 0 ? std::string("-") : format_order(row.l2_order)) << ','
            << format_full(row.h1_error) << ','
            << (r == 0 ? std::string("-") : format_order(row.h1_order)) << ','
            << format_full(row.residual) << ',' << format_full(row.symmetry) << ',' << row.method
            << '\n';
    }
}

inline nlohmann::json galerkin_to_json(const galerkin::GalerkinReport& report) {
    nlohmann::json j;
    j["m"] = report.config.m;
    j["gl_per_cell"] = report.config.gl_per_cell;
    j["delta_factor"] = report.config.resolved_delta_factor();
    j["layout"] = report.config.layout == galerkin::PointLayout::Scattered ? "scattered" : "grid";
    auto& rows = j["rows"] = nlohmann::json::array();
    for (const auto& row : report.rows) {
        nlohmann::json r;
        r["h"] = row.h;
        r["n_points"] = row.n_points;
        r["L2_err"] = row.l2_error;
        r["W21_err"] = row.h1_error;
        r["L2_order"] = row.l2_order;
        r["W21_order"] = row.h1_order;
        r["residual"] = row.residual;
        r["symmetry"] = row.symmetry;
        r["method"] = row.method;
        rows.push_back(std::move(r));
    }
    return j;
}

inline void save_galerkin_json(const galerkin::GalerkinReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << galerkin_to_json(report).dump(2) << '\n';
}

}  // namespace mls
