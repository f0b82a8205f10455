// Command-line driver: point-set diagnostics, convergence and stability
// studies, and the meshless Galerkin solver. Exit codes: 0 ok, 2 config
// error, 3 numerical/coverage error.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include "mls/approximation.hpp"
#include "mls/config.hpp"
#include "mls/galerkin.hpp"
#include "mls/io.hpp"

namespace {

using namespace mls;

struct CommonArgs {
    std::string config_path;
    std::string out_prefix = "mls_run";
    std::string format = "csv";
    int threads = 1;
    int probe_resolution = 400;
};

DomainBox box_from_config(const ConfigMap& cfg, int dim) {
    const bool has_lower = cfg.count("box_lower"), has_upper = cfg.count("box_upper");
    if (has_lower != has_upper)
        throw ConfigError("box_lower and box_upper must be given together");
    if (!has_lower) return DomainBox::cube(dim, -0.5, 0.5);
    const auto lo = cfg.at("box_lower").numbers("box_lower");
    const auto hi = cfg.at("box_upper").numbers("box_upper");
    if (static_cast<int>(lo.size()) != dim || static_cast<int>(hi.size()) != dim)
        throw ConfigError("box_lower/box_upper must have 'dim' entries");
    Vector l(dim), u(dim);
    for (int i = 0; i < dim; ++i) {
        l[i] = lo[i];
        u[i] = hi[i];
    }
    return DomainBox(l, u);
}

int run_converge(const CommonArgs& args) {
    const ConfigMap cfg = load_config(args.config_path);
    reject_unknown_keys(cfg,
                        {"lambda", "m", "h_chain", "n_quad_per_axis", "probe_spacing",
                         "weight_kind", "delta_factor", "alpha_max_order", "dim", "box_lower",
                         "box_upper"},
                        "converge");
    StudyConfig study;
    if (cfg.count("lambda")) study.lambda = cfg.at("lambda").number("lambda");
    if (cfg.count("m")) study.m = cfg.at("m").integer("m");
    if (cfg.count("h_chain")) study.h_chain = cfg.at("h_chain").numbers("h_chain");
    if (cfg.count("n_quad_per_axis"))
        study.n_quad_per_axis = cfg.at("n_quad_per_axis").integer("n_quad_per_axis");
    if (cfg.count("probe_spacing"))
        study.probe_spacing = cfg.at("probe_spacing").number("probe_spacing");
    if (cfg.count("weight_kind"))
        study.weight_kind = weight_kind_from_string(cfg.at("weight_kind").text("weight_kind"));
    if (cfg.count("delta_factor")) study.delta_factor = cfg.at("delta_factor").number("delta_factor");
    if (cfg.count("alpha_max_order"))
        study.alpha_max_order = cfg.at("alpha_max_order").integer("alpha_max_order");
    if (cfg.count("dim")) study.dim = cfg.at("dim").integer("dim");
    study.box = box_from_config(cfg, study.dim);
    study.threads = args.threads;
    study.probe_resolution = args.probe_resolution;
    study.validate();

    const ConvergenceReport report = run_convergence_study(study);
    save_orders_csv(report, args.out_prefix + "_orders.csv");
    save_report_json(report, args.out_prefix + "_report.json");
    std::cout << "wrote " << args.out_prefix << "_orders.csv and " << args.out_prefix
              << "_report.json\n";
    return 0;
}

int run_stability(const CommonArgs& args) {
    const ConfigMap cfg = load_config(args.config_path);
    reject_unknown_keys(cfg,
                        {"m", "h_chain", "weight_kind", "delta_factor", "sample_per_axis",
                         "deriv_max_order", "dim", "box_lower", "box_upper"},
                        "stability");
    StabilityStudyConfig study;
    if (cfg.count("m")) study.m = cfg.at("m").integer("m");
    if (cfg.count("h_chain")) study.h_chain = cfg.at("h_chain").numbers("h_chain");
    if (cfg.count("weight_kind"))
        study.weight_kind = weight_kind_from_string(cfg.at("weight_kind").text("weight_kind"));
    if (cfg.count("delta_factor")) study.delta_factor = cfg.at("delta_factor").number("delta_factor");
    if (cfg.count("sample_per_axis"))
        study.sample_per_axis = cfg.at("sample_per_axis").integer("sample_per_axis");
    if (cfg.count("deriv_max_order"))
        study.deriv_max_order = cfg.at("deriv_max_order").integer("deriv_max_order");
    if (cfg.count("dim")) study.dim = cfg.at("dim").integer("dim");
    study.box = box_from_config(cfg, study.dim);
    study.validate();

    const StabilityStudyReport report = run_stability_study(study);
    save_stability_csv(report, args.out_prefix + "_stability.csv");
    save_stability_json(report, args.out_prefix + "_stability.json");
    std::cout << "wrote " << args.out_prefix << "_stability.csv and " << args.out_prefix
              << "_stability.json\n";
    return 0;
}

int run_galerkin(const CommonArgs& args) {
    const ConfigMap cfg = load_config(args.config_path);
    reject_unknown_keys(cfg,
                        {"m", "h_chain", "weight_kind", "delta_factor", "gl_per_cell", "kappa",
                         "c", "b", "layout", "jitter", "seed", "dim", "box_lower", "box_upper",
                         "field_probe_per_axis"},
                        "galerkin");
    galerkin::GalerkinStudyConfig study;
    if (cfg.count("m")) study.m = cfg.at("m").integer("m");
    if (cfg.count("h_chain")) study.h_chain = cfg.at("h_chain").numbers("h_chain");
    if (cfg.count("weight_kind"))
        study.weight_kind = weight_kind_from_string(cfg.at("weight_kind").text("weight_kind"));
    if (cfg.count("delta_factor")) study.delta_factor = cfg.at("delta_factor").number("delta_factor");
    if (cfg.count("gl_per_cell")) study.gl_per_cell = cfg.at("gl_per_cell").integer("gl_per_cell");
    if (cfg.count("kappa")) study.kappa_key = cfg.at("kappa").text("kappa");
    if (cfg.count("c")) study.c_key = cfg.at("c").text("c");
    if (cfg.count("b")) study.b_key = cfg.at("b").text("b");
    if (cfg.count("layout")) study.layout = galerkin::layout_from_string(cfg.at("layout").text("layout"));
    if (cfg.count("jitter")) study.jitter = cfg.at("jitter").number("jitter");
    if (cfg.count("seed"))
        study.seed = static_cast<unsigned long long>(cfg.at("seed").number("seed"));
    if (cfg.count("dim")) study.dim = cfg.at("dim").integer("dim");
    study.box = box_from_config(cfg, study.dim);
    study.threads = args.threads;
    study.validate();
    int field_probe = 20;
    if (cfg.count("field_probe_per_axis"))
        field_probe = cfg.at("field_probe_per_axis").integer("field_probe_per_axis");
    if (field_probe < 1) throw ConfigError("field_probe_per_axis must be >= 1");

    const galerkin::GalerkinReport report = galerkin::galerkin_convergence_study(study);
    save_galerkin_csv(report, args.out_prefix + "_galerkin.csv");
    save_galerkin_json(report, args.out_prefix + "_galerkin.json");

    // Re-solve the finest level once more for the field/coefficient exports.
    const DomainBox box = study.resolved_box();
    const double spacing = study.h_chain.back();
    PointSet points =
        galerkin::study_points(box, spacing, study.layout, study.jitter, study.seed);
    const double delta = study.resolved_delta_factor() * spacing;
    points.build_index(delta);
    const double scale = spacing * std::sqrt(static_cast<double>(box.dim())) / 2.0;
    MLSConfig mls_cfg;
    mls_cfg.m = study.m;
    mls_cfg.weight_kind = study.weight_kind;
    mls_cfg.delta_rule = DeltaRule::fixed(delta);
    auto [problem, mf] =
        galerkin::manufactured_problem(box, study.kappa_key, study.c_key, study.b_key);
    const int cells = std::max(1, static_cast<int>(std::round(box.shortest_side() / spacing)));
    auto sys = galerkin::assemble(problem, points, mls_cfg, scale,
                                  composite_box_rule(box, cells, study.gl_per_cell),
                                  composite_boundary_rule(box, cells, study.gl_per_cell),
                                  args.threads);
    galerkin::solve(sys);

    {
        std::ofstream out(args.out_prefix + "_coeffs.csv");
        for (int j = 0; j < points.size(); ++j) {
            for (int i = 0; i < points.dim(); ++i) out << format_full(points.point(j)[i]) << ',';
            out << format_full(sys.coefficients[j]) << '\n';
        }
    }
    {
        const Matrix probes = probe_lattice(box, box.shortest_side() / field_probe);
        Evaluator ev(points, mls_cfg, scale);
        std::ofstream out(args.out_prefix + "_field.csv");
        for (int c = 0; c < probes.cols(); ++c) {
            for (int i = 0; i < points.dim(); ++i) out << format_full(probes(i, c)) << ',';
            out << format_full(galerkin::field_value(sys.coefficients, ev, probes.col(c))) << '\n';
        }
    }
    std::cout << "wrote " << args.out_prefix << "_galerkin.{csv,json}, _coeffs.csv, _field.csv\n";
    return 0;
}

int run_geom(const CommonArgs& args) {
    const ConfigMap cfg = load_config(args.config_path);
    reject_unknown_keys(
        cfg, {"spacing", "points_file", "dim", "box_lower", "box_upper", "probe_resolution"},
        "geom");
    int dim = cfg.count("dim") ? cfg.at("dim").integer("dim") : 2;
    int probe_resolution = args.probe_resolution;
    if (cfg.count("probe_resolution"))
        probe_resolution = cfg.at("probe_resolution").integer("probe_resolution");

    std::optional<PointSet> points;
    if (cfg.count("points_file")) {
        const std::string path = cfg.at("points_file").text("points_file");
        Matrix pts = (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
                         ? load_points_json(path)
                         : load_points_csv(path);
        dim = static_cast<int>(pts.rows());
        points.emplace(std::move(pts), box_from_config(cfg, dim));
    } else if (cfg.count("spacing")) {
        points.emplace(
            generate_regular_grid(box_from_config(cfg, dim), cfg.at("spacing").number("spacing")));
    } else {
        throw ConfigError("geom needs either 'spacing' or 'points_file'");
    }

    const auto metrics = quality_metrics(*points, points->box(), probe_resolution);
    nlohmann::json j;
    j["dim"] = points->dim();
    j["n_points"] = points->size();
    j["probe_resolution"] = probe_resolution;
    j["fill_distance"] = metrics.fill_distance;
    j["separation_distance"] = metrics.separation_distance;
    j["quasi_uniformity"] = metrics.quasi_uniformity;
    std::ofstream out(args.out_prefix + "_geom.json");
    out << j.dump(2) << '\n';
    if (args.format == "json")
        save_points_json(*points, args.out_prefix + "_points.json");
    else
        save_points_csv(*points, args.out_prefix + "_points.csv");
    std::cout << "wrote " << args.out_prefix << "_geom.json and point set (" << args.format
              << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Moving least squares approximation toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config_path, "study config (.toml or .json)")->required();
        sub->add_option("--out", args.out_prefix, "output path prefix");
        sub->add_option("--format", args.format, "csv|json for point/field exports")
            ->check(CLI::IsMember({"csv", "json"}));
        sub->add_option("--threads", args.threads, "worker threads (1 = deterministic)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--probe-resolution", args.probe_resolution,
                        "fill-distance probe lattice resolution")
            ->check(CLI::PositiveNumber);
    };
    CLI::App* converge = app.add_subcommand("converge", "approximation convergence study");
    CLI::App* stability = app.add_subcommand("stability", "lambda_min / Lebesgue-sum study");
    CLI::App* galerkin_cmd = app.add_subcommand("galerkin", "meshless Galerkin PDE study");
    CLI::App* geom = app.add_subcommand("geom", "point-set generation and quality metrics");
    for (auto* sub : {converge, stability, galerkin_cmd, geom}) add_common(sub);

    try {
        app.parse(argc, argv);
        if (converge->parsed()) return run_converge(args);
        if (stability->parsed()) return run_stability(args);
        if (galerkin_cmd->parsed()) return run_galerkin(args);
        if (geom->parsed()) return run_geom(args);
        return 2;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const mls::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
