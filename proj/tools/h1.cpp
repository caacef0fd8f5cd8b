// h1: command-line front end for curve and surface invariants in the
// Heisenberg group.
//
// Exit codes: 0 ok, 2 bad input, 3 regularity/normality failure,
// 4 not congruent, 5 integrability violation.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "h1/core.hpp"
#include "h1/curves.hpp"
#include "h1/errors.hpp"
#include "h1/io.hpp"
#include "h1/surfaces.hpp"

namespace {

using namespace h1;
using io::json;

enum Exit { Ok = 0, BadInput = 2, Irregular = 3, NotCongruentExit = 4, NotIntegrable = 5 };

struct Config {
    std::vector<std::string> in;
    std::string out;
    std::string report;
    std::string plot;
    std::optional<double> tol;
    std::optional<double> eps_regular;
    std::optional<double> eps_singular;
    std::string grid;
    std::string derivatives = "analytic";
    std::string orientation = "+";
    std::string order = "u";
    bool pminimal = false;

    bool analytic() const { return derivatives == "analytic"; }
    double default_tol() const { return tol.value_or(analytic() ? 1e-6 : 1e-3); }
};

int exit_code(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::NotHorizontallyRegular:
    case ErrorKind::NotNormal:
    case ErrorKind::Singular:
    case ErrorKind::SingularCell:
    case ErrorKind::FlowLeftPatch:
    case ErrorKind::DegenerateMetric:
        return Irregular;
    case ErrorKind::NotCongruent:
        return NotCongruentExit;
    case ErrorKind::IntegrabilityViolation:
        return NotIntegrable;
    default:
        return BadInput;
    }
}

void emit(const Config& cfg, const std::string& text)
{
    if (cfg.out.empty()) {
        std::cout << text;
    } else {
        io::write_text(cfg.out, text);
    }
}

void emit_report(const Config& cfg, const json& report)
{
    if (!cfg.report.empty()) {
        io::write_text(cfg.report, io::dump(report));
    }
}

bool ends_with(const std::string& s, const std::string& suffix)
{
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

const std::string& input(const Config& cfg, std::size_t k, const char* what)
{
    if (cfg.in.size() <= k) {
        throw Error(ErrorKind::InvalidArgument, std::string("missing --in for ") + what);
    }
    return cfg.in[k];
}

std::optional<std::pair<std::size_t, std::size_t>> parse_grid(const std::string& spec)
{
    if (spec.empty()) {
        return std::nullopt;
    }
    std::size_t n = 0, m = 0;
    char sep = 0;
    char extra = 0;
    const int got = std::sscanf(spec.c_str(), "%zu%c%zu%c", &n, &sep, &m, &extra);
    if (got == 1) {
        m = n;
    } else if (got != 3 || (sep != 'x' && sep != 'X')) {
        throw Error(ErrorKind::InvalidArgument, "--grid expects N or NxM");
    }
    if (n < 5 || m < 5) {
        throw Error(ErrorKind::InvalidArgument, "--grid resolutions must be >= 5");
    }
    return std::pair{n, m};
}

OrientedFrame frame_arg(const Config& cfg, std::size_t k)
{
    if (cfg.in.size() > k) {
        return io::frame_from_json(io::parse_json(io::read_text(cfg.in[k])));
    }
    return OrientedFrame{};
}

curves::ParamCurve reversed(const curves::ParamCurve& c)
{
    const std::size_t n = c.size();
    std::vector<double> t(n);
    std::vector<H1Point> pts(n);
    std::vector<Vec3> d1(n), d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = n - 1 - i;
        t[i] = -c.t(r);
        pts[i] = c.point(r);
        d1[i] = -c.d1(r);
        d2[i] = c.d2(r);
    }
    if (!c.has_analytic_first()) {
        return curves::ParamCurve(std::move(t), std::move(pts));
    }
    return curves::ParamCurve(std::move(t), std::move(pts), std::move(d1), std::move(d2));
}

curves::ParamCurve load_curve(const Config& cfg, std::size_t k)
{
    auto c = io::curve_from_json(io::parse_json(io::read_text(input(cfg, k, "the curve"))), cfg.analytic());
    return cfg.orientation == "-" ? reversed(c) : c;
}

json signature_summary(const curves::CurveSignature& sig)
{
    double kmin = sig.k[0], kmax = sig.k[0], tmax = 0.0;
    for (std::size_t i = 0; i < sig.size(); ++i) {
        kmin = std::min(kmin, sig.k[i]);
        kmax = std::max(kmax, sig.k[i]);
        tmax = std::max(tmax, std::abs(sig.tau[i]));
    }
    return json{{"length", sig.s.back() - sig.s.front()}, {"k_min", kmin}, {"k_max", kmax}, {"max_abs_tau", tmax}};
}

// ---------------------------------------------------------------------------
// Curve commands
// ---------------------------------------------------------------------------

int curve_invariants(const Config& cfg)
{
    const auto curve = load_curve(cfg, 0);
    const auto grid = parse_grid(cfg.grid);
    const std::size_t n = grid ? grid->first : curve.size();
    const auto sig = curves::signature(curve, n, cfg.eps_regular);
    emit(cfg, io::signature_to_csv(sig));
    emit_report(cfg, signature_summary(sig));
    return Ok;
}

int curve_reconstruct(const Config& cfg)
{
    const auto sig = io::signature_from_csv(io::read_text(input(cfg, 0, "the signature")));
    const auto frame = frame_arg(cfg, 1);
    const auto curve = curves::reconstruct_curve(sig, frame);
    const auto again = curves::signature(curve, sig.size());
    const auto geo = curves::geodesic_report(curve, cfg.default_tol());
    emit(cfg, io::dump(io::curve_to_json(curve)));
    emit_report(cfg, json{{"roundtrip_residual", curves::signature_distance(sig, again)},
                          {"is_geodesic", geo.geodesic},
                          {"max_abs_tau", geo.max_abs_tau},
                          {"k_range", geo.k_range},
                          {"k_mean", geo.k_mean}});
    return Ok;
}

int congruence(const Config& cfg)
{
    const auto c1 = load_curve(cfg, 0);
    const auto c2 = load_curve(cfg, 1);
    const auto r = curves::congruence_check(c1, c2, cfg.default_tol());
    json out{{"congruent", r.congruent},
             {"motion", io::motion_to_json(r.motion)},
             {"max_deviation", r.max_deviation},
             {"max_frame_defect", r.max_frame_defect},
             {"length_mismatch", r.length_mismatch}};
    emit(cfg, io::dump(out));
    emit_report(cfg, out);
    if (!r.congruent) {
        std::cerr << "NOT_CONGRUENT: max deviation " << io::format_number(r.max_deviation) << "\n";
        return NotCongruentExit;
    }
    return Ok;
}

int geodesic(const Config& cfg)
{
    const auto in = io::geodesic_from_json(io::parse_json(io::read_text(input(cfg, 0, "the geodesic input"))));
    const auto grid = parse_grid(cfg.grid);
    const std::size_t n = grid ? grid->first : in.n;
    const double tol = cfg.default_tol();
    json report;
    std::optional<curves::ParamCurve> curve;
    if (in.closed_form) {
        curve = curves::geodesic_closed_form(*in.closed_form, curves::uniform_grid(in.t0, in.t1, n));
        const auto start = curves::matched_initial_state(*in.closed_form, in.t0);
        const auto flow = curves::geodesic_flow(start, in.t1 - in.t0, static_cast<int>(n - 1));
        double sup = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sup = std::max(sup, (flow.point(i).vec() - curve->point(i).vec()).norm());
        }
        report["source"] = "closed_form";
        report["hamiltonian_sup_distance"] = sup;
        if (curves::geodesic_branch(*in.closed_form) != curves::GeodesicBranch::Line) {
            const auto& p = *in.closed_form;
            const double r = std::hypot(p.a1, p.a2);
            report["expected_k"] = p.c3 > 0.0 ? -1.0 / r : 1.0 / r;
        }
    } else {
        curve = curves::geodesic_flow(*in.hamiltonian, in.t1, static_cast<int>(n - 1));
        report["source"] = "hamiltonian";
    }
    const auto geo = curves::geodesic_report(*curve, tol);
    report["is_geodesic"] = geo.geodesic;
    report["max_abs_tau"] = geo.max_abs_tau;
    report["k_range"] = geo.k_range;
    report["k_mean"] = geo.k_mean;
    emit(cfg, io::dump(io::curve_to_json(*curve)));
    if (!cfg.plot.empty()) {
        io::write_text(cfg.plot, io::curve_to_plot_csv(*curve));
    }
    emit_report(cfg, report);
    return Ok;
}

// ---------------------------------------------------------------------------
// Surface commands
// ---------------------------------------------------------------------------

/// Coefficients for the opposite orientation of the characteristic
/// direction: u -> -u, with the grid reversed so that u still increases.
surfaces::SurfaceCoefficients flip_orientation(const surfaces::SurfaceCoefficients& k)
{
    surfaces::Reparametrization r;
    r.sign = -1;
    const auto t = surfaces::transform_coefficients(k, r).coeffs;
    surfaces::GridSpec g = k.grid;
    g.u0 = -k.grid.u_end();
    auto out = surfaces::SurfaceCoefficients::zeros(g);
    for (std::size_t j = 0; j < g.nv; ++j) {
        for (std::size_t i = 0; i < g.nu; ++i) {
            const std::size_t src = g.nu - 1 - i;
            out.a(i, j) = t.a(src, j);
            out.b(i, j) = t.b(src, j);
            out.c(i, j) = t.c(src, j);
            out.l(i, j) = t.l(src, j);
            out.m(i, j) = t.m(src, j);
        }
    }
    return out;
}

bool is_patch(const json& j) { return j.is_object() && j.contains("points"); }

surfaces::SurfaceCoefficients load_coefficients(const Config& cfg, std::size_t k)
{
    const std::string& path = input(cfg, k, "the coefficients");
    const std::string text = io::read_text(path);
    surfaces::SurfaceCoefficients coeffs;
    if (ends_with(path, ".csv")) {
        coeffs = io::coefficients_from_csv(text);
    } else {
        const json j = io::parse_json(text);
        if (is_patch(j)) {
            const auto patch = io::patch_from_json(j, cfg.analytic());
            coeffs = surfaces::coefficients(patch, cfg.default_tol());
        } else {
            coeffs = io::coefficients_from_json(j);
        }
    }
    return cfg.orientation == "-" ? flip_orientation(coeffs) : coeffs;
}

int surface_coefficients(const Config& cfg)
{
    const auto patch = io::patch_from_json(io::parse_json(io::read_text(input(cfg, 0, "the patch"))), cfg.analytic());
    const auto normal = surfaces::is_normal_parametrization(patch, cfg.default_tol());
    if (!normal.normal) {
        std::cerr << "not a normal parametrization: max |theta0(F_u)| " << io::format_number(normal.max_contact)
                  << ", max ||F_u| - 1| " << io::format_number(normal.max_unit_defect)
                  << (normal.nonsingular ? "" : ", singular cell present") << "\n";
        return Irregular;
    }
    auto k = surfaces::coefficients(patch, cfg.default_tol());
    if (cfg.orientation == "-") {
        k = flip_orientation(k);
    }
    emit(cfg, ends_with(cfg.out, ".csv") ? io::coefficients_to_csv(k) : io::dump(io::coefficients_to_json(k)));
    const auto eps = cfg.eps_singular.value_or(surfaces::singular_threshold(k));
    emit_report(cfg, json{{"singular_threshold", eps},
                          {"masked_cells", surfaces::p_variation(k, eps).masked_count()},
                          {"max_contact", normal.max_contact},
                          {"max_unit_defect", normal.max_unit_defect}});
    return Ok;
}

int surface_check(const Config& cfg)
{
    const auto k = load_coefficients(cfg, 0);
    const double tol = cfg.tol.value_or(1e-3);
    const auto r = cfg.pminimal ? surfaces::check_pminimal(k, tol) : surfaces::check_integrability(k, tol);
    const json out = io::report_to_json(r);
    emit(cfg, io::dump(out));
    emit_report(cfg, out);
    if (!r.pass) {
        std::cerr << "integrability violated: residual " << io::format_number(r.max_residual) << " at cell ("
                  << r.argmax_cell.first << ", " << r.argmax_cell.second << ")\n";
        return NotIntegrable;
    }
    return Ok;
}

int surface_invariants(const Config& cfg)
{
    const auto k = load_coefficients(cfg, 0);
    const auto inv = surfaces::invariants(k);
    const double tol = cfg.tol.value_or(1e-3);
    json out = io::invariants_to_json(inv);
    const auto codazzi = surfaces::check_codazzi(inv.alpha, inv.l, inv.coframe, tol);
    const auto integrability = surfaces::check_surface_integrability(inv.alpha, inv.l, inv.K, inv.coframe, tol);
    const auto total = surfaces::patch_total(inv.K, inv.coframe);
    json report{{"max_K_discrepancy", inv.max_K_discrepancy},
                {"codazzi", io::report_to_json(codazzi)},
                {"integrability", io::report_to_json(integrability)},
                {"total_curvature", total}};
    emit(cfg, io::dump(out));
    emit_report(cfg, report);
    return Ok;
}

surfaces::PathOrder path_order(const Config& cfg)
{
    return cfg.order == "v" ? surfaces::PathOrder::VFirst : surfaces::PathOrder::UFirst;
}

double max_difference(const numerics::GridField& a, const numerics::GridField& b)
{
    double d = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) {
        d = std::max(d, std::abs(a.values[q] - b.values[q]));
    }
    return d;
}

int surface_reconstruct(const Config& cfg)
{
    const auto k = load_coefficients(cfg, 0);
    const auto frame = frame_arg(cfg, 1);
    const double tol = cfg.tol.value_or(1e-3);
    const auto check = surfaces::check_integrability(k, tol);
    if (!check.pass) {
        emit_report(cfg, json{{"integrability", io::report_to_json(check)}});
        std::cerr << "integrability violated: residual " << io::format_number(check.max_residual) << " at cell ("
                  << check.argmax_cell.first << ", " << check.argmax_cell.second << ")\n";
        return NotIntegrable;
    }
    const auto patch = surfaces::reconstruct_surface(k, frame, tol, path_order(cfg));
    const auto again = surfaces::coefficients(patch, 1e-6);
    emit(cfg, io::dump(io::patch_to_json(patch)));
    emit_report(cfg, json{{"integrability", io::report_to_json(check)},
                          {"roundtrip", json{{"a", max_difference(k.a, again.a)},
                                             {"b", max_difference(k.b, again.b)},
                                             {"c", max_difference(k.c, again.c)},
                                             {"l", max_difference(k.l, again.l)},
                                             {"m", max_difference(k.m, again.m)}}}});
    return Ok;
}

int surface_from_invariants(const Config& cfg)
{
    const auto in = io::invariants_from_json(io::parse_json(io::read_text(input(cfg, 0, "the invariants"))));
    const auto frame = frame_arg(cfg, 1);
    const auto check = surfaces::check_invariants(in.coframe, in.alpha, in.l);
    if (!check.report.pass) {
        emit_report(cfg, json{{"integrability", io::report_to_json(check.report)},
                              {"truncation_estimate", check.truncation_estimate}});
        std::cerr << "integrability violated: residual " << io::format_number(check.report.max_residual)
                  << " at cell (" << check.report.argmax_cell.first << ", " << check.report.argmax_cell.second
                  << ")\n";
        return NotIntegrable;
    }
    const auto patch = surfaces::reconstruct_from_invariants(in.coframe, in.alpha, in.l, frame, path_order(cfg));
    const auto metric_in = in.coframe.metric();
    const auto metric_out = surfaces::patch_metric(patch);
    json roundtrip{{"E", max_difference(metric_in.E, metric_out.E)},
                   {"F", max_difference(metric_in.F, metric_out.F)},
                   {"G", max_difference(metric_in.G, metric_out.G)}};
    if (surfaces::is_normal_parametrization(patch, 1e-6).normal) {
        const auto k = surfaces::coefficients(patch, 1e-6);
        roundtrip["alpha"] = max_difference(in.alpha, surfaces::alpha_field(k));
        roundtrip["l"] = max_difference(in.l, k.l);
    }
    emit(cfg, io::dump(io::patch_to_json(patch)));
    emit_report(cfg, json{{"integrability", io::report_to_json(check.report)},
                          {"truncation_estimate", check.truncation_estimate},
                          {"roundtrip", roundtrip}});
    return Ok;
}

void add_common(CLI::App* sub, Config& cfg)
{
    sub->add_option("--in", cfg.in, "input file (repeatable)")->required();
    sub->add_option("--out", cfg.out, "output file (default: stdout)");
    sub->add_option("--report", cfg.report, "JSON sidecar report");
    sub->add_option("--tol", cfg.tol, "tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--grid", cfg.grid, "output resolution N or NxM");
    sub->add_option("--derivatives", cfg.derivatives, "use stored derivatives or finite differences")
        ->check(CLI::IsMember({"analytic", "fd"}));
    sub->add_option("--orientation", cfg.orientation, "orientation of the parametrization")
        ->check(CLI::IsMember({"+", "-"}));
    sub->add_option("--eps-regular", cfg.eps_regular, "horizontal regularity threshold")
        ->check(CLI::PositiveNumber);
    sub->add_option("--eps-singular", cfg.eps_singular, "singular-cell threshold on |c|")
        ->check(CLI::PositiveNumber);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Curve and surface invariants in the Heisenberg group"};
    app.require_subcommand(1);
    Config cfg;

    struct Command {
        const char* name;
        const char* help;
        int (*run)(const Config&);
    };
    const Command commands[] = {
        {"curve-invariants", "signature (s, k, tau) of a curve", curve_invariants},
        {"curve-reconstruct", "curve from a signature CSV and an optional frame", curve_reconstruct},
        {"congruence", "motion taking the first curve onto the second", congruence},
        {"geodesic", "geodesic from closed-form parameters or Hamiltonian data", geodesic},
        {"surface-coefficients", "coefficients (a, b, c, l, m) of a normal patch", surface_coefficients},
        {"surface-check", "integrability residuals of coefficients", surface_check},
        {"surface-invariants", "alpha, l, coframe and Gaussian curvature", surface_invariants},
        {"surface-reconstruct", "patch from coefficients", surface_reconstruct},
        {"surface-from-invariants", "patch from coframe, alpha and l", surface_from_invariants},
    };
    std::vector<std::pair<CLI::App*, const Command*>> subs;
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        add_common(sub, cfg);
        subs.emplace_back(sub, &c);
        if (std::string(c.name) == "geodesic") {
            sub->add_option("--plot", cfg.plot, "CSV t,x,y,z for plotting");
        }
        if (std::string(c.name) == "surface-check") {
            sub->add_flag("--pminimal", cfg.pminimal, "check the p-minimal conditions instead");
        }
        if (std::string(c.name) == "surface-reconstruct" || std::string(c.name) == "surface-from-invariants") {
            sub->add_option("--order", cfg.order, "integrate along u first or v first")
                ->check(CLI::IsMember({"u", "v"}));
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return BadInput;
    }

    try {
        for (const auto& [sub, cmd] : subs) {
            if (sub->parsed()) {
                return cmd->run(cfg);
            }
        }
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return BadInput;
    }
    return BadInput;
}
