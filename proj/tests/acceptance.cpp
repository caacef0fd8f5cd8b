// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "h1/curves.hpp"
#include "h1/numerics.hpp"
#include "h1/surfaces.hpp"
#include "support/curves.hpp"
#include "support/patches.hpp"

using namespace h1;
using namespace h1::curves;
using namespace h1::surfaces;
using namespace h1::testing;

namespace {

constexpr double pi = std::numbers::pi;

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what, double value)
    {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s%s=%.3g", detail.empty() ? "" : " ", what.c_str(), value);
        detail += buf;
        if (!ok) {
            pass = false;
            detail += "(!)";
        }
    }
};

GridSpec square(std::size_t n, double extent = 1.0)
{
    const double h = extent / static_cast<double>(n - 1);
    return {0.0, h, n, 0.0, h, n};
}

double max_diff(const GridField& f, const GridField& g, std::size_t margin = 0)
{
    double d = 0.0;
    for (std::size_t j = margin; j + margin < f.nv; ++j) {
        for (std::size_t i = margin; i + margin < f.nu; ++i) {
            d = std::max(d, std::abs(f(i, j) - g(i, j)));
        }
    }
    return d;
}

double max_abs(const GridField& f, std::size_t margin = 0)
{
    double d = 0.0;
    for (std::size_t j = margin; j + margin < f.nv; ++j) {
        for (std::size_t i = margin; i + margin < f.nu; ++i) {
            d = std::max(d, std::abs(f(i, j)));
        }
    }
    return d;
}

double coefficient_distance(const SurfaceCoefficients& x, const SurfaceCoefficients& y, std::size_t margin = 0)
{
    return std::max({max_diff(x.a, y.a, margin), max_diff(x.b, y.b, margin), max_diff(x.c, y.c, margin),
                     max_diff(x.l, y.l, margin), max_diff(x.m, y.m, margin)});
}

double point_distance(const SurfacePatch& p, const SurfacePatch& q)
{
    double d = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        d = std::max(d, (p.points()[k].vec() - q.points()[k].vec()).cwiseAbs().maxCoeff());
    }
    return d;
}

/// The ten randomized normal patches shared by criteria 5 and 6.
std::vector<FamilyParams> random_patches()
{
    std::mt19937_64 rng(20240601);
    std::vector<FamilyParams> out;
    for (int i = 0; i < 10; ++i) {
        out.push_back(random_regular_family(rng, square(101)));
    }
    return out;
}

Outcome geodesic_characterization()
{
    Outcome o;
    const HamiltonianState init{{0.0, 1.0, 0.0}, {0.5, 0.0, 0.5}};
    const auto flow = geodesic_flow(init, 1.0, 1000);
    double sup = 0.0;
    for (std::size_t i = 0; i < flow.size(); ++i) {
        const double t = flow.t(i);
        sup = std::max(sup, (flow.point(i).vec() - Vec3(std::sin(t), std::cos(t), t)).norm());
    }
    const auto r = geodesic_report(flow, 1e-5);
    // closed form with a1 = 1, a2 = 0 has k = -1 / sqrt(a1^2 + a2^2)
    o.check(sup <= 1e-6, "sup_dist", sup);
    o.check(r.max_abs_tau <= 1e-6, "max|tau|", r.max_abs_tau);
    o.check(r.k_range <= 1e-5, "k_range", r.k_range);
    o.check(std::abs(r.k_mean + 1.0) <= 1e-5, "|k+1|", std::abs(r.k_mean + 1.0));
    return o;
}

Outcome curve_round_trip()
{
    Outcome o;
    const std::vector<std::pair<std::function<double(double)>, std::function<double(double)>>> cases = {
        {[](double) { return 0.0; }, [](double) { return 0.0; }},
        {[](double) { return 1.0; }, [](double) { return 1.0; }},
        {[](double s) { return std::sin(s); }, [](double s) { return std::cos(s); }},
    };
    const OrientedFrame other(H1Point{0.7, -1.3, 2.1}, 2.4);
    double sig_err = 0.0, cong = 0.0;
    for (const auto& [k, tau] : cases) {
        const auto sig = CurveSignature::uniform(0.0, 2 * pi, 2001, k, tau);
        const auto c1 = reconstruct_curve(sig);
        const auto c2 = reconstruct_curve(sig, other);
        sig_err = std::max(sig_err, signature_distance(signature(c1, sig.size()), sig));
        const auto report = congruence_check(c1, c2, 1e-6);
        cong = std::max(cong, report.congruent ? report.max_deviation : std::numeric_limits<double>::infinity());
    }
    o.check(sig_err <= 1e-6, "signature_err", sig_err);
    o.check(cong <= 1e-6, "congruence_dev", cong);
    return o;
}

Outcome invariance_suite()
{
    Outcome o;
    std::mt19937_64 rng(99);
    const auto c = circle_lift(0.0, 2 * pi, 401);
    const auto base = signature(c, 401);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        worst = std::max(worst, signature_distance(signature(c.transformed(random_motion(rng)), 401), base));
    }
    o.check(worst <= 1e-8, "motion_invariance", worst);

    double plane = 0.0;
    for (const auto& curve : {c, Wobble{}.sample(0.0, 2 * pi, 401), Wobble{0.35, -1.2}.sample(-1.0, 2.0, 301)}) {
        for (std::size_t i = 0; i < curve.size(); ++i) {
            plane = std::max(plane, std::abs(p_curvature(curve, i) - plane_curvature(curve.d1(i), curve.d2(i))));
        }
    }
    o.check(plane <= 1e-10, "plane_curvature", plane);
    return o;
}

Outcome surface_coefficients()
{
    Outcome o;
    const auto grid = square(51, 2.0);
    const auto plane = coefficients(vertical_plane(grid));
    const double plane_err = coefficient_distance(plane, SurfaceCoefficients::constant(grid, 0, 0, 1, 0, 0));
    o.check(plane_err == 0.0, "plane_err", plane_err);
    const auto cyl = coefficients(normal_cylinder(grid));
    const double cyl_err = coefficient_distance(cyl, SurfaceCoefficients::constant(grid, 0, 0, 1, 1, 0));
    o.check(cyl_err <= 1e-8, "cylinder_err", cyl_err);
    const double res = std::max(check_integrability(plane, 1e-8).max_residual, check_integrability(cyl, 1e-8).max_residual);
    o.check(res <= 1e-8, "integrability_residual", res);
    auto bad = cyl;
    bad.b(25, 25) += 0.1;
    const auto r = check_integrability(bad, 1e-3);
    const double flagged = r.per_equation.at("c_u - 2b");
    o.check(!r.pass && flagged >= 0.19, "perturbed_residual", flagged);
    return o;
}

Outcome curvature_oracle(const std::vector<FamilyParams>& patches)
{
    Outcome o;
    double worst_ratio = 0.0, worst = 0.0;
    for (const auto& q : patches) {
        const auto fine = invariants(coefficients(family_patch(q, square(101))));
        const auto coarse = invariants(coefficients(family_patch(q, square(51))));
        double truncation = 0.0;
        for (std::size_t j = 2; j + 2 < 51; ++j) {
            for (std::size_t i = 2; i + 2 < 51; ++i) {
                truncation = std::max(truncation, std::abs(fine.K(2 * i, 2 * j) - coarse.K(i, j)) / 3.0);
            }
        }
        worst = std::max(worst, fine.max_K_discrepancy);
        worst_ratio = std::max(worst_ratio, fine.max_K_discrepancy / std::max(1e-3, 10.0 * truncation));
    }
    o.check(worst_ratio <= 1.0, "max_discrepancy", worst);
    double flat = 0.0;
    for (const auto& k : {coefficients(vertical_plane(square(101))), coefficients(normal_cylinder(square(101)))}) {
        const auto inv = invariants(k);
        flat = std::max({flat, max_abs(inv.K, 2), max_abs(inv.K_reference, 2)});
    }
    o.check(flat <= 1e-8, "flat_K", flat);
    return o;
}

Outcome integrability_equivalence(const std::vector<FamilyParams>& patches)
{
    Outcome o;
    const double tol = 0.1;
    std::vector<SurfaceCoefficients> all;
    for (const auto& q : patches) {
        all.push_back(coefficients(family_patch(q, square(101))));
    }
    all.push_back(coefficients(vertical_plane(square(101))));
    all.push_back(coefficients(normal_cylinder(square(101))));
    int agree = 0, total = 0, passing = 0;
    auto verdicts = [&](const GridField& alpha, const GridField& l, const Coframe& cf) {
        const auto K = gaussian_curvature_reference(cf.metric());
        const bool full = check_surface_integrability(alpha, l, K, cf, tol).pass;
        const bool split = gauss_discrepancy(alpha, l, cf, tol).pass && check_codazzi(alpha, l, cf, tol).pass;
        ++total;
        agree += full == split ? 1 : 0;
        passing += full ? 1 : 0;
    };
    for (const auto& k : all) {
        const auto inv = invariants(k);
        verdicts(inv.alpha, inv.l, inv.coframe);
        // the same data with l tilted in v violates both sides
        GridField l2 = inv.l;
        for (std::size_t j = 0; j < l2.nv; ++j) {
            for (std::size_t i = 0; i < l2.nu; ++i) {
                l2(i, j) += 0.5 * k.grid.v(j);
            }
        }
        verdicts(inv.alpha, l2, inv.coframe);
    }
    o.check(agree == total, "disagreements", total - agree);
    o.check(passing == static_cast<int>(all.size()), "genuine_passing", passing);
    return o;
}

Outcome surface_round_trips()
{
    Outcome o;
    const GridSpec grid{0.0, 0.01, 201, 0.0, 0.01, 201};
    const auto cyl = normal_cylinder(grid);
    const auto k = coefficients(cyl);
    const auto frame = OrientedFrame::from_x(TangentVector::from_coord(cyl.point(0, 0), cyl.Fu(0, 0)));
    const auto uf = reconstruct_surface(k, frame, 1e-3, PathOrder::UFirst);
    const auto vf = reconstruct_surface(k, frame, 1e-3, PathOrder::VFirst);
    const double coeff = coefficient_distance(coefficients(uf), k);
    o.check(coeff <= 1e-5, "coefficient_err", coeff);

    const auto cf = Coframe::flat(grid);
    const auto alpha = grid.zeros();
    const auto l = constant_field(grid, 1.0);
    const auto p = reconstruct_from_invariants(cf, alpha, l);
    const auto kp = coefficients(p);
    const auto m0 = cf.metric(), m1 = induced_metric(kp);
    const double inv = std::max({max_diff(m0.E, m1.E), max_diff(m0.F, m1.F), max_diff(m0.G, m1.G),
                                 max_diff(alpha_field(kp), alpha), max_diff(kp.l, l)});
    o.check(inv <= 1e-5, "invariant_err", inv);

    std::mt19937_64 rng(5);
    const auto q = family_patch(random_regular_family(rng, grid), grid);
    const auto kq = coefficients(q);
    const double order = std::max(point_distance(uf, vf),
                                  point_distance(reconstruct_surface(kq, {}, 1e-3, PathOrder::UFirst),
                                                 reconstruct_surface(kq, {}, 1e-3, PathOrder::VFirst)));
    o.check(order <= 1e-5, "path_order_diff", order);
    return o;
}

Outcome transformation_laws()
{
    Outcome o;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const auto grid = square(41);
    double form = 0.0, metric = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const auto k = coefficients(family_patch(random_regular_family(rng, grid), grid));
        Reparametrization r;
        r.sign = unit(rng) < 0.0 ? -1 : 1;
        const double g1 = unit(rng), g2 = unit(rng), h1 = 1.0 + 0.5 * unit(rng), h2 = 0.3 * unit(rng);
        r.g = [=](double v) { return g1 * v + g2 * std::sin(v); };
        r.g_prime = [=](double v) { return g1 + g2 * std::cos(v); };
        r.h = [=](double v) { return h1 * v + h2 * v * v / 2.0; };
        r.h_prime = [=](double v) { return h1 + h2 * v; };
        const auto t = transform_coefficients(k, r).coeffs;
        const double s = r.sign;
        const auto mk = induced_metric(k), mt = induced_metric(t);
        for (std::size_t j = 0; j < grid.nv; ++j) {
            const double v = grid.v(j), gp = r.g_prime(v), hp = r.h_prime(v);
            for (std::size_t i = 0; i < grid.nu; ++i) {
                // pull back through du~ = s du + g' dv, dv~ = h' dv
                form = std::max({form, std::abs(gp + t.a(i, j) * hp - s * k.a(i, j)),
                                 std::abs(t.b(i, j) * hp - s * k.b(i, j)), std::abs(t.c(i, j) * hp - k.c(i, j)),
                                 std::abs(s * t.l(i, j) - k.l(i, j)),
                                 std::abs(gp * t.l(i, j) + hp * t.m(i, j) - k.m(i, j))});
                const double E = mt.E(i, j), F = mt.F(i, j), G = mt.G(i, j);
                metric = std::max({metric, std::abs(E - mk.E(i, j)), std::abs(s * (E * gp + F * hp) - mk.F(i, j)),
                                   std::abs(E * gp * gp + 2.0 * F * gp * hp + G * hp * hp - mk.G(i, j))});
            }
        }
    }
    o.check(form <= 1e-8, "form_err", form);
    o.check(metric <= 1e-8, "metric_err", metric);
    return o;
}

double ode_error(int steps)
{
    numerics::OdeProblem<double> p;
    p.rhs = [](double, const double& x) { return x; };
    p.initial = 1.0;
    p.steps = steps;
    return std::abs(numerics::integrate_ode(p).back() - std::numbers::e);
}

double simpson_error(std::size_t n)
{
    std::vector<double> f(n);
    const double h = 1.0 / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = std::exp(h * static_cast<double>(i));
    }
    return std::abs(numerics::simpson_integrate(f, h) - (std::numbers::e - 1.0));
}

double fd_error(std::size_t n)
{
    const double h = 1.0 / static_cast<double>(n - 1);
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = std::sin(h * static_cast<double>(i));
    }
    const auto d = numerics::fd_derivative<double>(f, h, 1);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        err = std::max(err, std::abs(d[i] - std::cos(h * static_cast<double>(i))));
    }
    return err;
}

Outcome numerics_kernels()
{
    Outcome o;
    const double ode = std::log2(ode_error(20) / ode_error(40));
    const double simpson = std::log2(simpson_error(21) / simpson_error(41));
    const double fd = std::log2(fd_error(51) / fd_error(101));
    o.check(ode >= 3.0 && ode <= 5.0, "ode_order", ode);
    o.check(simpson >= 3.0 && simpson <= 5.0, "simpson_order", simpson);
    o.check(fd >= 1.0 && fd <= 3.0, "fd_order", fd);

    numerics::OdeProblem<Mat4> p;
    p.rhs = [](double s, const Mat4& m) {
        return Mat4(m * curve_generator(std::sin(s), std::cos(3.0 * s)).matrix());
    };
    p.initial = Mat4::Identity();
    p.t1 = 100.0;
    p.steps = 10000;
    const double drift = numerics::psh_residual(numerics::integrate_group_ode(p).back());
    o.check(drift <= 1e-9, "group_drift", drift);
    return o;
}

} // namespace

int main()
{
    const auto patches = random_patches();
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"geodesic characterization", geodesic_characterization},
        {"curve round trip", curve_round_trip},
        {"invariance suite", invariance_suite},
        {"surface coefficients and integrability", surface_coefficients},
        {"gaussian curvature oracle", [&] { return curvature_oracle(patches); }},
        {"integrability equivalences", [&] { return integrability_equivalence(patches); }},
        {"surface reconstruction round trips", surface_round_trips},
        {"transformation laws", transformation_laws},
        {"numerics kernels", numerics_kernels},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %zu %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(),
                    secs);
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
