#pragma once

// File formats: JSON for geometry (motions, curves, patches, coefficient and
// invariant grids, residual reports), CSV for plottable columns. JSON numbers
// use the shortest representation that round-trips exactly; CSV numbers are
// printed with 17 significant digits.

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "h1/core.hpp"
#include "h1/curves.hpp"
#include "h1/errors.hpp"
#include "h1/surfaces.hpp"

namespace h1::io {

using json = nlohmann::ordered_json;

inline std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::ParseError, "cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
    }
    out << text;
}

inline json parse_json(const std::string& text)
{
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, e.what());
    }
}

inline std::string dump(const json& j) { return j.dump(1, '\t') + "\n"; }

inline std::string format_number(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// ---------------------------------------------------------------------------
// Primitive helpers
// ---------------------------------------------------------------------------

namespace detail {

template <class Fn>
auto guarded(Fn&& fn) -> decltype(fn())
{
    try {
        return fn();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, e.what());
    }
}

inline const json& field(const json& j, const char* key)
{
    if (!j.is_object() || !j.contains(key)) {
        throw Error(ErrorKind::ParseError, std::string("missing field \"") + key + "\"");
    }
    return j.at(key);
}

inline double number(const json& j)
{
    if (!j.is_number()) {
        throw Error(ErrorKind::ParseError, "expected a number");
    }
    return j.get<double>();
}

inline std::size_t count(const json& j)
{
    if (!j.is_number_integer() || j.get<long long>() < 0) {
        throw Error(ErrorKind::ParseError, "expected a non-negative integer");
    }
    return j.get<std::size_t>();
}

inline std::vector<double> numbers(const json& j)
{
    if (!j.is_array()) {
        throw Error(ErrorKind::ParseError, "expected an array of numbers");
    }
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& x : j) {
        out.push_back(number(x));
    }
    return out;
}

inline Vec3 vec3(const json& j)
{
    if (!j.is_array() || j.size() != 3) {
        throw Error(ErrorKind::ParseError, "expected a 3-vector");
    }
    return {number(j[0]), number(j[1]), number(j[2])};
}

inline std::vector<Vec3> vec3s(const json& j)
{
    if (!j.is_array()) {
        throw Error(ErrorKind::ParseError, "expected an array of 3-vectors");
    }
    std::vector<Vec3> out;
    out.reserve(j.size());
    for (const auto& x : j) {
        out.push_back(vec3(x));
    }
    return out;
}

inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline json to_json(const std::vector<Vec3>& vs)
{
    json out = json::array();
    for (const auto& v : vs) {
        out.push_back(to_json(v));
    }
    return out;
}

inline json to_json(const std::vector<H1Point>& ps)
{
    json out = json::array();
    for (const auto& p : ps) {
        out.push_back(to_json(p.vec()));
    }
    return out;
}

inline std::vector<H1Point> points(const json& j)
{
    const auto vs = vec3s(j);
    std::vector<H1Point> out(vs.size());
    for (std::size_t i = 0; i < vs.size(); ++i) {
        out[i] = H1Point::from(vs[i]);
    }
    return out;
}

inline surfaces::GridSpec grid(const json& j)
{
    surfaces::GridSpec g{number(field(j, "u0")), number(field(j, "du")), count(field(j, "nu")),
                         number(field(j, "v0")), number(field(j, "dv")), count(field(j, "nv"))};
    g.validate();
    return g;
}

inline void put_grid(json& j, const surfaces::GridSpec& g)
{
    j["u0"] = g.u0;
    j["du"] = g.du;
    j["nu"] = g.nu;
    j["v0"] = g.v0;
    j["dv"] = g.dv;
    j["nv"] = g.nv;
}

inline numerics::GridField grid_field(const json& j, const char* key, const surfaces::GridSpec& g)
{
    auto values = numbers(field(j, key));
    if (values.size() != g.size()) {
        throw Error(ErrorKind::ParseError, std::string("field \"") + key + "\" does not match the grid size");
    }
    return numerics::GridField{g.nu, g.nv, g.du, g.dv, std::move(values)};
}

} // namespace detail

// ---------------------------------------------------------------------------
// Motions and frames: {"p": [x, y, z], "theta": angle}
// ---------------------------------------------------------------------------

inline json motion_to_json(const HeisenbergMotion& g)
{
    return json{{"p", detail::to_json(g.p().vec())}, {"theta", g.angle()}};
}

inline HeisenbergMotion motion_from_json(const json& j)
{
    return detail::guarded([&] {
        return HeisenbergMotion::from_angle(H1Point::from(detail::vec3(detail::field(j, "p"))),
                                            detail::number(detail::field(j, "theta")));
    });
}

inline OrientedFrame frame_from_json(const json& j) { return OrientedFrame(motion_from_json(j)); }

// ---------------------------------------------------------------------------
// Curves: {"t": [...], "points": [[x, y, z], ...], "d1": [...], "d2": [...]}
// ---------------------------------------------------------------------------

inline json curve_to_json(const curves::ParamCurve& c, bool with_derivatives = true)
{
    json j;
    j["t"] = c.params();
    j["points"] = detail::to_json(c.points());
    if (with_derivatives) {
        j["d1"] = detail::to_json(c.first_derivatives());
        j["d2"] = detail::to_json(c.second_derivatives());
    }
    return j;
}

/// With use_derivatives false, stored derivative samples are ignored and
/// finite differences are used instead.
inline curves::ParamCurve curve_from_json(const json& j, bool use_derivatives = true)
{
    return detail::guarded([&] {
        auto t = detail::numbers(detail::field(j, "t"));
        auto pts = detail::points(detail::field(j, "points"));
        std::optional<std::vector<Vec3>> d1, d2;
        if (use_derivatives && j.contains("d1")) {
            d1 = detail::vec3s(j.at("d1"));
            if (j.contains("d2")) {
                d2 = detail::vec3s(j.at("d2"));
            }
        }
        return curves::ParamCurve(std::move(t), std::move(pts), std::move(d1), std::move(d2));
    });
}

// ---------------------------------------------------------------------------
// Signatures: CSV "s,k,tau"
// ---------------------------------------------------------------------------

inline std::string signature_to_csv(const curves::CurveSignature& sig)
{
    std::string out = "s,k,tau\n";
    for (std::size_t i = 0; i < sig.size(); ++i) {
        out += format_number(sig.s[i]) + "," + format_number(sig.k[i]) + "," + format_number(sig.tau[i]) + "\n";
    }
    return out;
}

namespace detail {

inline std::vector<std::vector<double>> parse_csv(const std::string& text, const std::vector<std::string>& header)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorKind::ParseError, "empty CSV");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    std::string expected;
    for (std::size_t i = 0; i < header.size(); ++i) {
        expected += (i ? "," : "") + header[i];
    }
    if (line != expected) {
        throw Error(ErrorKind::ParseError, "CSV header must be \"" + expected + "\"");
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<double> row;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (used != cell.size()) {
                    throw std::invalid_argument(cell);
                }
            } catch (const std::exception&) {
                throw Error(ErrorKind::ParseError, "bad CSV number \"" + cell + "\"");
            }
        }
        if (row.size() != header.size()) {
            throw Error(ErrorKind::ParseError, "CSV row has " + std::to_string(row.size()) + " columns");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace detail

inline curves::CurveSignature signature_from_csv(const std::string& text)
{
    const auto rows = detail::parse_csv(text, {"s", "k", "tau"});
    curves::CurveSignature sig;
    for (const auto& r : rows) {
        sig.s.push_back(r[0]);
        sig.k.push_back(r[1]);
        sig.tau.push_back(r[2]);
    }
    sig.validate();
    return sig;
}

/// Plot columns "t,x,y,z".
inline std::string curve_to_plot_csv(const curves::ParamCurve& c)
{
    std::string out = "t,x,y,z\n";
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto& p = c.point(i);
        out += format_number(c.t(i)) + "," + format_number(p.x) + "," + format_number(p.y) + "," +
               format_number(p.z) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Patches
// ---------------------------------------------------------------------------

inline json patch_to_json(const surfaces::SurfacePatch& patch, bool with_partials = true)
{
    json j;
    detail::put_grid(j, patch.grid());
    j["points"] = detail::to_json(patch.points());
    if (with_partials) {
        json partials;
        const auto& flags = patch.analytic();
        if (flags[0]) partials["Fu"] = detail::to_json(patch.Fu_all());
        if (flags[1]) partials["Fv"] = detail::to_json(patch.Fv_all());
        if (flags[2]) partials["Fuu"] = detail::to_json(patch.Fuu_all());
        if (flags[3]) partials["Fuv"] = detail::to_json(patch.Fuv_all());
        if (!partials.empty()) {
            j["partials"] = partials;
        }
    }
    return j;
}

inline surfaces::SurfacePatch patch_from_json(const json& j, bool use_partials = true)
{
    return detail::guarded([&] {
        const auto g = detail::grid(j);
        auto pts = detail::points(detail::field(j, "points"));
        surfaces::PatchPartials d;
        if (use_partials && j.contains("partials")) {
            const json& p = j.at("partials");
            if (p.contains("Fu")) d.Fu = detail::vec3s(p.at("Fu"));
            if (p.contains("Fv")) d.Fv = detail::vec3s(p.at("Fv"));
            if (p.contains("Fuu")) d.Fuu = detail::vec3s(p.at("Fuu"));
            if (p.contains("Fuv")) d.Fuv = detail::vec3s(p.at("Fuv"));
        }
        return surfaces::SurfacePatch(g, std::move(pts), std::move(d));
    });
}

// ---------------------------------------------------------------------------
// Coefficients: JSON grid arrays or CSV "u,v,a,b,c,l,m"
// ---------------------------------------------------------------------------

inline json coefficients_to_json(const surfaces::SurfaceCoefficients& k)
{
    json j;
    detail::put_grid(j, k.grid);
    j["a"] = k.a.values;
    j["b"] = k.b.values;
    j["c"] = k.c.values;
    j["l"] = k.l.values;
    j["m"] = k.m.values;
    return j;
}

inline surfaces::SurfaceCoefficients coefficients_from_json(const json& j)
{
    return detail::guarded([&] {
        const auto g = detail::grid(j);
        surfaces::SurfaceCoefficients k{g,
                                        detail::grid_field(j, "a", g),
                                        detail::grid_field(j, "b", g),
                                        detail::grid_field(j, "c", g),
                                        detail::grid_field(j, "l", g),
                                        detail::grid_field(j, "m", g)};
        k.validate();
        return k;
    });
}

inline std::string coefficients_to_csv(const surfaces::SurfaceCoefficients& k)
{
    std::string out = "u,v,a,b,c,l,m\n";
    for (std::size_t j = 0; j < k.grid.nv; ++j) {
        for (std::size_t i = 0; i < k.grid.nu; ++i) {
            out += format_number(k.grid.u(i)) + "," + format_number(k.grid.v(j)) + "," + format_number(k.a(i, j)) +
                   "," + format_number(k.b(i, j)) + "," + format_number(k.c(i, j)) + "," + format_number(k.l(i, j)) +
                   "," + format_number(k.m(i, j)) + "\n";
        }
    }
    return out;
}

/// Rows must be ordered u fastest on a uniform grid.
inline surfaces::SurfaceCoefficients coefficients_from_csv(const std::string& text)
{
    const auto rows = detail::parse_csv(text, {"u", "v", "a", "b", "c", "l", "m"});
    if (rows.size() < 2) {
        throw Error(ErrorKind::ParseError, "coefficient CSV has too few rows");
    }
    std::size_t nu = 1;
    while (nu < rows.size() && rows[nu][1] == rows[0][1]) {
        ++nu;
    }
    if (rows.size() % nu != 0 || nu < 2) {
        throw Error(ErrorKind::ParseError, "coefficient CSV rows do not form a grid");
    }
    const std::size_t nv = rows.size() / nu;
    if (nv < 2) {
        throw Error(ErrorKind::GridTooSmall, "coefficient grid needs at least two v-rows");
    }
    surfaces::GridSpec g{rows[0][0], rows[1][0] - rows[0][0], nu, rows[0][1], rows[nu][1] - rows[0][1], nv};
    g.validate();
    auto k = surfaces::SurfaceCoefficients::zeros(g);
    for (std::size_t q = 0; q < rows.size(); ++q) {
        const std::size_t i = q % nu, jj = q / nu;
        const double tol_u = 1e-9 * g.du * (1.0 + static_cast<double>(i));
        const double tol_v = 1e-9 * g.dv * (1.0 + static_cast<double>(jj));
        if (std::abs(rows[q][0] - g.u(i)) > tol_u || std::abs(rows[q][1] - g.v(jj)) > tol_v) {
            throw Error(ErrorKind::NonUniformGrid, "coefficient CSV grid is not uniform and u-fastest");
        }
        k.a.values[q] = rows[q][2];
        k.b.values[q] = rows[q][3];
        k.c.values[q] = rows[q][4];
        k.l.values[q] = rows[q][5];
        k.m.values[q] = rows[q][6];
    }
    k.validate();
    return k;
}

// ---------------------------------------------------------------------------
// Invariants: grid + "P1","Q1","P2","Q2","alpha","l"
// ---------------------------------------------------------------------------

struct InvariantInput {
    surfaces::Coframe coframe;
    numerics::GridField alpha;
    numerics::GridField l;
};

inline InvariantInput invariants_from_json(const json& j)
{
    return detail::guarded([&] {
        const auto g = detail::grid(j);
        InvariantInput in{surfaces::Coframe{g, detail::grid_field(j, "P1", g), detail::grid_field(j, "Q1", g),
                                            detail::grid_field(j, "P2", g), detail::grid_field(j, "Q2", g)},
                          detail::grid_field(j, "alpha", g), detail::grid_field(j, "l", g)};
        return in;
    });
}

inline json invariant_input_to_json(const InvariantInput& in)
{
    json j;
    detail::put_grid(j, in.coframe.grid);
    j["P1"] = in.coframe.P1.values;
    j["Q1"] = in.coframe.Q1.values;
    j["P2"] = in.coframe.P2.values;
    j["Q2"] = in.coframe.Q2.values;
    j["alpha"] = in.alpha.values;
    j["l"] = in.l.values;
    return j;
}

inline json invariants_to_json(const surfaces::SurfaceInvariants& inv)
{
    json j;
    detail::put_grid(j, inv.grid);
    j["alpha"] = inv.alpha.values;
    j["l"] = inv.l.values;
    j["K"] = inv.K.values;
    j["K_reference"] = inv.K_reference.values;
    j["max_K_discrepancy"] = inv.max_K_discrepancy;
    j["P1"] = inv.coframe.P1.values;
    j["Q1"] = inv.coframe.Q1.values;
    j["P2"] = inv.coframe.P2.values;
    j["Q2"] = inv.coframe.Q2.values;
    j["omega12"] = json{{"hat1", inv.connection.omega12_1.values}, {"hat2", inv.connection.omega12_2.values}};
    j["omegahat12"] =
        json{{"hat1", inv.connection.omegahat12_1.values}, {"hat2", inv.connection.omegahat12_2.values}};
    return j;
}

// ---------------------------------------------------------------------------
// Residual reports
// ---------------------------------------------------------------------------

inline json report_to_json(const surfaces::ResidualReport& r)
{
    json per = json::object();
    for (const auto& [name, value] : r.per_equation) {
        per[name] = value;
    }
    return json{{"max_residual", r.max_residual},
                {"argmax_cell", json::array({r.argmax_cell.first, r.argmax_cell.second})},
                {"per_equation", per},
                {"tol", r.tol},
                {"pass", r.pass}};
}

// ---------------------------------------------------------------------------
// Geodesic inputs
// ---------------------------------------------------------------------------

/// Either {"closed_form": {"c3",...}, "t0", "t1", "n"} or
/// {"hamiltonian": {"x": [..], "xi": [..]}, "t_end", "steps"}.
struct GeodesicInput {
    std::optional<curves::GeodesicParams> closed_form;
    std::optional<curves::HamiltonianState> hamiltonian;
    double t0 = 0.0;
    double t1 = 1.0;
    std::size_t n = 1001;
};

inline GeodesicInput geodesic_from_json(const json& j)
{
    return detail::guarded([&] {
        GeodesicInput in;
        if (j.contains("closed_form")) {
            const json& c = j.at("closed_form");
            curves::GeodesicParams p;
            auto opt = [&](const char* key, double& dst) {
                if (c.contains(key)) {
                    dst = detail::number(c.at(key));
                }
            };
            opt("c3", p.c3);
            opt("a1", p.a1);
            opt("a2", p.a2);
            opt("d1", p.d1);
            opt("d2", p.d2);
            opt("d3", p.d3);
            opt("c1", p.c1);
            opt("c2", p.c2);
            in.closed_form = p;
            in.t0 = j.contains("t0") ? detail::number(j.at("t0")) : 0.0;
            in.t1 = detail::number(detail::field(j, "t1"));
            in.n = j.contains("n") ? detail::count(j.at("n")) : 1001;
        } else if (j.contains("hamiltonian")) {
            const json& h = j.at("hamiltonian");
            curves::HamiltonianState s;
            s.x = H1Point::from(detail::vec3(detail::field(h, "x")));
            s.xi = detail::vec3(detail::field(h, "xi"));
            in.hamiltonian = s;
            in.t1 = detail::number(detail::field(j, "t_end"));
            in.n = detail::count(detail::field(j, "steps")) + 1;
        } else {
            throw Error(ErrorKind::ParseError, "geodesic input needs \"closed_form\" or \"hamiltonian\"");
        }
        if (in.n < 5 || !(in.t1 > in.t0)) {
            throw Error(ErrorKind::InvalidArgument, "geodesic input needs t1 > t0 and at least 5 samples");
        }
        return in;
    });
}

} // namespace h1::io
