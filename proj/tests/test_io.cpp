#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "h1/io.hpp"
#include "support/curves.hpp"
#include "support/patches.hpp"

using namespace h1;
using namespace h1::testing;
using h1::io::json;

namespace {

template <class Fn>
ErrorKind kind_of(Fn&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::InvalidArgument;
}

std::vector<double> random_values(std::mt19937_64& rng, std::size_t n)
{
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> out(n);
    for (auto& x : out) {
        x = std::ldexp(unit(rng), static_cast<int>(40.0 * unit(rng)));
    }
    return out;
}

} // namespace

TEST(Io, NumberFormattingRoundTrips)
{
    std::mt19937_64 rng(1);
    for (double x : random_values(rng, 2000)) {
        EXPECT_EQ(std::strtod(io::format_number(x).c_str(), nullptr), x);
        EXPECT_EQ(io::parse_json(io::dump(json(x))).get<double>(), x);
    }
}

TEST(Io, CurveRoundTripIsBitExact)
{
    const auto c = Wobble{}.sample(0.0, 2.0, 101);
    const auto back = io::curve_from_json(io::parse_json(io::dump(io::curve_to_json(c))));
    EXPECT_EQ(back.params(), c.params());
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_EQ(back.points()[i].vec(), c.points()[i].vec());
        EXPECT_EQ(back.first_derivatives()[i], c.first_derivatives()[i]);
        EXPECT_EQ(back.second_derivatives()[i], c.second_derivatives()[i]);
    }
    const auto fd = io::curve_from_json(io::curve_to_json(c), false);
    EXPECT_NE(fd.first_derivatives()[3], c.first_derivatives()[3]);
}

TEST(Io, SignatureCsvRoundTripIsBitExact)
{
    std::mt19937_64 rng(2);
    curves::CurveSignature sig;
    sig.k = random_values(rng, 50);
    sig.tau = random_values(rng, 50);
    for (std::size_t i = 0; i < 50; ++i) {
        sig.s.push_back(0.1 * static_cast<double>(i));
    }
    const auto back = io::signature_from_csv(io::signature_to_csv(sig));
    EXPECT_EQ(back.s, sig.s);
    EXPECT_EQ(back.k, sig.k);
    EXPECT_EQ(back.tau, sig.tau);
}

TEST(Io, PatchRoundTripIsBitExact)
{
    const auto p = family_patch(FamilyParams{}, {0.0, 0.1, 7, 0.0, 0.1, 6});
    const auto back = io::patch_from_json(io::parse_json(io::dump(io::patch_to_json(p))));
    EXPECT_EQ(back.grid(), p.grid());
    EXPECT_EQ(back.analytic(), p.analytic());
    for (std::size_t k = 0; k < p.size(); ++k) {
        EXPECT_EQ(back.points()[k].vec(), p.points()[k].vec());
        EXPECT_EQ(back.Fuu_all()[k], p.Fuu_all()[k]);
    }
    const auto bare = io::patch_from_json(io::patch_to_json(p, false));
    EXPECT_EQ(bare.analytic(), (std::array<bool, 4>{false, false, false, false}));
}

TEST(Io, CoefficientsRoundTrip)
{
    std::mt19937_64 rng(3);
    const surfaces::GridSpec g{0.0, 0.25, 6, -1.0, 0.5, 5};
    auto k = surfaces::SurfaceCoefficients::zeros(g);
    for (auto* f : {&k.a, &k.b, &k.c, &k.l, &k.m}) {
        f->values = random_values(rng, g.size());
    }
    const auto j = io::coefficients_from_json(io::parse_json(io::dump(io::coefficients_to_json(k))));
    EXPECT_EQ(j.grid, g);
    const auto c = io::coefficients_from_csv(io::coefficients_to_csv(k));
    EXPECT_EQ(c.grid.nu, g.nu);
    EXPECT_EQ(c.grid.nv, g.nv);
    for (const auto& back : {j, c}) {
        EXPECT_EQ(back.a.values, k.a.values);
        EXPECT_EQ(back.b.values, k.b.values);
        EXPECT_EQ(back.c.values, k.c.values);
        EXPECT_EQ(back.l.values, k.l.values);
        EXPECT_EQ(back.m.values, k.m.values);
    }
}

TEST(Io, InvariantInputRoundTrip)
{
    const surfaces::GridSpec g{0.0, 0.1, 5, 0.0, 0.1, 5};
    io::InvariantInput in{surfaces::Coframe::flat(g), g.zeros(), surfaces::constant_field(g, 1.0)};
    const auto back = io::invariants_from_json(io::parse_json(io::dump(io::invariant_input_to_json(in))));
    EXPECT_EQ(back.coframe.grid, g);
    EXPECT_EQ(back.coframe.Q2.values, in.coframe.Q2.values);
    EXPECT_EQ(back.l.values, in.l.values);
}

TEST(Io, MotionRoundTrip)
{
    const auto g = HeisenbergMotion::from_angle({0.5, -1.25, 3.0}, 0.75);
    const auto back = io::motion_from_json(io::parse_json(io::dump(io::motion_to_json(g))));
    EXPECT_EQ(back.matrix(), g.matrix());
}

TEST(Io, ParseErrors)
{
    EXPECT_EQ(kind_of([] { io::parse_json("{\"t\": [1, 2"); }), ErrorKind::ParseError);
    EXPECT_EQ(kind_of([] { io::curve_from_json(json{{"t", {0, 1, 2}}}); }), ErrorKind::ParseError);
    EXPECT_EQ(kind_of([] { io::curve_from_json(json{{"t", {0, "x"}}, {"points", json::array()}}); }),
              ErrorKind::ParseError);
    EXPECT_EQ(kind_of([] { io::curve_from_json(json{{"t", {0, 1}}, {"points", {{0, 0}, {1, 0}}}}); }),
              ErrorKind::ParseError);
    EXPECT_EQ(kind_of([] { io::signature_from_csv("s,k\n0,1\n"); }), ErrorKind::ParseError);
    EXPECT_EQ(kind_of([] { io::signature_from_csv("s,k,tau\n0,1,zz\n"); }), ErrorKind::ParseError);
    EXPECT_EQ(kind_of([] { io::coefficients_from_json(json{{"u0", 0}}); }), ErrorKind::ParseError);
    EXPECT_EQ(kind_of([] { io::geodesic_from_json(json{{"t1", 1}}); }), ErrorKind::ParseError);
    EXPECT_EQ(kind_of([] { io::read_text("/nonexistent/file.json"); }), ErrorKind::ParseError);
}

TEST(Io, CoefficientCsvMustBeUniform)
{
    const auto k = surfaces::SurfaceCoefficients::constant({0.0, 0.5, 5, 0.0, 0.5, 5}, 0, 0, 1, 0, 0);
    auto text = io::coefficients_to_csv(k);
    const auto pos = text.find("\n1,0,");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, 5, "\n1.2,0,");
    EXPECT_EQ(kind_of([&] { io::coefficients_from_csv(text); }), ErrorKind::NonUniformGrid);
}

TEST(Io, GeodesicInputs)
{
    const auto cf = io::geodesic_from_json(
        io::parse_json(R"({"closed_form": {"c3": -1, "a1": 1}, "t0": 0, "t1": 6.25, "n": 501})"));
    ASSERT_TRUE(cf.closed_form.has_value());
    EXPECT_EQ(cf.closed_form->c3, -1.0);
    EXPECT_EQ(cf.closed_form->a1, 1.0);
    EXPECT_EQ(cf.t1, 6.25);
    EXPECT_EQ(cf.n, 501u);

    const auto h = io::geodesic_from_json(
        io::parse_json(R"({"hamiltonian": {"x": [0, 1, 0], "xi": [1, 0, -1]}, "t_end": 3, "steps": 300})"));
    ASSERT_TRUE(h.hamiltonian.has_value());
    EXPECT_EQ(h.hamiltonian->xi, Vec3(1, 0, -1));
    EXPECT_EQ(h.n, 301u);

    EXPECT_EQ(kind_of([] { io::geodesic_from_json(json{{"closed_form", json::object()}, {"t1", 1}, {"n", 3}}); }),
              ErrorKind::InvalidArgument);
}

TEST(Io, DumpsAreDeterministic)
{
    const auto inv = surfaces::invariants(surfaces::coefficients(family_patch(FamilyParams{}, {0.0, 0.05, 21, 0.0,
                                                                                               0.05, 21})));
    const auto a = io::dump(io::invariants_to_json(inv));
    const auto b = io::dump(io::invariants_to_json(inv));
    EXPECT_EQ(a, b);
    surfaces::ResidualReport r;
    r.per_equation = {{"b", 2.0}, {"a", 1.0}};
    const auto text = io::dump(io::report_to_json(r));
    EXPECT_LT(text.find("\"a\""), text.find("\"b\""));
    EXPECT_NE(text.find("\"argmax_cell\""), std::string::npos);
}
