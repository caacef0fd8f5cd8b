#pragma once

// Analytic test curves and independent oracles for curve invariants.

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "h1/curves.hpp"

namespace h1::testing {

/// (cos(w t), sin(w t), 0) with exact derivatives.
inline curves::ParamCurve circle_lift(double t0, double t1, std::size_t n, double w = 1.0)
{
    return curves::ParamCurve::sample(
        [w](double t) { return H1Point{std::cos(w * t), std::sin(w * t), 0.0}; },
        [w](double t) { return Vec3(-w * std::sin(w * t), w * std::cos(w * t), 0.0); },
        [w](double t) { return Vec3(-w * w * std::cos(w * t), -w * w * std::sin(w * t), 0.0); }, t0, t1, n);
}

inline curves::ParamCurve horizontal_line(double t0, double t1, std::size_t n)
{
    return curves::ParamCurve::sample([](double t) { return H1Point{t, 0.0, 0.0}; },
                                      [](double) { return Vec3(1.0, 0.0, 0.0); },
                                      [](double) { return Vec3::Zero().eval(); }, t0, t1, n);
}

/// A smooth non-planar curve with nonvanishing horizontal velocity:
/// (cos t + e cos 2t, sin t + e sin 2t, h sin t) with |e| < 1/2.
struct Wobble {
    double e = 0.2;
    double h = 0.5;

    H1Point operator()(double t) const
    {
        return {std::cos(t) + e * std::cos(2 * t), std::sin(t) + e * std::sin(2 * t), h * std::sin(t)};
    }
    Vec3 d1(double t) const
    {
        return {-std::sin(t) - 2 * e * std::sin(2 * t), std::cos(t) + 2 * e * std::cos(2 * t), h * std::cos(t)};
    }
    Vec3 d2(double t) const
    {
        return {-std::cos(t) - 4 * e * std::cos(2 * t), -std::sin(t) - 4 * e * std::sin(2 * t), -h * std::sin(t)};
    }
    curves::ParamCurve sample(double t0, double t1, std::size_t n) const
    {
        return curves::ParamCurve::sample(
            *this, [this](double t) { return d1(t); }, [this](double t) { return d2(t); }, t0, t1, n);
    }
};

/// Signed curvature of the plane curve t -> x(t) + i y(t): Im(conj(z') z'') / |z'|^3.
inline double plane_curvature(const Vec3& d1, const Vec3& d2)
{
    const std::complex<double> v(d1.x(), d1.y()), a(d2.x(), d2.y());
    return std::imag(std::conj(v) * a) / std::pow(std::abs(v), 3);
}

inline HeisenbergMotion random_motion(std::mt19937_64& rng, double scale = 2.0)
{
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const H1Point p{scale * unit(rng), scale * unit(rng), scale * unit(rng)};
    return HeisenbergMotion::from_angle(p, std::numbers::pi * unit(rng));
}

inline double matrix_distance(const HeisenbergMotion& a, const HeisenbergMotion& b)
{
    return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

} // namespace h1::testing
