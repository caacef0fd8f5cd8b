#pragma once

// Horizontally regular curves in H1: horizontal arclength, p-curvature and
// T-variation, reconstruction from (k, tau) by integrating the Darboux
// derivative on PSH(1), congruence detection and sub-Riemannian geodesics.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <type_traits>
#include <vector>

#include "h1/core.hpp"
#include "h1/errors.hpp"
#include "h1/numerics.hpp"

namespace h1::curves {

/// Sampled curve on a uniform parameter grid. Derivative samples may be
/// supplied; missing ones are filled with second-order finite differences
/// (first derivatives from the points, second derivatives from the first).
class ParamCurve {
public:
    ParamCurve(std::vector<double> t, std::vector<H1Point> points, std::optional<std::vector<Vec3>> d1 = std::nullopt,
               std::optional<std::vector<Vec3>> d2 = std::nullopt)
        : t_(std::move(t)), points_(std::move(points))
    {
        const std::size_t n = t_.size();
        if (n < 5) {
            throw Error(ErrorKind::TooFewSamples, "a curve needs at least 5 samples");
        }
        if (points_.size() != n) {
            throw Error(ErrorKind::InvalidArgument, "curve point count does not match the parameter grid");
        }
        for (std::size_t i = 1; i < n; ++i) {
            if (!(t_[i] > t_[i - 1])) {
                throw Error(ErrorKind::InvalidArgument, "curve parameter must be strictly increasing");
            }
        }
        step_ = (t_.back() - t_.front()) / static_cast<double>(n - 1);
        const double slack = 1e-8 * step_ + 1e-13 * std::max(std::abs(t_.front()), std::abs(t_.back()));
        for (std::size_t i = 1; i < n; ++i) {
            if (std::abs((t_[i] - t_[i - 1]) - step_) > slack) {
                throw Error(ErrorKind::NonUniformGrid, "curve parameter grid must be uniform");
            }
        }
        for (const auto& p : points_) {
            if (!p.finite()) {
                throw Error(ErrorKind::InvalidArgument, "curve points must be finite");
            }
        }
        analytic_first_ = d1.has_value();
        analytic_second_ = d2.has_value();
        std::vector<Vec3> pts(n);
        for (std::size_t i = 0; i < n; ++i) {
            pts[i] = points_[i].vec();
        }
        if (d1) {
            if (d1->size() != n) {
                throw Error(ErrorKind::InvalidArgument, "first-derivative sample count mismatch");
            }
            d1_ = std::move(*d1);
        } else {
            d1_ = numerics::fd_derivative<Vec3>(pts, step_, 1);
        }
        if (d2) {
            if (d2->size() != n) {
                throw Error(ErrorKind::InvalidArgument, "second-derivative sample count mismatch");
            }
            d2_ = std::move(*d2);
        } else if (analytic_first_) {
            d2_ = numerics::fd_derivative<Vec3>(d1_, step_, 1);
        } else {
            d2_ = numerics::fd_derivative<Vec3>(pts, step_, 2);
        }
    }

    /// Samples f (and optionally its derivatives) on n uniform points of [t0, t1].
    template <class F>
    static ParamCurve sample(F&& f, double t0, double t1, std::size_t n)
    {
        auto [t, pts] = sample_points(f, t0, t1, n);
        return ParamCurve(std::move(t), std::move(pts));
    }

    template <class F, class DF, class DDF>
    static ParamCurve sample(F&& f, DF&& df, DDF&& ddf, double t0, double t1, std::size_t n)
    {
        auto [t, pts] = sample_points(f, t0, t1, n);
        std::vector<Vec3> d1(n), d2(n);
        for (std::size_t i = 0; i < n; ++i) {
            d1[i] = df(t[i]);
            d2[i] = ddf(t[i]);
        }
        return ParamCurve(std::move(t), std::move(pts), std::move(d1), std::move(d2));
    }

    std::size_t size() const { return t_.size(); }
    double step() const { return step_; }
    double t(std::size_t i) const { return t_[i]; }
    const std::vector<double>& params() const { return t_; }
    const H1Point& point(std::size_t i) const { return points_[i]; }
    const std::vector<H1Point>& points() const { return points_; }
    const Vec3& d1(std::size_t i) const { return d1_[i]; }
    const Vec3& d2(std::size_t i) const { return d2_[i]; }
    const std::vector<Vec3>& first_derivatives() const { return d1_; }
    const std::vector<Vec3>& second_derivatives() const { return d2_; }
    bool has_analytic_first() const { return analytic_first_; }
    bool has_analytic_second() const { return analytic_second_; }

    /// Same points, derivatives recomputed by finite differences.
    ParamCurve points_only() const { return ParamCurve(t_, points_); }

    /// Image under a motion; derivative samples map through the differential.
    ParamCurve transformed(const HeisenbergMotion& g) const
    {
        const Mat3 dg = g.differential();
        std::vector<H1Point> pts(size());
        std::vector<Vec3> d1(size()), d2(size());
        for (std::size_t i = 0; i < size(); ++i) {
            pts[i] = motion_apply(g, points_[i]);
            d1[i] = dg * d1_[i];
            d2[i] = dg * d2_[i];
        }
        if (!analytic_first_) {
            return ParamCurve(t_, std::move(pts));
        }
        if (!analytic_second_) {
            return ParamCurve(t_, std::move(pts), std::move(d1));
        }
        return ParamCurve(t_, std::move(pts), std::move(d1), std::move(d2));
    }

private:
    template <class F>
    static std::pair<std::vector<double>, std::vector<H1Point>> sample_points(F& f, double t0, double t1,
                                                                             std::size_t n)
    {
        if (n < 5) {
            throw Error(ErrorKind::TooFewSamples, "a curve needs at least 5 samples");
        }
        std::vector<double> t(n);
        std::vector<H1Point> pts(n);
        const double h = (t1 - t0) / static_cast<double>(n - 1);
        for (std::size_t i = 0; i < n; ++i) {
            t[i] = (i + 1 == n) ? t1 : t0 + static_cast<double>(i) * h;
            if constexpr (std::is_convertible_v<decltype(f(t[i])), H1Point>) {
                pts[i] = f(t[i]);
            } else {
                pts[i] = H1Point::from(f(t[i]));
            }
        }
        return {std::move(t), std::move(pts)};
    }

    std::vector<double> t_;
    std::vector<H1Point> points_;
    std::vector<Vec3> d1_;
    std::vector<Vec3> d2_;
    double step_ = 0.0;
    bool analytic_first_ = false;
    bool analytic_second_ = false;
};

// ---------------------------------------------------------------------------
// Pointwise quantities
// ---------------------------------------------------------------------------

struct VelocitySplit {
    TangentVector horizontal; // frame components (x', y', 0)
    double vertical = 0.0;    // z' + x y' - y x'
};

inline VelocitySplit velocity_decomposition(const ParamCurve& curve, std::size_t i)
{
    const H1Point& p = curve.point(i);
    const Vec3& d = curve.d1(i);
    return {TangentVector::from_frame(p, Vec3(d.x(), d.y(), 0.0)), d.z() + p.x * d.y() - p.y * d.x()};
}

inline double horizontal_speed(const Vec3& d1) { return std::hypot(d1.x(), d1.y()); }

inline double horizontal_speed(const ParamCurve& curve, std::size_t i) { return horizontal_speed(curve.d1(i)); }

/// k = (x'y'' - x''y') / (x'^2 + y'^2)^(3/2); valid in any parametrization.
inline double p_curvature(const H1Point&, const Vec3& d1, const Vec3& d2)
{
    const double speed = horizontal_speed(d1);
    return (d1.x() * d2.y() - d2.x() * d1.y()) / (speed * speed * speed);
}

/// tau = (x y' - x' y + z') / (x'^2 + y'^2)^(1/2).
inline double t_variation(const H1Point& p, const Vec3& d1)
{
    return (p.x * d1.y() - d1.x() * p.y + d1.z()) / horizontal_speed(d1);
}

struct RegularityReport {
    bool regular = true;
    std::optional<std::size_t> first_failure;
    double min_speed = 0.0;
    double eps = 0.0;
};

/// Checks |gamma'_xi0| > eps at every sample. The default eps is 1e-8 times
/// the largest horizontal speed on the curve.
inline RegularityReport is_horizontally_regular(const ParamCurve& curve, std::optional<double> eps = std::nullopt)
{
    double max_speed = 0.0;
    double min_speed = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < curve.size(); ++i) {
        const double s = horizontal_speed(curve, i);
        max_speed = std::max(max_speed, s);
        min_speed = std::min(min_speed, s);
    }
    RegularityReport report;
    report.eps = eps.value_or(1e-8 * max_speed);
    report.min_speed = min_speed;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (!(horizontal_speed(curve, i) > report.eps)) {
            report.regular = false;
            report.first_failure = i;
            break;
        }
    }
    return report;
}

inline void require_regular(const ParamCurve& curve, std::optional<double> eps = std::nullopt)
{
    const auto report = is_horizontally_regular(curve, eps);
    if (!report.regular) {
        throw Error(ErrorKind::NotHorizontallyRegular,
                    "horizontal velocity vanishes at sample " + std::to_string(*report.first_failure));
    }
}

inline double p_curvature(const ParamCurve& curve, std::size_t i)
{
    if (!(horizontal_speed(curve, i) > 0.0)) {
        throw Error(ErrorKind::NotHorizontallyRegular, "p-curvature undefined at sample " + std::to_string(i));
    }
    return p_curvature(curve.point(i), curve.d1(i), curve.d2(i));
}

inline double t_variation(const ParamCurve& curve, std::size_t i)
{
    if (!(horizontal_speed(curve, i) > 0.0)) {
        throw Error(ErrorKind::NotHorizontallyRegular, "T-variation undefined at sample " + std::to_string(i));
    }
    return t_variation(curve.point(i), curve.d1(i));
}

/// s(t) from the first sample by composite Simpson quadrature of |gamma'_xi0|.
inline std::vector<double> horizontal_arclength(const ParamCurve& curve, std::optional<double> eps = std::nullopt)
{
    require_regular(curve, eps);
    std::vector<double> speed(curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
        speed[i] = horizontal_speed(curve, i);
    }
    return numerics::cumulative_simpson(speed, curve.step());
}

// ---------------------------------------------------------------------------
// Interpolation between samples
// ---------------------------------------------------------------------------

namespace detail {

/// Piecewise quintic Hermite interpolant through (point, d1, d2) samples.
class CurveInterpolant {
public:
    explicit CurveInterpolant(const ParamCurve& curve) : curve_(curve) {}

    struct Jet {
        Vec3 value;
        Vec3 first;
        Vec3 second;
    };

    Jet operator()(double t) const
    {
        const std::size_t n = curve_.size();
        const double h = curve_.step();
        const double r = (t - curve_.t(0)) / h;
        auto k = static_cast<long>(std::floor(r));
        k = std::clamp<long>(k, 0, static_cast<long>(n) - 2);
        const auto i = static_cast<std::size_t>(k);
        const double x = (t - curve_.t(i)) / h;
        const double x2 = x * x, x3 = x2 * x, x4 = x3 * x, x5 = x4 * x;

        const std::array<double, 6> b = {1 - 10 * x3 + 15 * x4 - 6 * x5,      x - 6 * x3 + 8 * x4 - 3 * x5,
                                         0.5 * (x2 - 3 * x3 + 3 * x4 - x5),   0.5 * (x3 - 2 * x4 + x5),
                                         -4 * x3 + 7 * x4 - 3 * x5,           10 * x3 - 15 * x4 + 6 * x5};
        const std::array<double, 6> db = {-30 * x2 + 60 * x3 - 30 * x4,       1 - 18 * x2 + 32 * x3 - 15 * x4,
                                          0.5 * (2 * x - 9 * x2 + 12 * x3 - 5 * x4),
                                          0.5 * (3 * x2 - 8 * x3 + 5 * x4),   -12 * x2 + 28 * x3 - 15 * x4,
                                          30 * x2 - 60 * x3 + 30 * x4};
        const std::array<double, 6> ddb = {-60 * x + 180 * x2 - 120 * x3,     -36 * x + 96 * x2 - 60 * x3,
                                           0.5 * (2 - 18 * x + 36 * x2 - 20 * x3),
                                           0.5 * (6 * x - 24 * x2 + 20 * x3), -24 * x + 84 * x2 - 60 * x3,
                                           60 * x - 180 * x2 + 120 * x3};
        const std::array<Vec3, 6> c = {curve_.point(i).vec(),  h * curve_.d1(i),     h * h * curve_.d2(i),
                                       h * h * curve_.d2(i + 1), h * curve_.d1(i + 1), curve_.point(i + 1).vec()};
        Jet jet{Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
        for (std::size_t q = 0; q < 6; ++q) {
            jet.value += b[q] * c[q];
            jet.first += db[q] * c[q];
            jet.second += ddb[q] * c[q];
        }
        jet.first /= h;
        jet.second /= h * h;
        return jet;
    }

private:
    const ParamCurve& curve_;
};

inline double gauss_legendre_speed(const CurveInterpolant& interp, double a, double b)
{
    static constexpr std::array<double, 5> nodes = {0.0, -0.5384693101056831, 0.5384693101056831,
                                                    -0.9061798459386640, 0.9061798459386640};
    static constexpr std::array<double, 5> weights = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                                                      0.2369268850561891, 0.2369268850561891};
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double sum = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
        sum += weights[q] * horizontal_speed(interp(mid + half * nodes[q]).first);
    }
    return half * sum;
}

} // namespace detail

/// Resamples the curve on n_out points uniform in horizontal arclength,
/// starting from s = 0 at the first sample. The inverse map s -> t starts
/// from a monotone cubic fit and is polished by Newton steps on the
/// quintic Hermite interpolant of the samples.
inline ParamCurve reparametrize_by_arclength(const ParamCurve& curve, std::size_t n_out,
                                             std::optional<double> eps = std::nullopt)
{
    require_regular(curve, eps);
    if (n_out < 5) {
        throw Error(ErrorKind::TooFewSamples, "need at least 5 output samples");
    }
    const detail::CurveInterpolant interp(curve);
    const std::size_t n = curve.size();
    std::vector<double> s_nodes(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
        s_nodes[i] = s_nodes[i - 1] + detail::gauss_legendre_speed(interp, curve.t(i - 1), curve.t(i));
    }
    const double length = s_nodes.back();
    const numerics::MonotoneCubic guess(s_nodes, curve.params());

    std::vector<double> s_out(n_out), t_out(n_out);
    std::vector<H1Point> pts(n_out);
    std::vector<Vec3> d1(n_out), d2(n_out);
    const double ds = length / static_cast<double>(n_out - 1);
    for (std::size_t j = 0; j < n_out; ++j) {
        const double target = (j + 1 == n_out) ? length : static_cast<double>(j) * ds;
        s_out[j] = target;
        double t = std::clamp(guess(target), curve.t(0), curve.t(n - 1));
        if (j == 0) {
            t = curve.t(0);
        } else if (j + 1 == n_out) {
            t = curve.t(n - 1);
        } else {
            for (int iter = 0; iter < 20; ++iter) {
                auto k = static_cast<std::size_t>(std::upper_bound(curve.params().begin(), curve.params().end(), t) -
                                                  curve.params().begin());
                k = std::clamp<std::size_t>(k, 1, n - 1) - 1;
                const double s_t = s_nodes[k] + detail::gauss_legendre_speed(interp, curve.t(k), t);
                const double speed = horizontal_speed(interp(t).first);
                const double dt = (s_t - target) / speed;
                t = std::clamp(t - dt, curve.t(0), curve.t(n - 1));
                if (std::abs(dt) <= 1e-15 * (1.0 + std::abs(t))) {
                    break;
                }
            }
        }
        t_out[j] = t;
        const auto jet = interp(t);
        const double sigma = horizontal_speed(jet.first);
        const double sigma_t = (jet.first.x() * jet.second.x() + jet.first.y() * jet.second.y()) / sigma;
        pts[j] = H1Point::from(jet.value);
        d1[j] = jet.first / sigma;
        d2[j] = (jet.second - jet.first * (sigma_t / sigma)) / (sigma * sigma);
    }
    // endpoints carry the original samples exactly
    pts.front() = curve.point(0);
    pts.back() = curve.point(n - 1);
    return ParamCurve(std::move(s_out), std::move(pts), std::move(d1), std::move(d2));
}

// ---------------------------------------------------------------------------
// Signatures
// ---------------------------------------------------------------------------

/// (s, k(s), tau(s)) on a uniform horizontal-arclength grid.
struct CurveSignature {
    std::vector<double> s;
    std::vector<double> k;
    std::vector<double> tau;

    std::size_t size() const { return s.size(); }
    double step() const { return (s.back() - s.front()) / static_cast<double>(s.size() - 1); }

    void validate() const
    {
        if (s.size() < 5 || k.size() != s.size() || tau.size() != s.size()) {
            throw Error(ErrorKind::InvalidArgument, "signature needs >= 5 samples of s, k and tau");
        }
        const double h = step();
        if (!(h > 0.0)) {
            throw Error(ErrorKind::InvalidArgument, "signature grid must be increasing");
        }
        for (std::size_t i = 1; i < s.size(); ++i) {
            if (std::abs((s[i] - s[i - 1]) - h) > 1e-8 * h + 1e-13 * std::abs(s[i])) {
                throw Error(ErrorKind::NonUniformGrid, "signature grid must be uniform");
            }
        }
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (!std::isfinite(k[i]) || !std::isfinite(tau[i]) || !std::isfinite(s[i])) {
                throw Error(ErrorKind::InvalidArgument, "signature values must be finite");
            }
        }
    }

    static CurveSignature uniform(double s0, double s1, std::size_t n, auto&& k_of_s, auto&& tau_of_s)
    {
        CurveSignature sig;
        sig.s.resize(n);
        sig.k.resize(n);
        sig.tau.resize(n);
        const double h = (s1 - s0) / static_cast<double>(n - 1);
        for (std::size_t i = 0; i < n; ++i) {
            sig.s[i] = (i + 1 == n) ? s1 : s0 + static_cast<double>(i) * h;
            sig.k[i] = k_of_s(sig.s[i]);
            sig.tau[i] = tau_of_s(sig.s[i]);
        }
        return sig;
    }
};

/// Invariants of a curve already sampled in horizontal arclength.
inline CurveSignature signature_of_arclength_curve(const ParamCurve& curve)
{
    CurveSignature sig;
    sig.s = curve.params();
    const double s0 = sig.s.front();
    for (auto& s : sig.s) {
        s -= s0;
    }
    sig.k.resize(curve.size());
    sig.tau.resize(curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
        sig.k[i] = p_curvature(curve, i);
        sig.tau[i] = t_variation(curve, i);
    }
    return sig;
}

/// k and tau are evaluated at the input samples (both formulas hold in any
/// parametrization) and interpolated in s onto a uniform grid of n_out points.
inline CurveSignature signature(const ParamCurve& curve, std::size_t n_out, std::optional<double> eps = std::nullopt)
{
    if (n_out < 5) {
        throw Error(ErrorKind::TooFewSamples, "a signature needs at least 5 samples");
    }
    const auto s_nodes = horizontal_arclength(curve, eps);
    const std::size_t n = curve.size();
    std::vector<double> k(n), tau(n);
    for (std::size_t i = 0; i < n; ++i) {
        k[i] = p_curvature(curve, i);
        tau[i] = t_variation(curve, i);
    }
    const double length = s_nodes.back();
    CurveSignature sig;
    sig.s.resize(n_out);
    sig.k.resize(n_out);
    sig.tau.resize(n_out);
    const double ds = length / static_cast<double>(n_out - 1);
    for (std::size_t j = 0; j < n_out; ++j) {
        const double s = (j + 1 == n_out) ? length : ds * static_cast<double>(j);
        sig.s[j] = s;
        if (n_out == n && std::abs(s - s_nodes[j]) <= 1e-14 * (1.0 + length)) {
            sig.k[j] = k[j];
            sig.tau[j] = tau[j];
        } else {
            sig.k[j] = numerics::lagrange4(s_nodes, k, s);
            sig.tau[j] = numerics::lagrange4(s_nodes, tau, s);
        }
    }
    return sig;
}

/// Largest pointwise difference of k and tau between two signatures on the
/// same grid size.
inline double signature_distance(const CurveSignature& a, const CurveSignature& b)
{
    if (a.size() != b.size()) {
        throw Error(ErrorKind::InvalidArgument, "signatures have different sizes");
    }
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d = std::max({d, std::abs(a.k[i] - b.k[i]), std::abs(a.tau[i] - b.tau[i]), std::abs(a.s[i] - b.s[i])});
    }
    return d;
}

// ---------------------------------------------------------------------------
// Reconstruction
// ---------------------------------------------------------------------------

/// Darboux derivative of the lifted curve for given (k, tau).
inline MaurerCartanValue curve_generator(double k, double tau) { return {1.0, 0.0, tau, k}; }

/// Integrates M'(s) = M(s) phi(s), phi = curve_generator(k(s), tau(s)), from
/// the initial frame. k and tau are interpolated to the half steps with
/// cubic Lagrange polynomials. Each output sample carries the integrator's
/// velocity X + tau T and acceleration k Y + (x''y - y''x + tau') d/dz.
inline ParamCurve reconstruct_curve(const CurveSignature& sig, const OrientedFrame& initial = OrientedFrame{})
{
    sig.validate();
    const std::size_t n = sig.size();
    const double h = sig.step();
    const double s0 = sig.s.front();
    numerics::OdeProblem<Mat4> problem;
    problem.initial = frame_to_matrix(initial);
    problem.t0 = s0;
    problem.t1 = sig.s.back();
    problem.steps = static_cast<int>(n - 1);
    problem.rhs = [&](double s, const Mat4& m) -> Mat4 {
        const double k = numerics::lagrange4_uniform<double>(sig.k, s0, h, s);
        const double tau = numerics::lagrange4_uniform<double>(sig.tau, s0, h, s);
        return moving_frame_derivative(m, curve_generator(k, tau));
    };
    const auto frames = numerics::integrate_group_ode(problem, 1);
    const auto dtau = numerics::fd_derivative<double>(sig.tau, h, 1);

    std::vector<H1Point> pts(n);
    std::vector<Vec3> d1(n), d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Mat4& m = frames[i];
        const H1Point p{m(1, 0), m(2, 0), m(3, 0)};
        const Vec3 x_coord(m(1, 1), m(2, 1), m(3, 1));
        const Vec3 y_coord(m(1, 2), m(2, 2), m(3, 2));
        pts[i] = p;
        d1[i] = x_coord + sig.tau[i] * Vec3::UnitZ();
        const double xdd = sig.k[i] * y_coord.x();
        const double ydd = sig.k[i] * y_coord.y();
        d2[i] = Vec3(xdd, ydd, xdd * p.y - ydd * p.x + dtau[i]);
    }
    return ParamCurve(sig.s, std::move(pts), std::move(d1), std::move(d2));
}

// ---------------------------------------------------------------------------
// Congruence
// ---------------------------------------------------------------------------

struct CongruenceReport {
    bool congruent = false;
    HeisenbergMotion motion;     // best motion anchored at the first sample
    double max_deviation = 0.0;  // sup_s |g.gamma1(s) - gamma2(s)|
    double max_frame_defect = 0.0; // sup_s |A(s) - 2|
    double length_mismatch = 0.0;
};

/// Raised by congruence_motion; carries the sup deviation.
class NotCongruentError : public ToleranceError {
public:
    explicit NotCongruentError(const CongruenceReport& report)
        : ToleranceError(ErrorKind::NotCongruent, "curves are not congruent",
                         std::max({report.max_deviation, report.max_frame_defect, report.length_mismatch})),
          report_(report)
    {
    }
    const CongruenceReport& report() const { return report_; }

private:
    CongruenceReport report_;
};

namespace detail {

inline bool is_unit_speed(const ParamCurve& curve, double tol = 1e-6)
{
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (std::abs(horizontal_speed(curve, i) - 1.0) > tol) {
            return false;
        }
    }
    return true;
}

inline OrientedFrame curve_frame(const H1Point& p, const Vec3& d1)
{
    return OrientedFrame(p, std::atan2(d1.y(), d1.x()));
}

} // namespace detail

/// Anchors frames at the first common sample, solves g from
/// g . frame1(s0) = frame2(s0) and measures how well g maps the whole curve.
/// Curves not already in unit horizontal speed are resampled by arclength.
inline CongruenceReport congruence_check(const ParamCurve& c1_in, const ParamCurve& c2_in, double tol)
{
    require_regular(c1_in);
    require_regular(c2_in);
    const ParamCurve c2 = detail::is_unit_speed(c2_in) ? c2_in : reparametrize_by_arclength(c2_in, c2_in.size());
    ParamCurve c1 = detail::is_unit_speed(c1_in) ? c1_in : reparametrize_by_arclength(c1_in, c1_in.size());

    CongruenceReport report;
    const double len1 = c1.t(c1.size() - 1) - c1.t(0);
    const double len2 = c2.t(c2.size() - 1) - c2.t(0);
    report.length_mismatch = std::abs(len1 - len2);

    const OrientedFrame f1 = detail::curve_frame(c1.point(0), c1.d1(0));
    const OrientedFrame f2 = detail::curve_frame(c2.point(0), c2.d1(0));
    report.motion = motion_compose(f2.motion(), motion_inverse(f1.motion()));

    const detail::CurveInterpolant interp1(c1);
    const double shift = c1.t(0) - c2.t(0);
    for (std::size_t j = 0; j < c2.size(); ++j) {
        const double s = c2.t(j) + shift;
        if (s > c1.t(c1.size() - 1) + 1e-12 * (1.0 + std::abs(s))) {
            break;
        }
        const auto jet = interp1(std::min(s, c1.t(c1.size() - 1)));
        const H1Point mapped = motion_apply(report.motion, H1Point::from(jet.value));
        report.max_deviation = std::max(report.max_deviation, (mapped.vec() - c2.point(j).vec()).norm());

        const TangentVector x1 = motion_pushforward(
            report.motion, TangentVector::from_frame(H1Point::from(jet.value),
                                                     Vec3(jet.first.x(), jet.first.y(), 0.0) /
                                                         horizontal_speed(jet.first)));
        const Vec3& d2 = c2.d1(j);
        const Eigen::Vector2d x2 = Eigen::Vector2d(d2.x(), d2.y()) / horizontal_speed(d2);
        const Eigen::Vector2d x1h = x1.frame().head<2>();
        const Eigen::Vector2d y1h(-x1h.y(), x1h.x());
        const Eigen::Vector2d y2(-x2.y(), x2.x());
        const double a = x1h.dot(x2) + y1h.dot(y2);
        report.max_frame_defect = std::max(report.max_frame_defect, std::abs(a - 2.0));
    }
    report.congruent =
        report.max_deviation <= tol && report.max_frame_defect <= tol && report.length_mismatch <= tol;
    return report;
}

inline HeisenbergMotion congruence_motion(const ParamCurve& c1, const ParamCurve& c2, double tol)
{
    const auto report = congruence_check(c1, c2, tol);
    if (!report.congruent) {
        throw NotCongruentError(report);
    }
    return report.motion;
}

// ---------------------------------------------------------------------------
// Geodesics
// ---------------------------------------------------------------------------

/// Closed-form geodesic parameters. For |c3| < 1e-14 the curve is the line
/// (c1 t + d1, c2 t + d2, (c1 d2 - c2 d1) t + d3); otherwise a helix-like
/// curve of radius sqrt(a1^2 + a2^2) and angular rate 2|c3|.
struct GeodesicParams {
    double c3 = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double d3 = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
};

enum class GeodesicBranch { Line, Positive, Negative };

inline GeodesicBranch geodesic_branch(const GeodesicParams& g)
{
    if (std::abs(g.c3) < 1e-14) {
        return GeodesicBranch::Line;
    }
    return g.c3 > 0.0 ? GeodesicBranch::Positive : GeodesicBranch::Negative;
}

/// Position, velocity and acceleration of the closed-form geodesic at t.
inline std::array<Vec3, 3> geodesic_jet(const GeodesicParams& g, double t)
{
    const double r2 = g.a1 * g.a1 + g.a2 * g.a2;
    switch (geodesic_branch(g)) {
    case GeodesicBranch::Line: {
        const double zc = g.c1 * g.d2 - g.c2 * g.d1;
        return {Vec3(g.c1 * t + g.d1, g.c2 * t + g.d2, zc * t + g.d3), Vec3(g.c1, g.c2, zc), Vec3::Zero()};
    }
    case GeodesicBranch::Positive: {
        const double w = 2.0 * g.c3;
        const double s = std::sin(w * t), c = std::cos(w * t);
        const double za = g.a2 * g.d1 + g.a1 * g.d2;
        const double zb = g.a2 * g.d2 - g.a1 * g.d1;
        const double k = 2.0 * g.c3 * r2;
        return {Vec3(g.a1 * s + g.a2 * c + g.d1, -g.a2 * s + g.a1 * c + g.d2, za * s + zb * c + k * t + g.d3),
                Vec3(w * (g.a1 * c - g.a2 * s), w * (-g.a2 * c - g.a1 * s), w * (za * c - zb * s) + k),
                Vec3(-w * w * (g.a1 * s + g.a2 * c), -w * w * (-g.a2 * s + g.a1 * c), -w * w * (za * s + zb * c))};
    }
    case GeodesicBranch::Negative: {
        const double w = -2.0 * g.c3;
        const double s = std::sin(w * t), c = std::cos(w * t);
        // height chosen so that the curve is horizontal for every (d1, d2)
        const double za = g.a1 * g.d2 - g.a2 * g.d1;
        const double zb = g.a1 * g.d1 + g.a2 * g.d2;
        const double k = 2.0 * g.c3 * r2;
        return {Vec3(g.a1 * s + g.a2 * c + g.d1, g.a2 * s - g.a1 * c + g.d2, za * s + zb * c + k * t + g.d3),
                Vec3(w * (g.a1 * c - g.a2 * s), w * (g.a2 * c + g.a1 * s), w * (za * c - zb * s) + k),
                Vec3(-w * w * (g.a1 * s + g.a2 * c), -w * w * (g.a2 * s - g.a1 * c), -w * w * (za * s + zb * c))};
    }
    }
    return {};
}

inline ParamCurve geodesic_closed_form(const GeodesicParams& g, std::span<const double> t)
{
    if (geodesic_branch(g) != GeodesicBranch::Line && g.a1 * g.a1 + g.a2 * g.a2 == 0.0) {
        throw Error(ErrorKind::DegenerateParams, "a1^2 + a2^2 must be positive when c3 != 0");
    }
    std::vector<H1Point> pts(t.size());
    std::vector<Vec3> d1(t.size()), d2(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto jet = geodesic_jet(g, t[i]);
        pts[i] = H1Point::from(jet[0]);
        d1[i] = jet[1];
        d2[i] = jet[2];
    }
    return ParamCurve(std::vector<double>(t.begin(), t.end()), std::move(pts), std::move(d1), std::move(d2));
}

inline std::vector<double> uniform_grid(double t0, double t1, std::size_t n)
{
    std::vector<double> t(n);
    const double h = (t1 - t0) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = (i + 1 == n) ? t1 : t0 + static_cast<double>(i) * h;
    }
    return t;
}

/// Position x and momenta xi of the sub-Riemannian Hamiltonian system.
struct HamiltonianState {
    H1Point x;
    Vec3 xi = Vec3::Zero();
};

namespace detail {

using Phase = Eigen::Matrix<double, 6, 1>;

inline Phase hamiltonian_rhs(const Phase& s)
{
    const double x1 = s[0], x2 = s[1];
    const double k1 = s[3], k2 = s[4], k3 = s[5];
    Phase d;
    d << k1 + x2 * k3, k2 - x1 * k3, x2 * k1 - x1 * k2 + k3 * (x1 * x1 + x2 * x2), k2 * k3 - x1 * k3 * k3,
        -k1 * k3 - x2 * k3 * k3, 0.0;
    return d;
}

} // namespace detail

inline std::vector<HamiltonianState> hamiltonian_trajectory(const HamiltonianState& init, double t_end, int n_steps)
{
    if (n_steps < 1) {
        throw Error(ErrorKind::InvalidArgument, "n_steps must be >= 1");
    }
    numerics::OdeProblem<detail::Phase> problem;
    problem.initial << init.x.x, init.x.y, init.x.z, init.xi.x(), init.xi.y(), init.xi.z();
    problem.t0 = 0.0;
    problem.t1 = t_end;
    problem.steps = n_steps;
    problem.rhs = [](double, const detail::Phase& s) { return detail::hamiltonian_rhs(s); };
    const auto states = numerics::integrate_ode(problem);
    std::vector<HamiltonianState> out(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        out[i].x = {states[i][0], states[i][1], states[i][2]};
        out[i].xi = states[i].tail<3>();
    }
    return out;
}

/// Integrates the geodesic Hamiltonian system on [0, t_end]; the returned
/// curve carries the flow's velocity and acceleration as derivative samples.
inline ParamCurve geodesic_flow(const HamiltonianState& init, double t_end, int n_steps)
{
    const auto states = hamiltonian_trajectory(init, t_end, n_steps);
    const std::size_t n = states.size();
    std::vector<H1Point> pts(n);
    std::vector<Vec3> d1(n), d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        detail::Phase s;
        s << states[i].x.x, states[i].x.y, states[i].x.z, states[i].xi.x(), states[i].xi.y(), states[i].xi.z();
        const auto ds = detail::hamiltonian_rhs(s);
        const double x1 = s[0], x2 = s[1], k1 = s[3], k2 = s[4], k3 = s[5];
        const double v1 = ds[0], v2 = ds[1];
        pts[i] = states[i].x;
        d1[i] = ds.head<3>();
        d2[i] = Vec3(ds[3] + v2 * k3, ds[4] - v1 * k3,
                     v2 * k1 + x2 * ds[3] - v1 * k2 - x1 * ds[4] + 2.0 * k3 * (x1 * v1 + x2 * v2));
    }
    return ParamCurve(uniform_grid(0.0, t_end, n), std::move(pts), std::move(d1), std::move(d2));
}

/// Hamiltonian initial data reproducing the closed-form geodesic from time t0:
/// xi3 = c3, (xi1, xi2) solved from the first two velocity equations.
inline HamiltonianState matched_initial_state(const GeodesicParams& g, double t0 = 0.0)
{
    const auto jet = geodesic_jet(g, t0);
    HamiltonianState st;
    st.x = H1Point::from(jet[0]);
    const double k3 = geodesic_branch(g) == GeodesicBranch::Line ? 0.0 : g.c3;
    st.xi = Vec3(jet[1].x() - st.x.y * k3, jet[1].y() + st.x.x * k3, k3);
    return st;
}

struct GeodesicReport {
    bool geodesic = false;
    double max_abs_tau = 0.0;
    double k_range = 0.0;
    double k_mean = 0.0;
};

/// Geodesics are exactly the curves with tau = 0 and constant k.
inline GeodesicReport geodesic_report(const ParamCurve& curve, double tol)
{
    const auto sig = signature(curve, curve.size());
    GeodesicReport r;
    double kmin = std::numeric_limits<double>::infinity();
    double kmax = -kmin;
    double ksum = 0.0;
    for (std::size_t i = 0; i < sig.size(); ++i) {
        r.max_abs_tau = std::max(r.max_abs_tau, std::abs(sig.tau[i]));
        kmin = std::min(kmin, sig.k[i]);
        kmax = std::max(kmax, sig.k[i]);
        ksum += sig.k[i];
    }
    r.k_range = kmax - kmin;
    r.k_mean = ksum / static_cast<double>(sig.size());
    r.geodesic = r.max_abs_tau <= tol && r.k_range <= tol;
    return r;
}

inline bool is_geodesic(const ParamCurve& curve, double tol) { return geodesic_report(curve, tol).geodesic; }

} // namespace h1::curves
