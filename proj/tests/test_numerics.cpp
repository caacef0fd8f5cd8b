#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <random>
#include <vector>

#include "h1/numerics.hpp"

using namespace h1;
using namespace h1::numerics;

namespace {

Mat2 rotation_like(double t)
{
    Mat2 r;
    r << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
    return r;
}

double exp_error(int steps)
{
    OdeProblem<double> p;
    p.rhs = [](double, const double& x) { return x; };
    p.initial = 1.0;
    p.t0 = 0.0;
    p.t1 = 1.0;
    p.steps = steps;
    return std::abs(integrate_ode(p).back() - std::numbers::e);
}

double simpson_error(std::size_t n)
{
    std::vector<double> f(n);
    const double h = 1.0 / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = std::exp(h * static_cast<double>(i));
    }
    return std::abs(simpson_integrate(f, h) - (std::numbers::e - 1.0));
}

double fd_error(double h, int order)
{
    const std::size_t n = static_cast<std::size_t>(std::lround(1.0 / h)) + 1;
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = std::sin(h * static_cast<double>(i));
    }
    const auto d = fd_derivative<double>(f, h, order);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = h * static_cast<double>(i);
        const double exact = order == 1 ? std::cos(x) : -std::sin(x);
        err = std::max(err, std::abs(d[i] - exact));
    }
    return err;
}

Mat4 circle_generator()
{
    Mat4 w = Mat4::Zero();
    // w1 = 1, w3 = 1, w12 = 1
    w(1, 0) = 1.0;
    w(1, 2) = -1.0;
    w(2, 1) = 1.0;
    w(3, 0) = 1.0;
    w(3, 2) = -1.0;
    return w;
}

} // namespace

TEST(Ode, ConstantSolution)
{
    OdeProblem<double> p;
    p.rhs = [](double, const double&) { return 0.0; };
    p.initial = 1.0;
    p.steps = 10;
    for (double x : integrate_ode(p)) {
        EXPECT_EQ(x, 1.0);
    }
}

TEST(Ode, ExponentialAtSmallStep) { EXPECT_LE(exp_error(1000), 1e-12); }

TEST(Ode, FourthOrderConvergence)
{
    const double ratio = exp_error(20) / exp_error(40);
    EXPECT_GT(ratio, 8.0);
    EXPECT_LT(ratio, 32.0);
}

TEST(Ode, RotationGeneratorStaysOrthogonal)
{
    OdeProblem<Mat2> p;
    p.rhs = [](double, const Mat2& m) {
        Mat2 w;
        w << 0.0, -1.0, 1.0, 0.0;
        return Mat2(m * w);
    };
    p.initial = Mat2::Identity();
    p.t1 = 10.0;
    p.steps = 10000;
    const Mat2 end = integrate_ode(p).back();
    EXPECT_LE((end.transpose() * end - Mat2::Identity()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((end - rotation_like(10.0)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Ode, RejectsBadProblems)
{
    OdeProblem<double> p;
    p.rhs = [](double, const double& x) { return x; };
    p.initial = 1.0;
    p.steps = 0;
    EXPECT_THROW(integrate_ode(p), Error);
    p.steps = 10;
    p.rhs = [](double, const double& x) { return x * x * 1e300; };
    p.initial = 1e10;
    try {
        integrate_ode(p);
        FAIL() << "expected divergence";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NonFiniteState);
    }
}

TEST(GroupOde, ZeroGeneratorIsConstant)
{
    OdeProblem<Mat4> p;
    p.rhs = [](double, const Mat4&) { return Mat4::Zero().eval(); };
    p.initial = Mat4::Identity();
    p.steps = 5;
    for (const auto& m : integrate_group_ode(p)) {
        EXPECT_EQ(m, Mat4::Identity());
    }
}

TEST(GroupOde, CircleReturnsAfterFullTurn)
{
    OdeProblem<Mat4> p;
    const Mat4 w = circle_generator();
    p.rhs = [w](double, const Mat4& m) { return Mat4(m * w); };
    p.initial = Mat4::Identity();
    p.t1 = 2.0 * std::numbers::pi;
    p.steps = 2000;
    const auto traj = integrate_group_ode(p);
    EXPECT_LE((traj.back() - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-8);
    for (const auto& m : traj) {
        EXPECT_LE(psh_residual(m), 1e-10);
    }
}

TEST(GroupOde, DriftAfterTenThousandSteps)
{
    OdeProblem<Mat4> p;
    p.rhs = [](double s, const Mat4& m) {
        Mat4 w = Mat4::Zero();
        const double k = std::sin(s), tau = std::cos(3.0 * s);
        w(1, 0) = 1.0;
        w(1, 2) = -k;
        w(2, 1) = k;
        w(3, 0) = tau;
        w(3, 2) = -1.0;
        return Mat4(m * w);
    };
    p.initial = Mat4::Identity();
    p.t1 = 100.0;
    p.steps = 10000;
    const auto traj = integrate_group_ode(p);
    EXPECT_LE(psh_residual(traj.back()), 1e-9);
    const Mat4& end = traj.back();
    EXPECT_EQ(end(0, 1), 0.0);
    EXPECT_EQ(end(0, 2), 0.0);
    EXPECT_EQ(end(1, 3), 0.0);
    EXPECT_EQ(end(3, 3), 1.0);
}

TEST(GroupOde, RejectsInitialStateOutsideGroup)
{
    OdeProblem<Mat4> p;
    p.rhs = [](double, const Mat4&) { return Mat4::Zero().eval(); };
    p.initial = 2.0 * Mat4::Identity();
    try {
        integrate_group_ode(p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NotInGroup);
    }
}

TEST(Simpson, Basics)
{
    std::vector<double> ones(11, 1.0);
    EXPECT_NEAR(simpson_integrate(ones, 0.1), 1.0, 1e-15);
    std::vector<double> sq(11), s(101);
    for (std::size_t i = 0; i < sq.size(); ++i) {
        sq[i] = 0.01 * static_cast<double>(i * i);
    }
    EXPECT_NEAR(simpson_integrate(sq, 0.1), 1.0 / 3.0, 1e-15);
    const double h = std::numbers::pi / 100.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = std::sin(h * static_cast<double>(i));
    }
    // leading error term of the composite rule: h^4/180 times the integral of f''''
    const double leading = std::pow(h, 4) / 180.0 * 2.0;
    EXPECT_NEAR(simpson_integrate(s, h) - 2.0, leading, 1e-11);
    EXPECT_LE(std::abs(simpson_integrate(s, h) - 2.0), 1.1e-8);
    EXPECT_THROW(simpson_integrate(std::vector<double>{1.0, 2.0}, 1.0), Error);
}

TEST(Simpson, EvenCountStaysExactOnQuadratics)
{
    std::vector<double> sq(10);
    const double h = 1.0 / 9.0;
    for (std::size_t i = 0; i < sq.size(); ++i) {
        const double x = h * static_cast<double>(i);
        sq[i] = x * x;
    }
    EXPECT_NEAR(simpson_integrate(sq, h), 1.0 / 3.0, 1e-15);
}

TEST(Simpson, FourthOrderConvergence)
{
    const double ratio = simpson_error(21) / simpson_error(41);
    EXPECT_GT(ratio, 8.0);
    EXPECT_LT(ratio, 32.0);
}

TEST(Simpson, CumulativeMatchesClosedForm)
{
    const std::size_t n = 201;
    const double h = 2.0 / static_cast<double>(n - 1);
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = std::cos(h * static_cast<double>(i));
    }
    const auto c = cumulative_simpson(f, h);
    for (std::size_t i = 0; i < n; ++i) {
        EXPECT_NEAR(c[i], std::sin(h * static_cast<double>(i)), 1e-8);
    }
}

TEST(FiniteDifferences, LinearFieldExact)
{
    std::vector<double> f(7);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = 3.0 * static_cast<double>(i) * 0.5 - 2.0;
    }
    for (double d : fd_derivative<double>(f, 0.5, 1)) {
        EXPECT_NEAR(d, 3.0, 1e-13);
    }
    for (double d : fd_derivative<double>(f, 0.5, 2)) {
        EXPECT_NEAR(d, 0.0, 1e-12);
    }
}

TEST(FiniteDifferences, SineWithinTruncationBound) { EXPECT_LE(fd_error(1e-2, 1), 1e-4); }

TEST(FiniteDifferences, SineInteriorMatchesLeadingError)
{
    const double h = 1e-2;
    std::vector<double> f(301);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = std::sin(h * static_cast<double>(i));
    }
    const auto d = fd_derivative<double>(f, h, 1);
    for (std::size_t i = 1; i + 1 < f.size(); ++i) {
        const double c = std::cos(h * static_cast<double>(i));
        EXPECT_NEAR(d[i] - c, -h * h / 6.0 * c, 1e-9);
        EXPECT_LE(std::abs(d[i] - c), 1.7e-5);
    }
}

TEST(FiniteDifferences, SecondOrderConvergence)
{
    for (int order : {1, 2}) {
        const double ratio = fd_error(0.02, order) / fd_error(0.01, order);
        EXPECT_GT(ratio, 2.0) << "derivative order " << order;
        EXPECT_LT(ratio, 8.0) << "derivative order " << order;
    }
}

TEST(FiniteDifferences, MixedPartialsCommute)
{
    const std::size_t n = 101;
    const double h = 0.01;
    GridField f = GridField::zeros(n, n, h, h);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            f(i, j) = std::sin(h * i) * std::exp(0.5 * h * j);
        }
    }
    const auto uv = fd_mixed(f);
    const auto vu = fd_partial(fd_partial(f, Axis::V), Axis::U);
    for (std::size_t q = 0; q < f.size(); ++q) {
        EXPECT_NEAR(uv.values[q], vu.values[q], 1e-6);
    }
    for (std::size_t j = 1; j + 1 < n; ++j) {
        for (std::size_t i = 1; i + 1 < n; ++i) {
            EXPECT_NEAR(uv(i, j), 0.5 * std::cos(h * i) * std::exp(0.5 * h * j), 1e-4);
        }
    }
}

TEST(FiniteDifferences, GridTooSmall)
{
    try {
        fd_derivative<double>(std::vector<double>{1.0, 2.0}, 1.0, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::GridTooSmall);
    }
}

TEST(So2, ProjectionProperties)
{
    const Mat2 r = rotation_like(0.7);
    EXPECT_LE((so2_project(r) - r).cwiseAbs().maxCoeff(), 1e-15);
    const Mat2 scaled = 1.001 * r;
    const Mat2 p = so2_project(scaled);
    EXPECT_LE((p - r).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE((p.transpose() * p - Mat2::Identity()).cwiseAbs().maxCoeff(), 4e-16);
    EXPECT_NEAR(p.determinant(), 1.0, 4e-16);
    EXPECT_EQ(so2_project(p), so2_project(so2_project(p)));
    try {
        so2_project(Mat2::Zero());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::TooFarFromGroup);
    }
}

TEST(Interpolation, CubicLagrangeIsExactOnCubics)
{
    std::vector<double> f(9);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double x = 0.25 * static_cast<double>(i);
        f[i] = x * x * x - x;
    }
    for (double x : {0.1, 0.9, 1.3, 1.99}) {
        EXPECT_NEAR(lagrange4_uniform<double>(f, 0.0, 0.25, x), x * x * x - x, 1e-13);
    }
}

TEST(Interpolation, MonotoneCubicPreservesMonotonicity)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> step(0.01, 1.0);
    std::vector<double> x(20), y(20);
    for (std::size_t i = 1; i < x.size(); ++i) {
        x[i] = x[i - 1] + step(rng);
        y[i] = y[i - 1] + step(rng) * (i % 3 == 0 ? 0.0 : 1.0);
    }
    const MonotoneCubic m(x, y);
    double prev = m(x.front());
    for (int k = 1; k <= 1000; ++k) {
        const double v = m(x.front() + (x.back() - x.front()) * k / 1000.0);
        EXPECT_GE(v, prev - 1e-12);
        prev = v;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_NEAR(m(x[i]), y[i], 1e-12);
    }
}

TEST(Parallel, VisitsEveryIndexOnce)
{
    std::vector<std::atomic<int>> hits(10000);
    parallel_for(hits.size(), [&](std::size_t k) { hits[k].fetch_add(1); }, 16);
    for (const auto& h : hits) {
        EXPECT_EQ(h.load(), 1);
    }
}

TEST(Parallel, ThreadCapFromEnvironment)
{
    ::setenv("H1_NUM_THREADS", "3", 1);
    EXPECT_EQ(thread_cap(), 3u);
    ::setenv("H1_NUM_THREADS", "junk", 1);
    EXPECT_GE(thread_cap(), 1u);
    ::unsetenv("H1_NUM_THREADS");
}

TEST(Parallel, PropagatesExceptions)
{
    EXPECT_THROW(parallel_for(
                     1000,
                     [](std::size_t k) {
                         if (k == 777) {
                             throw Error(ErrorKind::InvalidArgument, "boom");
                         }
                     },
                     10),
                 Error);
}
