#pragma once

// Shared numerical kernels: fixed-step explicit integration (plain and on the
// 4x4 matrix group PSH(1)), composite quadrature, uniform-grid finite
// differences, SO(2) projection, interpolation and a small cell-parallel map.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "h1/errors.hpp"

namespace h1::numerics {

using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Vec3 = Eigen::Vector3d;

// ---------------------------------------------------------------------------
// ODE integration
// ---------------------------------------------------------------------------

template <class State>
struct OdeProblem {
    std::function<State(double, const State&)> rhs;
    State initial;
    double t0 = 0.0;
    double t1 = 1.0;
    int steps = 1;
};

inline bool all_finite(double x) { return std::isfinite(x); }

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m)
{
    return m.allFinite();
}

template <class State, class Rhs>
State rk4_step(const Rhs& rhs, double t, const State& x, double h)
{
    const State k1 = rhs(t, x);
    const State k2 = rhs(t + 0.5 * h, State(x + (0.5 * h) * k1));
    const State k3 = rhs(t + 0.5 * h, State(x + (0.5 * h) * k2));
    const State k4 = rhs(t + h, State(x + h * k3));
    return State(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

namespace detail {

template <class State>
void validate(const OdeProblem<State>& problem)
{
    if (problem.steps < 1) {
        throw Error(ErrorKind::InvalidArgument, "ODE step count must be >= 1");
    }
    if (!std::isfinite(problem.t0) || !std::isfinite(problem.t1)) {
        throw Error(ErrorKind::InvalidArgument, "ODE interval must be finite");
    }
    if (!problem.rhs) {
        throw Error(ErrorKind::InvalidArgument, "ODE right-hand side is empty");
    }
}

} // namespace detail

/// Classical 4-stage Runge-Kutta with a fixed step. Returns steps+1 states,
/// the first being the initial state.
template <class State>
std::vector<State> integrate_ode(const OdeProblem<State>& problem)
{
    detail::validate(problem);
    const double h = (problem.t1 - problem.t0) / problem.steps;
    std::vector<State> trajectory;
    trajectory.reserve(static_cast<std::size_t>(problem.steps) + 1);
    trajectory.push_back(problem.initial);
    State x = problem.initial;
    for (int i = 0; i < problem.steps; ++i) {
        x = rk4_step(problem.rhs, problem.t0 + i * h, x, h);
        if (!all_finite(x)) {
            throw Error(ErrorKind::NonFiniteState, "state diverged at step " + std::to_string(i + 1));
        }
        trajectory.push_back(x);
    }
    return trajectory;
}

// ---------------------------------------------------------------------------
// SO(2) and PSH(1) projections
// ---------------------------------------------------------------------------

/// Frobenius distance from `m` to the nearest rotation.
inline double so2_distance(const Mat2& m)
{
    const double angle = std::atan2(m(1, 0) - m(0, 1), m(0, 0) + m(1, 1));
    Mat2 r;
    r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    return (m - r).norm();
}

/// Normalizes the first column and sets the second to its 90-degree rotation.
inline Mat2 so2_project(const Mat2& m, double max_distance = 0.5)
{
    const double distance = so2_distance(m);
    if (!(distance <= max_distance)) {
        throw ToleranceError(ErrorKind::TooFarFromGroup, "matrix is too far from SO(2)", distance);
    }
    const double n = std::hypot(m(0, 0), m(1, 0));
    const double a = m(0, 0) / n;
    const double c = m(1, 0) / n;
    Mat2 r;
    r << a, -c, c, a;
    return r;
}

/// Largest violation of the PSH(1) matrix structure (rotation block,
/// dependent bottom-row entries, structural zeros and ones).
inline double psh_residual(const Mat4& m)
{
    const Mat2 r = m.block<2, 2>(1, 1);
    double res = (r.transpose() * r - Mat2::Identity()).cwiseAbs().maxCoeff();
    res = std::max(res, std::abs(r.determinant() - 1.0));
    const double p1 = m(1, 0);
    const double p2 = m(2, 0);
    res = std::max(res, std::abs(m(3, 1) - (r(0, 0) * p2 - r(1, 0) * p1)));
    res = std::max(res, std::abs(m(3, 2) - (r(0, 1) * p2 - r(1, 1) * p1)));
    res = std::max(res, std::abs(m(0, 0) - 1.0));
    res = std::max(res, std::abs(m(3, 3) - 1.0));
    for (int j = 1; j < 4; ++j) {
        res = std::max(res, std::abs(m(0, j)));
    }
    for (int i = 0; i < 3; ++i) {
        res = std::max(res, std::abs(m(i, 3)));
    }
    return res;
}

/// Re-projects the rotation block to SO(2) and recomputes every entry that
/// is determined by (p, R).
inline void psh_reproject(Mat4& m)
{
    const Mat2 r = so2_project(m.block<2, 2>(1, 1));
    const double p1 = m(1, 0);
    const double p2 = m(2, 0);
    m.block<2, 2>(1, 1) = r;
    m(3, 1) = r(0, 0) * p2 - r(1, 0) * p1;
    m(3, 2) = r(0, 1) * p2 - r(1, 1) * p1;
    m.row(0) << 1.0, 0.0, 0.0, 0.0;
    m(1, 3) = 0.0;
    m(2, 3) = 0.0;
    m(3, 3) = 1.0;
}

/// RK4 on 4x4 PSH(1) states with projection back onto the group after every
/// `reproject_every` steps (and always after the last one).
inline std::vector<Mat4> integrate_group_ode(const OdeProblem<Mat4>& problem, int reproject_every = 1,
                                             double membership_tol = 1e-9)
{
    detail::validate(problem);
    if (reproject_every < 1) {
        throw Error(ErrorKind::InvalidArgument, "reproject_every must be >= 1");
    }
    const double initial_residual = psh_residual(problem.initial);
    if (!(initial_residual <= membership_tol)) {
        throw ToleranceError(ErrorKind::NotInGroup, "initial state is not in PSH(1)", initial_residual);
    }
    const double h = (problem.t1 - problem.t0) / problem.steps;
    std::vector<Mat4> trajectory;
    trajectory.reserve(static_cast<std::size_t>(problem.steps) + 1);
    trajectory.push_back(problem.initial);
    Mat4 x = problem.initial;
    for (int i = 0; i < problem.steps; ++i) {
        x = rk4_step(problem.rhs, problem.t0 + i * h, x, h);
        if (!x.allFinite()) {
            throw Error(ErrorKind::NonFiniteState, "group state diverged at step " + std::to_string(i + 1));
        }
        if ((i + 1) % reproject_every == 0 || i + 1 == problem.steps) {
            psh_reproject(x);
        }
        trajectory.push_back(x);
    }
    return trajectory;
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// Composite Simpson rule on uniformly spaced samples. With an even sample
/// count the last interval is closed by the quadratic through the final
/// three samples, which keeps the rule exact on quadratics.
inline double simpson_integrate(std::span<const double> f, double h)
{
    const std::size_t n = f.size();
    if (n < 3) {
        throw Error(ErrorKind::TooFewSamples, "Simpson quadrature needs at least 3 samples");
    }
    const std::size_t m = (n % 2 == 1) ? n : n - 1;
    double sum = f[0] + f[m - 1];
    for (std::size_t i = 1; i + 1 < m; ++i) {
        sum += (i % 2 == 1 ? 4.0 : 2.0) * f[i];
    }
    double total = sum * h / 3.0;
    if (m != n) {
        total += h / 12.0 * (-f[n - 3] + 8.0 * f[n - 2] + 5.0 * f[n - 1]);
    }
    return total;
}

/// Running integral from the first sample; even nodes use Simpson panels,
/// odd nodes add a one-interval quadratic correction.
inline std::vector<double> cumulative_simpson(std::span<const double> f, double h)
{
    const std::size_t n = f.size();
    if (n < 3) {
        throw Error(ErrorKind::TooFewSamples, "cumulative quadrature needs at least 3 samples");
    }
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 2; i < n; i += 2) {
        out[i] = out[i - 2] + h / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i]);
    }
    for (std::size_t i = 1; i < n; i += 2) {
        if (i + 1 < n) {
            out[i] = out[i - 1] + h / 12.0 * (5.0 * f[i - 1] + 8.0 * f[i] - f[i + 1]);
        } else {
            out[i] = out[i - 1] + h / 12.0 * (-f[i - 2] + 8.0 * f[i - 1] + 5.0 * f[i]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

enum class Axis { U, V };

namespace detail {

// Second-order differences along one strided line: central in the interior,
// one-sided at both ends.
template <class T>
void fd_line(const T* in, std::size_t n, std::size_t stride, double h, int order, T* out, std::size_t out_stride)
{
    auto at = [&](std::size_t k) -> const T& { return in[k * stride]; };
    auto put = [&](std::size_t k, const T& value) { out[k * out_stride] = value; };
    if (order == 1) {
        put(0, T((-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)));
        for (std::size_t k = 1; k + 1 < n; ++k) {
            put(k, T((at(k + 1) - at(k - 1)) / (2.0 * h)));
        }
        put(n - 1, T((3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)));
    } else {
        const double h2 = h * h;
        put(0, T((2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / h2));
        for (std::size_t k = 1; k + 1 < n; ++k) {
            put(k, T((at(k + 1) - 2.0 * at(k) + at(k - 1)) / h2));
        }
        put(n - 1, T((2.0 * at(n - 1) - 5.0 * at(n - 2) + 4.0 * at(n - 3) - at(n - 4)) / h2));
    }
}

inline void check_fd_args(std::size_t n, int order)
{
    if (order != 1 && order != 2) {
        throw Error(ErrorKind::InvalidArgument, "finite-difference order must be 1 or 2");
    }
    const std::size_t needed = order == 1 ? 3 : 4;
    if (n < needed) {
        throw Error(ErrorKind::GridTooSmall, "need at least " + std::to_string(needed) + " samples along the axis");
    }
}

} // namespace detail

/// Derivative of uniformly sampled data (scalars or Eigen vectors).
template <class T>
std::vector<T> fd_derivative(std::span<const T> f, double h, int order = 1)
{
    detail::check_fd_args(f.size(), order);
    std::vector<T> out(f.size());
    detail::fd_line(f.data(), f.size(), 1, h, order, out.data(), 1);
    return out;
}

/// Partial derivative of row-major (u fastest) grid data along one axis.
template <class T>
std::vector<T> fd_partial_grid(std::span<const T> values, std::size_t nu, std::size_t nv, double du, double dv,
                               Axis axis, int order = 1)
{
    if (values.size() != nu * nv) {
        throw Error(ErrorKind::InvalidArgument, "grid data size does not match dimensions");
    }
    std::vector<T> out(values.size());
    if (axis == Axis::U) {
        detail::check_fd_args(nu, order);
        for (std::size_t j = 0; j < nv; ++j) {
            detail::fd_line(values.data() + j * nu, nu, 1, du, order, out.data() + j * nu, 1);
        }
    } else {
        detail::check_fd_args(nv, order);
        for (std::size_t i = 0; i < nu; ++i) {
            detail::fd_line(values.data() + i, nv, nu, dv, order, out.data() + i, nu);
        }
    }
    return out;
}

/// Scalar field on a uniform (u, v) grid, stored row-major with u fastest.
struct GridField {
    std::size_t nu = 0;
    std::size_t nv = 0;
    double du = 1.0;
    double dv = 1.0;
    std::vector<double> values;

    static GridField zeros(std::size_t nu, std::size_t nv, double du, double dv)
    {
        return GridField{nu, nv, du, dv, std::vector<double>(nu * nv, 0.0)};
    }

    double operator()(std::size_t i, std::size_t j) const { return values[j * nu + i]; }
    double& operator()(std::size_t i, std::size_t j) { return values[j * nu + i]; }
    std::size_t size() const { return values.size(); }
};

inline GridField fd_partial(const GridField& field, Axis axis, int order = 1)
{
    GridField out{field.nu, field.nv, field.du, field.dv, {}};
    out.values = fd_partial_grid<double>(field.values, field.nu, field.nv, field.du, field.dv, axis, order);
    return out;
}

/// Mixed partial, differentiating along u first and then along v.
inline GridField fd_mixed(const GridField& field)
{
    return fd_partial(fd_partial(field, Axis::U, 1), Axis::V, 1);
}

// ---------------------------------------------------------------------------
// Interpolation
// ---------------------------------------------------------------------------

/// Cubic Lagrange interpolation on uniform samples through the four nodes
/// surrounding x (shifted inwards at the ends).
template <class T>
T lagrange4_uniform(std::span<const T> f, double x0, double h, double x)
{
    const std::size_t n = f.size();
    if (n < 4) {
        throw Error(ErrorKind::TooFewSamples, "cubic interpolation needs at least 4 samples");
    }
    const double r = (x - x0) / h;
    auto base = static_cast<long>(std::floor(r)) - 1;
    base = std::clamp<long>(base, 0, static_cast<long>(n) - 4);
    const double q = r - static_cast<double>(base);
    // nodes at q = 0, 1, 2, 3
    const double w0 = -(q - 1.0) * (q - 2.0) * (q - 3.0) / 6.0;
    const double w1 = q * (q - 2.0) * (q - 3.0) / 2.0;
    const double w2 = -q * (q - 1.0) * (q - 3.0) / 2.0;
    const double w3 = q * (q - 1.0) * (q - 2.0) / 6.0;
    const auto b = static_cast<std::size_t>(base);
    return T(w0 * f[b] + w1 * f[b + 1] + w2 * f[b + 2] + w3 * f[b + 3]);
}

/// Cubic Lagrange interpolation through the four nodes of a strictly
/// increasing, possibly non-uniform grid that surround x.
inline double lagrange4(std::span<const double> x, std::span<const double> f, double at)
{
    const std::size_t n = x.size();
    if (n < 4 || f.size() != n) {
        throw Error(ErrorKind::TooFewSamples, "cubic interpolation needs at least 4 matching samples");
    }
    const auto upper = static_cast<long>(std::upper_bound(x.begin(), x.end(), at) - x.begin());
    const auto base = static_cast<std::size_t>(std::clamp<long>(upper - 2, 0, static_cast<long>(n) - 4));
    double sum = 0.0;
    for (std::size_t a = base; a < base + 4; ++a) {
        double w = 1.0;
        for (std::size_t b = base; b < base + 4; ++b) {
            if (b != a) {
                w *= (at - x[b]) / (x[a] - x[b]);
            }
        }
        sum += w * f[a];
    }
    return sum;
}

/// Fritsch-Carlson monotone piecewise cubic interpolant.
class MonotoneCubic {
public:
    MonotoneCubic(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y))
    {
        const std::size_t n = x_.size();
        if (n < 2 || y_.size() != n) {
            throw Error(ErrorKind::TooFewSamples, "monotone interpolation needs >= 2 matching samples");
        }
        for (std::size_t i = 1; i < n; ++i) {
            if (!(x_[i] > x_[i - 1])) {
                throw Error(ErrorKind::InvalidArgument, "interpolation abscissae must be strictly increasing");
            }
        }
        std::vector<double> delta(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            delta[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
        }
        slope_.assign(n, 0.0);
        slope_[0] = delta[0];
        slope_[n - 1] = delta[n - 2];
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (delta[i - 1] * delta[i] <= 0.0) {
                slope_[i] = 0.0;
            } else {
                const double h0 = x_[i] - x_[i - 1];
                const double h1 = x_[i + 1] - x_[i];
                const double w1 = 2.0 * h1 + h0;
                const double w2 = h1 + 2.0 * h0;
                slope_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
    }

    double operator()(double x) const
    {
        const std::size_t n = x_.size();
        std::size_t k = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin());
        k = std::clamp<std::size_t>(k, 1, n - 1) - 1;
        const double h = x_[k + 1] - x_[k];
        const double t = (x - x_[k]) / h;
        const double t2 = t * t;
        const double t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * y_[k] + (t3 - 2 * t2 + t) * h * slope_[k] + (-2 * t3 + 3 * t2) * y_[k + 1] +
               (t3 - t2) * h * slope_[k + 1];
    }

private:
    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> slope_;
};

// ---------------------------------------------------------------------------
// Cell parallelism
// ---------------------------------------------------------------------------

/// Worker cap: H1_NUM_THREADS when set to a positive integer, otherwise the
/// hardware concurrency.
inline unsigned thread_cap()
{
    if (const char* env = std::getenv("H1_NUM_THREADS")) {
        char* end = nullptr;
        const long value = std::strtol(env, &end, 10);
        if (end != env && value > 0) {
            return static_cast<unsigned>(value);
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(k) for k in [0, n). Work items must be independent.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_chunk = 256)
{
    const std::size_t workers = std::min<std::size_t>(thread_cap(), (n + min_chunk - 1) / std::max<std::size_t>(min_chunk, 1));
    if (workers <= 1) {
        for (std::size_t k = 0; k < n; ++k) {
            fn(k);
        }
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const std::size_t chunk = (n + workers - 1) / workers;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(n, begin + chunk);
            if (begin >= end) {
                break;
            }
            pool.emplace_back([&, begin, end] {
                try {
                    for (std::size_t k = begin; k < end; ++k) {
                        fn(k);
                    }
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace h1::numerics
