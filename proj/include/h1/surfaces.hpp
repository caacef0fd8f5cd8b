#pragma once

// Surfaces in H1 given by parametrized patches: characteristic directions,
// normal coordinates, the coefficients (a, b, c, l, m) and their
// integrability conditions, the invariants (alpha, l, coframe, K), the
// transformation laws between normal coordinates, and reconstruction of a
// patch from coefficients or from invariants by path integration on PSH(1).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "h1/core.hpp"
#include "h1/errors.hpp"
#include "h1/numerics.hpp"

namespace h1::surfaces {

using numerics::Axis;
using numerics::GridField;
using Vec2 = Eigen::Vector2d;

/// Uniform (u, v) grid; data is stored row-major with u fastest.
struct GridSpec {
    double u0 = 0.0;
    double du = 1.0;
    std::size_t nu = 0;
    double v0 = 0.0;
    double dv = 1.0;
    std::size_t nv = 0;

    double u(std::size_t i) const { return u0 + static_cast<double>(i) * du; }
    double v(std::size_t j) const { return v0 + static_cast<double>(j) * dv; }
    double u_end() const { return u(nu - 1); }
    double v_end() const { return v(nv - 1); }
    std::size_t size() const { return nu * nv; }
    std::size_t index(std::size_t i, std::size_t j) const { return j * nu + i; }

    void validate(std::size_t min_points = 5) const
    {
        if (nu < min_points || nv < min_points) {
            throw Error(ErrorKind::GridTooSmall, "grid must be at least " + std::to_string(min_points) + "x" +
                                                     std::to_string(min_points));
        }
        if (!(du > 0.0) || !(dv > 0.0) || !std::isfinite(u0) || !std::isfinite(v0) || !std::isfinite(du) ||
            !std::isfinite(dv)) {
            throw Error(ErrorKind::InvalidArgument, "grid steps must be positive and finite");
        }
    }

    GridField zeros() const { return GridField::zeros(nu, nv, du, dv); }

    GridField field(auto&& f) const
    {
        GridField out = zeros();
        for (std::size_t j = 0; j < nv; ++j) {
            for (std::size_t i = 0; i < nu; ++i) {
                out(i, j) = f(u(i), v(j));
            }
        }
        return out;
    }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

inline GridField constant_field(const GridSpec& grid, double value)
{
    GridField f = grid.zeros();
    std::fill(f.values.begin(), f.values.end(), value);
    return f;
}

// ---------------------------------------------------------------------------
// Patches
// ---------------------------------------------------------------------------

/// Optional coordinate partial derivatives of a patch, each row-major.
struct PatchPartials {
    std::optional<std::vector<Vec3>> Fu;
    std::optional<std::vector<Vec3>> Fv;
    std::optional<std::vector<Vec3>> Fuu;
    std::optional<std::vector<Vec3>> Fuv;
};

/// Sampled parametrized surface. Missing partials are filled by
/// second-order finite differences (F_uu and F_uv from F_u).
class SurfacePatch {
public:
    SurfacePatch(const GridSpec& grid, std::vector<H1Point> points, PatchPartials partials = {})
        : grid_(grid), points_(std::move(points))
    {
        grid_.validate();
        if (points_.size() != grid_.size()) {
            throw Error(ErrorKind::InvalidArgument, "patch point count does not match the grid");
        }
        for (const auto& p : points_) {
            if (!p.finite()) {
                throw Error(ErrorKind::InvalidArgument, "patch points must be finite");
            }
        }
        auto take = [&](std::optional<std::vector<Vec3>>& src, std::vector<Vec3>& dst, bool& flag) {
            if (!src) {
                return;
            }
            if (src->size() != grid_.size()) {
                throw Error(ErrorKind::InvalidArgument, "partial-derivative sample count mismatch");
            }
            for (const auto& d : *src) {
                if (!d.allFinite()) {
                    throw Error(ErrorKind::InvalidArgument, "partial derivatives must be finite");
                }
            }
            dst = std::move(*src);
            flag = true;
        };
        take(partials.Fu, fu_, analytic_[0]);
        take(partials.Fv, fv_, analytic_[1]);
        take(partials.Fuu, fuu_, analytic_[2]);
        take(partials.Fuv, fuv_, analytic_[3]);

        std::vector<Vec3> pts;
        if (!analytic_[0] || !analytic_[1]) {
            pts.resize(grid_.size());
            for (std::size_t k = 0; k < pts.size(); ++k) {
                pts[k] = points_[k].vec();
            }
        }
        if (!analytic_[0]) {
            fu_ = partial(pts, Axis::U);
        }
        if (!analytic_[1]) {
            fv_ = partial(pts, Axis::V);
        }
        if (!analytic_[2]) {
            fuu_ = partial(fu_, Axis::U);
        }
        if (!analytic_[3]) {
            fuv_ = partial(fu_, Axis::V);
        }
    }

    template <class F>
    static SurfacePatch sample(const GridSpec& grid, F&& f)
    {
        grid.validate();
        std::vector<H1Point> pts(grid.size());
        for (std::size_t j = 0; j < grid.nv; ++j) {
            for (std::size_t i = 0; i < grid.nu; ++i) {
                pts[grid.index(i, j)] = H1Point::from(f(grid.u(i), grid.v(j)));
            }
        }
        return SurfacePatch(grid, std::move(pts));
    }

    /// `jet(u, v)` returns {F, F_u, F_v, F_uu, F_uv} as coordinate vectors.
    template <class Jet>
    static SurfacePatch sample_jet(const GridSpec& grid, Jet&& jet)
    {
        grid.validate();
        std::vector<H1Point> pts(grid.size());
        PatchPartials d{std::vector<Vec3>(grid.size()), std::vector<Vec3>(grid.size()),
                        std::vector<Vec3>(grid.size()), std::vector<Vec3>(grid.size())};
        for (std::size_t j = 0; j < grid.nv; ++j) {
            for (std::size_t i = 0; i < grid.nu; ++i) {
                const std::size_t k = grid.index(i, j);
                const std::array<Vec3, 5> values = jet(grid.u(i), grid.v(j));
                pts[k] = H1Point::from(values[0]);
                (*d.Fu)[k] = values[1];
                (*d.Fv)[k] = values[2];
                (*d.Fuu)[k] = values[3];
                (*d.Fuv)[k] = values[4];
            }
        }
        return SurfacePatch(grid, std::move(pts), std::move(d));
    }

    const GridSpec& grid() const { return grid_; }
    std::size_t size() const { return points_.size(); }
    const H1Point& point(std::size_t i, std::size_t j) const { return points_[grid_.index(i, j)]; }
    const Vec3& Fu(std::size_t i, std::size_t j) const { return fu_[grid_.index(i, j)]; }
    const Vec3& Fv(std::size_t i, std::size_t j) const { return fv_[grid_.index(i, j)]; }
    const Vec3& Fuu(std::size_t i, std::size_t j) const { return fuu_[grid_.index(i, j)]; }
    const Vec3& Fuv(std::size_t i, std::size_t j) const { return fuv_[grid_.index(i, j)]; }
    const std::vector<H1Point>& points() const { return points_; }
    const std::vector<Vec3>& Fu_all() const { return fu_; }
    const std::vector<Vec3>& Fv_all() const { return fv_; }
    const std::vector<Vec3>& Fuu_all() const { return fuu_; }
    const std::vector<Vec3>& Fuv_all() const { return fuv_; }

    /// Flags for F_u, F_v, F_uu, F_uv: true when supplied rather than differenced.
    const std::array<bool, 4>& analytic() const { return analytic_; }

    SurfacePatch points_only() const { return SurfacePatch(grid_, points_); }

    /// Image under a motion; supplied partials map through the differential.
    SurfacePatch transformed(const HeisenbergMotion& g) const
    {
        const Mat3 dg = g.differential();
        std::vector<H1Point> pts(size());
        for (std::size_t k = 0; k < size(); ++k) {
            pts[k] = motion_apply(g, points_[k]);
        }
        PatchPartials d;
        auto map = [&](const std::vector<Vec3>& src, bool flag, std::optional<std::vector<Vec3>>& dst) {
            if (!flag) {
                return;
            }
            dst.emplace(src.size());
            for (std::size_t k = 0; k < src.size(); ++k) {
                (*dst)[k] = dg * src[k];
            }
        };
        map(fu_, analytic_[0], d.Fu);
        map(fv_, analytic_[1], d.Fv);
        map(fuu_, analytic_[2], d.Fuu);
        map(fuv_, analytic_[3], d.Fuv);
        return SurfacePatch(grid_, std::move(pts), std::move(d));
    }

private:
    std::vector<Vec3> partial(const std::vector<Vec3>& values, Axis axis) const
    {
        return numerics::fd_partial_grid<Vec3>(values, grid_.nu, grid_.nv, grid_.du, grid_.dv, axis, 1);
    }

    GridSpec grid_;
    std::vector<H1Point> points_;
    std::vector<Vec3> fu_, fv_, fuu_, fuv_;
    std::array<bool, 4> analytic_{false, false, false, false};
};

// ---------------------------------------------------------------------------
// Characteristic directions and normal coordinates
// ---------------------------------------------------------------------------

namespace detail {

inline double theta(const H1Point& p, const Vec3& coord) { return coord.z() + p.x * coord.y() - p.y * coord.x(); }

/// Unit horizontal direction of T Sigma at one sample: frame components in
/// the contact plane and the matching velocity in parameter space.
struct CharacteristicSample {
    Vec2 frame = Vec2::Zero();
    Vec2 param = Vec2::Zero();
    bool singular = false;
};

inline CharacteristicSample raw_characteristic(const H1Point& p, const Vec3& fu, const Vec3& fv, double tol)
{
    CharacteristicSample out;
    const double tu = theta(p, fu);
    const double tv = theta(p, fv);
    const double scale = 1.0 + fu.norm() + fv.norm();
    const Vec3 d = tv * fu - tu * fv;
    const double n = std::hypot(d.x(), d.y());
    if ((std::abs(tu) <= tol * scale && std::abs(tv) <= tol * scale) || !(n > 0.0)) {
        out.singular = true;
        return out;
    }
    out.frame = Vec2(d.x(), d.y()) / n;
    out.param = Vec2(tv, -tu) / n;
    const double lead = std::abs(out.frame.x()) > 1e-12 ? out.frame.x() : out.frame.y();
    if (lead < 0.0) {
        out.frame = -out.frame;
        out.param = -out.param;
    }
    return out;
}

inline void align(CharacteristicSample& s, const CharacteristicSample& ref)
{
    if (s.frame.dot(ref.frame) < 0.0) {
        s.frame = -s.frame;
        s.param = -s.param;
    }
}

inline std::pair<std::size_t, double> lagrange_base(std::size_t n, double x0, double h, double x)
{
    const double r = (x - x0) / h;
    auto base = static_cast<long>(std::floor(r)) - 1;
    base = std::clamp<long>(base, 0, static_cast<long>(n) - 4);
    return {static_cast<std::size_t>(base), r - static_cast<double>(base)};
}

inline std::array<double, 4> lagrange_weights(double q)
{
    return {-(q - 1.0) * (q - 2.0) * (q - 3.0) / 6.0, q * (q - 2.0) * (q - 3.0) / 2.0,
            -q * (q - 1.0) * (q - 3.0) / 2.0, q * (q - 1.0) * (q - 2.0) / 6.0};
}

/// Tensor-product cubic Lagrange interpolation of grid data.
template <class T>
T bicubic(const std::vector<T>& values, const GridSpec& g, double u, double v)
{
    const auto [bu, qu] = lagrange_base(g.nu, g.u0, g.du, u);
    const auto [bv, qv] = lagrange_base(g.nv, g.v0, g.dv, v);
    const auto wu = lagrange_weights(qu);
    const auto wv = lagrange_weights(qv);
    T acc = T(values[g.index(bu, bv)] * 0.0);
    for (std::size_t b = 0; b < 4; ++b) {
        T row = T(values[g.index(bu, bv + b)] * 0.0);
        for (std::size_t a = 0; a < 4; ++a) {
            row = T(row + wu[a] * values[g.index(bu + a, bv + b)]);
        }
        acc = T(acc + wv[b] * row);
    }
    return acc;
}

} // namespace detail

/// Unit contact vectors spanning T Sigma, with the sign fixed by a
/// continuity sweep: each cell agrees with its (i-1, j) neighbour, the first
/// cell of each row with (0, j-1), and the corner has a positive leading
/// frame component.
struct CharacteristicField {
    GridSpec grid;
    std::vector<TangentVector> X;
    std::vector<Vec2> param_velocity;
};

inline CharacteristicField characteristic_field(const SurfacePatch& patch, double tol = tol::contact_plane)
{
    const GridSpec& g = patch.grid();
    CharacteristicField out{g, std::vector<TangentVector>(g.size()), std::vector<Vec2>(g.size())};
    std::vector<detail::CharacteristicSample> samples(g.size());
    for (std::size_t j = 0; j < g.nv; ++j) {
        for (std::size_t i = 0; i < g.nu; ++i) {
            auto s = detail::raw_characteristic(patch.point(i, j), patch.Fu(i, j), patch.Fv(i, j), tol);
            if (s.singular) {
                throw Error(ErrorKind::Singular,
                            "tangent plane equals the contact plane at cell (" + std::to_string(i) + ", " +
                                std::to_string(j) + ")");
            }
            if (i > 0) {
                detail::align(s, samples[g.index(i - 1, j)]);
            } else if (j > 0) {
                detail::align(s, samples[g.index(0, j - 1)]);
            }
            samples[g.index(i, j)] = s;
        }
    }
    for (std::size_t k = 0; k < g.size(); ++k) {
        out.X[k] = TangentVector::from_frame(patch.points()[k], Vec3(samples[k].frame.x(), samples[k].frame.y(), 0.0));
        out.param_velocity[k] = samples[k].param;
    }
    return out;
}

/// Characteristic direction at one cell, following the sweep from the corner
/// up the first column and then along row j.
inline TangentVector characteristic_direction(const SurfacePatch& patch, std::size_t i, std::size_t j,
                                              double tol = tol::contact_plane)
{
    const GridSpec& g = patch.grid();
    if (i >= g.nu || j >= g.nv) {
        throw Error(ErrorKind::InvalidArgument, "cell index out of range");
    }
    auto at = [&](std::size_t a, std::size_t b) {
        auto s = detail::raw_characteristic(patch.point(a, b), patch.Fu(a, b), patch.Fv(a, b), tol);
        if (s.singular) {
            throw Error(ErrorKind::Singular, "tangent plane equals the contact plane at cell (" + std::to_string(a) +
                                                 ", " + std::to_string(b) + ")");
        }
        return s;
    };
    auto prev = at(0, 0);
    for (std::size_t b = 1; b <= j; ++b) {
        auto s = at(0, b);
        detail::align(s, prev);
        prev = s;
    }
    for (std::size_t a = 1; a <= i; ++a) {
        auto s = at(a, j);
        detail::align(s, prev);
        prev = s;
    }
    return TangentVector::from_frame(patch.point(i, j), Vec3(prev.frame.x(), prev.frame.y(), 0.0));
}

struct NormalityReport {
    bool normal = false;
    bool nonsingular = true;
    double max_contact = 0.0;     // max |theta0(F_u)|
    double max_unit_defect = 0.0; // max | |F_u| - 1 |
    std::optional<std::pair<std::size_t, std::size_t>> first_singular;
    std::pair<std::size_t, std::size_t> worst_cell{0, 0};
};

/// Checks the three defining conditions of normal coordinates.
inline NormalityReport is_normal_parametrization(const SurfacePatch& patch, double tol = 1e-6)
{
    const GridSpec& g = patch.grid();
    NormalityReport r;
    double worst = -1.0;
    for (std::size_t j = 0; j < g.nv; ++j) {
        for (std::size_t i = 0; i < g.nu; ++i) {
            const H1Point& p = patch.point(i, j);
            const double tu = detail::theta(p, patch.Fu(i, j));
            const double tv = detail::theta(p, patch.Fv(i, j));
            const double unit = std::abs(coord_to_frame(p, patch.Fu(i, j)).norm() - 1.0);
            const double scale = 1.0 + patch.Fu(i, j).norm() + patch.Fv(i, j).norm();
            if (std::abs(tu) <= tol::contact_plane * scale && std::abs(tv) <= tol::contact_plane * scale &&
                !r.first_singular) {
                r.nonsingular = false;
                r.first_singular = std::pair{i, j};
            }
            r.max_contact = std::max(r.max_contact, std::abs(tu));
            r.max_unit_defect = std::max(r.max_unit_defect, unit);
            if (std::max(std::abs(tu), unit) > worst) {
                worst = std::max(std::abs(tu), unit);
                r.worst_cell = {i, j};
            }
        }
    }
    r.normal = r.nonsingular && r.max_contact <= tol && r.max_unit_defect <= tol;
    return r;
}

struct NormalizeOptions {
    std::optional<double> length;      // extent of the new u-coordinate; default: the old u-extent over the
                                       // largest u-speed of the flow
    std::optional<std::size_t> n_u;    // samples along the new u; default: the old nu
    std::size_t seed_begin = 0;        // seed rows j in [seed_begin, seed_end) of the line u = u0
    std::optional<std::size_t> seed_end;
};

/// Builds normal coordinates (s, v): F~(s, v) is the point reached after
/// flowing for length s along the unit characteristic field from F(u0, v).
/// The flow runs in parameter space with bicubic interpolation of the
/// node velocities; it is oriented into the patch.
inline SurfacePatch normalize_patch(const SurfacePatch& patch, const NormalizeOptions& options = {})
{
    const GridSpec& g = patch.grid();
    const auto field = characteristic_field(patch);
    const std::size_t seed_end = options.seed_end.value_or(g.nv);
    if (seed_end > g.nv || seed_end < options.seed_begin + 5) {
        throw Error(ErrorKind::GridTooSmall, "need at least 5 seed rows inside the patch");
    }
    const double orient = field.param_velocity[g.index(0, options.seed_begin)].x() >= 0.0 ? 1.0 : -1.0;
    std::vector<Vec2> velocity(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        velocity[k] = orient * field.param_velocity[k];
    }
    for (std::size_t j = options.seed_begin; j < seed_end; ++j) {
        if (!(velocity[g.index(0, j)].x() > 0.0)) {
            throw Error(ErrorKind::FlowLeftPatch, "characteristic curve through seed row " + std::to_string(j) +
                                                      " does not enter the patch");
        }
    }
    std::vector<Vec3> pts(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        pts[k] = patch.points()[k].vec();
    }

    double max_speed_u = 1.0;
    for (const auto& w : velocity) {
        max_speed_u = std::max(max_speed_u, std::abs(w.x()));
    }
    const double length = options.length.value_or((g.u_end() - g.u0) / max_speed_u);
    const std::size_t n_u = options.n_u.value_or(g.nu);
    if (!(length > 0.0) || n_u < 5) {
        throw Error(ErrorKind::InvalidArgument, "normalization needs a positive length and >= 5 samples");
    }
    GridSpec out_grid{0.0, length / static_cast<double>(n_u - 1), n_u, g.v(options.seed_begin), g.dv,
                      seed_end - options.seed_begin};
    const double slack_u = 1e-9 * (g.u_end() - g.u0);
    const double slack_v = 1e-9 * (g.v_end() - g.v0);
    auto inside = [&](const Vec2& q) {
        return q.x() >= g.u0 - slack_u && q.x() <= g.u_end() + slack_u && q.y() >= g.v0 - slack_v &&
               q.y() <= g.v_end() + slack_v;
    };
    auto near = [&](const Vec2& q) {
        return q.x() >= g.u0 - g.du && q.x() <= g.u_end() + g.du && q.y() >= g.v0 - g.dv && q.y() <= g.v_end() + g.dv;
    };
    auto rhs = [&](double, const Vec2& q) -> Vec2 {
        if (!near(q)) {
            throw Error(ErrorKind::FlowLeftPatch, "characteristic curve left the sampled region");
        }
        return detail::bicubic(velocity, g, q.x(), q.y());
    };

    std::vector<H1Point> out_pts(out_grid.size());
    std::vector<Vec3> out_fu(out_grid.size());
    numerics::parallel_for(
        out_grid.nv,
        [&](std::size_t jj) {
            const std::size_t j = jj + options.seed_begin;
            Vec2 q(g.u0, g.v(j));
            for (std::size_t i = 0; i < n_u; ++i) {
                if (i > 0) {
                    q = numerics::rk4_step<Vec2>(rhs, out_grid.u(i - 1), q, out_grid.du);
                    if (!inside(q)) {
                        throw Error(ErrorKind::FlowLeftPatch, "characteristic curve left the sampled region");
                    }
                }
                const std::size_t k = out_grid.index(i, jj);
                const H1Point p = H1Point::from(detail::bicubic(pts, g, q.x(), q.y()));
                const Vec3 fu = detail::bicubic(patch.Fu_all(), g, q.x(), q.y());
                const Vec3 fv = detail::bicubic(patch.Fv_all(), g, q.x(), q.y());
                auto s = detail::raw_characteristic(p, fu, fv, tol::contact_plane);
                if (s.singular) {
                    throw Error(ErrorKind::Singular, "flow reached a singular point");
                }
                if (s.param.dot(detail::bicubic(velocity, g, q.x(), q.y())) < 0.0) {
                    s.frame = -s.frame;
                }
                out_pts[k] = p;
                out_fu[k] = frame_to_coord(p, Vec3(s.frame.x(), s.frame.y(), 0.0));
            }
        },
        1);
    PatchPartials d;
    d.Fu = std::move(out_fu);
    return SurfacePatch(out_grid, std::move(out_pts), std::move(d));
}

// ---------------------------------------------------------------------------
// Coefficients and integrability
// ---------------------------------------------------------------------------

/// a = <F_v, X>, b = <F_v, Y>, c = <F_v, T>, l = <F_uu, Y>, m = <F_uv, Y>.
struct SurfaceCoefficients {
    GridSpec grid;
    GridField a, b, c, l, m;

    static SurfaceCoefficients zeros(const GridSpec& grid)
    {
        return {grid, grid.zeros(), grid.zeros(), grid.zeros(), grid.zeros(), grid.zeros()};
    }

    static SurfaceCoefficients constant(const GridSpec& grid, double a, double b, double c, double l, double m)
    {
        return {grid, constant_field(grid, a), constant_field(grid, b), constant_field(grid, c),
                constant_field(grid, l), constant_field(grid, m)};
    }

    void validate() const
    {
        grid.validate();
        for (const GridField* f : {&a, &b, &c, &l, &m}) {
            if (f->nu != grid.nu || f->nv != grid.nv || f->values.size() != grid.size()) {
                throw Error(ErrorKind::InvalidArgument, "coefficient grid does not match its dimensions");
            }
            for (double x : f->values) {
                if (!std::isfinite(x)) {
                    throw Error(ErrorKind::InvalidArgument, "coefficients must be finite");
                }
            }
        }
    }
};

inline SurfaceCoefficients coefficients(const SurfacePatch& patch, double tol = 1e-6)
{
    const auto report = is_normal_parametrization(patch, tol);
    if (!report.normal) {
        throw ToleranceError(ErrorKind::NotNormal,
                             "patch is not in normal coordinates (worst cell " +
                                 std::to_string(report.worst_cell.first) + ", " +
                                 std::to_string(report.worst_cell.second) + ")",
                             std::max(report.max_contact, report.max_unit_defect));
    }
    const GridSpec& g = patch.grid();
    auto out = SurfaceCoefficients::zeros(g);
    numerics::parallel_for(g.size(), [&](std::size_t k) {
        const H1Point& p = patch.points()[k];
        const Vec3 x = coord_to_frame(p, patch.Fu_all()[k]);
        const Vec3 y(-x.y(), x.x(), 0.0);
        const Vec3 fv = coord_to_frame(p, patch.Fv_all()[k]);
        const Vec3 fuu = coord_to_frame(p, patch.Fuu_all()[k]);
        const Vec3 fuv = coord_to_frame(p, patch.Fuv_all()[k]);
        out.a.values[k] = fv.dot(x);
        out.b.values[k] = fv.dot(y);
        out.c.values[k] = fv.z();
        out.l.values[k] = fuu.dot(y);
        out.m.values[k] = fuv.dot(y);
    });
    return out;
}

/// Residuals over interior cells: the worst one, where it is, and the worst
/// per named equation.
struct ResidualReport {
    double max_residual = 0.0;
    std::pair<std::size_t, std::size_t> argmax_cell{0, 0};
    std::map<std::string, double> per_equation;
    double tol = 0.0;
    bool pass = true;
};

namespace detail {

inline void accumulate(ResidualReport& report, const std::string& name, const GridField& residual,
                       std::size_t margin = 1)
{
    double worst = 0.0;
    for (std::size_t j = margin; j + margin < residual.nv; ++j) {
        for (std::size_t i = margin; i + margin < residual.nu; ++i) {
            const double r = std::abs(residual(i, j));
            if (!(r <= worst)) {
                worst = r;
            }
            if (!(r <= report.max_residual)) {
                report.max_residual = r;
                report.argmax_cell = {i, j};
            }
        }
    }
    report.per_equation[name] = worst;
}

inline void finish(ResidualReport& report, double tol)
{
    report.tol = tol;
    report.pass = report.max_residual <= tol;
}

inline GridField d_u(const GridField& f, int order = 1) { return numerics::fd_partial(f, Axis::U, order); }
inline GridField d_v(const GridField& f, int order = 1) { return numerics::fd_partial(f, Axis::V, order); }

template <class Fn>
GridField combine(const GridField& like, Fn&& fn)
{
    GridField out{like.nu, like.nv, like.du, like.dv, std::vector<double>(like.size())};
    for (std::size_t k = 0; k < like.size(); ++k) {
        out.values[k] = fn(k);
    }
    return out;
}

} // namespace detail

/// a_u = b l, b_u = -a l + m, c_u = 2b, l_v = m_u on interior cells.
inline ResidualReport check_integrability(const SurfaceCoefficients& k, double tol)
{
    k.validate();
    const auto au = detail::d_u(k.a), bu = detail::d_u(k.b), cu = detail::d_u(k.c);
    const auto lv = detail::d_v(k.l), mu = detail::d_u(k.m);
    ResidualReport r;
    const auto& a = k.a.values;
    const auto& b = k.b.values;
    const auto& l = k.l.values;
    const auto& m = k.m.values;
    detail::accumulate(r, "a_u - b l", detail::combine(k.a, [&](std::size_t q) { return au.values[q] - b[q] * l[q]; }));
    detail::accumulate(r, "b_u + a l - m",
                       detail::combine(k.a, [&](std::size_t q) { return bu.values[q] + a[q] * l[q] - m[q]; }));
    detail::accumulate(r, "c_u - 2b", detail::combine(k.a, [&](std::size_t q) { return cu.values[q] - 2.0 * b[q]; }));
    detail::accumulate(r, "l_v - m_u", detail::combine(k.a, [&](std::size_t q) { return lv.values[q] - mu.values[q]; }));
    detail::finish(r, tol);
    return r;
}

/// p-minimal specialization: a_u = 0, b_uu = 0, c_u = 2b, m = b_u.
inline ResidualReport check_pminimal(const SurfaceCoefficients& k, double tol)
{
    k.validate();
    const auto au = detail::d_u(k.a), bu = detail::d_u(k.b), buu = detail::d_u(k.b, 2), cu = detail::d_u(k.c);
    ResidualReport r;
    detail::accumulate(r, "a_u", au);
    detail::accumulate(r, "b_uu", buu);
    detail::accumulate(r, "c_u - 2b",
                       detail::combine(k.a, [&](std::size_t q) { return cu.values[q] - 2.0 * k.b.values[q]; }));
    detail::accumulate(r, "m - b_u", detail::combine(k.a, [&](std::size_t q) { return k.m.values[q] - bu.values[q]; }));
    double lmax = 0.0;
    for (double x : k.l.values) {
        lmax = std::max(lmax, std::abs(x));
    }
    r.per_equation["max |l|"] = lmax;
    detail::finish(r, tol);
    return r;
}

// ---------------------------------------------------------------------------
// Path integration of the frame equations
// ---------------------------------------------------------------------------

/// Grids of the Maurer-Cartan coefficients along du and dv:
/// dM = M (phi_u du + phi_v dv).
struct GeneratorGrid {
    GridSpec grid;
    std::array<GridField, 4> u; // w1, w2, w3, w12 of phi_u
    std::array<GridField, 4> v; // w1, w2, w3, w12 of phi_v
};

enum class PathOrder { UFirst, VFirst };

namespace detail {

inline MaurerCartanValue mc_at(const std::array<GridField, 4>& f, std::size_t k)
{
    return {f[0].values[k], f[1].values[k], f[2].values[k], f[3].values[k]};
}

/// Integrates M' = M phi(t) along one grid line; phi is interpolated to the
/// half steps with cubic Lagrange polynomials through the line samples.
inline std::vector<Mat4> integrate_line(const Mat4& start, const std::array<std::vector<double>, 4>& line, double t0,
                                        double h)
{
    numerics::OdeProblem<Mat4> problem;
    problem.initial = start;
    problem.t0 = t0;
    problem.steps = static_cast<int>(line[0].size() - 1);
    problem.t1 = t0 + h * problem.steps;
    problem.rhs = [&](double t, const Mat4& m) -> Mat4 {
        MaurerCartanValue w;
        w.w1 = numerics::lagrange4_uniform<double>(line[0], t0, h, t);
        w.w2 = numerics::lagrange4_uniform<double>(line[1], t0, h, t);
        w.w3 = numerics::lagrange4_uniform<double>(line[2], t0, h, t);
        w.w12 = numerics::lagrange4_uniform<double>(line[3], t0, h, t);
        return moving_frame_derivative(m, w);
    };
    return numerics::integrate_group_ode(problem, 1);
}

inline std::array<std::vector<double>, 4> extract_line(const std::array<GridField, 4>& f, const GridSpec& g, Axis axis,
                                                       std::size_t fixed)
{
    std::array<std::vector<double>, 4> line;
    const std::size_t n = axis == Axis::U ? g.nu : g.nv;
    for (std::size_t c = 0; c < 4; ++c) {
        line[c].resize(n);
        for (std::size_t t = 0; t < n; ++t) {
            line[c][t] = axis == Axis::U ? f[c](t, fixed) : f[c](fixed, t);
        }
    }
    return line;
}

} // namespace detail

/// Frames at every node: first along one axis through the corner, then
/// along the other axis from each node of that line.
inline std::vector<Mat4> integrate_frames(const GeneratorGrid& gen, const OrientedFrame& initial, PathOrder order)
{
    const GridSpec& g = gen.grid;
    std::vector<Mat4> frames(g.size());
    const Mat4 start = frame_to_matrix(initial);
    if (order == PathOrder::UFirst) {
        const auto base = detail::integrate_line(start, detail::extract_line(gen.u, g, Axis::U, 0), g.u0, g.du);
        numerics::parallel_for(
            g.nu,
            [&](std::size_t i) {
                const auto fiber =
                    detail::integrate_line(base[i], detail::extract_line(gen.v, g, Axis::V, i), g.v0, g.dv);
                for (std::size_t j = 0; j < g.nv; ++j) {
                    frames[g.index(i, j)] = fiber[j];
                }
            },
            1);
    } else {
        const auto base = detail::integrate_line(start, detail::extract_line(gen.v, g, Axis::V, 0), g.v0, g.dv);
        numerics::parallel_for(
            g.nv,
            [&](std::size_t j) {
                const auto fiber =
                    detail::integrate_line(base[j], detail::extract_line(gen.u, g, Axis::U, j), g.u0, g.du);
                for (std::size_t i = 0; i < g.nu; ++i) {
                    frames[g.index(i, j)] = fiber[i];
                }
            },
            1);
    }
    return frames;
}

/// Patch carried by integrated frames. The partials are read off the frame
/// equations: F_u = M w_u, F_v = M w_v, F_uu = M (phi_u w_u + d_u w_u) and
/// F_uv = M (phi_v w_u + d_v w_u), where w_u, w_v are the translation
/// columns of phi_u, phi_v.
inline SurfacePatch patch_from_frames(const GeneratorGrid& gen, const std::vector<Mat4>& frames)
{
    const GridSpec& g = gen.grid;
    std::array<GridField, 3> du_wu, dv_wu;
    for (std::size_t c = 0; c < 3; ++c) {
        du_wu[c] = detail::d_u(gen.u[c]);
        dv_wu[c] = detail::d_v(gen.u[c]);
    }
    std::vector<H1Point> pts(g.size());
    PatchPartials d{std::vector<Vec3>(g.size()), std::vector<Vec3>(g.size()), std::vector<Vec3>(g.size()),
                    std::vector<Vec3>(g.size())};
    for (std::size_t k = 0; k < g.size(); ++k) {
        const Mat4& m = frames[k];
        const Mat4 phi_u = detail::mc_at(gen.u, k).matrix();
        const Mat4 phi_v = detail::mc_at(gen.v, k).matrix();
        const Eigen::Vector4d wu(0.0, gen.u[0].values[k], gen.u[1].values[k], gen.u[2].values[k]);
        const Eigen::Vector4d wv(0.0, gen.v[0].values[k], gen.v[1].values[k], gen.v[2].values[k]);
        const Eigen::Vector4d dwu(0.0, du_wu[0].values[k], du_wu[1].values[k], du_wu[2].values[k]);
        const Eigen::Vector4d dwv(0.0, dv_wu[0].values[k], dv_wu[1].values[k], dv_wu[2].values[k]);
        pts[k] = H1Point{m(1, 0), m(2, 0), m(3, 0)};
        (*d.Fu)[k] = (m * wu).tail<3>();
        (*d.Fv)[k] = (m * wv).tail<3>();
        (*d.Fuu)[k] = (m * (phi_u * wu + dwu)).tail<3>();
        (*d.Fuv)[k] = (m * (phi_v * wu + dwv)).tail<3>();
    }
    return SurfacePatch(g, std::move(pts), std::move(d));
}

inline GeneratorGrid generators(const SurfaceCoefficients& k)
{
    const GridSpec& g = k.grid;
    return {g, {constant_field(g, 1.0), g.zeros(), g.zeros(), k.l}, {k.a, k.b, k.c, k.m}};
}

/// Integrates M_u = M phi_u (w1 = 1, w12 = l) and M_v = M phi_v
/// (w1 = a, w2 = b, w3 = c, w12 = m) after checking integrability at tol.
inline SurfacePatch reconstruct_surface(const SurfaceCoefficients& k, const OrientedFrame& initial = OrientedFrame{},
                                        double tol = 1e-3, PathOrder order = PathOrder::UFirst)
{
    const auto report = check_integrability(k, tol);
    if (!report.pass) {
        throw ToleranceError(ErrorKind::IntegrabilityViolation,
                             "coefficients violate the integrability conditions at cell (" +
                                 std::to_string(report.argmax_cell.first) + ", " +
                                 std::to_string(report.argmax_cell.second) + ")",
                             report.max_residual);
    }
    const auto gen = generators(k);
    return patch_from_frames(gen, integrate_frames(gen, initial, order));
}

// ---------------------------------------------------------------------------
// Change of normal coordinates
// ---------------------------------------------------------------------------

/// New normal coordinates u~ = sign u + g(v), v~ = h(v).
struct Reparametrization {
    int sign = 1;
    std::function<double(double)> g = [](double) { return 0.0; };
    std::function<double(double)> g_prime = [](double) { return 0.0; };
    std::function<double(double)> h = [](double v) { return v; };
    std::function<double(double)> h_prime = [](double) { return 1.0; };
};

/// Coefficients in the new coordinates, sampled at the original nodes;
/// u_new, v_new hold the new coordinates of each node.
struct TransformedCoefficients {
    SurfaceCoefficients coeffs;
    GridField u_new;
    GridField v_new;
};

/// Solves a = s(g' + h' a~), b = s h' b~, c = h' c~, l = s l~,
/// m = g' l~ + h' m~ for the new coefficients.
inline TransformedCoefficients transform_coefficients(const SurfaceCoefficients& k, const Reparametrization& r)
{
    k.validate();
    if (r.sign != 1 && r.sign != -1) {
        throw Error(ErrorKind::InvalidArgument, "sign must be +1 or -1");
    }
    const GridSpec& grid = k.grid;
    const double s = r.sign;
    TransformedCoefficients out{SurfaceCoefficients::zeros(grid), grid.zeros(), grid.zeros()};
    for (std::size_t j = 0; j < grid.nv; ++j) {
        const double v = grid.v(j);
        const double gp = r.g_prime(v);
        const double hp = r.h_prime(v);
        if (!(std::abs(hp) > 1e-12) || !std::isfinite(hp)) {
            throw Error(ErrorKind::DegenerateReparam, "h' vanishes at v = " + std::to_string(v));
        }
        for (std::size_t i = 0; i < grid.nu; ++i) {
            const double lt = s * k.l(i, j);
            out.coeffs.a(i, j) = (s * k.a(i, j) - gp) / hp;
            out.coeffs.b(i, j) = s * k.b(i, j) / hp;
            out.coeffs.c(i, j) = k.c(i, j) / hp;
            out.coeffs.l(i, j) = lt;
            out.coeffs.m(i, j) = (k.m(i, j) - gp * lt) / hp;
            out.u_new(i, j) = s * grid.u(i) + r.g(v);
            out.v_new(i, j) = r.h(v);
        }
    }
    return out;
}

/// Coefficients of I = du + a dv, II = b dv, III = c dv, IV = l du + m dv.
struct FundamentalForms {
    GridField I_du, I_dv, II_dv, III_dv, IV_du, IV_dv;
};

inline FundamentalForms fundamental_forms(const SurfaceCoefficients& k)
{
    return {constant_field(k.grid, 1.0), k.a, k.b, k.c, k.l, k.m};
}

// ---------------------------------------------------------------------------
// Invariants
// ---------------------------------------------------------------------------

/// Grid with cells flagged as singular-adjacent (values there are NaN).
struct MaskedField {
    GridField values;
    std::vector<unsigned char> singular;
    double eps = 0.0;

    std::size_t masked_count() const
    {
        return static_cast<std::size_t>(std::count(singular.begin(), singular.end(), 1));
    }
};

/// eps_sing = 1e-6 median |c|.
inline double singular_threshold(const SurfaceCoefficients& k)
{
    std::vector<double> mags(k.c.values.size());
    std::transform(k.c.values.begin(), k.c.values.end(), mags.begin(), [](double x) { return std::abs(x); });
    auto mid = mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2);
    std::nth_element(mags.begin(), mid, mags.end());
    return 1e-6 * *mid;
}

inline MaskedField p_variation(const SurfaceCoefficients& k, std::optional<double> eps = std::nullopt)
{
    k.validate();
    MaskedField out{k.grid.zeros(), std::vector<unsigned char>(k.grid.size(), 0), eps.value_or(singular_threshold(k))};
    for (std::size_t q = 0; q < k.grid.size(); ++q) {
        const double c = k.c.values[q];
        if (std::abs(c) > out.eps) {
            out.values.values[q] = k.b.values[q] / c;
        } else {
            out.values.values[q] = std::numeric_limits<double>::quiet_NaN();
            out.singular[q] = 1;
        }
    }
    return out;
}

/// g = E du^2 + 2F du dv + G dv^2.
struct MetricPatch {
    GridField E, F, G;
};

inline MetricPatch induced_metric(const SurfaceCoefficients& k)
{
    return {constant_field(k.grid, 1.0), k.a,
            detail::combine(k.a, [&](std::size_t q) {
                return k.a.values[q] * k.a.values[q] + k.b.values[q] * k.b.values[q] + k.c.values[q] * k.c.values[q];
            })};
}

/// Induced metric read directly from the partials of a patch.
inline MetricPatch patch_metric(const SurfacePatch& patch)
{
    const GridSpec& g = patch.grid();
    MetricPatch out{g.zeros(), g.zeros(), g.zeros()};
    for (std::size_t q = 0; q < g.size(); ++q) {
        const Vec3 fu = coord_to_frame(patch.points()[q], patch.Fu_all()[q]);
        const Vec3 fv = coord_to_frame(patch.points()[q], patch.Fv_all()[q]);
        out.E.values[q] = fu.dot(fu);
        out.F.values[q] = fu.dot(fv);
        out.G.values[q] = fv.dot(fv);
    }
    return out;
}

/// Orthonormal coframe of the induced metric, omega^1 = P1 du + Q1 dv and
/// omega^2 = P2 du + Q2 dv.
struct Coframe {
    GridSpec grid;
    GridField P1, Q1, P2, Q2;

    double jacobian(std::size_t q) const { return P1.values[q] * Q2.values[q] - Q1.values[q] * P2.values[q]; }

    MetricPatch metric() const
    {
        auto e = detail::combine(P1, [&](std::size_t q) {
            return P1.values[q] * P1.values[q] + P2.values[q] * P2.values[q];
        });
        auto f = detail::combine(P1, [&](std::size_t q) {
            return P1.values[q] * Q1.values[q] + P2.values[q] * Q2.values[q];
        });
        auto g = detail::combine(P1, [&](std::size_t q) {
            return Q1.values[q] * Q1.values[q] + Q2.values[q] * Q2.values[q];
        });
        return {std::move(e), std::move(f), std::move(g)};
    }

    /// Flat coframe du, dv.
    static Coframe flat(const GridSpec& grid)
    {
        return {grid, constant_field(grid, 1.0), grid.zeros(), grid.zeros(), constant_field(grid, 1.0)};
    }
};

/// omega^1 = du + a dv, omega^2 = sqrt(1 + alpha^2) c dv.
inline Coframe coframe(const SurfaceCoefficients& k)
{
    k.validate();
    const double eps = singular_threshold(k);
    Coframe out{k.grid, constant_field(k.grid, 1.0), k.a, k.grid.zeros(), k.grid.zeros()};
    for (std::size_t q = 0; q < k.grid.size(); ++q) {
        const double c = k.c.values[q];
        if (!(std::abs(c) > eps)) {
            throw Error(ErrorKind::SingularCell, "c vanishes at a cell; the coframe is undefined there");
        }
        out.Q2.values[q] = std::copysign(std::hypot(k.b.values[q], c), c);
    }
    return out;
}

namespace detail {

inline void require_nonsingular(const Coframe& cf)
{
    double scale = 0.0;
    for (std::size_t q = 0; q < cf.grid.size(); ++q) {
        scale = std::max(scale, std::abs(cf.jacobian(q)));
    }
    for (std::size_t q = 0; q < cf.grid.size(); ++q) {
        if (!(std::abs(cf.jacobian(q)) > 1e-12 * scale) || !(scale > 0.0)) {
            throw Error(ErrorKind::SingularCell, "coframe degenerates at a cell");
        }
    }
}

} // namespace detail

/// Derivatives along the dual frame: e1 f and e_Sigma f. In normal
/// coordinates e1 f = f_u and e_Sigma f = (f_v - a f_u) / (c sqrt(1+alpha^2)).
inline std::pair<GridField, GridField> directional_derivatives(const GridField& f, const Coframe& cf)
{
    detail::require_nonsingular(cf);
    const auto fu = detail::d_u(f), fv = detail::d_v(f);
    auto e1 = detail::combine(f, [&](std::size_t q) {
        return (cf.Q2.values[q] * fu.values[q] - cf.P2.values[q] * fv.values[q]) / cf.jacobian(q);
    });
    auto es = detail::combine(f, [&](std::size_t q) {
        return (-cf.Q1.values[q] * fu.values[q] + cf.P1.values[q] * fv.values[q]) / cf.jacobian(q);
    });
    return {std::move(e1), std::move(es)};
}

inline std::pair<GridField, GridField> directional_derivatives(const GridField& f, const SurfaceCoefficients& k)
{
    return directional_derivatives(f, coframe(k));
}

inline GridField alpha_field(const SurfaceCoefficients& k)
{
    const auto pv = p_variation(k);
    if (pv.masked_count() > 0) {
        throw Error(ErrorKind::SingularCell, "patch contains singular-adjacent cells");
    }
    return pv.values;
}

/// Connection data: omega_1^2 (of the
/// pseudohermitian frame) and hat omega_1^2 (Levi-Civita of the induced
/// metric) in the basis (hat omega^1, hat omega^2).
struct ConnectionForms {
    GridField D, A, B;
    GridField omega12_1, omega12_2;       // l, (2 alpha^2 + e1 alpha) / sqrt(1+alpha^2)
    GridField omegahat12_1, omegahat12_2; // B, 2 alpha + alpha e1 alpha / (1+alpha^2)
    // alpha/sqrt(1+alpha^2) hat omega_1^2 + D hat omega^1 + e1 alpha/(1+alpha^2)^(3/2) hat omega^2,
    // filled when hat omega_1^2 is supplied
    std::optional<GridField> omega12_first_1, omega12_first_2;
};

inline ConnectionForms connection_forms(const GridField& alpha, const GridField& l, const GridField& e1_alpha,
                                        const std::optional<std::pair<GridField, GridField>>& omega_hat_12 = {})
{
    auto s = [&](std::size_t q) { return 1.0 + alpha.values[q] * alpha.values[q]; };
    ConnectionForms out;
    out.D = detail::combine(alpha, [&](std::size_t q) { return l.values[q] / s(q); });
    out.A = detail::combine(alpha, [&](std::size_t q) { return 2.0 * alpha.values[q] / s(q); });
    out.B = detail::combine(alpha, [&](std::size_t q) { return l.values[q] * alpha.values[q] / std::sqrt(s(q)); });
    out.omega12_1 = l;
    out.omega12_2 = detail::combine(alpha, [&](std::size_t q) {
        return (2.0 * alpha.values[q] * alpha.values[q] + e1_alpha.values[q]) / std::sqrt(s(q));
    });
    out.omegahat12_1 = out.B;
    out.omegahat12_2 = detail::combine(alpha, [&](std::size_t q) {
        return 2.0 * alpha.values[q] + alpha.values[q] * e1_alpha.values[q] / s(q);
    });
    if (omega_hat_12) {
        const auto& [w1, w2] = *omega_hat_12;
        out.omega12_first_1 = detail::combine(alpha, [&](std::size_t q) {
            return alpha.values[q] / std::sqrt(s(q)) * w1.values[q] + out.D.values[q];
        });
        out.omega12_first_2 = detail::combine(alpha, [&](std::size_t q) {
            return alpha.values[q] / std::sqrt(s(q)) * w2.values[q] + e1_alpha.values[q] / std::pow(s(q), 1.5);
        });
    }
    return out;
}

/// hat omega_1^2 = rho1 hat omega^1 + rho2 hat omega^2 from
/// d hat omega^k = rho_k hat omega^1 ^ hat omega^2.
inline std::pair<GridField, GridField> structure_connection(const Coframe& cf)
{
    detail::require_nonsingular(cf);
    const auto q1u = detail::d_u(cf.Q1), p1v = detail::d_v(cf.P1);
    const auto q2u = detail::d_u(cf.Q2), p2v = detail::d_v(cf.P2);
    auto rho1 = detail::combine(cf.P1, [&](std::size_t q) { return (q1u.values[q] - p1v.values[q]) / cf.jacobian(q); });
    auto rho2 = detail::combine(cf.P1, [&](std::size_t q) { return (q2u.values[q] - p2v.values[q]) / cf.jacobian(q); });
    return {std::move(rho1), std::move(rho2)};
}

/// Gaussian curvature of the coframe's metric from the structure equations.
inline GridField structure_curvature(const Coframe& cf)
{
    const auto [rho1, rho2] = structure_connection(cf);
    const auto r = detail::combine(cf.P1, [&](std::size_t q) {
        return rho1.values[q] * cf.P1.values[q] + rho2.values[q] * cf.P2.values[q];
    });
    const auto s = detail::combine(cf.P1, [&](std::size_t q) {
        return rho1.values[q] * cf.Q1.values[q] + rho2.values[q] * cf.Q2.values[q];
    });
    const auto su = detail::d_u(s), rv = detail::d_v(r);
    return detail::combine(cf.P1, [&](std::size_t q) { return -(su.values[q] - rv.values[q]) / cf.jacobian(q); });
}

/// Gaussian curvature from alpha and l:
/// K = -[(e1 a)^2 + 2s(e1 a) + 4 a^2 s - l (eS a) sqrt(s)] / s^2, s = 1 + a^2.
/// The leading sign makes K the curvature of the induced metric.
inline GridField gaussian_curvature_formula(const GridField& alpha, const GridField& l, const Coframe& cf)
{
    const auto [e1a, esa] = directional_derivatives(alpha, cf);
    return detail::combine(alpha, [&](std::size_t q) {
        const double a = alpha.values[q];
        const double s = 1.0 + a * a;
        const double x = e1a.values[q];
        return -(x * x + 2.0 * s * x + 4.0 * a * a * s - l.values[q] * esa.values[q] * std::sqrt(s)) / (s * s);
    });
}

inline GridField gaussian_curvature_formula(const SurfaceCoefficients& k)
{
    return gaussian_curvature_formula(alpha_field(k), k.l, coframe(k));
}

/// Brioschi formula with finite-difference derivatives of E, F, G.
inline GridField gaussian_curvature_reference(const MetricPatch& g)
{
    const auto& E = g.E;
    const auto& F = g.F;
    const auto& G = g.G;
    for (std::size_t q = 0; q < E.size(); ++q) {
        if (!(E.values[q] > 0.0) || !(E.values[q] * G.values[q] - F.values[q] * F.values[q] > 0.0)) {
            throw Error(ErrorKind::DegenerateMetric, "metric is not positive definite at a cell");
        }
    }
    const auto Eu = detail::d_u(E), Ev = detail::d_v(E), Fu = detail::d_u(F), Fv = detail::d_v(F);
    const auto Gu = detail::d_u(G), Gv = detail::d_v(G);
    const auto Evv = detail::d_v(E, 2), Guu = detail::d_u(G, 2), Fuv = numerics::fd_mixed(F);
    return detail::combine(E, [&](std::size_t q) {
        const double e = E.values[q], f = F.values[q], gg = G.values[q];
        Eigen::Matrix3d m1;
        m1 << -0.5 * Evv.values[q] + Fuv.values[q] - 0.5 * Guu.values[q], 0.5 * Eu.values[q],
            Fu.values[q] - 0.5 * Ev.values[q], //
            Fv.values[q] - 0.5 * Gu.values[q], e, f, //
            0.5 * Gv.values[q], f, gg;
        Eigen::Matrix3d m2;
        m2 << 0.0, 0.5 * Ev.values[q], 0.5 * Gu.values[q], //
            0.5 * Ev.values[q], e, f,                      //
            0.5 * Gu.values[q], f, gg;
        const double det = e * gg - f * f;
        return (m1.determinant() - m2.determinant()) / (det * det);
    });
}

/// Residual of e_S l - [e1 e1 a + 6 a (e1 a) + 4 a^3 + a l^2] / sqrt(1 + a^2).
inline ResidualReport check_codazzi(const GridField& alpha, const GridField& l, const Coframe& cf, double tol,
                                    std::size_t margin = 2)
{
    const auto [e1a, esa] = directional_derivatives(alpha, cf);
    const auto e1e1a = directional_derivatives(e1a, cf).first;
    const auto esl = directional_derivatives(l, cf).second;
    ResidualReport r;
    detail::accumulate(r, "codazzi",
                       detail::combine(alpha, [&](std::size_t q) {
                           const double a = alpha.values[q];
                           const double x = e1a.values[q];
                           const double ll = l.values[q];
                           return esl.values[q] -
                                  (e1e1a.values[q] + 6.0 * a * x + 4.0 * a * a * a + a * ll * ll) / std::sqrt(1.0 + a * a);
                       }),
                       margin);
    detail::finish(r, tol);
    return r;
}

/// Residual of s^(3/2) e_S l - [s e1e1 a - a (e1 a)^2 + 4 a s (e1 a) - a s^2 K
/// + a l sqrt(s) (e_S a) + a s l^2] with K the induced-metric curvature.
inline ResidualReport check_surface_integrability(const GridField& alpha, const GridField& l, const GridField& K,
                                                  const Coframe& cf, double tol, std::size_t margin = 2)
{
    const auto [e1a, esa] = directional_derivatives(alpha, cf);
    const auto e1e1a = directional_derivatives(e1a, cf).first;
    const auto esl = directional_derivatives(l, cf).second;
    ResidualReport r;
    detail::accumulate(r, "integrability",
                       detail::combine(alpha, [&](std::size_t q) {
                           const double a = alpha.values[q];
                           const double s = 1.0 + a * a;
                           const double x = e1a.values[q];
                           const double ll = l.values[q];
                           return std::pow(s, 1.5) * esl.values[q] -
                                  (s * e1e1a.values[q] - a * x * x + 4.0 * a * s * x - a * s * s * K.values[q] +
                                   a * ll * std::sqrt(s) * esa.values[q] + a * s * ll * ll);
                       }),
                       margin);
    detail::finish(r, tol);
    return r;
}

/// |K_formula - K_reference| on interior cells.
inline ResidualReport gauss_discrepancy(const GridField& alpha, const GridField& l, const Coframe& cf, double tol,
                                        std::size_t margin = 2)
{
    const auto kf = gaussian_curvature_formula(alpha, l, cf);
    const auto kr = gaussian_curvature_reference(cf.metric());
    ResidualReport r;
    detail::accumulate(r, "gauss", detail::combine(kf, [&](std::size_t q) { return kf.values[q] - kr.values[q]; }),
                       margin);
    detail::finish(r, tol);
    return r;
}

/// The Euler-number integrand is the Gaussian curvature.
inline GridField euler_integrand(const GridField& alpha, const GridField& l, const Coframe& cf)
{
    return gaussian_curvature_formula(alpha, l, cf);
}

/// Integral of f against d sigma = hat omega^1 ^ hat omega^2 = J du dv
/// (J = c sqrt(1 + alpha^2) in normal coordinates), composite Simpson in u
/// then v.
inline double patch_total(const GridField& f, const Coframe& cf)
{
    detail::require_nonsingular(cf);
    const GridSpec& g = cf.grid;
    std::vector<double> rows(g.nv);
    std::vector<double> line(g.nu);
    for (std::size_t j = 0; j < g.nv; ++j) {
        for (std::size_t i = 0; i < g.nu; ++i) {
            line[i] = f(i, j) * cf.jacobian(g.index(i, j));
        }
        rows[j] = numerics::simpson_integrate(line, g.du);
    }
    return numerics::simpson_integrate(rows, g.dv);
}

/// Closed surfaces carry singular points where alpha blows up; only patch
/// integrals are supported.
[[noreturn]] inline double closed_surface_euler_number()
{
    throw Error(ErrorKind::ClosedSurfaceUnsupported,
                "the Euler number of a closed surface is not computed; integrate over nonsingular patches");
}

/// Everything the surface-invariants command reports.
struct SurfaceInvariants {
    GridSpec grid;
    GridField alpha, l, K, K_reference;
    Coframe coframe;
    ConnectionForms connection;
    double max_K_discrepancy = 0.0;
};

inline SurfaceInvariants invariants(const SurfaceCoefficients& k, std::size_t margin = 2)
{
    SurfaceInvariants out;
    out.grid = k.grid;
    out.alpha = alpha_field(k);
    out.l = k.l;
    out.coframe = coframe(k);
    out.K = gaussian_curvature_formula(out.alpha, out.l, out.coframe);
    out.K_reference = gaussian_curvature_reference(induced_metric(k));
    const auto e1a = directional_derivatives(out.alpha, out.coframe).first;
    out.connection = connection_forms(out.alpha, out.l, e1a, structure_connection(out.coframe));
    for (std::size_t j = margin; j + margin < k.grid.nv; ++j) {
        for (std::size_t i = margin; i + margin < k.grid.nu; ++i) {
            out.max_K_discrepancy = std::max(out.max_K_discrepancy, std::abs(out.K(i, j) - out.K_reference(i, j)));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reconstruction from invariants
// ---------------------------------------------------------------------------

namespace detail {

inline GridField subsample(const GridField& f)
{
    const std::size_t nu = (f.nu + 1) / 2, nv = (f.nv + 1) / 2;
    GridField out = GridField::zeros(nu, nv, 2.0 * f.du, 2.0 * f.dv);
    for (std::size_t j = 0; j < nv; ++j) {
        for (std::size_t i = 0; i < nu; ++i) {
            out(i, j) = f(2 * i, 2 * j);
        }
    }
    return out;
}

inline Coframe subsample(const Coframe& cf)
{
    GridSpec g{cf.grid.u0, 2.0 * cf.grid.du, (cf.grid.nu + 1) / 2, cf.grid.v0, 2.0 * cf.grid.dv, (cf.grid.nv + 1) / 2};
    return {g, subsample(cf.P1), subsample(cf.Q1), subsample(cf.P2), subsample(cf.Q2)};
}

inline GridField integrability_residual(const GridField& alpha, const GridField& l, const Coframe& cf)
{
    const GridField K = structure_curvature(cf);
    const auto [e1a, esa] = directional_derivatives(alpha, cf);
    const auto e1e1a = directional_derivatives(e1a, cf).first;
    const auto esl = directional_derivatives(l, cf).second;
    return combine(alpha, [&](std::size_t q) {
        const double a = alpha.values[q];
        const double s = 1.0 + a * a;
        const double x = e1a.values[q];
        const double ll = l.values[q];
        return std::pow(s, 1.5) * esl.values[q] - (s * e1e1a.values[q] - a * x * x + 4.0 * a * s * x -
                                                  a * s * s * K.values[q] + a * ll * std::sqrt(s) * esa.values[q] +
                                                  a * s * ll * ll);
    });
}

} // namespace detail

struct InvariantsCheck {
    ResidualReport report;
    double truncation_estimate = 0.0;
};

/// Integrability of (coframe, alpha, l) with K from the structure equations.
/// The threshold is 50 times a Richardson estimate of the finite-difference
/// truncation error (fine grid against every-other-node grid), floored at
/// 1e-10.
inline InvariantsCheck check_invariants(const Coframe& cf, const GridField& alpha, const GridField& l,
                                        double factor = 50.0)
{
    InvariantsCheck out;
    const auto fine = detail::integrability_residual(alpha, l, cf);
    const std::size_t margin = 2;
    if (cf.grid.nu >= 9 && cf.grid.nv >= 9) {
        const auto coarse =
            detail::integrability_residual(detail::subsample(alpha), detail::subsample(l), detail::subsample(cf));
        for (std::size_t j = margin; j + margin < coarse.nv; ++j) {
            for (std::size_t i = margin; i + margin < coarse.nu; ++i) {
                out.truncation_estimate =
                    std::max(out.truncation_estimate, std::abs(coarse(i, j) - fine(2 * i, 2 * j)) / 3.0);
            }
        }
    }
    detail::accumulate(out.report, "integrability", fine, margin);
    detail::finish(out.report, std::max(factor * out.truncation_estimate, 1e-10));
    return out;
}

/// phi_u, phi_v for given invariants: w1 = hat omega^1,
/// w2 = alpha / sqrt(1+alpha^2) hat omega^2, w3 = hat omega^2 / sqrt(1+alpha^2),
/// w12 = l hat omega^1 + (2 alpha^2 + e1 alpha) / sqrt(1+alpha^2) hat omega^2.
inline GeneratorGrid generators(const Coframe& cf, const GridField& alpha, const GridField& l)
{
    const auto e1a = directional_derivatives(alpha, cf).first;
    const GridSpec& g = cf.grid;
    GeneratorGrid gen{g, {g.zeros(), g.zeros(), g.zeros(), g.zeros()}, {g.zeros(), g.zeros(), g.zeros(), g.zeros()}};
    for (std::size_t q = 0; q < g.size(); ++q) {
        const double a = alpha.values[q];
        const double rs = std::sqrt(1.0 + a * a);
        const double w12_hat2 = (2.0 * a * a + e1a.values[q]) / rs;
        const double p1 = cf.P1.values[q], q1 = cf.Q1.values[q], p2 = cf.P2.values[q], q2 = cf.Q2.values[q];
        gen.u[0].values[q] = p1;
        gen.u[1].values[q] = a / rs * p2;
        gen.u[2].values[q] = p2 / rs;
        gen.u[3].values[q] = l.values[q] * p1 + w12_hat2 * p2;
        gen.v[0].values[q] = q1;
        gen.v[1].values[q] = a / rs * q2;
        gen.v[2].values[q] = q2 / rs;
        gen.v[3].values[q] = l.values[q] * q1 + w12_hat2 * q2;
    }
    return gen;
}

inline SurfacePatch reconstruct_from_invariants(const Coframe& cf, const GridField& alpha, const GridField& l,
                                                const OrientedFrame& initial = OrientedFrame{},
                                                PathOrder order = PathOrder::UFirst)
{
    cf.grid.validate();
    for (const GridField* f : {&cf.P1, &cf.Q1, &cf.P2, &cf.Q2, &alpha, &l}) {
        if (f->values.size() != cf.grid.size()) {
            throw Error(ErrorKind::InvalidArgument, "invariant grids do not match the coframe grid");
        }
    }
    const auto check = check_invariants(cf, alpha, l);
    if (!check.report.pass) {
        throw ToleranceError(ErrorKind::IntegrabilityViolation,
                             "invariants violate the integrability condition at cell (" +
                                 std::to_string(check.report.argmax_cell.first) + ", " +
                                 std::to_string(check.report.argmax_cell.second) + ")",
                             check.report.max_residual);
    }
    const auto gen = generators(cf, alpha, l);
    return patch_from_frames(gen, integrate_frames(gen, initial, order));
}

} // namespace h1::surfaces
