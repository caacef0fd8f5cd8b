#pragma once

// The Heisenberg group H1 with its contact form, CR structure and adapted
// metric; the motion group PSH(1) in its 4x4 matrix form; oriented frames and
// the moving-frame formula.
//
// Conventions: points are (x, y, z) with the product
//   (x1,y1,z1) o (x2,y2,z2) = (x1+x2, y1+y2, z1+z2 + y1 x2 - x1 y2),
// the left-invariant frame is e1 = d/dx + y d/dz, e2 = d/dy - x d/dz, T = d/dz,
// and the contact form is theta0 = dz + x dy - y dx.

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "h1/errors.hpp"
#include "h1/numerics.hpp"

namespace h1 {

using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Default tolerances; every check that uses one also takes an override.
namespace tol {
inline constexpr double contact_plane = 1e-9;
inline constexpr double group_membership = 1e-9;
inline constexpr double rotation_drift = 1e-10;
inline constexpr double base_point = 1e-12;
} // namespace tol

struct H1Point {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 vec() const { return {x, y, z}; }
    static H1Point from(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }

    friend bool operator==(const H1Point&, const H1Point&) = default;
};

inline H1Point group_mul(const H1Point& p, const H1Point& q)
{
    return {p.x + q.x, p.y + q.y, p.z + q.z + p.y * q.x - p.x * q.y};
}

inline H1Point group_inv(const H1Point& p) { return {-p.x, -p.y, -p.z}; }

/// Frame components (e1, e2, T) of a coordinate vector based at p.
inline Vec3 coord_to_frame(const H1Point& p, const Vec3& coord)
{
    return {coord.x(), coord.y(), coord.z() + p.x * coord.y() - p.y * coord.x()};
}

inline Vec3 frame_to_coord(const H1Point& p, const Vec3& frame)
{
    return {frame.x(), frame.y(), frame.z() - p.x * frame.y() + p.y * frame.x()};
}

/// A tangent vector carrying both its (d/dx, d/dy, d/dz) and its (e1, e2, T)
/// components; both are fixed at construction.
class TangentVector {
public:
    TangentVector() = default;

    static TangentVector from_coord(const H1Point& base, const Vec3& coord)
    {
        return TangentVector(base, coord, coord_to_frame(base, coord));
    }

    static TangentVector from_frame(const H1Point& base, const Vec3& frame)
    {
        return TangentVector(base, frame_to_coord(base, frame), frame);
    }

    const H1Point& base() const { return base_; }
    const Vec3& coord() const { return coord_; }
    const Vec3& frame() const { return frame_; }

    TangentVector scaled(double s) const { return TangentVector(base_, s * coord_, s * frame_); }

private:
    TangentVector(const H1Point& base, const Vec3& coord, const Vec3& frame)
        : base_(base), coord_(coord), frame_(frame)
    {
    }

    H1Point base_;
    Vec3 coord_ = Vec3::Zero();
    Vec3 frame_ = Vec3::Zero();
};

inline TangentVector e1_at(const H1Point& p) { return TangentVector::from_frame(p, Vec3::UnitX()); }
inline TangentVector e2_at(const H1Point& p) { return TangentVector::from_frame(p, Vec3::UnitY()); }
inline TangentVector T_at(const H1Point& p) { return TangentVector::from_frame(p, Vec3::UnitZ()); }

/// theta0(v) = dz + x dy - y dx, evaluated from the coordinate components.
inline double contact_form(const TangentVector& v)
{
    const H1Point& p = v.base();
    const Vec3& c = v.coord();
    return c.z() + p.x * c.y() - p.y * c.x();
}

inline TangentVector apply_J0(const TangentVector& v, double contact_tol = tol::contact_plane)
{
    const double theta = contact_form(v);
    if (!(std::abs(theta) <= contact_tol)) {
        throw ToleranceError(ErrorKind::NotInContactPlane, "J0 is only defined on the contact plane", theta);
    }
    return TangentVector::from_frame(v.base(), Vec3(-v.frame().y(), v.frame().x(), 0.0));
}

inline bool same_base(const H1Point& p, const H1Point& q, double base_tol = tol::base_point)
{
    const double scale = 1.0 + std::max({std::abs(p.x), std::abs(p.y), std::abs(p.z)});
    return (p.vec() - q.vec()).cwiseAbs().maxCoeff() <= base_tol * scale;
}

/// Adapted metric g = h + theta0^2: (e1, e2, T) is orthonormal.
inline double adapted_inner(const TangentVector& v, const TangentVector& w, double base_tol = tol::base_point)
{
    if (!same_base(v.base(), w.base(), base_tol)) {
        throw Error(ErrorKind::BasePointMismatch, "inner product of vectors at different points");
    }
    return v.frame().dot(w.frame());
}

inline double adapted_norm(const TangentVector& v) { return v.frame().norm(); }

// ---------------------------------------------------------------------------
// PSH(1)
// ---------------------------------------------------------------------------

inline Mat2 rotation_matrix(double theta)
{
    Mat2 r;
    r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return r;
}

/// Heisenberg rigid motion L_p o Phi_R. The dependent matrix entries are
/// always derived from (p, R).
class HeisenbergMotion {
public:
    HeisenbergMotion() = default;

    HeisenbergMotion(const H1Point& p, const Mat2& r, double group_tol = tol::group_membership) : p_(p)
    {
        const double drift = std::max((r.transpose() * r - Mat2::Identity()).cwiseAbs().maxCoeff(),
                                      std::abs(r.determinant() - 1.0));
        if (!(drift <= group_tol) || !p.finite()) {
            throw ToleranceError(ErrorKind::NotInGroup, "rotation block is not in SO(2)", drift);
        }
        r_ = drift > tol::rotation_drift ? numerics::so2_project(r) : r;
    }

    static HeisenbergMotion identity() { return {}; }
    static HeisenbergMotion translation(const H1Point& p) { return HeisenbergMotion(p, Mat2::Identity()); }
    static HeisenbergMotion rotation(double theta) { return HeisenbergMotion(H1Point{}, rotation_matrix(theta)); }
    static HeisenbergMotion from_angle(const H1Point& p, double theta)
    {
        return HeisenbergMotion(p, rotation_matrix(theta));
    }

    /// Reads (p, R) from a 4x4 matrix after checking the PSH(1) pattern.
    static HeisenbergMotion from_matrix(const Mat4& m, double group_tol = tol::group_membership)
    {
        const double residual = numerics::psh_residual(m);
        if (!(residual <= group_tol) || !m.allFinite()) {
            throw ToleranceError(ErrorKind::NotInGroup, "matrix does not have the PSH(1) form", residual);
        }
        return HeisenbergMotion(H1Point{m(1, 0), m(2, 0), m(3, 0)}, m.block<2, 2>(1, 1), group_tol);
    }

    const H1Point& p() const { return p_; }
    const Mat2& R() const { return r_; }
    double angle() const { return std::atan2(r_(1, 0), r_(0, 0)); }

    Mat4 matrix() const
    {
        const double a = r_(0, 0), b = r_(0, 1), c = r_(1, 0), d = r_(1, 1);
        Mat4 m;
        m << 1.0, 0.0, 0.0, 0.0,                                   //
            p_.x, a, b, 0.0,                                        //
            p_.y, c, d, 0.0,                                        //
            p_.z, a * p_.y - c * p_.x, b * p_.y - d * p_.x, 1.0;
        return m;
    }

    /// Lower-right 3x3 block of the matrix: the differential in coordinates.
    Mat3 differential() const { return matrix().block<3, 3>(1, 1); }

private:
    H1Point p_;
    Mat2 r_ = Mat2::Identity();
};

inline H1Point motion_apply(const HeisenbergMotion& g, const H1Point& q)
{
    const Mat2& r = g.R();
    const H1Point& p = g.p();
    const double a = r(0, 0), b = r(0, 1), c = r(1, 0), d = r(1, 1);
    return {a * q.x + b * q.y + p.x, c * q.x + d * q.y + p.y,
            (a * p.y - c * p.x) * q.x + (b * p.y - d * p.x) * q.y + q.z + p.z};
}

/// g1 o g2 (g2 acts first); its matrix is the product of the matrices.
inline HeisenbergMotion motion_compose(const HeisenbergMotion& g1, const HeisenbergMotion& g2)
{
    return HeisenbergMotion(motion_apply(g1, g2.p()), g1.R() * g2.R());
}

inline HeisenbergMotion motion_inverse(const HeisenbergMotion& g)
{
    const HeisenbergMotion back(H1Point{}, g.R().transpose());
    return HeisenbergMotion(motion_apply(back, group_inv(g.p())), g.R().transpose());
}

/// Push-forward: frame components transform by diag(R, 1), equivalently the
/// coordinate components by the lower-right block of the matrix.
inline TangentVector motion_pushforward(const HeisenbergMotion& g, const TangentVector& v)
{
    Vec3 frame = v.frame();
    frame.head<2>() = g.R() * frame.head<2>();
    return TangentVector::from_frame(motion_apply(g, v.base()), frame);
}

// ---------------------------------------------------------------------------
// Oriented frames and the Maurer-Cartan form
// ---------------------------------------------------------------------------

/// (p; X, Y, T) with X a unit contact vector and Y = J0 X. Identified with
/// the motion taking the standard frame at the origin to it.
class OrientedFrame {
public:
    OrientedFrame() = default;
    explicit OrientedFrame(const HeisenbergMotion& g) : g_(g) {}
    OrientedFrame(const H1Point& p, double angle) : g_(HeisenbergMotion::from_angle(p, angle)) {}

    /// Builds the frame from a contact vector X (normalized here).
    static OrientedFrame from_x(const TangentVector& x, double contact_tol = tol::contact_plane)
    {
        const double theta = contact_form(x);
        if (!(std::abs(theta) <= contact_tol)) {
            throw ToleranceError(ErrorKind::NotInContactPlane, "frame vector X must be horizontal", theta);
        }
        const double n = std::hypot(x.frame().x(), x.frame().y());
        if (!(n > 0.0)) {
            throw Error(ErrorKind::InvalidArgument, "frame vector X vanishes");
        }
        return OrientedFrame(x.base(), std::atan2(x.frame().y() / n, x.frame().x() / n));
    }

    const HeisenbergMotion& motion() const { return g_; }
    const H1Point& point() const { return g_.p(); }
    TangentVector X() const { return TangentVector::from_frame(point(), Vec3(g_.R()(0, 0), g_.R()(1, 0), 0.0)); }
    TangentVector Y() const { return TangentVector::from_frame(point(), Vec3(g_.R()(0, 1), g_.R()(1, 1), 0.0)); }
    TangentVector T() const { return T_at(point()); }

private:
    HeisenbergMotion g_;
};

inline Mat4 frame_to_matrix(const OrientedFrame& f) { return f.motion().matrix(); }

inline OrientedFrame matrix_to_frame(const Mat4& m, double group_tol = tol::group_membership)
{
    return OrientedFrame(HeisenbergMotion::from_matrix(m, group_tol));
}

/// Coefficients of (omega^1, omega^2, omega^3, omega_1^2) on one direction.
struct MaurerCartanValue {
    double w1 = 0.0;
    double w2 = 0.0;
    double w3 = 0.0;
    double w12 = 0.0;

    /// psh(1) element; the structural zeros are literal zeros.
    Mat4 matrix() const
    {
        Mat4 m;
        m << 0.0, 0.0, 0.0, 0.0, //
            w1, 0.0, -w12, 0.0,  //
            w2, w12, 0.0, 0.0,   //
            w3, w2, -w1, 0.0;
        return m;
    }

    MaurerCartanValue operator+(const MaurerCartanValue& o) const
    {
        return {w1 + o.w1, w2 + o.w2, w3 + o.w3, w12 + o.w12};
    }
    MaurerCartanValue operator*(double s) const { return {s * w1, s * w2, s * w3, s * w12}; }
};

/// dM = M omega, i.e. dp = X w1 + Y w2 + T w3, dX = Y w12 + T w2,
/// dY = -X w12 - T w1, dT = 0.
inline Mat4 moving_frame_derivative(const Mat4& m, const MaurerCartanValue& mc) { return m * mc.matrix(); }

inline Mat4 moving_frame_derivative(const OrientedFrame& f, const MaurerCartanValue& mc)
{
    return moving_frame_derivative(frame_to_matrix(f), mc);
}

} // namespace h1
