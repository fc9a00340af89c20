#pragma once

// Orbital camera: five parameters (r, theta, phi, x, y) around the center of
// an object's bounding box. Up is +Y; theta is measured from +Y, phi from +X
// toward +Z. Roll about the viewing axis is not modeled.

#include <Eigen/Geometry>
#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "viewsphere/polysphere.hpp"

namespace viewsphere {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps an angle into [0, 2pi).
inline double wrap_angle(double a) {
    double w = std::fmod(a, kTwoPi);
    if (w < 0.0) {
        w += kTwoPi;
    }
    return w >= kTwoPi ? 0.0 : w;
}

/// Signed shortest difference a - b on the circle, in [-pi, pi].
inline double angle_difference(double a, double b) {
    double d = std::fmod(a - b, kTwoPi);
    if (d > kPi) {
        d -= kTwoPi;
    } else if (d < -kPi) {
        d += kTwoPi;
    }
    return d;
}

struct CameraPose {
    double r = 1.0;
    double theta = 0.0;
    double phi = 0.0;
    double x = 0.0;
    double y = 0.0;
};

/// Limits on the local viewing-angle offsets (radians).
struct OffsetBounds {
    double lo = -kPi / 8.0;
    double hi = kPi / 8.0;
};

/// Checks the pose invariants and returns the pose with phi wrapped.
inline CameraPose validated(CameraPose pose, const OffsetBounds& bounds = {}) {
    if (!(pose.r > 0.0) || !std::isfinite(pose.r)) {
        throw std::invalid_argument("camera radius must be positive and finite");
    }
    if (!(pose.theta >= 0.0 && pose.theta <= kPi)) {
        throw std::invalid_argument("camera polar angle must lie in [0, pi]");
    }
    if (!std::isfinite(pose.phi)) {
        throw std::invalid_argument("camera azimuth must be finite");
    }
    if (pose.x < bounds.lo || pose.x > bounds.hi || pose.y < bounds.lo || pose.y > bounds.hi) {
        throw std::invalid_argument("camera viewing offsets outside configured bounds");
    }
    pose.phi = wrap_angle(pose.phi);
    return pose;
}

/// Unit vector for polar angle theta (from +Y) and azimuth phi.
inline Vec3 spherical_direction(double theta, double phi) {
    const double s = std::sin(theta);
    return {s * std::cos(phi), std::cos(theta), s * std::sin(phi)};
}

/// Inverse of spherical_direction; phi in [0, 2pi), theta in [0, pi].
inline std::pair<double, double> spherical_angles(const Vec3& direction) {
    const Vec3 d = direction.normalized();
    const double theta = std::acos(std::clamp(d.y(), -1.0, 1.0));
    const double phi = wrap_angle(std::atan2(d.z(), d.x()));
    return {theta, phi};
}

struct CameraFrame {
    Vec3 position;
    Vec3 forward;  ///< unit viewing direction
    Vec3 up;       ///< unit, orthogonal to forward
};

/// Places the camera and orients it. With x = y = 0 the camera looks exactly
/// at center; x yaws about the camera's local up axis, then y pitches about
/// its (yawed) local right axis.
inline CameraFrame pose_to_cartesian(const CameraPose& pose, const Vec3& center = Vec3::Zero()) {
    const CameraPose p = validated(pose, OffsetBounds{-kPi, kPi});
    const Vec3 radial = spherical_direction(p.theta, p.phi);
    // Tangent frame from the parameterization itself, so the poles are
    // well defined: e_phi is the azimuthal direction, -e_theta points "north".
    const Vec3 e_phi(-std::sin(p.phi), 0.0, std::cos(p.phi));
    const Vec3 e_theta(std::cos(p.theta) * std::cos(p.phi), -std::sin(p.theta), std::cos(p.theta) * std::sin(p.phi));

    Vec3 forward = -radial;
    Vec3 up = -e_theta;
    Vec3 right = -e_phi;  // right x up == -forward

    const Eigen::AngleAxisd yaw(p.x, up);
    forward = yaw * forward;
    right = yaw * right;
    const Eigen::AngleAxisd pitch(p.y, right);
    forward = pitch * forward;
    up = pitch * up;

    return {center + p.r * radial, forward.normalized(), up.normalized()};
}

struct BoundingBox {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    Vec3 center() const { return 0.5 * (min + max); }
    Vec3 extents() const { return max - min; }
};

struct RadiusBounds {
    double r_min;
    double r_max;
};

/// Orbit radii relative to the object's size: 2x and 10x the longest box edge.
inline RadiusBounds radius_bounds(const BoundingBox& box) {
    const Vec3 e = box.extents();
    if ((e.array() < 0.0).any() || !e.allFinite()) {
        throw std::invalid_argument("bounding box max corner must dominate min corner");
    }
    const double edge = e.maxCoeff();
    if (!(edge > 0.0)) {
        throw std::invalid_argument("bounding box has zero extent");
    }
    return {2.0 * edge, 10.0 * edge};
}

enum class CanonicalView { Front, Back, Left, Right, Top, Bottom };

inline constexpr std::array<CanonicalView, 6> kCanonicalViews = {
    CanonicalView::Front, CanonicalView::Back, CanonicalView::Left,
    CanonicalView::Right, CanonicalView::Top,  CanonicalView::Bottom};

inline std::string_view to_string(CanonicalView v) {
    switch (v) {
        case CanonicalView::Front: return "front";
        case CanonicalView::Back: return "back";
        case CanonicalView::Left: return "left";
        case CanonicalView::Right: return "right";
        case CanonicalView::Top: return "top";
        case CanonicalView::Bottom: return "bottom";
    }
    return "?";
}

inline CanonicalView parse_view(std::string_view label) {
    for (CanonicalView v : kCanonicalViews) {
        if (to_string(v) == label) {
            return v;
        }
    }
    throw std::invalid_argument("unknown canonical view '" + std::string(label) + "'");
}

/// Parses an axis constant "+X", "-Y", ... (a Unicode minus is accepted).
inline Vec3 parse_axis(std::string_view text) {
    std::string s(text);
    if (s.rfind("−", 0) == 0) {
        s = "-" + s.substr(std::string("−").size());
    }
    if (s.size() != 2 || (s[0] != '+' && s[0] != '-')) {
        throw std::invalid_argument("axis must look like +X or -Z, got '" + std::string(text) + "'");
    }
    const double sign = s[0] == '+' ? 1.0 : -1.0;
    switch (s[1]) {
        case 'X': case 'x': return {sign, 0.0, 0.0};
        case 'Y': case 'y': return {0.0, sign, 0.0};
        case 'Z': case 'z': return {0.0, 0.0, sign};
        default: break;
    }
    throw std::invalid_argument("unknown axis '" + std::string(text) + "'");
}

inline std::string axis_name(const Vec3& axis) {
    for (int k = 0; k < 3; ++k) {
        if (std::abs(std::abs(axis[k]) - 1.0) < 1e-12) {
            return std::string(axis[k] > 0 ? "+" : "-") + "XYZ"[k];
        }
    }
    throw std::invalid_argument("axis is not a coordinate axis");
}

/// Dataset alignment: which world axes are the object's up and front.
/// The object's left is up x front, its right the opposite.
class ViewConvention {
public:
    ViewConvention() : ViewConvention(Vec3(0, 1, 0), Vec3(0, 0, -1)) {}

    ViewConvention(const Vec3& up, const Vec3& front) : up_(up.normalized()), front_(front.normalized()) {
        if (!up.allFinite() || !front.allFinite() || up.norm() == 0.0 || front.norm() == 0.0) {
            throw std::invalid_argument("view convention axes must be non-zero");
        }
        if (std::abs(up_.dot(front_)) > 1e-12) {
            throw std::invalid_argument("view convention up and front axes must be orthogonal");
        }
    }

    static ViewConvention from_names(std::string_view up, std::string_view front) {
        return ViewConvention(parse_axis(up), parse_axis(front));
    }

    const Vec3& up() const noexcept { return up_; }
    const Vec3& front() const noexcept { return front_; }

    Vec3 direction(CanonicalView view) const {
        switch (view) {
            case CanonicalView::Front: return front_;
            case CanonicalView::Back: return -front_;
            case CanonicalView::Left: return up_.cross(front_);
            case CanonicalView::Right: return -up_.cross(front_);
            case CanonicalView::Top: return up_;
            case CanonicalView::Bottom: return -up_;
        }
        throw std::invalid_argument("unknown canonical view");
    }

private:
    Vec3 up_;
    Vec3 front_;
};

inline Vec3 canonical_direction(const ViewConvention& convention, CanonicalView view) {
    return convention.direction(view);
}

inline Vec3 canonical_direction(const ViewConvention& convention, std::string_view label) {
    return convention.direction(parse_view(label));
}

/// The gold cell of a canonical view.
inline CellId canonical_cell(const PolySphere& sphere, const ViewConvention& convention, CanonicalView view) {
    return sphere.nearest_cell(convention.direction(view));
}

}  // namespace viewsphere
