#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "viewsphere/camera.hpp"
#include "viewsphere/random.hpp"

using namespace viewsphere;

namespace {
void expect_vec_near(const Vec3& a, const Vec3& b, double tol) {
    EXPECT_NEAR(a.x(), b.x(), tol);
    EXPECT_NEAR(a.y(), b.y(), tol);
    EXPECT_NEAR(a.z(), b.z(), tol);
}
}  // namespace

TEST(PoseToCartesian, PolarAxis) {
    const auto f = pose_to_cartesian({5.0, 0.0, 0.0, 0.0, 0.0});
    expect_vec_near(f.position, Vec3(0, 5, 0), 1e-12);
    expect_vec_near(f.forward, Vec3(0, -1, 0), 1e-12);
}

TEST(PoseToCartesian, Equator) {
    const auto f = pose_to_cartesian({2.0, kPi / 2, 0.0, 0.0, 0.0});
    expect_vec_near(f.position, Vec3(2, 0, 0), 1e-12);
    expect_vec_near(f.forward, Vec3(-1, 0, 0), 1e-12);
    expect_vec_near(f.up, Vec3(0, 1, 0), 1e-12);
}

TEST(PoseToCartesian, MatchesDirectTrigonometry) {
    const double r = 5.0, theta = kPi / 3, phi = kPi / 4;
    const auto f = pose_to_cartesian({r, theta, phi, 0.0, 0.0});
    // sin(pi/3) = sqrt(3)/2, cos(pi/3) = 1/2, cos(pi/4) = sin(pi/4) = sqrt(2)/2
    const Vec3 expected(5.0 * std::sqrt(3.0) / 2.0 * std::sqrt(2.0) / 2.0, 2.5,
                        5.0 * std::sqrt(3.0) / 2.0 * std::sqrt(2.0) / 2.0);
    expect_vec_near(f.position, expected, 1e-12);
}

TEST(PoseToCartesian, OffsetCenterAndLookAt) {
    const Vec3 c(1.0, -2.0, 3.0);
    const auto f = pose_to_cartesian({3.0, 1.1, 4.0, 0.0, 0.0}, c);
    expect_vec_near(f.forward, (c - f.position).normalized(), 1e-12);
    EXPECT_NEAR((f.position - c).norm(), 3.0, 1e-9 * 3.0);
}

TEST(PoseToCartesian, YawAndPitchRotateLocally) {
    const auto base = pose_to_cartesian({4.0, kPi / 2, 0.0, 0.0, 0.0});
    const auto yawed = pose_to_cartesian({4.0, kPi / 2, 0.0, 0.2, 0.0});
    const auto pitched = pose_to_cartesian({4.0, kPi / 2, 0.0, 0.0, 0.3});
    expect_vec_near(yawed.position, base.position, 1e-12);
    EXPECT_NEAR(std::acos(yawed.forward.dot(base.forward)), 0.2, 1e-12);
    EXPECT_NEAR(yawed.forward.y(), 0.0, 1e-12);  // yaw keeps the view horizontal
    EXPECT_NEAR(std::acos(pitched.forward.dot(base.forward)), 0.3, 1e-12);
    EXPECT_NEAR(pitched.forward.z(), 0.0, 1e-12);  // pitch stays in the vertical plane
    EXPECT_NEAR(pitched.forward.dot(pitched.up), 0.0, 1e-12);
}

TEST(PoseToCartesian, RadiusAndWrappingProperties) {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
        const CameraPose p{rng.uniform(0.1, 50.0), rng.uniform(0.0, kPi), rng.uniform(0.0, kTwoPi),
                           rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)};
        const Vec3 c(rng.normal(), rng.normal(), rng.normal());
        const auto f = pose_to_cartesian(p, c);
        EXPECT_NEAR((f.position - c).norm(), p.r, 1e-9 * p.r);
        EXPECT_NEAR(f.forward.norm(), 1.0, 1e-12);
        CameraPose wrapped = p;
        wrapped.phi += kTwoPi;
        const auto g = pose_to_cartesian(wrapped, c);
        expect_vec_near(g.position, f.position, 1e-9 * p.r);
    }
}

TEST(PoseToCartesian, RejectsInvalidPoses) {
    EXPECT_THROW(pose_to_cartesian({0.0, 0.1, 0.0, 0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(pose_to_cartesian({1.0, -0.1, 0.0, 0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(pose_to_cartesian({1.0, 4.0, 0.0, 0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(validated({1.0, 1.0, 0.0, 0.5, 0.0}), std::invalid_argument);  // beyond pi/8
}

TEST(Angles, WrapAndDifference) {
    EXPECT_DOUBLE_EQ(wrap_angle(-0.5), kTwoPi - 0.5);
    EXPECT_DOUBLE_EQ(wrap_angle(kTwoPi), 0.0);
    EXPECT_NEAR(angle_difference(0.1, kTwoPi - 0.1), 0.2, 1e-12);
    const auto [theta, phi] = spherical_angles(spherical_direction(0.7, 5.0));
    EXPECT_NEAR(theta, 0.7, 1e-12);
    EXPECT_NEAR(phi, 5.0, 1e-12);
}

TEST(RadiusBounds, UnitCube) {
    const auto b = radius_bounds({Vec3(0, 0, 0), Vec3(1, 1, 1)});
    EXPECT_DOUBLE_EQ(b.r_min, 2.0);
    EXPECT_DOUBLE_EQ(b.r_max, 10.0);
}

TEST(RadiusBounds, UsesLongestEdge) {
    const auto b = radius_bounds({Vec3(-0.5, 0, 1), Vec3(0.5, 2, 5)});
    EXPECT_DOUBLE_EQ(b.r_min, 8.0);
    EXPECT_DOUBLE_EQ(b.r_max, 40.0);
    const auto c = radius_bounds({Vec3(0, 0, 0), Vec3(3, 3, 3)});
    EXPECT_DOUBLE_EQ(c.r_min, 6.0);
    EXPECT_DOUBLE_EQ(c.r_max, 30.0);
}

TEST(RadiusBounds, DegenerateBoxRejected) {
    EXPECT_THROW(radius_bounds({Vec3(1, 1, 1), Vec3(1, 1, 1)}), std::invalid_argument);
    EXPECT_THROW(radius_bounds({Vec3(1, 1, 1), Vec3(0, 2, 2)}), std::invalid_argument);
}

TEST(ViewConvention, DefaultDirections) {
    const ViewConvention vc;
    expect_vec_near(canonical_direction(vc, "top"), Vec3(0, 1, 0), 0);
    expect_vec_near(canonical_direction(vc, "bottom"), Vec3(0, -1, 0), 0);
    expect_vec_near(canonical_direction(vc, "front"), Vec3(0, 0, -1), 0);
    expect_vec_near(canonical_direction(vc, "back"), Vec3(0, 0, 1), 0);
    const Vec3 left = vc.up().cross(vc.front());
    expect_vec_near(canonical_direction(vc, "left"), left, 0);
    expect_vec_near(canonical_direction(vc, "right"), -left, 0);
}

TEST(ViewConvention, SixDistinctOrthogonalOrAntipodal) {
    const auto vc = ViewConvention::from_names("+Z", "+X");
    for (auto a : kCanonicalViews) {
        for (auto b : kCanonicalViews) {
            const double d = vc.direction(a).dot(vc.direction(b));
            if (a == b) {
                EXPECT_NEAR(d, 1.0, 1e-15);
            } else {
                EXPECT_TRUE(std::abs(d) < 1e-15 || std::abs(d + 1.0) < 1e-15);
            }
        }
    }
}

TEST(ViewConvention, Errors) {
    EXPECT_THROW(canonical_direction(ViewConvention{}, "diagonal"), std::invalid_argument);
    EXPECT_THROW(ViewConvention::from_names("+Y", "-Y"), std::invalid_argument);
    EXPECT_THROW(parse_axis("Y"), std::invalid_argument);
    EXPECT_THROW(parse_axis("+W"), std::invalid_argument);
    EXPECT_EQ(axis_name(parse_axis("−Z")), "-Z");
}

TEST(ViewConvention, GoldCellsOnSphere) {
    const auto s = PolySphere::build(10);
    const ViewConvention vc;
    EXPECT_EQ(canonical_cell(s, vc, CanonicalView::Top), 0U);
    EXPECT_EQ(canonical_cell(s, vc, CanonicalView::Bottom), 11U);
    std::set<CellId> cells;
    for (auto v : kCanonicalViews) {
        cells.insert(canonical_cell(s, vc, v));
    }
    EXPECT_EQ(cells.size(), 6U);
}
