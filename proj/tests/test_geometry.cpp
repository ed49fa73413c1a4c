#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fringelab/geometry.hpp"
#include "fringelab/rng.hpp"

using namespace fringelab;

namespace {

Image plane_depth(const StereoCalibration& calib, double z) {
    Image d(calib.camera.width, calib.camera.height, z);
    return d;
}

// Depth along each camera ray to a sphere; pixels missing the sphere are
// masked out.
Image sphere_depth(const StereoCalibration& calib, const Vec3& center, double radius,
                   std::vector<uint8_t>& mask) {
    Image d(calib.camera.width, calib.camera.height);
    mask.assign(d.size(), 0);
    for (int y = 0; y < d.height; y++)
        for (int x = 0; x < d.width; x++) {
            const Vec3 r = camera_ray(calib, x, y);
            const double dd = r.x * r.x + r.y * r.y + r.z * r.z;
            const double dc = r.x * center.x + r.y * center.y + r.z * center.z;
            const double disc = dc * dc - dd * (center.x * center.x + center.y * center.y +
                                                center.z * center.z - radius * radius);
            if (disc <= 0.0) continue;
            const double z = (dc - std::sqrt(disc)) / dd;
            if (z <= 0.0) continue;
            d.at(y, x) = z;
            mask[static_cast<size_t>(y) * d.width + x] = 1;
        }
    return d;
}

Image exact_projector_coords(const StereoCalibration& calib, const Image& depth) {
    Image up(depth.width, depth.height);
    for (int y = 0; y < depth.height; y++)
        for (int x = 0; x < depth.width; x++)
            up.at(y, x) = projector_column(calib, point_from_depth(calib, x, y, depth.at(y, x)));
    return up;
}

}  // namespace

TEST_CASE("calibration validation") {
    StereoCalibration c = make_default_rig(64, 128, 500.0);
    CHECK_NOTHROW(c.validate());
    c.rotation[0] = 2.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    StereoCalibration c2 = make_default_rig(64, 128, 500.0);
    c2.camera.fx = -1.0;
    CHECK_THROWS_AS(c2.validate(), std::invalid_argument);
}

TEST_CASE("phase/projector-coordinate conversions") {
    CHECK(phase_to_projector_coord(0.0, 36, 5.0) == 5.0);
    CHECK(phase_to_projector_coord(kTwoPi, 36, 5.0) == doctest::Approx(41.0).epsilon(1e-15));
    for (double up : {0.0, 13.7, 100.2}) {
        const double phi = projector_coord_to_phase(up, 24, 0.0);
        CHECK(phase_to_projector_coord(phi, 24, 0.0) == doctest::Approx(up).epsilon(1e-13));
    }
}

TEST_CASE("triangulated plane matches geometry to 1e-6 mm") {
    StereoCalibration calib = make_default_rig(64, 128, 500.0);
    Image depth = plane_depth(calib, 500.0);
    Image up = exact_projector_coords(calib, depth);
    std::vector<uint8_t> valid(depth.size(), 1);
    PointCloud cloud = triangulate(up, valid, calib);
    PointCloud truth = cloud_from_depth(depth, valid, calib);
    size_t n = 0;
    for (size_t i = 0; i < cloud.valid.size(); i++) {
        REQUIRE(cloud.valid[i] == 1);
        CHECK(norm(cloud.point(i) - truth.point(i)) < 1e-6);
        n++;
    }
    CHECK(n == depth.size());
    CHECK(cloud_rmse(cloud, truth) < 1e-6);
}

TEST_CASE("triangulated sphere: fitted radius within 0.01 mm") {
    StereoCalibration calib = make_default_rig(128, 256, 500.0);
    std::vector<uint8_t> mask;
    Image depth = sphere_depth(calib, {0.0, 0.0, 520.0}, 50.0, mask);
    Image up = exact_projector_coords(calib, depth);
    PointCloud cloud = triangulate(up, mask, calib);
    SphereFit fit = fit_sphere(cloud);
    CHECK(std::abs(fit.radius - 50.0) < 0.01);
    CHECK(std::abs(fit.center.z - 520.0) < 0.01);
}

TEST_CASE("degenerate ray is invalidated without NaN") {
    StereoCalibration calib = make_default_rig(8, 16, 500.0);
    // pick u_p that makes the column plane parallel to the central ray
    const Vec3 d = camera_ray(calib, 4, 4);
    const auto& R = calib.rotation;
    const double r0d = R[0] * d.x + R[1] * d.y + R[2] * d.z;
    const double r2d = R[6] * d.x + R[7] * d.y + R[8] * d.z;
    const double up_degenerate = calib.projector.cx + calib.projector.fx * r0d / r2d;
    Image up(8, 8, up_degenerate);
    std::vector<uint8_t> valid(up.size(), 1);
    PointCloud cloud = triangulate(up, valid, calib);
    CHECK(cloud.valid[4 * 8 + 4] == 0);
    for (double v : cloud.xyz) CHECK(std::isfinite(v));
}

TEST_CASE("cloud_rmse identities") {
    StereoCalibration calib = make_default_rig(16, 32, 500.0);
    Image depth = plane_depth(calib, 480.0);
    std::vector<uint8_t> valid(depth.size(), 1);
    PointCloud a = cloud_from_depth(depth, valid, calib);
    CHECK(cloud_rmse(a, a) == 0.0);

    // constant 1 mm z offset -> 1.0 mm (points offset along z only)
    PointCloud b = a;
    for (size_t i = 0; i < b.valid.size(); i++) b.xyz[3 * i + 2] += 1.0;
    CHECK(cloud_rmse(a, b) == doctest::Approx(1.0).epsilon(1e-12));

    PointCloud empty = a;
    std::fill(empty.valid.begin(), empty.valid.end(), 0);
    CHECK_THROWS_AS(cloud_rmse(a, empty), std::invalid_argument);
}

TEST_CASE("cloud_rmse is invariant under a common rigid transform") {
    Rng rng(5);
    StereoCalibration calib = make_default_rig(16, 32, 500.0);
    std::vector<uint8_t> mask;
    Image depth = sphere_depth(calib, {2.0, -3.0, 515.0}, 40.0, mask);
    PointCloud a = cloud_from_depth(depth, mask, calib);
    PointCloud b = a;
    for (size_t i = 0; i < b.valid.size(); i++)
        if (b.valid[i]) {
            b.xyz[3 * i] += 0.01 * rng.normal();
            b.xyz[3 * i + 2] += 0.01 * rng.normal();
        }
    const double before = cloud_rmse(a, b);

    const double ang = 0.37;
    const double ca = std::cos(ang), sa = std::sin(ang);
    auto transform = [&](PointCloud& c) {
        for (size_t i = 0; i < c.valid.size(); i++) {
            const double x = c.xyz[3 * i], y = c.xyz[3 * i + 1], z = c.xyz[3 * i + 2];
            c.xyz[3 * i] = ca * x - sa * y + 12.0;
            c.xyz[3 * i + 1] = sa * x + ca * y - 7.0;
            c.xyz[3 * i + 2] = z + 31.0;
        }
    };
    transform(a);
    transform(b);
    CHECK(std::abs(cloud_rmse(a, b) - before) < 1e-9);
}

TEST_CASE("shrinking the valid mask never changes surviving per-pixel errors") {
    Rng rng(6);
    StereoCalibration calib = make_default_rig(16, 32, 500.0);
    Image depth = plane_depth(calib, 505.0);
    std::vector<uint8_t> valid(depth.size(), 1);
    PointCloud a = cloud_from_depth(depth, valid, calib);
    PointCloud b = a;
    for (size_t i = 0; i < b.valid.size(); i++) b.xyz[3 * i + 2] += 0.1 * rng.normal();

    Image full_err = cloud_errors(a, b);
    PointCloud a2 = a;
    for (size_t i = 0; i < a2.valid.size(); i++)
        if (i % 3 == 0) a2.valid[i] = 0;
    Image sub_err = cloud_errors(a2, b);
    for (size_t i = 0; i < a2.valid.size(); i++)
        if (a2.valid[i]) CHECK(sub_err.v[i] == full_err.v[i]);
}

TEST_CASE("calibration JSON round trip") {
    StereoCalibration c = make_default_rig(64, 128, 500.0);
    c.default_pitch = 24;
    c.u0 = 1.5;
    StereoCalibration r = calibration_from_json(calibration_to_json(c));
    CHECK(r.camera.fx == c.camera.fx);
    CHECK(r.projector.width == c.projector.width);
    CHECK(r.default_pitch == 24);
    CHECK(r.u0 == 1.5);
    for (int i = 0; i < 9; i++) CHECK(r.rotation[static_cast<size_t>(i)] == c.rotation[static_cast<size_t>(i)]);
}
