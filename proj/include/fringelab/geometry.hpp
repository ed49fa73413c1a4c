#pragma once

#include <array>
#include <string>
#include <vector>

#include "fringelab/common.hpp"

namespace fringelab {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline double norm(const Vec3& a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }

struct PinholeIntrinsics {
    double fx = 0.0, fy = 0.0;
    double cx = 0.0, cy = 0.0;
    int width = 0, height = 0;
};

// Ideal pinhole pair. Extrinsics map camera-frame points into the projector
// frame: X_p = R * X_c + t (t in mm). Fringes vary along projector columns;
// u0 is the projector column of zero absolute phase.
struct StereoCalibration {
    PinholeIntrinsics camera;
    PinholeIntrinsics projector;
    int default_pitch = 36;  // projector pixels per fringe period
    double u0 = 0.0;
    std::array<double, 9> rotation = {1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
    std::array<double, 3> translation = {0, 0, 0};

    void validate() const;  // focal lengths > 0, rotation orthonormal to 1e-9
};

// Desk-scale rig: camera at the origin looking +z, projector offset along -x
// and toed in toward the working volume around z = standoff.
StereoCalibration make_default_rig(int cam_size, int proj_size, double standoff_mm);

Vec3 camera_ray(const StereoCalibration& calib, double u, double v);  // unit-free, z = 1
Vec3 point_from_depth(const StereoCalibration& calib, double u, double v, double z);

// Projector column (and row via v_p) of a camera-frame point.
double projector_column(const StereoCalibration& calib, const Vec3& p);

// u_p = Phi * pitch / (2 pi) + u0.
double phase_to_projector_coord(double absolute_phase, double pitch, double u0);
double projector_coord_to_phase(double u_p, double pitch, double u0);

struct PointCloud {
    int width = 0, height = 0;
    std::vector<double> xyz;        // 3 per pixel, mm, camera frame
    std::vector<uint8_t> valid;

    Vec3 point(size_t i) const { return {xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]}; }
};

// Intersects each camera ray with the projector column plane of constant u_p.
// Near-parallel or behind-camera intersections are invalidated, never NaN.
PointCloud triangulate(const Image& u_p, const std::vector<uint8_t>& valid,
                       const StereoCalibration& calib);

// Per-pixel Euclidean distance to the truth cloud (same grid); invalid where
// either side is invalid.
Image cloud_errors(const PointCloud& cloud, const PointCloud& truth,
                   std::vector<uint8_t>* valid_out = nullptr);

// sqrt(mean squared point-to-truth distance) over the joint valid set.
double cloud_rmse(const PointCloud& cloud, const PointCloud& truth);

// Truth cloud from a depth map on the camera grid.
PointCloud cloud_from_depth(const Image& depth, const std::vector<uint8_t>& valid,
                            const StereoCalibration& calib);

// Algebraic least-squares sphere fit; returns center and radius.
struct SphereFit {
    Vec3 center;
    double radius = 0.0;
};
SphereFit fit_sphere(const PointCloud& cloud);

// Calibration (de)serialization as JSON.
std::string calibration_to_json(const StereoCalibration& calib);
StereoCalibration calibration_from_json(const std::string& text);

}  // namespace fringelab
