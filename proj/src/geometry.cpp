#include "fringelab/geometry.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>

namespace fringelab {

void StereoCalibration::validate() const {
    require(camera.fx > 0 && camera.fy > 0 && projector.fx > 0 && projector.fy > 0,
            "calibration: focal lengths must be positive");
    Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> R(rotation.data());
    Eigen::Matrix3d err = R * R.transpose() - Eigen::Matrix3d::Identity();
    require(err.cwiseAbs().maxCoeff() < 1e-9, "calibration: rotation not orthonormal");
}

StereoCalibration make_default_rig(int cam_size, int proj_size, double standoff_mm) {
    StereoCalibration c;
    c.camera.width = c.camera.height = cam_size;
    c.camera.cx = (cam_size - 1) / 2.0;
    c.camera.cy = (cam_size - 1) / 2.0;
    // ~100 mm field of view at the standoff distance
    c.camera.fx = c.camera.fy = cam_size * standoff_mm / 100.0;

    c.projector.width = c.projector.height = proj_size;
    c.projector.cx = (proj_size - 1) / 2.0;
    c.projector.cy = (proj_size - 1) / 2.0;

    // Projector sits baseline_mm to the side, toed in to aim at the volume
    // center; its field of view covers the camera's with margin.
    const double baseline = 0.35 * standoff_mm;
    const double angle = std::atan2(baseline, standoff_mm);
    const double ca = std::cos(angle), sa = std::sin(angle);
    // Rotation about the y axis mapping camera frame into projector frame.
    c.rotation = {ca, 0.0, -sa, 0.0, 1.0, 0.0, sa, 0.0, ca};
    // Projector origin at (-baseline, 0, 0) in camera coordinates.
    c.translation = {ca * baseline, 0.0, sa * baseline};
    c.projector.fx = c.projector.fy = proj_size * std::hypot(baseline, standoff_mm) / 140.0;
    c.u0 = 0.0;
    c.validate();
    return c;
}

Vec3 camera_ray(const StereoCalibration& calib, double u, double v) {
    return {(u - calib.camera.cx) / calib.camera.fx, (v - calib.camera.cy) / calib.camera.fy, 1.0};
}

Vec3 point_from_depth(const StereoCalibration& calib, double u, double v, double z) {
    Vec3 d = camera_ray(calib, u, v);
    return {d.x * z, d.y * z, z};
}

double projector_column(const StereoCalibration& calib, const Vec3& p) {
    const auto& R = calib.rotation;
    const auto& t = calib.translation;
    const double xp = R[0] * p.x + R[1] * p.y + R[2] * p.z + t[0];
    const double zp = R[6] * p.x + R[7] * p.y + R[8] * p.z + t[2];
    return calib.projector.fx * xp / zp + calib.projector.cx;
}

double phase_to_projector_coord(double absolute_phase, double pitch, double u0) {
    return absolute_phase * pitch / kTwoPi + u0;
}

double projector_coord_to_phase(double u_p, double pitch, double u0) {
    return (u_p - u0) * kTwoPi / pitch;
}

PointCloud triangulate(const Image& u_p, const std::vector<uint8_t>& valid,
                       const StereoCalibration& calib) {
    require(valid.size() == u_p.size(), "triangulate: mask size mismatch");
    PointCloud cloud;
    cloud.width = u_p.width;
    cloud.height = u_p.height;
    cloud.xyz.assign(u_p.size() * 3, 0.0);
    cloud.valid.assign(u_p.size(), 0);

    const auto& R = calib.rotation;
    const auto& t = calib.translation;
    const double fpx = calib.projector.fx;
    const double cpx = calib.projector.cx;

    for (int y = 0; y < u_p.height; y++) {
        for (int x = 0; x < u_p.width; x++) {
            const size_t i = static_cast<size_t>(y) * u_p.width + x;
            if (!valid[i]) continue;
            const Vec3 d = camera_ray(calib, x, y);
            const double up = u_p.v[i];
            // fpx * X_p.x - (up - cpx) * X_p.z = 0 with X = lambda * d
            const double r0d = R[0] * d.x + R[1] * d.y + R[2] * d.z;
            const double r2d = R[6] * d.x + R[7] * d.y + R[8] * d.z;
            const double a = fpx * r0d - (up - cpx) * r2d;
            const double b = fpx * t[0] - (up - cpx) * t[2];
            const double scale = std::abs(fpx * r0d) + std::abs((up - cpx) * r2d) + 1e-30;
            if (std::abs(a) < 1e-9 * scale) continue;  // ray parallel to plane
            const double lambda = -b / a;
            if (!(lambda > 0.0) || !std::isfinite(lambda)) continue;
            cloud.xyz[3 * i] = d.x * lambda;
            cloud.xyz[3 * i + 1] = d.y * lambda;
            cloud.xyz[3 * i + 2] = lambda;
            cloud.valid[i] = 1;
        }
    }
    return cloud;
}

Image cloud_errors(const PointCloud& cloud, const PointCloud& truth,
                   std::vector<uint8_t>* valid_out) {
    require(cloud.width == truth.width && cloud.height == truth.height,
            "cloud_errors: grid mismatch");
    Image err(cloud.width, cloud.height);
    if (valid_out) valid_out->assign(cloud.valid.size(), 0);
    for (size_t i = 0; i < cloud.valid.size(); i++) {
        if (!cloud.valid[i] || !truth.valid[i]) continue;
        err.v[i] = norm(cloud.point(i) - truth.point(i));
        if (valid_out) (*valid_out)[i] = 1;
    }
    return err;
}

double cloud_rmse(const PointCloud& cloud, const PointCloud& truth) {
    std::vector<uint8_t> both;
    Image err = cloud_errors(cloud, truth, &both);
    double acc = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < both.size(); i++) {
        if (!both[i]) continue;
        acc += err.v[i] * err.v[i];
        n++;
    }
    require(n > 0, "cloud_rmse: empty valid set");
    return std::sqrt(acc / static_cast<double>(n));
}

PointCloud cloud_from_depth(const Image& depth, const std::vector<uint8_t>& valid,
                            const StereoCalibration& calib) {
    require(valid.size() == depth.size(), "cloud_from_depth: mask size mismatch");
    PointCloud cloud;
    cloud.width = depth.width;
    cloud.height = depth.height;
    cloud.xyz.assign(depth.size() * 3, 0.0);
    cloud.valid = valid;
    for (int y = 0; y < depth.height; y++)
        for (int x = 0; x < depth.width; x++) {
            const size_t i = static_cast<size_t>(y) * depth.width + x;
            if (!valid[i]) continue;
            Vec3 p = point_from_depth(calib, x, y, depth.v[i]);
            cloud.xyz[3 * i] = p.x;
            cloud.xyz[3 * i + 1] = p.y;
            cloud.xyz[3 * i + 2] = p.z;
        }
    return cloud;
}

SphereFit fit_sphere(const PointCloud& cloud) {
    // |p|^2 = 2 c . p + (r^2 - |c|^2): linear in (c, rho).
    Eigen::Matrix4d ata = Eigen::Matrix4d::Zero();
    Eigen::Vector4d atb = Eigen::Vector4d::Zero();
    size_t n = 0;
    for (size_t i = 0; i < cloud.valid.size(); i++) {
        if (!cloud.valid[i]) continue;
        const Vec3 p = cloud.point(i);
        Eigen::Vector4d row(2.0 * p.x, 2.0 * p.y, 2.0 * p.z, 1.0);
        const double b = p.x * p.x + p.y * p.y + p.z * p.z;
        ata.noalias() += row * row.transpose();
        atb.noalias() += row * b;
        n++;
    }
    require(n >= 4, "fit_sphere: need at least 4 valid points");
    Eigen::Vector4d sol = ata.ldlt().solve(atb);
    SphereFit fit;
    fit.center = {sol[0], sol[1], sol[2]};
    fit.radius = std::sqrt(std::max(0.0, sol[3] + sol[0] * sol[0] + sol[1] * sol[1] +
                                             sol[2] * sol[2]));
    return fit;
}

std::string calibration_to_json(const StereoCalibration& c) {
    nlohmann::json j;
    j["camera"] = {{"fx", c.camera.fx}, {"fy", c.camera.fy}, {"cx", c.camera.cx},
                   {"cy", c.camera.cy}, {"width", c.camera.width}, {"height", c.camera.height}};
    j["projector"] = {{"fx", c.projector.fx}, {"fy", c.projector.fy}, {"cx", c.projector.cx},
                      {"cy", c.projector.cy}, {"width", c.projector.width},
                      {"height", c.projector.height}};
    j["default_pitch"] = c.default_pitch;
    j["u0"] = c.u0;
    j["rotation"] = c.rotation;
    j["translation"] = c.translation;
    return j.dump(2);
}

StereoCalibration calibration_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    StereoCalibration c;
    auto load_pinhole = [](const nlohmann::json& n, PinholeIntrinsics& p) {
        p.fx = n.at("fx");
        p.fy = n.at("fy");
        p.cx = n.at("cx");
        p.cy = n.at("cy");
        p.width = n.at("width");
        p.height = n.at("height");
    };
    load_pinhole(j.at("camera"), c.camera);
    load_pinhole(j.at("projector"), c.projector);
    c.default_pitch = j.at("default_pitch");
    c.u0 = j.at("u0");
    auto rot = j.at("rotation");
    auto tr = j.at("translation");
    for (int i = 0; i < 9; i++) c.rotation[static_cast<size_t>(i)] = rot.at(i);
    for (int i = 0; i < 3; i++) c.translation[static_cast<size_t>(i)] = tr.at(i);
    c.validate();
    return c;
}

}  // namespace fringelab
