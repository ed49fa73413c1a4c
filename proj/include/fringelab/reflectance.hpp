#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fringelab/common.hpp"
#include "fringelab/fringe.hpp"
#include "fringelab/geometry.hpp"
#include "fringelab/rng.hpp"

namespace fringelab {

// Height field plus reflectance fields on the camera grid. The specular
// component is an additive, at most weakly modulated term; interreflection is
// single-bounce Gaussian mixing.
struct ReflectiveScene {
    Image height;    // camera-frame z, mm
    Image diffuse;   // I_d in [0,1]
    Image specular;  // I_s >= 0
    double gamma0 = 0.8;              // intrinsic fringe modulation (0,1]
    double specular_modulation = 0.0;  // fraction of gamma0 seen by I_s
    double interreflection = 0.0;      // lambda in [0,1)
    int interreflection_radius = 0;    // blur kernel radius, px

    void validate() const;
};

struct ExposureConfig {
    std::vector<double> times = {0.04, 0.16, 0.64};  // seconds, strictly increasing
    double gain = 1.0;
    double noise_sigma = 0.005;  // zero-mean Gaussian, applied before clipping
    bool quantize8 = false;
    double saturation_threshold = 0.98;  // HDR fusion rejects values above this

    void validate() const;
    double mid_time() const { return times[times.size() / 2]; }
    double exposure_scale(double time) const { return gain * time / mid_time(); }
};

// Precomputed projector correspondence for a scene under a rig.
struct CaptureContext {
    Image u_p;                      // projector column per camera pixel
    std::vector<uint8_t> in_range;  // u_p within the projector width
};

CaptureContext make_capture_context(const ReflectiveScene& scene, const StereoCalibration& calib);

// Captured intensity for one projected pattern:
//   R   = I_s (1 + rho g0 m) + I_d (1 + g0 m),   m = modulation(u_p) in [-1,1]
//   R'  = (1 - lambda) R + lambda blur(R)
//   I   = clip(scale R' + noise, 0, 1)            [then optional 8-bit step]
// Clipping is the sensor physics, not an error.
Image render_capture(const ReflectiveScene& scene, const CaptureContext& ctx,
                     const std::function<double(double)>& modulation, double exposure_time,
                     const ExposureConfig& exposure, Rng* noise_rng);

// Fringe modulation for shift index i of a pattern set (Eq.-1-form shifts,
// matching the wrapped_phase sign convention).
std::function<double(double)> fringe_modulation(const PatternSet& set, int shift_index, double u0);

// Bit-plane modulation (+1 bright / -1 dark) for a gray-code plane.
std::function<double(double)> graycode_modulation(const GraycodeSet& set, int plane);

// I' = (1 - lambda) I + lambda G_r(I); the blur kernel renormalizes at the
// borders so constant images are fixed points.
Image apply_interreflection(const Image& img, double lambda, int radius);

struct HdrResult {
    Image fused;                    // radiance estimate in [0,1]
    std::vector<uint8_t> saturated;  // saturated at every exposure
};

// Per pixel, the longest unsaturated exposure rescaled to a common radiance
// scale (divided by its exposure ratio to the shortest); all-saturated pixels
// fall back to the shortest-exposure estimate and are flagged.
HdrResult hdr_fuse(const std::vector<Image>& captures, const ExposureConfig& config);

// ---- scene generation ----

struct SceneGenConfig {
    int width = 64;
    int height = 64;
    double standoff = 500.0;         // mm
    double relief_amplitude = 16.0;  // mm
    double diffuse_min = 0.28, diffuse_max = 0.42;
    double gamma0_min = 0.7, gamma0_max = 0.9;
    double specular_sheen_max = 0.35;     // broad I_s level
    double specular_peak_min = 0.8;       // highlight blob peaks
    double specular_peak_max = 3.5;
    int specular_blobs_max = 3;
    double interreflection_min = 0.08, interreflection_max = 0.3;
    int blur_radius_min = 4, blur_radius_max = 10;
};

ReflectiveScene generate_scene(const SceneGenConfig& cfg, Rng& rng);

// ---- dataset assembly ----

struct DatasetConfig {
    int scene_count = 10;
    uint64_t seed = 0;
    SceneGenConfig scene;
    PatternSet input_patterns;    // X: 6-step binary, pitch 36
    PatternSet target_patterns;   // Y: 24-step binary, pitch 24, one pixel/step
    ExposureConfig exposures;     // X path; Y renders noiseless at mid exposure
    bool augment_flips = false;
    bool augment_rotations = false;
    double rotation_max_deg = 3.0;
    int projector_size = 128;

    DatasetConfig();
    void validate() const;
};

struct DatasetPairInfo {
    std::string id;        // directory name under scenes/
    std::string base;      // originating scene id
    std::string aug;       // "id", "h", "v", "hv"
    std::string split;     // "train", "val", "test"
};

struct DatasetManifest {
    DatasetConfig config;
    std::vector<DatasetPairInfo> pairs;
    std::vector<std::string> train, val, test;  // base scene ids
};

// Writes scenes/<id>/{X,Y,Xref,truth}.fst, calibration.json, manifest.json.
// truth.fst channels: absolute phase at the target pitch, height (mm), valid.
DatasetManifest make_dataset(const DatasetConfig& cfg, const std::string& out_dir);

DatasetManifest read_dataset_manifest(const std::string& dataset_dir);

std::string dataset_config_to_json(const DatasetConfig& cfg);
DatasetConfig dataset_config_from_json(const std::string& text);

}  // namespace fringelab
