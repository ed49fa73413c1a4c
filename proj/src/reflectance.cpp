#include "fringelab/reflectance.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "fringelab/fst.hpp"

namespace fs = std::filesystem;

namespace fringelab {

void ReflectiveScene::validate() const {
    require(!height.empty(), "scene: empty height field");
    require(diffuse.same_size(height) && specular.same_size(height),
            "scene: field dimensions differ");
    require(gamma0 > 0.0 && gamma0 <= 1.0, "scene: gamma0 must be in (0,1]");
    require(interreflection >= 0.0 && interreflection < 1.0, "scene: lambda must be in [0,1)");
    for (size_t i = 0; i < diffuse.v.size(); i++) {
        require(diffuse.v[i] >= 0.0 && specular.v[i] >= 0.0, "scene: negative reflectance");
    }
}

void ExposureConfig::validate() const {
    require(!times.empty(), "exposures: need at least one exposure");
    for (size_t i = 1; i < times.size(); i++)
        require(times[i] > times[i - 1], "exposures: times must be strictly increasing");
    require(times[0] > 0.0 && gain > 0.0, "exposures: times and gain must be positive");
}

CaptureContext make_capture_context(const ReflectiveScene& scene, const StereoCalibration& calib) {
    scene.validate();
    CaptureContext ctx;
    ctx.u_p = Image(scene.height.width, scene.height.height);
    ctx.in_range.assign(scene.height.size(), 0);
    for (int y = 0; y < scene.height.height; y++) {
        for (int x = 0; x < scene.height.width; x++) {
            const size_t i = static_cast<size_t>(y) * scene.height.width + x;
            Vec3 p = point_from_depth(calib, x, y, scene.height.v[i]);
            const double up = projector_column(calib, p);
            ctx.u_p.v[i] = up;
            ctx.in_range[i] = (up >= 0.0 && up <= calib.projector.width - 1.0) ? 1 : 0;
        }
    }
    return ctx;
}

Image render_capture(const ReflectiveScene& scene, const CaptureContext& ctx,
                     const std::function<double(double)>& modulation, double exposure_time,
                     const ExposureConfig& exposure, Rng* noise_rng) {
    const double scale = exposure.exposure_scale(exposure_time);
    Image img(scene.height.width, scene.height.height);
    for (size_t i = 0; i < img.v.size(); i++) {
        const double m = modulation(ctx.u_p.v[i]);
        const double radiance =
            scene.specular.v[i] * (1.0 + scene.specular_modulation * scene.gamma0 * m) +
            scene.diffuse.v[i] * (1.0 + scene.gamma0 * m);
        img.v[i] = radiance;
    }
    if (scene.interreflection > 0.0)
        img = apply_interreflection(img, scene.interreflection, scene.interreflection_radius);
    for (size_t i = 0; i < img.v.size(); i++) {
        double v = scale * img.v[i];
        if (noise_rng && exposure.noise_sigma > 0.0) v += exposure.noise_sigma * noise_rng->normal();
        v = std::clamp(v, 0.0, 1.0);
        if (exposure.quantize8) v = std::round(v * 255.0) / 255.0;
        img.v[i] = v;
    }
    return img;
}

std::function<double(double)> fringe_modulation(const PatternSet& set, int shift_index, double u0) {
    const double delta = set.shift(shift_index);
    const double pitch = static_cast<double>(set.pitch);
    const FringeProfile profile = set.profile;
    return [profile, pitch, u0, delta](double u) {
        return fringe_waveform(profile, (u - u0) * kTwoPi / pitch + delta);
    };
}

std::function<double(double)> graycode_modulation(const GraycodeSet& set, int plane) {
    return [set, plane](double u) { return 2.0 * graycode_plane_value(set, plane, u) - 1.0; };
}

Image apply_interreflection(const Image& img, double lambda, int radius) {
    require(lambda >= 0.0 && lambda < 1.0, "apply_interreflection: lambda must be in [0,1)");
    if (lambda == 0.0 || radius <= 0) return img;
    const double sigma = radius / 3.0;
    std::vector<double> taps(static_cast<size_t>(2 * radius + 1));
    for (int i = -radius; i <= radius; i++)
        taps[static_cast<size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));

    // Separable blur with border renormalization.
    Image tmp(img.width, img.height);
    for (int y = 0; y < img.height; y++)
        for (int x = 0; x < img.width; x++) {
            double acc = 0.0, wsum = 0.0;
            for (int i = -radius; i <= radius; i++) {
                const int xx = x + i;
                if (xx < 0 || xx >= img.width) continue;
                const double w = taps[static_cast<size_t>(i + radius)];
                acc += w * img.at(y, xx);
                wsum += w;
            }
            tmp.at(y, x) = acc / wsum;
        }
    Image blur(img.width, img.height);
    for (int y = 0; y < img.height; y++)
        for (int x = 0; x < img.width; x++) {
            double acc = 0.0, wsum = 0.0;
            for (int i = -radius; i <= radius; i++) {
                const int yy = y + i;
                if (yy < 0 || yy >= img.height) continue;
                const double w = taps[static_cast<size_t>(i + radius)];
                acc += w * tmp.at(yy, x);
                wsum += w;
            }
            blur.at(y, x) = acc / wsum;
        }
    Image out(img.width, img.height);
    for (size_t i = 0; i < img.v.size(); i++)
        out.v[i] = (1.0 - lambda) * img.v[i] + lambda * blur.v[i];
    return out;
}

HdrResult hdr_fuse(const std::vector<Image>& captures, const ExposureConfig& config) {
    config.validate();
    require(captures.size() == config.times.size(), "hdr_fuse: capture/exposure count mismatch");
    for (const auto& img : captures)
        require(img.same_size(captures[0]), "hdr_fuse: mismatched dimensions");

    const double t_min = config.times.front();
    const size_t n = captures.size();
    HdrResult out;
    out.fused = Image(captures[0].width, captures[0].height);
    out.saturated.assign(captures[0].size(), 0);
    for (size_t i = 0; i < captures[0].size(); i++) {
        int sel = -1;
        for (int e = static_cast<int>(n) - 1; e >= 0; e--) {
            if (captures[static_cast<size_t>(e)].v[i] < config.saturation_threshold) {
                sel = e;
                break;
            }
        }
        if (sel < 0) {
            out.saturated[i] = 1;
            sel = 0;  // shortest-exposure radiance estimate
        }
        const double ratio = config.times[static_cast<size_t>(sel)] / t_min;
        out.fused.v[i] = std::clamp(captures[static_cast<size_t>(sel)].v[i] / ratio, 0.0, 1.0);
    }
    return out;
}

// ---- scene generation ----

namespace {

void add_gaussian(Image& field, double cx, double cy, double sigma, double amp) {
    for (int y = 0; y < field.height; y++)
        for (int x = 0; x < field.width; x++) {
            const double dx = x - cx, dy = y - cy;
            field.at(y, x) += amp * std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
        }
}

}  // namespace

ReflectiveScene generate_scene(const SceneGenConfig& cfg, Rng& rng) {
    ReflectiveScene s;
    const int w = cfg.width, h = cfg.height;
    s.height = Image(w, h, cfg.standoff);
    s.diffuse = Image(w, h);
    s.specular = Image(w, h);

    // Relief: tilt plus a few smooth bumps; the kind biases them toward
    // convex (toward camera, smaller z) or concave shapes.
    const int kind = static_cast<int>(rng.index(4));
    const double tilt_x = rng.uniform(-0.06, 0.06), tilt_y = rng.uniform(-0.06, 0.06);
    for (int y = 0; y < h; y++)
        for (int x = 0; x < w; x++)
            s.height.at(y, x) += tilt_x * (x - w / 2.0) + tilt_y * (y - h / 2.0);
    const int bumps = 1 + static_cast<int>(rng.index(3));
    for (int b = 0; b < bumps; b++) {
        const double cx = rng.uniform(0.2 * w, 0.8 * w);
        const double cy = rng.uniform(0.2 * h, 0.8 * h);
        const double sigma = rng.uniform(0.14, 0.32) * w;
        double amp = rng.uniform(0.35, 1.0) * cfg.relief_amplitude;
        if (kind == 0) amp *= rng.uniform() < 0.5 ? -1.0 : 1.0;  // mixed
        if (kind == 1) amp = -amp;                               // dome toward camera
        if (kind == 3 && b == 0) amp = std::abs(amp);            // central concavity
        add_gaussian(s.height, cx, cy, sigma, amp);
    }
    if (kind == 2) {  // ridge/ramp
        const double dir = rng.uniform(0.0, kPi);
        const double period = rng.uniform(0.8, 1.6) * w;
        const double amp = rng.uniform(0.3, 0.7) * cfg.relief_amplitude;
        for (int y = 0; y < h; y++)
            for (int x = 0; x < w; x++)
                s.height.at(y, x) +=
                    amp * std::sin(kTwoPi * (x * std::cos(dir) + y * std::sin(dir)) / period);
    }

    // Diffuse albedo: base level with gentle low-frequency variation.
    const double base = rng.uniform(cfg.diffuse_min, cfg.diffuse_max);
    for (auto& v : s.diffuse.v) v = base;
    const int dlobes = 1 + static_cast<int>(rng.index(2));
    for (int b = 0; b < dlobes; b++)
        add_gaussian(s.diffuse, rng.uniform(0.0, w), rng.uniform(0.0, h),
                     rng.uniform(0.3, 0.6) * w, rng.uniform(-0.05, 0.05));
    for (auto& v : s.diffuse.v) v = std::clamp(v, 0.05, 1.0);

    // Specular: broad sheen plus concentrated highlight blobs.
    const double sheen = rng.uniform(0.0, cfg.specular_sheen_max);
    for (auto& v : s.specular.v) v = sheen;
    const int blobs = 1 + static_cast<int>(rng.index(static_cast<uint64_t>(cfg.specular_blobs_max)));
    for (int b = 0; b < blobs; b++) {
        const double peak = rng.uniform(cfg.specular_peak_min, cfg.specular_peak_max);
        add_gaussian(s.specular, rng.uniform(0.15 * w, 0.85 * w), rng.uniform(0.15 * h, 0.85 * h),
                     rng.uniform(0.05, 0.14) * w, peak);
    }
    for (auto& v : s.specular.v) v = std::max(v, 0.0);

    s.gamma0 = rng.uniform(cfg.gamma0_min, cfg.gamma0_max);
    s.specular_modulation = 0.0;
    s.interreflection = rng.uniform(cfg.interreflection_min, cfg.interreflection_max);
    s.interreflection_radius =
        cfg.blur_radius_min +
        static_cast<int>(rng.index(static_cast<uint64_t>(cfg.blur_radius_max - cfg.blur_radius_min + 1)));
    s.validate();
    return s;
}

// ---- dataset assembly ----

DatasetConfig::DatasetConfig() {
    input_patterns.profile = FringeProfile::binary;
    input_patterns.pitch = 36;
    input_patterns.steps = 6;
    input_patterns.shift_rule = ShiftRule::uniform;
    target_patterns.profile = FringeProfile::binary;
    target_patterns.pitch = 24;
    target_patterns.steps = 24;
    target_patterns.shift_rule = ShiftRule::one_pixel_per_step;
}

void DatasetConfig::validate() const {
    require(scene_count >= 1, "dataset: scene_count must be >= 1");
    exposures.validate();
    PatternSet in = input_patterns, tg = target_patterns;
    in.width = in.height = projector_size;
    tg.width = tg.height = projector_size;
    in.validate();
    tg.validate();
}

namespace {

Image flip_image(const Image& img, bool fh, bool fv) {
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; y++)
        for (int x = 0; x < img.width; x++)
            out.at(y, x) = img.at(fv ? img.height - 1 - y : y, fh ? img.width - 1 - x : x);
    return out;
}

Image rotate_bilinear(const Image& img, double deg, double fill) {
    const double a = deg * kPi / 180.0;
    const double ca = std::cos(a), sa = std::sin(a);
    const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; y++)
        for (int x = 0; x < img.width; x++) {
            // inverse rotation into source coordinates
            const double dx = x - cx, dy = y - cy;
            const double sx = cx + ca * dx + sa * dy;
            const double sy = cy - sa * dx + ca * dy;
            const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
            if (x0 < 0 || y0 < 0 || x0 + 1 >= img.width || y0 + 1 >= img.height) {
                out.at(y, x) = fill;
                continue;
            }
            const double fx = sx - x0, fy = sy - y0;
            out.at(y, x) = (1 - fx) * (1 - fy) * img.at(y0, x0) + fx * (1 - fy) * img.at(y0, x0 + 1) +
                           (1 - fx) * fy * img.at(y0 + 1, x0) + fx * fy * img.at(y0 + 1, x0 + 1);
        }
    return out;
}

struct PairImages {
    std::vector<Image> X, Y, Xref;
    Image phase, height, mask;
};

PairImages transform_pair(const PairImages& p, bool fh, bool fv, double rot_deg) {
    PairImages out;
    auto tf = [&](const Image& img, double fill) {
        Image r = flip_image(img, fh, fv);
        if (rot_deg != 0.0) r = rotate_bilinear(r, rot_deg, fill);
        return r;
    };
    for (const auto& img : p.X) out.X.push_back(tf(img, 0.0));
    for (const auto& img : p.Y) out.Y.push_back(tf(img, 0.0));
    for (const auto& img : p.Xref) out.Xref.push_back(tf(img, 0.0));
    out.phase = tf(p.phase, 0.0);
    out.height = tf(p.height, 0.0);
    out.mask = tf(p.mask, 0.0);
    if (rot_deg != 0.0) {
        for (auto& v : out.mask.v) v = v > 0.999 ? 1.0 : 0.0;
    }
    return out;
}

void write_pair(const std::string& dir, const PairImages& p, const nlohmann::json& sidecar) {
    fs::create_directories(dir);
    write_fst(dir + "/X.fst", fst_from_images(p.X, FstDtype::f32));
    write_fst(dir + "/Y.fst", fst_from_images(p.Y, FstDtype::f32));
    write_fst(dir + "/Xref.fst", fst_from_images(p.Xref, FstDtype::f32));
    write_fst(dir + "/truth.fst", fst_from_images({p.phase, p.height, p.mask}, FstDtype::f64));
    std::ofstream os(dir + "/meta.json");
    os << sidecar.dump(2) << "\n";
}

}  // namespace

DatasetManifest make_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/scenes");

    StereoCalibration rig =
        make_default_rig(cfg.scene.width, cfg.projector_size, cfg.scene.standoff);
    rig.default_pitch = cfg.input_patterns.pitch;
    {
        std::ofstream os(out_dir + "/calibration.json");
        os << calibration_to_json(rig) << "\n";
    }

    PatternSet input = cfg.input_patterns;
    input.width = input.height = cfg.projector_size;
    PatternSet target = cfg.target_patterns;
    target.width = target.height = cfg.projector_size;

    ExposureConfig clean = cfg.exposures;
    clean.noise_sigma = 0.0;

    DatasetManifest manifest;
    manifest.config = cfg;

    const int n = cfg.scene_count;
    const int n_val = std::max(1, n / 10);
    const int n_test = std::max(1, n / 10);
    const int n_train = n - n_val - n_test;
    require(n_train >= 1 || n == 1, "dataset: too few scenes to split");

    for (int idx = 0; idx < n; idx++) {
        char name[32];
        std::snprintf(name, sizeof(name), "scene%04d", idx);
        const std::string split = idx < n_train ? "train" : (idx < n_train + n_val ? "val" : "test");
        if (split == "train")
            manifest.train.push_back(name);
        else if (split == "val")
            manifest.val.push_back(name);
        else
            manifest.test.push_back(name);

        Rng scene_rng = Rng::substream(cfg.seed, static_cast<uint64_t>(idx) * 16);
        Rng noise_rng = Rng::substream(cfg.seed, static_cast<uint64_t>(idx) * 16 + 1);
        Rng aug_rng = Rng::substream(cfg.seed, static_cast<uint64_t>(idx) * 16 + 2);

        ReflectiveScene scene = generate_scene(cfg.scene, scene_rng);
        ReflectiveScene diffuse_only = scene;
        for (auto& v : diffuse_only.specular.v) v = 0.0;
        diffuse_only.interreflection = 0.0;

        CaptureContext ctx = make_capture_context(scene, rig);

        PairImages base;
        // Y: clean diffuse render of the target set at the middle exposure.
        for (int i = 0; i < target.steps; i++)
            base.Y.push_back(render_capture(diffuse_only, ctx, fringe_modulation(target, i, rig.u0),
                                            clean.mid_time(), clean, nullptr));
        // X: per input pattern, multi-exposure capture of the specular scene,
        // HDR-fused. Xref: identical pipeline on the diffuse scene, no noise.
        for (int i = 0; i < input.steps; i++) {
            std::vector<Image> caps, refcaps;
            for (double t : cfg.exposures.times) {
                caps.push_back(render_capture(scene, ctx, fringe_modulation(input, i, rig.u0), t,
                                              cfg.exposures, &noise_rng));
                refcaps.push_back(render_capture(diffuse_only, ctx,
                                                 fringe_modulation(input, i, rig.u0), t, clean,
                                                 nullptr));
            }
            base.X.push_back(hdr_fuse(caps, cfg.exposures).fused);
            base.Xref.push_back(hdr_fuse(refcaps, clean).fused);
        }
        base.phase = Image(ctx.u_p.width, ctx.u_p.height);
        for (size_t i = 0; i < ctx.u_p.size(); i++)
            base.phase.v[i] = projector_coord_to_phase(ctx.u_p.v[i], target.pitch, rig.u0);
        base.height = scene.height;
        base.mask = Image(ctx.u_p.width, ctx.u_p.height);
        for (size_t i = 0; i < ctx.u_p.size(); i++) base.mask.v[i] = ctx.in_range[i] ? 1.0 : 0.0;

        struct Variant {
            const char* tag;
            bool fh, fv;
        };
        std::vector<Variant> variants = {{"id", false, false}};
        if (cfg.augment_flips) {
            variants.push_back({"h", true, false});
            variants.push_back({"v", false, true});
            variants.push_back({"hv", true, true});
        }
        for (const auto& var : variants) {
            double rot = 0.0;
            if (cfg.augment_rotations && std::string(var.tag) != "id")
                rot = aug_rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg);
            PairImages p = (var.fh || var.fv || rot != 0.0)
                               ? transform_pair(base, var.fh, var.fv, rot)
                               : base;
            const std::string pair_id =
                std::string(name) + (std::string(var.tag) == "id" ? "" : std::string("_") + var.tag);
            nlohmann::json sidecar;
            sidecar["base"] = name;
            sidecar["aug"] = var.tag;
            sidecar["rotation_deg"] = rot;
            sidecar["split"] = split;
            sidecar["input_pitch"] = input.pitch;
            sidecar["input_steps"] = input.steps;
            sidecar["target_pitch"] = target.pitch;
            sidecar["target_steps"] = target.steps;
            sidecar["truth_channels"] = {"absolute_phase_target_pitch", "height_mm", "valid"};
            write_pair(out_dir + "/scenes/" + pair_id, p, sidecar);
            manifest.pairs.push_back({pair_id, name, var.tag, split});
        }
    }

    nlohmann::json j;
    j["tool"] = "fringelab";
    j["format_version"] = 1;
    j["seed"] = cfg.seed;
    j["config"] = nlohmann::json::parse(dataset_config_to_json(cfg));
    j["splits"] = {{"train", manifest.train}, {"val", manifest.val}, {"test", manifest.test}};
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : manifest.pairs)
        pairs.push_back({{"id", p.id}, {"base", p.base}, {"aug", p.aug}, {"split", p.split}});
    j["pairs"] = pairs;
    std::ofstream os(out_dir + "/manifest.json");
    os << j.dump(2) << "\n";
    return manifest;
}

DatasetManifest read_dataset_manifest(const std::string& dataset_dir) {
    std::ifstream is(dataset_dir + "/manifest.json");
    if (!is) throw MissingPrereqError("dataset manifest not found in " + dataset_dir);
    nlohmann::json j = nlohmann::json::parse(is);
    DatasetManifest m;
    m.config = dataset_config_from_json(j.at("config").dump());
    for (const auto& s : j.at("splits").at("train")) m.train.push_back(s);
    for (const auto& s : j.at("splits").at("val")) m.val.push_back(s);
    for (const auto& s : j.at("splits").at("test")) m.test.push_back(s);
    for (const auto& p : j.at("pairs"))
        m.pairs.push_back({p.at("id"), p.at("base"), p.at("aug"), p.at("split")});
    return m;
}

// ---- config JSON ----

namespace {

nlohmann::json pattern_to_json(const PatternSet& p) {
    return {{"profile", p.profile == FringeProfile::binary ? "binary" : "sinusoidal"},
            {"pitch", p.pitch},
            {"steps", p.steps},
            {"shift_rule",
             p.shift_rule == ShiftRule::one_pixel_per_step ? "one_pixel_per_step" : "uniform"}};
}

PatternSet pattern_from_json(const nlohmann::json& j, const PatternSet& defaults) {
    PatternSet p = defaults;
    if (j.contains("profile"))
        p.profile = j.at("profile") == "binary" ? FringeProfile::binary : FringeProfile::sinusoidal;
    if (j.contains("pitch")) p.pitch = j.at("pitch");
    if (j.contains("steps")) p.steps = j.at("steps");
    if (j.contains("shift_rule"))
        p.shift_rule = j.at("shift_rule") == "one_pixel_per_step" ? ShiftRule::one_pixel_per_step
                                                                  : ShiftRule::uniform;
    return p;
}

}  // namespace

std::string dataset_config_to_json(const DatasetConfig& cfg) {
    nlohmann::json j;
    j["scene_count"] = cfg.scene_count;
    j["seed"] = cfg.seed;
    j["projector_size"] = cfg.projector_size;
    j["augment_flips"] = cfg.augment_flips;
    j["augment_rotations"] = cfg.augment_rotations;
    j["rotation_max_deg"] = cfg.rotation_max_deg;
    j["scene"] = {{"width", cfg.scene.width},
                  {"height", cfg.scene.height},
                  {"standoff", cfg.scene.standoff},
                  {"relief_amplitude", cfg.scene.relief_amplitude},
                  {"diffuse_min", cfg.scene.diffuse_min},
                  {"diffuse_max", cfg.scene.diffuse_max},
                  {"gamma0_min", cfg.scene.gamma0_min},
                  {"gamma0_max", cfg.scene.gamma0_max},
                  {"specular_sheen_max", cfg.scene.specular_sheen_max},
                  {"specular_peak_min", cfg.scene.specular_peak_min},
                  {"specular_peak_max", cfg.scene.specular_peak_max},
                  {"specular_blobs_max", cfg.scene.specular_blobs_max},
                  {"interreflection_min", cfg.scene.interreflection_min},
                  {"interreflection_max", cfg.scene.interreflection_max},
                  {"blur_radius_min", cfg.scene.blur_radius_min},
                  {"blur_radius_max", cfg.scene.blur_radius_max}};
    j["input_patterns"] = pattern_to_json(cfg.input_patterns);
    j["target_patterns"] = pattern_to_json(cfg.target_patterns);
    j["exposures"] = {{"times", cfg.exposures.times},
                      {"gain", cfg.exposures.gain},
                      {"noise_sigma", cfg.exposures.noise_sigma},
                      {"quantize8", cfg.exposures.quantize8},
                      {"saturation_threshold", cfg.exposures.saturation_threshold}};
    return j.dump(2);
}

DatasetConfig dataset_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("dataset config: invalid JSON: ") + e.what());
    }
    DatasetConfig cfg;
    try {
        if (j.contains("scene_count")) cfg.scene_count = j.at("scene_count");
        if (j.contains("seed")) cfg.seed = j.at("seed");
        if (j.contains("projector_size")) cfg.projector_size = j.at("projector_size");
        if (j.contains("augment_flips")) cfg.augment_flips = j.at("augment_flips");
        if (j.contains("augment_rotations")) cfg.augment_rotations = j.at("augment_rotations");
        if (j.contains("rotation_max_deg")) cfg.rotation_max_deg = j.at("rotation_max_deg");
        if (j.contains("scene")) {
            const auto& s = j.at("scene");
            auto get = [&](const char* key, auto& out) {
                if (s.contains(key)) out = s.at(key);
            };
            get("width", cfg.scene.width);
            get("height", cfg.scene.height);
            get("standoff", cfg.scene.standoff);
            get("relief_amplitude", cfg.scene.relief_amplitude);
            get("diffuse_min", cfg.scene.diffuse_min);
            get("diffuse_max", cfg.scene.diffuse_max);
            get("gamma0_min", cfg.scene.gamma0_min);
            get("gamma0_max", cfg.scene.gamma0_max);
            get("specular_sheen_max", cfg.scene.specular_sheen_max);
            get("specular_peak_min", cfg.scene.specular_peak_min);
            get("specular_peak_max", cfg.scene.specular_peak_max);
            get("specular_blobs_max", cfg.scene.specular_blobs_max);
            get("interreflection_min", cfg.scene.interreflection_min);
            get("interreflection_max", cfg.scene.interreflection_max);
            get("blur_radius_min", cfg.scene.blur_radius_min);
            get("blur_radius_max", cfg.scene.blur_radius_max);
        }
        if (j.contains("input_patterns"))
            cfg.input_patterns = pattern_from_json(j.at("input_patterns"), cfg.input_patterns);
        if (j.contains("target_patterns"))
            cfg.target_patterns = pattern_from_json(j.at("target_patterns"), cfg.target_patterns);
        if (j.contains("exposures")) {
            const auto& e = j.at("exposures");
            if (e.contains("times")) cfg.exposures.times = e.at("times").get<std::vector<double>>();
            if (e.contains("gain")) cfg.exposures.gain = e.at("gain");
            if (e.contains("noise_sigma")) cfg.exposures.noise_sigma = e.at("noise_sigma");
            if (e.contains("quantize8")) cfg.exposures.quantize8 = e.at("quantize8");
            if (e.contains("saturation_threshold"))
                cfg.exposures.saturation_threshold = e.at("saturation_threshold");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("dataset config: ") + e.what());
    }
    return cfg;
}

}  // namespace fringelab
