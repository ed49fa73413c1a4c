#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fringelab/fst.hpp"
#include "fringelab/metrics.hpp"
#include "fringelab/reflectance.hpp"

using namespace fringelab;
namespace fs = std::filesystem;

namespace {

ReflectiveScene flat_scene(int size, double standoff, double id, double is, double gamma0) {
    ReflectiveScene s;
    s.height = Image(size, size, standoff);
    s.diffuse = Image(size, size, id);
    s.specular = Image(size, size, is);
    s.gamma0 = gamma0;
    return s;
}

double phase_rmse_vs_truth(const std::vector<Image>& stack_images, const PatternSet& set,
                           const CaptureContext& ctx, double u0,
                           double modulation_threshold = kDefaultModulationThreshold) {
    FringeStack st;
    st.pattern = set;
    st.images = stack_images;
    PhaseMap pm = wrapped_phase(st, modulation_threshold);
    double acc = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < pm.wrapped.v.size(); i++) {
        if (!pm.valid[i] || !ctx.in_range[i]) continue;
        const double truth = wrap_phase(projector_coord_to_phase(ctx.u_p.v[i], set.pitch, u0));
        const double d = phase_distance(pm.wrapped.v[i], truth);
        acc += d * d;
        n++;
    }
    REQUIRE(n > 0);
    return std::sqrt(acc / static_cast<double>(n));
}

std::string tmpdir(const std::string& name) {
    auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

uint64_t hash_tree(const std::string& root) {
    // FNV-1a over sorted relative paths and file bytes.
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const char* data, size_t n) {
        for (size_t i = 0; i < n; i++) {
            h ^= static_cast<unsigned char>(data[i]);
            h *= 1099511628211ULL;
        }
    };
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root).string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        mix(f.data(), f.size());
        std::ifstream is(root + "/" + f, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        mix(bytes.data(), bytes.size());
    }
    return h;
}

}  // namespace

TEST_CASE("contrast law: gamma_eff = gamma0 Id / (Id + Is) within 1%") {
    const double gamma0 = 0.8, id = 0.18;
    StereoCalibration rig = make_default_rig(64, 128, 500.0);
    ExposureConfig exp_cfg;
    exp_cfg.noise_sigma = 0.0;
    PatternSet set;
    set.profile = FringeProfile::sinusoidal;
    set.pitch = 24;
    set.steps = 6;
    set.width = set.height = 128;

    for (double ratio : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        ReflectiveScene s = flat_scene(64, 500.0, id, ratio * id, gamma0);
        CaptureContext ctx = make_capture_context(s, rig);
        Image img = render_capture(s, ctx, fringe_modulation(set, 0, rig.u0), exp_cfg.times[0],
                                   exp_cfg, nullptr);
        // middle row spans > 2 fringe periods and stays unsaturated
        std::vector<double> profile(img.v.begin() + 32 * 64, img.v.begin() + 33 * 64);
        for (double v : profile) REQUIRE(v < 0.99);
        const double want = gamma0 * id / (id + ratio * id);
        const double got = metrics::michelson_contrast(profile);
        CHECK(std::abs(got - want) / want < 0.01);
    }
}

TEST_CASE("diffuse-only render is a pure sinusoid with contrast gamma0") {
    StereoCalibration rig = make_default_rig(64, 128, 500.0);
    ExposureConfig exp_cfg;
    exp_cfg.noise_sigma = 0.0;
    PatternSet set;
    set.profile = FringeProfile::sinusoidal;
    set.pitch = 24;
    set.steps = 4;
    set.width = set.height = 128;
    ReflectiveScene s = flat_scene(64, 500.0, 0.3, 0.0, 0.75);
    CaptureContext ctx = make_capture_context(s, rig);
    Image img =
        render_capture(s, ctx, fringe_modulation(set, 0, rig.u0), exp_cfg.mid_time(), exp_cfg, nullptr);
    for (size_t i = 0; i < img.v.size(); i++) {
        const double phi = projector_coord_to_phase(ctx.u_p.v[i], set.pitch, rig.u0);
        const double want = 0.3 * (1.0 + 0.75 * std::cos(phi));
        CHECK(img.v[i] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("strong specular at long exposure clips a highlight plateau") {
    StereoCalibration rig = make_default_rig(64, 128, 500.0);
    ExposureConfig exp_cfg;
    exp_cfg.noise_sigma = 0.0;
    PatternSet set;
    set.profile = FringeProfile::binary;
    set.pitch = 36;
    set.steps = 6;
    set.width = set.height = 128;
    ReflectiveScene s = flat_scene(64, 500.0, 0.3, 3.0, 0.8);
    CaptureContext ctx = make_capture_context(s, rig);
    Image img = render_capture(s, ctx, fringe_modulation(set, 0, rig.u0), exp_cfg.times.back(),
                               exp_cfg, nullptr);
    size_t clipped = 0;
    for (double v : img.v) clipped += v >= 1.0 ? 1 : 0;
    CHECK(static_cast<double>(clipped) / static_cast<double>(img.v.size()) > 0.9);
}

TEST_CASE("interreflection: identity at lambda 0, constant fixed point, degrades phase") {
    Rng rng(3);
    Image img(32, 32);
    for (auto& v : img.v) v = rng.uniform(0.0, 1.0);
    Image same = apply_interreflection(img, 0.0, 9);
    CHECK(same.v == img.v);

    Image flat(32, 32, 0.42);
    Image mixed = apply_interreflection(flat, 0.5, 7);
    for (double v : mixed.v) CHECK(v == doctest::Approx(0.42).epsilon(1e-12));

    StereoCalibration rig = make_default_rig(64, 128, 500.0);
    ExposureConfig exp_cfg;
    exp_cfg.noise_sigma = 0.0;
    PatternSet set;
    set.profile = FringeProfile::sinusoidal;
    set.pitch = 24;
    set.steps = 6;
    set.width = set.height = 128;

    auto render_with_lambda = [&](double lambda) {
        ReflectiveScene s = flat_scene(64, 500.0, 0.3, 0.0, 0.8);
        // curved relief so blurred neighborhoods mix different phases
        for (int y = 0; y < 64; y++)
            for (int x = 0; x < 64; x++)
                s.height.at(y, x) += 10.0 * std::sin(kTwoPi * x / 40.0) +
                                     6.0 * std::cos(kTwoPi * y / 32.0);
        s.interreflection = lambda;
        s.interreflection_radius = 9;
        CaptureContext ctx = make_capture_context(s, rig);
        std::vector<Image> images;
        for (int i = 0; i < set.steps; i++)
            images.push_back(render_capture(s, ctx, fringe_modulation(set, i, rig.u0),
                                            exp_cfg.mid_time(), exp_cfg, nullptr));
        return phase_rmse_vs_truth(images, set, ctx, rig.u0);
    };
    const double rmse0 = render_with_lambda(0.0);
    const double rmse3 = render_with_lambda(0.3);
    CHECK(rmse3 > rmse0 + 1e-4);
}

TEST_CASE("hdr: single unsaturated exposure is returned unchanged") {
    ExposureConfig cfg;
    cfg.times = {0.16};
    cfg.noise_sigma = 0.0;
    Image a(8, 8);
    for (size_t i = 0; i < a.v.size(); i++) a.v[i] = static_cast<double>(i) / 80.0;
    HdrResult r = hdr_fuse({a}, cfg);
    CHECK(r.fused.v == a.v);
    for (uint8_t s : r.saturated) CHECK(s == 0);
}

TEST_CASE("hdr: pixel saturated at 0.64 s uses the 0.16 s capture scaled by 4") {
    ExposureConfig cfg;  // {0.04, 0.16, 0.64}
    cfg.noise_sigma = 0.0;
    // radiance R relative to mid exposure: captures are R * t / 0.16
    const double r_val = 0.6;  // 0.64 s capture would be 2.4 -> clipped
    Image c0(2, 2, r_val * 0.04 / 0.16);
    Image c1(2, 2, r_val);
    Image c2(2, 2, 1.0);
    HdrResult r = hdr_fuse({c0, c1, c2}, cfg);
    // selected 0.16 s; scaled by t_max/t_sel = 4, then renormalized by
    // t_max/t_min = 16: net division by the exposure ratio to the shortest.
    CHECK(r.fused.v[0] == doctest::Approx(r_val / 4.0).epsilon(1e-12));
    CHECK(r.saturated[0] == 0);

    // saturated everywhere -> shortest-exposure estimate, flagged
    Image s0(2, 2, 1.0), s1(2, 2, 1.0), s2(2, 2, 1.0);
    HdrResult rs = hdr_fuse({s0, s1, s2}, cfg);
    CHECK(rs.saturated[0] == 1);
    CHECK(rs.fused.v[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("hdr: fused image proportional to true radiance within 1%") {
    Rng rng(4);
    ExposureConfig cfg;
    cfg.noise_sigma = 0.0;
    Image radiance(16, 16);
    for (auto& v : radiance.v) v = rng.uniform(0.05, 3.5);
    std::vector<Image> captures;
    for (double t : cfg.times) {
        Image c(16, 16);
        for (size_t i = 0; i < c.v.size(); i++)
            c.v[i] = std::clamp(radiance.v[i] * t / cfg.mid_time(), 0.0, 1.0);
        captures.push_back(c);
    }
    HdrResult r = hdr_fuse(captures, cfg);
    for (size_t i = 0; i < radiance.v.size(); i++) {
        if (r.saturated[i]) continue;
        const double ratio = r.fused.v[i] / radiance.v[i];
        CHECK(ratio == doctest::Approx(0.04 / 0.16).epsilon(0.01));
    }
}

TEST_CASE("monotone degradation in specular level, interreflection, clipping") {
    StereoCalibration rig = make_default_rig(64, 128, 500.0);
    PatternSet set;
    set.profile = FringeProfile::sinusoidal;
    set.pitch = 36;
    set.steps = 6;
    set.width = set.height = 128;

    auto rmse_for = [&](double id, double is_level, double lambda, double exposure_time,
                        uint64_t seed, double noise) {
        ReflectiveScene s = flat_scene(64, 500.0, id, is_level, 0.8);
        s.interreflection = lambda;
        s.interreflection_radius = 9;
        ExposureConfig exp_cfg;
        exp_cfg.noise_sigma = noise;
        CaptureContext ctx = make_capture_context(s, rig);
        std::vector<Image> images;
        Rng rng(seed);
        for (int i = 0; i < set.steps; i++)
            images.push_back(render_capture(s, ctx, fringe_modulation(set, i, rig.u0),
                                            exposure_time, exp_cfg, noise > 0 ? &rng : nullptr));
        // near-zero threshold keeps the pixel set fixed across the sweep so
        // masking cannot hide the most degraded pixels
        return phase_rmse_vs_truth(images, set, ctx, rig.u0, 1e-12);
    };

    // specular sweep: auto-exposed so the fixed dynamic range is shared
    // between the offset and the fringe signal; higher I_s means a shorter
    // exposure and a smaller recorded modulation against fixed sensor noise
    const double id = 0.18;
    double prev = -1.0;
    for (double ratio : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        const double is = ratio * id;
        const double t_auto = 0.16 * 0.95 / (is + id * 1.8);
        const double r = rmse_for(id, is, 0.0, t_auto, 99, 0.005);
        CHECK(r >= prev - 1e-9);
        prev = r;
    }
    // interreflection sweep (noise off)
    prev = -1.0;
    for (double lam : {0.0, 0.1, 0.2, 0.3, 0.4}) {
        const double r = rmse_for(0.3, 0.0, lam, 0.16, 99, 0.0);
        CHECK(r >= prev - 1e-12);
        prev = r;
    }
    // clipping sweep: rising exposure clips progressively more of the
    // sinusoid's bright half while the troughs keep their modulation
    prev = -1.0;
    for (double t : {0.16, 0.21, 0.29, 0.38, 0.48}) {
        const double r = rmse_for(0.35, 0.25, 0.0, t, 99, 0.0);
        CHECK(r >= prev - 1e-12);
        prev = r;
    }
}

TEST_CASE("diffuse target fidelity: sinusoidal Y phase within 1e-6 of truth") {
    DatasetConfig cfg;
    cfg.scene_count = 1;
    cfg.seed = 5;
    cfg.scene.width = cfg.scene.height = 48;
    cfg.target_patterns.profile = FringeProfile::sinusoidal;
    cfg.target_patterns.shift_rule = ShiftRule::uniform;
    cfg.exposures.noise_sigma = 0.0;
    const std::string dir = tmpdir("fringelab_fidelity");
    make_dataset(cfg, dir);

    auto y = fst_to_images(read_fst(dir + "/scenes/scene0000/Y.fst"));
    auto truth = fst_to_images(read_fst(dir + "/scenes/scene0000/truth.fst"));
    FringeStack st;
    st.pattern = cfg.target_patterns;
    st.pattern.width = st.pattern.height = cfg.projector_size;
    st.images = y;
    PhaseMap pm = wrapped_phase(st);
    for (size_t i = 0; i < pm.wrapped.v.size(); i++) {
        if (!pm.valid[i] || truth[2].v[i] < 0.5) continue;
        CHECK(phase_distance(pm.wrapped.v[i], wrap_phase(truth[0].v[i])) < 1e-6);
    }
}

TEST_CASE("flips commute with per-pixel phase computation") {
    DatasetConfig cfg;
    cfg.scene_count = 1;
    cfg.seed = 6;
    cfg.scene.width = cfg.scene.height = 32;
    cfg.augment_flips = true;
    cfg.exposures.noise_sigma = 0.0;
    const std::string dir = tmpdir("fringelab_flips");
    make_dataset(cfg, dir);

    auto phase_of = [&](const std::string& id) {
        auto y = fst_to_images(read_fst(dir + "/scenes/" + id + "/Y.fst"));
        FringeStack st;
        st.pattern = cfg.target_patterns;
        st.pattern.width = st.pattern.height = cfg.projector_size;
        st.images = y;
        return wrapped_phase(st);
    };
    PhaseMap base = phase_of("scene0000");
    PhaseMap flipped = phase_of("scene0000_h");
    for (int y = 0; y < 32; y++)
        for (int x = 0; x < 32; x++) {
            CHECK(flipped.wrapped.at(y, x) == base.wrapped.at(y, 31 - x));
            CHECK(flipped.valid[static_cast<size_t>(y) * 32 + x] ==
                  base.valid[static_cast<size_t>(y) * 32 + 31 - x]);
        }
}

TEST_CASE("dataset: 10 scenes split 8/1/1, flips give 4 pairs per scene") {
    DatasetConfig cfg;
    cfg.scene_count = 10;
    cfg.seed = 7;
    cfg.scene.width = cfg.scene.height = 16;
    cfg.target_patterns.steps = 4;  // keep the test fast
    cfg.target_patterns.shift_rule = ShiftRule::uniform;
    const std::string dir = tmpdir("fringelab_split");
    DatasetManifest m = make_dataset(cfg, dir);
    CHECK(m.train.size() == 8);
    CHECK(m.val.size() == 1);
    CHECK(m.test.size() == 1);
    CHECK(m.pairs.size() == 10);

    cfg.augment_flips = true;
    const std::string dir2 = tmpdir("fringelab_split4");
    DatasetManifest m2 = make_dataset(cfg, dir2);
    CHECK(m2.pairs.size() == 40);
    int id_count = 0, h_count = 0;
    for (const auto& p : m2.pairs) {
        id_count += p.aug == "id" ? 1 : 0;
        h_count += p.aug == "h" ? 1 : 0;
    }
    CHECK(id_count == 10);
    CHECK(h_count == 10);

    DatasetManifest reread = read_dataset_manifest(dir2);
    CHECK(reread.pairs.size() == 40);
    CHECK(reread.train.size() == 8);
}

TEST_CASE("dataset generation is byte-identical for a fixed seed") {
    DatasetConfig cfg;
    cfg.scene_count = 3;
    cfg.seed = 42;
    cfg.scene.width = cfg.scene.height = 16;
    cfg.target_patterns.steps = 4;
    cfg.target_patterns.shift_rule = ShiftRule::uniform;
    cfg.augment_flips = true;
    cfg.augment_rotations = true;
    const std::string d1 = tmpdir("fringelab_det1");
    const std::string d2 = tmpdir("fringelab_det2");
    make_dataset(cfg, d1);
    make_dataset(cfg, d2);
    CHECK(hash_tree(d1) == hash_tree(d2));
}

TEST_CASE("dataset config validation") {
    DatasetConfig cfg;
    cfg.scene_count = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    DatasetConfig cfg2;
    cfg2.exposures.times = {0.2, 0.1};
    CHECK_THROWS_AS(cfg2.validate(), std::invalid_argument);
}
