#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::string g_cli;
std::string g_root;

int run(const std::string& args, const std::string& log = "") {
    std::string cmd = g_cli + " " + args;
    cmd += log.empty() ? " > /dev/null 2>&1" : " > " + log + " 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

uint64_t hash_tree(const std::string& root) {
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root).string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        mix(f);
        mix(slurp(root + "/" + f));
    }
    return h;
}

const char* kTinyConfig = R"json({
  "seed": 5,
  "dataset": {
    "scene_count": 4,
    "projector_size": 64,
    "scene": {"width": 16, "height": 16},
    "input_patterns": {"profile": "binary", "pitch": 36, "steps": 6},
    "target_patterns": {"profile": "binary", "pitch": 24, "steps": 4, "shift_rule": "uniform"}
  },
  "vae_diffuse": {"in_channels": 4, "base_width": 4, "mult": [1, 2], "latent_channels": 2},
  "vae_specular": {"in_channels": 6, "base_width": 4, "mult": [1, 2], "latent_channels": 2},
  "denoiser": {"latent_channels": 2, "cond_channels": 2, "base_width": 4, "mult": [1, 2],
               "res_per_level": 1, "heads": 2},
  "schedule": {"kind": "linear", "T": 10, "beta_start": 1e-4, "beta_end": 2e-2},
  "train": {"steps": 10, "batch": 1, "lr": 2e-5, "log_every": 1, "state_every": 5}
})json";

std::string write_config(const std::string& name, const std::string& text) {
    const std::string path = g_root + "/" + name;
    std::ofstream os(path);
    os << text;
    return path;
}

}  // namespace

TEST_CASE("gen-dataset: split manifest, determinism, zero-scene failure") {
    const std::string cfg = write_config("tiny.json", kTinyConfig);

    // 10-scene config for the split contract
    std::string ten = kTinyConfig;
    ten.replace(ten.find("\"scene_count\": 4"), 16, "\"scene_count\": 10");
    const std::string cfg10 = write_config("ten.json", ten);
    REQUIRE(run("gen-dataset --config " + cfg10 + " --out " + g_root + "/ds10") == 0);
    nlohmann::json manifest = nlohmann::json::parse(slurp(g_root + "/ds10/manifest.json"));
    CHECK(manifest.at("splits").at("train").size() == 8);
    CHECK(manifest.at("splits").at("val").size() == 1);
    CHECK(manifest.at("splits").at("test").size() == 1);
    CHECK(manifest.at("pairs").size() == 10);

    // identical seeds give identical bytes
    REQUIRE(run("gen-dataset --config " + cfg + " --out " + g_root + "/dsA --seed 5") == 0);
    REQUIRE(run("gen-dataset --config " + cfg + " --out " + g_root + "/dsB --seed 5") == 0);
    CHECK(hash_tree(g_root + "/dsA") == hash_tree(g_root + "/dsB"));

    // zero scenes: exit 2 and no partial output
    std::string zero = kTinyConfig;
    zero.replace(zero.find("\"scene_count\": 4"), 16, "\"scene_count\": 0");
    const std::string cfg0 = write_config("zero.json", zero);
    CHECK(run("gen-dataset --config " + cfg0 + " --out " + g_root + "/ds0") == 2);
    CHECK_FALSE(fs::exists(g_root + "/ds0"));

    // invalid JSON: exit 2
    const std::string bad = write_config("bad.json", "{nope");
    CHECK(run("gen-dataset --config " + bad + " --out " + g_root + "/dsbad") == 2);
}

TEST_CASE("train: denoiser stage without VAE checkpoints exits 3 naming the file") {
    const std::string cfg = write_config("tiny.json", kTinyConfig);
    const std::string ds = g_root + "/dsA";
    REQUIRE(fs::exists(ds));
    const std::string log = g_root + "/denoiser_fail.log";
    const int rc = run("train --stage denoiser --config " + cfg + " --data " + ds + " --out " +
                           g_root + "/den_fail --vae-diffuse " + g_root +
                           "/missing_diffuse.ldw --vae-specular " + g_root + "/missing_spec.ldw",
                       log);
    CHECK(rc == 3);
    CHECK(slurp(log).find("missing_diffuse.ldw") != std::string::npos);
}

TEST_CASE("train/infer/evaluate pipeline on a tiny config") {
    const std::string cfg = write_config("tiny.json", kTinyConfig);
    const std::string ds = g_root + "/dsA";
    const std::string ck = g_root + "/ckpt";

    REQUIRE(run("train --stage vae-diffuse --config " + cfg + " --data " + ds + " --out " + ck) ==
            0);
    REQUIRE(run("train --stage vae-specular --config " + cfg + " --data " + ds + " --out " + ck) ==
            0);
    REQUIRE(fs::exists(ck + "/vae_diffuse.ldw"));
    REQUIRE(fs::exists(ck + "/vae_specular.ldw"));
    REQUIRE(run("train --stage denoiser --config " + cfg + " --data " + ds + " --out " + ck +
                " --vae-diffuse " + ck + "/vae_diffuse.ldw --vae-specular " + ck +
                "/vae_specular.ldw") == 0);
    REQUIRE(fs::exists(ck + "/denoiser.ldw"));
    REQUIRE(fs::exists(ck + "/denoiser_meta.json"));
    CHECK(fs::exists(ck + "/vae_diffuse_loss.csv"));
    CHECK(fs::exists(ck + "/manifest.json"));

    // infer twice with the same seed: bit-identical output; different step
    // counts both run
    const std::string xin = ds + "/scenes/scene0003/X.fst";
    REQUIRE(run("infer --input " + xin + " --config " + cfg + " --checkpoints " + ck +
                " --steps 10 --seed 9 --out " + g_root + "/inf1") == 0);
    REQUIRE(run("infer --input " + xin + " --config " + cfg + " --checkpoints " + ck +
                " --steps 10 --seed 9 --out " + g_root + "/inf2") == 0);
    CHECK(slurp(g_root + "/inf1/Y_hat.fst") == slurp(g_root + "/inf2/Y_hat.fst"));
    REQUIRE(run("infer --input " + xin + " --config " + cfg + " --checkpoints " + ck +
                " --steps 4 --seed 9 --out " + g_root + "/inf3") == 0);
    CHECK(fs::exists(g_root + "/inf3/preview_ch00.pgm"));

    // missing checkpoint: exit 3
    CHECK(run("infer --input " + xin + " --config " + cfg + " --checkpoints " + g_root +
              "/nowhere --steps 4 --seed 9 --out " + g_root + "/inf4") == 3);

    // evaluate with restored == ground-truth Y: MSE 0 / SSIM 1 / capped PSNR
    fs::create_directories(g_root + "/restored");
    fs::copy_file(ds + "/scenes/scene0003/Y.fst", g_root + "/restored/scene0003.fst",
                  fs::copy_options::overwrite_existing);
    REQUIRE(run("evaluate --dataset " + ds + " --restored-dir " + g_root + "/restored --out " +
                g_root + "/eval") == 0);
    const std::string metrics_csv = slurp(g_root + "/eval/fringe_metrics.csv");
    CHECK(metrics_csv.find("scene0003,raw6") != std::string::npos);
    CHECK(metrics_csv.find("scene0003,restored24,0,1,99") != std::string::npos);
    const std::string recon_csv = slurp(g_root + "/eval/reconstruction.csv");
    CHECK(recon_csv.find("scene0003,raw6") != std::string::npos);
    CHECK(recon_csv.find("scene0003,restored24") != std::string::npos);
    CHECK(fs::exists(g_root + "/eval/profiles/scene0003.csv"));
    CHECK(fs::exists(g_root + "/eval/maps/scene0003_restored.pgm"));

    // restored stack for an unknown scene id is a scene mismatch
    fs::copy_file(ds + "/scenes/scene0003/Y.fst", g_root + "/restored/sceneXXXX.fst",
                  fs::copy_options::overwrite_existing);
    CHECK(run("evaluate --dataset " + ds + " --restored-dir " + g_root + "/restored --out " +
              g_root + "/eval2") == 2);
    fs::remove(g_root + "/restored/sceneXXXX.fst");
}

TEST_CASE("train resume: loss log continues and matches the uninterrupted run") {
    const std::string cfg = write_config("tiny.json", kTinyConfig);
    const std::string ds = g_root + "/dsA";

    // uninterrupted run of 10 steps (state saved at step 5)
    const std::string full = g_root + "/resume_full";
    REQUIRE(run("train --stage vae-diffuse --config " + cfg + " --data " + ds + " --out " + full) ==
            0);

    // interrupted twin: same config, stop via state at 5, resume to 10
    std::string short_cfg = kTinyConfig;
    short_cfg.replace(short_cfg.find("\"steps\": 10"), 11, "\"steps\": 5");
    const std::string cfg5 = write_config("tiny5.json", short_cfg);
    const std::string part = g_root + "/resume_part";
    REQUIRE(run("train --stage vae-diffuse --config " + cfg5 + " --data " + ds + " --out " + part) ==
            0);
    REQUIRE(run("train --stage vae-diffuse --config " + cfg + " --data " + ds + " --out " + part +
                " --resume " + part + "/vae_diffuse_state.bin") == 0);

    // the resumed log's rows 6..10 must match the uninterrupted run
    auto tail_rows = [](const std::string& path) {
        std::ifstream is(path);
        std::vector<std::string> rows;
        std::string line;
        while (std::getline(is, line))
            if (!line.empty() && line[0] >= '6' && line[0] <= '9') rows.push_back(line);
        return rows;
    };
    auto a = tail_rows(full + "/vae_diffuse_loss.csv");
    auto b = tail_rows(part + "/vae_diffuse_loss.csv");
    REQUIRE(!a.empty());
    CHECK(a == b);
}

int main(int argc, char** argv) {
    std::vector<char*> pass;
    for (int i = 0; i < argc; i++) {
        if (std::string(argv[i]) == "--cli" && i + 1 < argc) {
            g_cli = argv[++i];
            continue;
        }
        pass.push_back(argv[i]);
    }
    if (g_cli.empty()) {
        std::fprintf(stderr, "usage: test_cli --cli <path-to-fringelab>\n");
        return 1;
    }
    g_root = (fs::temp_directory_path() / "fringelab_cli_test").string();
    fs::remove_all(g_root);
    fs::create_directories(g_root);
    doctest::Context ctx(static_cast<int>(pass.size()), pass.data());
    return ctx.run();
}
