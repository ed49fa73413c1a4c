#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "fringelab/checkpoint.hpp"
#include "fringelab/config.hpp"
#include "fringelab/fst.hpp"
#include "fringelab/geometry.hpp"
#include "fringelab/metrics.hpp"
#include "fringelab/model.hpp"

namespace fs = std::filesystem;
using namespace fringelab;

namespace {

std::string resolve_out(const std::string& path) {
    const char* root = std::getenv("FRINGELAB_OUT_ROOT");
    if (root && *root && !path.empty() && path[0] != '/') {
        return std::string(root) + "/" + path;
    }
    return path;
}

void write_manifest(const std::string& dir, const RunConfig& cfg, const nlohmann::json& extra) {
    nlohmann::json j;
    j["tool"] = tool_version();
    j["seed"] = cfg.seed;
    j["config"] = nlohmann::json::parse(run_config_to_json(cfg));
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    std::ofstream os(dir + "/manifest.json");
    os << j.dump(2) << "\n";
}

std::vector<Tensor> load_split_stacks(const std::string& data_dir, const DatasetManifest& manifest,
                                      const std::string& split, const std::string& file) {
    std::vector<Tensor> out;
    for (const auto& p : manifest.pairs) {
        if (p.split != split) continue;
        out.push_back(tensor_from_fst(read_fst(data_dir + "/scenes/" + p.id + "/" + file)));
    }
    require(!out.empty(), "no " + split + " pairs found in " + data_dir);
    return out;
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw MissingPrereqError(what + " not found: " + path);
}

int cmd_gen_dataset(const std::string& config_path, const std::string& out_dir, int64_t seed) {
    RunConfig cfg = load_run_config(config_path);
    if (seed >= 0) {
        cfg.seed = static_cast<uint64_t>(seed);
        cfg.dataset.seed = cfg.seed;
    }
    const std::string out = resolve_out(out_dir);
    make_dataset(cfg.dataset, out);
    std::cout << "dataset written to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& stage, const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& resume, const std::string& vae_d_path,
              const std::string& vae_s_path) {
    RunConfig cfg = load_run_config(config_path);
    const std::string out = resolve_out(out_dir);
    fs::create_directories(out);
    DatasetManifest manifest = read_dataset_manifest(data_dir);
    TrainConfig tcfg = cfg.stage_train(stage);

    nlohmann::json extra = {{"command", "train"}, {"stage", stage}, {"data", data_dir}};

    if (stage == "vae-diffuse" || stage == "vae-specular") {
        const bool diffuse = stage == "vae-diffuse";
        VaeConfig vcfg = diffuse ? cfg.vae_diffuse : cfg.vae_specular;
        Vae vae(vcfg);
        auto targets =
            load_split_stacks(data_dir, manifest, "train", diffuse ? "Y.fst" : "X.fst");
        const double beta = diffuse ? cfg.beta_kl_diffuse : cfg.beta_kl_specular;
        const std::string name = diffuse ? "vae_diffuse" : "vae_specular";
        StageResult res = train_vae_stage(vae, targets, beta, tcfg, out, name, resume);
        extra["final_loss"] = res.final_loss;
        write_manifest(out, cfg, extra);
        std::cout << stage << " final loss " << res.final_loss << "\n";
        return 0;
    }
    if (stage == "denoiser") {
        require_file(vae_d_path, "diffuse VAE checkpoint (--vae-diffuse)");
        require_file(vae_s_path, "specular VAE checkpoint (--vae-specular)");
        Vae vae_d(cfg.vae_diffuse);
        Vae vae_s(cfg.vae_specular);
        {
            auto params = vae_d.parameters("vae_diffuse");
            load_ldw(vae_d_path, params);
        }
        {
            auto params = vae_s.parameters("vae_specular");
            load_ldw(vae_s_path, params);
        }
        auto ys = load_split_stacks(data_dir, manifest, "train", "Y.fst");
        auto xs = load_split_stacks(data_dir, manifest, "train", "X.fst");
        auto z0 = encode_means(vae_d, ys);
        auto zc = encode_means(vae_s, xs);
        const double scale_d = latent_scale(z0);
        const double scale_c = latent_scale(zc);
        for (auto& z : z0) z = mul_scalar(z, 1.0 / scale_d);
        for (auto& z : zc) z = mul_scalar(z, 1.0 / scale_c);

        NoiseSchedule sched = cfg.schedule.make();
        Denoiser den(cfg.denoiser);
        StageResult res = train_denoiser_stage(den, z0, zc, sched, tcfg, out, "denoiser", resume);

        nlohmann::json meta = {{"latent_scale", scale_d},
                               {"cond_scale", scale_c},
                               {"schedule",
                                {{"kind", cfg.schedule.kind},
                                 {"T", cfg.schedule.steps},
                                 {"beta_start", cfg.schedule.beta_start},
                                 {"beta_end", cfg.schedule.beta_end}}}};
        std::ofstream ms(out + "/denoiser_meta.json");
        ms << meta.dump(2) << "\n";
        extra["final_loss"] = res.final_loss;
        extra["vae_diffuse_checkpoint"] = vae_d_path;
        extra["vae_specular_checkpoint"] = vae_s_path;
        write_manifest(out, cfg, extra);
        std::cout << "denoiser final loss " << res.final_loss << "\n";
        return 0;
    }
    throw ConfigError("unknown training stage '" + stage + "'");
}

int cmd_infer(const std::string& input, const std::string& config_path,
              const std::string& ckpt_dir, int steps, uint64_t seed, const std::string& out_dir) {
    RunConfig cfg = load_run_config(config_path);
    const std::string out = resolve_out(out_dir);
    require_file(ckpt_dir + "/vae_diffuse.ldw", "diffuse VAE checkpoint");
    require_file(ckpt_dir + "/vae_specular.ldw", "specular VAE checkpoint");
    require_file(ckpt_dir + "/denoiser.ldw", "denoiser checkpoint");
    require_file(ckpt_dir + "/denoiser_meta.json", "denoiser metadata");

    Vae vae_d(cfg.vae_diffuse);
    Vae vae_s(cfg.vae_specular);
    Denoiser den(cfg.denoiser);
    {
        auto p = vae_d.parameters("vae_diffuse");
        load_ldw(ckpt_dir + "/vae_diffuse.ldw", p);
    }
    {
        auto p = vae_s.parameters("vae_specular");
        load_ldw(ckpt_dir + "/vae_specular.ldw", p);
    }
    {
        auto p = den.parameters("denoiser");
        load_ldw(ckpt_dir + "/denoiser.ldw", p);
    }
    std::ifstream ms(ckpt_dir + "/denoiser_meta.json");
    nlohmann::json meta = nlohmann::json::parse(ms);
    const double scale_d = meta.at("latent_scale");
    const double scale_c = meta.at("cond_scale");
    ScheduleConfig scfg;
    scfg.kind = meta.at("schedule").at("kind");
    scfg.steps = meta.at("schedule").at("T");
    scfg.beta_start = meta.at("schedule").at("beta_start");
    scfg.beta_end = meta.at("schedule").at("beta_end");
    NoiseSchedule sched = scfg.make();

    FstData xin = read_fst(input);
    require(static_cast<int>(xin.channels) == cfg.vae_specular.in_channels,
            "infer: input channel count does not match the specular encoder");
    Tensor X = tensor_from_fst(xin);
    Tensor y_hat = infer_restore(vae_d, vae_s, den, sched, scale_d, scale_c, X, steps, seed);

    fs::create_directories(out);
    write_fst(out + "/Y_hat.fst", fst_from_tensor(y_hat, FstDtype::f32));
    // per-channel previews, clipped to [0,1]
    const int C = static_cast<int>(y_hat.dim(1));
    const int H = static_cast<int>(y_hat.dim(2));
    const int W = static_cast<int>(y_hat.dim(3));
    for (int c = 0; c < C; c++) {
        Image img(W, H);
        std::copy_n(y_hat.data().data() + static_cast<size_t>(c) * H * W, img.v.size(),
                    img.v.data());
        char name[64];
        std::snprintf(name, sizeof(name), "%s/preview_ch%02d.pgm", out.c_str(), c);
        write_pgm8(name, img);
    }
    nlohmann::json extra = {{"command", "infer"}, {"input", input},    {"checkpoints", ckpt_dir},
                            {"steps", steps},    {"infer_seed", seed}};
    write_manifest(out, cfg, extra);
    std::cout << "restored stack written to " << out << "/Y_hat.fst\n";
    return 0;
}

struct ReconRow {
    std::string scene, method;
    double phase_rmse = 0.0, cloud_rmse = 0.0, valid_fraction = 0.0;
};

ReconRow reconstruct_and_score(const std::string& scene, const std::string& method,
                               const std::vector<Image>& stack_images, const PatternSet& pattern,
                               const Image& truth_phase_target, int target_pitch,
                               const Image& truth_height, const std::vector<uint8_t>& truth_mask,
                               const StereoCalibration& calib, const std::string& map_path) {
    FringeStack stack;
    stack.pattern = pattern;
    stack.images = stack_images;
    PhaseMap pm = wrapped_phase(stack);
    for (size_t i = 0; i < pm.valid.size(); i++) pm.valid[i] = pm.valid[i] && truth_mask[i];

    // Truth absolute phase rescaled to this pattern's pitch.
    Image truth_phase(truth_phase_target.width, truth_phase_target.height);
    const double ratio = static_cast<double>(target_pitch) / pattern.pitch;
    for (size_t i = 0; i < truth_phase.v.size(); i++)
        truth_phase.v[i] = truth_phase_target.v[i] * ratio;

    PhaseMap um = reference_unwrap(pm, truth_phase);
    Image u_p(um.absolute.width, um.absolute.height);
    for (size_t i = 0; i < u_p.v.size(); i++)
        u_p.v[i] = phase_to_projector_coord(um.absolute.v[i], pattern.pitch, calib.u0);

    PointCloud cloud = triangulate(u_p, um.valid, calib);
    PointCloud truth_cloud = cloud_from_depth(truth_height, truth_mask, calib);

    ReconRow row;
    row.scene = scene;
    row.method = method;
    double acc = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < um.valid.size(); i++) {
        if (!um.valid[i]) continue;
        const double d = um.absolute.v[i] - truth_phase.v[i];
        acc += d * d;
        n++;
    }
    row.phase_rmse = n ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
    row.cloud_rmse = cloud_rmse(cloud, truth_cloud);
    size_t nv = 0;
    for (uint8_t m : cloud.valid) nv += m ? 1 : 0;
    row.valid_fraction = static_cast<double>(nv) / static_cast<double>(cloud.valid.size());

    if (!map_path.empty()) {
        std::vector<uint8_t> both;
        Image err = cloud_errors(cloud, truth_cloud, &both);
        double mx = 0.0;
        for (size_t i = 0; i < err.v.size(); i++)
            if (both[i]) mx = std::max(mx, err.v[i]);
        write_pgm16(map_path, err, 0.0, mx > 0 ? mx : 1.0);
    }
    return row;
}

int cmd_evaluate(const std::string& dataset_dir, const std::string& restored_dir,
                 const std::string& out_dir) {
    const std::string out = resolve_out(out_dir);
    DatasetManifest manifest = read_dataset_manifest(dataset_dir);
    std::ifstream cs(dataset_dir + "/calibration.json");
    if (!cs) throw MissingPrereqError("calibration.json not found in " + dataset_dir);
    std::string ctext((std::istreambuf_iterator<char>(cs)), std::istreambuf_iterator<char>());
    StereoCalibration calib = calibration_from_json(ctext);

    PatternSet input = manifest.config.input_patterns;
    input.width = input.height = manifest.config.projector_size;
    PatternSet target = manifest.config.target_patterns;
    target.width = target.height = manifest.config.projector_size;

    // Scenes to evaluate: every manifest pair with a restored stack present.
    std::vector<std::string> ids;
    for (const auto& p : manifest.pairs)
        if (fs::exists(restored_dir + "/" + p.id + ".fst")) ids.push_back(p.id);
    std::sort(ids.begin(), ids.end());
    require(!ids.empty(), "evaluate: no restored stacks matching dataset scenes in " + restored_dir);
    for (const auto& entry : fs::directory_iterator(restored_dir)) {
        if (entry.path().extension() != ".fst") continue;
        const std::string stem = entry.path().stem().string();
        bool known = false;
        for (const auto& p : manifest.pairs) known = known || p.id == stem;
        require(known, "evaluate: restored stack for unknown scene '" + stem + "'");
    }

    fs::create_directories(out);
    fs::create_directories(out + "/profiles");
    fs::create_directories(out + "/maps");

    std::vector<metrics::MetricRow> fringe_rows;
    std::vector<ReconRow> recon_rows;
    for (const auto& id : ids) {
        const std::string dir = dataset_dir + "/scenes/" + id;
        auto X = fst_to_images(read_fst(dir + "/X.fst"));
        auto Xref = fst_to_images(read_fst(dir + "/Xref.fst"));
        auto Y = fst_to_images(read_fst(dir + "/Y.fst"));
        auto truth = fst_to_images(read_fst(dir + "/truth.fst"));
        auto restored = fst_to_images(read_fst(restored_dir + "/" + id + ".fst"));
        require(restored.size() == Y.size(),
                "evaluate: restored channel count mismatch for scene " + id);
        for (auto& img : restored)
            for (auto& v : img.v) v = std::clamp(v, 0.0, 1.0);

        const Image& truth_phase = truth[0];
        const Image& truth_height = truth[1];
        std::vector<uint8_t> truth_mask(truth[2].size());
        for (size_t i = 0; i < truth_mask.size(); i++) truth_mask[i] = truth[2].v[i] > 0.5 ? 1 : 0;

        fringe_rows.push_back({id, "raw6", metrics::mse(X, Xref), metrics::ssim(X, Xref),
                               metrics::psnr(X, Xref)});
        fringe_rows.push_back({id, "restored24", metrics::mse(restored, Y),
                               metrics::ssim(restored, Y), metrics::psnr(restored, Y)});

        recon_rows.push_back(reconstruct_and_score(id, "raw6", X, input, truth_phase, target.pitch,
                                                   truth_height, truth_mask, calib,
                                                   out + "/maps/" + id + "_raw.pgm"));
        recon_rows.push_back(reconstruct_and_score(
            id, "restored24", restored, target, truth_phase, target.pitch, truth_height, truth_mask,
            calib, out + "/maps/" + id + "_restored.pgm"));

        // Middle-row line profile of the first channel of each stack.
        std::ofstream ps(out + "/profiles/" + id + ".csv");
        ps << "x,raw_ch0,ref_ch0,restored_ch0,target_ch0\n";
        const int y = X[0].height / 2;
        for (int x = 0; x < X[0].width; x++) {
            char line[160];
            std::snprintf(line, sizeof(line), "%d,%.8g,%.8g,%.8g,%.8g\n", x, X[0].at(y, x),
                          Xref[0].at(y, x), restored[0].at(y, x), Y[0].at(y, x));
            ps << line;
        }
    }

    metrics::write_metric_csv(out + "/fringe_metrics.csv", fringe_rows);
    {
        std::ofstream os(out + "/reconstruction.csv");
        os << "scene,method,phase_rmse_rad,cloud_rmse_mm,valid_fraction\n";
        for (const auto& r : recon_rows) {
            char line[192];
            std::snprintf(line, sizeof(line), "%s,%s,%.8g,%.8g,%.8g\n", r.scene.c_str(),
                          r.method.c_str(), r.phase_rmse, r.cloud_rmse, r.valid_fraction);
            os << line;
        }
    }
    nlohmann::json j = {{"tool", tool_version()},
                        {"command", "evaluate"},
                        {"dataset", dataset_dir},
                        {"restored_dir", restored_dir},
                        {"scenes", ids}};
    std::ofstream ms(out + "/manifest.json");
    ms << j.dump(2) << "\n";
    std::cout << "evaluation written to " << out << " (" << ids.size() << " scenes)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fringelab: synthetic structured-light lab with latent-diffusion fringe restoration"};
    app.require_subcommand(1);

    std::string config_path, out_dir, data_dir, stage, resume, input_path, ckpt_dir, restored_dir;
    std::string vae_d_path, vae_s_path, dataset_dir;
    int64_t seed_override = -1;
    uint64_t infer_seed = 0;
    int steps = 50;

    auto* gen = app.add_subcommand("gen-dataset", "synthesize a training/evaluation dataset");
    gen->add_option("--config", config_path, "run config JSON")->required();
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--seed", seed_override, "seed override");

    auto* train = app.add_subcommand("train", "train a model stage");
    train->add_option("--stage", stage, "vae-diffuse | vae-specular | denoiser")->required();
    train->add_option("--config", config_path, "run config JSON")->required();
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_option("--resume", resume, "training state to resume from");
    train->add_option("--vae-diffuse", vae_d_path, "diffuse VAE checkpoint (denoiser stage)");
    train->add_option("--vae-specular", vae_s_path, "specular VAE checkpoint (denoiser stage)");

    auto* infer = app.add_subcommand("infer", "restore a fringe stack");
    infer->add_option("--input", input_path, "input X.fst")->required();
    infer->add_option("--config", config_path, "run config JSON")->required();
    infer->add_option("--checkpoints", ckpt_dir, "directory with .ldw checkpoints")->required();
    infer->add_option("--steps", steps, "reverse process steps");
    infer->add_option("--seed", infer_seed, "inference seed");
    infer->add_option("--out", out_dir, "output directory")->required();

    auto* eval = app.add_subcommand("evaluate", "score restored stacks against a dataset");
    eval->add_option("--dataset", dataset_dir, "dataset directory")->required();
    eval->add_option("--restored-dir", restored_dir, "directory of <scene>.fst restored stacks")
        ->required();
    eval->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_dataset(config_path, out_dir, seed_override);
        if (train->parsed())
            return cmd_train(stage, config_path, data_dir, out_dir, resume, vae_d_path, vae_s_path);
        if (infer->parsed())
            return cmd_infer(input_path, config_path, ckpt_dir, steps, infer_seed, out_dir);
        if (eval->parsed()) return cmd_evaluate(dataset_dir, restored_dir, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const MissingPrereqError& e) {
        std::cerr << "missing prerequisite: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
