#include "fringelab/config.hpp"

#include <json.hpp>

#include <fstream>

namespace fringelab {

NoiseSchedule ScheduleConfig::make() const {
    require(kind == "linear", "schedule: unknown kind '" + kind + "'");
    return make_schedule_linear(steps, beta_start, beta_end);
}

RunConfig::RunConfig() {
    vae_diffuse.in_channels = 24;
    vae_diffuse.init_seed = 11;
    vae_specular.in_channels = 6;
    vae_specular.init_seed = 12;
    denoiser.init_seed = 13;
}

TrainConfig RunConfig::stage_train(const std::string& stage) const {
    TrainConfig t = train;
    t.seed = seed;
    t.schedule_steps = schedule.steps;
    t.beta_start = schedule.beta_start;
    t.beta_end = schedule.beta_end;
    auto it = stage_overrides.find(stage);
    if (it != stage_overrides.end()) {
        if (it->second.steps > 0) t.steps = it->second.steps;
        if (it->second.batch > 0) t.batch = it->second.batch;
        if (it->second.lr > 0) t.lr = it->second.lr;
    }
    return t;
}

namespace {

nlohmann::json vae_to_json(const VaeConfig& v) {
    return {{"in_channels", v.in_channels},
            {"base_width", v.base_width},
            {"mult", v.mult},
            {"latent_channels", v.latent_channels},
            {"init_seed", v.init_seed}};
}

void vae_from_json(const nlohmann::json& j, VaeConfig& v) {
    if (j.contains("in_channels")) v.in_channels = j.at("in_channels");
    if (j.contains("base_width")) v.base_width = j.at("base_width");
    if (j.contains("mult")) v.mult = j.at("mult").get<std::vector<int>>();
    if (j.contains("latent_channels")) v.latent_channels = j.at("latent_channels");
    if (j.contains("init_seed")) v.init_seed = j.at("init_seed");
}

}  // namespace

std::string run_config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["dataset"] = nlohmann::json::parse(dataset_config_to_json(cfg.dataset));
    j["vae_diffuse"] = vae_to_json(cfg.vae_diffuse);
    j["vae_specular"] = vae_to_json(cfg.vae_specular);
    j["denoiser"] = {{"latent_channels", cfg.denoiser.latent_channels},
                     {"cond_channels", cfg.denoiser.cond_channels},
                     {"base_width", cfg.denoiser.base_width},
                     {"mult", cfg.denoiser.mult},
                     {"res_per_level", cfg.denoiser.res_per_level},
                     {"heads", cfg.denoiser.heads},
                     {"tf_depth", cfg.denoiser.tf_depth},
                     {"use_affine", cfg.denoiser.use_affine},
                     {"use_channel_attention", cfg.denoiser.use_channel_attention},
                     {"use_bottleneck_attention", cfg.denoiser.use_bottleneck_attention},
                     {"init_seed", cfg.denoiser.init_seed}};
    j["schedule"] = {{"kind", cfg.schedule.kind},
                     {"T", cfg.schedule.steps},
                     {"beta_start", cfg.schedule.beta_start},
                     {"beta_end", cfg.schedule.beta_end}};
    j["train"] = {{"steps", cfg.train.steps},       {"batch", cfg.train.batch},
                  {"lr", cfg.train.lr},             {"log_every", cfg.train.log_every},
                  {"state_every", cfg.train.state_every}};
    j["beta_kl_diffuse"] = cfg.beta_kl_diffuse;
    j["beta_kl_specular"] = cfg.beta_kl_specular;
    if (!cfg.stage_overrides.empty()) {
        nlohmann::json ov;
        for (const auto& [stage, o] : cfg.stage_overrides) {
            nlohmann::json e;
            if (o.steps > 0) e["steps"] = o.steps;
            if (o.batch > 0) e["batch"] = o.batch;
            if (o.lr > 0) e["lr"] = o.lr;
            ov[stage] = e;
        }
        j["stage_overrides"] = ov;
    }
    return j.dump(2);
}

RunConfig run_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("run config: invalid JSON: ") + e.what());
    }
    RunConfig cfg;
    try {
        if (j.contains("seed")) cfg.seed = j.at("seed");
        if (j.contains("dataset")) cfg.dataset = dataset_config_from_json(j.at("dataset").dump());
        if (j.contains("vae_diffuse")) vae_from_json(j.at("vae_diffuse"), cfg.vae_diffuse);
        if (j.contains("vae_specular")) vae_from_json(j.at("vae_specular"), cfg.vae_specular);
        if (j.contains("denoiser")) {
            const auto& d = j.at("denoiser");
            auto get = [&](const char* key, auto& out) {
                if (d.contains(key)) out = d.at(key);
            };
            get("latent_channels", cfg.denoiser.latent_channels);
            get("cond_channels", cfg.denoiser.cond_channels);
            get("base_width", cfg.denoiser.base_width);
            if (d.contains("mult")) cfg.denoiser.mult = d.at("mult").get<std::vector<int>>();
            get("res_per_level", cfg.denoiser.res_per_level);
            get("heads", cfg.denoiser.heads);
            get("tf_depth", cfg.denoiser.tf_depth);
            get("use_affine", cfg.denoiser.use_affine);
            get("use_channel_attention", cfg.denoiser.use_channel_attention);
            get("use_bottleneck_attention", cfg.denoiser.use_bottleneck_attention);
            get("init_seed", cfg.denoiser.init_seed);
        }
        if (j.contains("schedule")) {
            const auto& s = j.at("schedule");
            if (s.contains("kind")) cfg.schedule.kind = s.at("kind");
            if (s.contains("T")) cfg.schedule.steps = s.at("T");
            if (s.contains("beta_start")) cfg.schedule.beta_start = s.at("beta_start");
            if (s.contains("beta_end")) cfg.schedule.beta_end = s.at("beta_end");
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            if (t.contains("steps")) cfg.train.steps = t.at("steps");
            if (t.contains("batch")) cfg.train.batch = t.at("batch");
            if (t.contains("lr")) cfg.train.lr = t.at("lr");
            if (t.contains("log_every")) cfg.train.log_every = t.at("log_every");
            if (t.contains("state_every")) cfg.train.state_every = t.at("state_every");
        }
        if (j.contains("beta_kl_diffuse")) cfg.beta_kl_diffuse = j.at("beta_kl_diffuse");
        if (j.contains("beta_kl_specular")) cfg.beta_kl_specular = j.at("beta_kl_specular");
        if (j.contains("stage_overrides")) {
            for (const auto& [stage, o] : j.at("stage_overrides").items()) {
                StageOverride ov;
                if (o.contains("steps")) ov.steps = o.at("steps");
                if (o.contains("batch")) ov.batch = o.at("batch");
                if (o.contains("lr")) ov.lr = o.at("lr");
                cfg.stage_overrides[stage] = ov;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    // Keep dataset seed in lockstep with the run seed unless set explicitly.
    if (!j.contains("dataset") || !j.at("dataset").contains("seed")) cfg.dataset.seed = cfg.seed;
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return run_config_from_json(text);
}

std::string tool_version() { return "fringelab 0.1.0"; }

}  // namespace fringelab
