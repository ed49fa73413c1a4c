#pragma once

#include <map>
#include <string>

#include "fringelab/diffusion.hpp"
#include "fringelab/model.hpp"
#include "fringelab/reflectance.hpp"

namespace fringelab {

struct ScheduleConfig {
    std::string kind = "linear";
    int steps = 50;  // T; desk default (1000 for paper-scale training)
    double beta_start = 1e-4;
    double beta_end = 2e-2;

    NoiseSchedule make() const;
};

// Per-stage overrides of the base training hyperparameters.
struct StageOverride {
    int steps = -1;
    int batch = -1;
    double lr = -1.0;
};

// Top-level run configuration, echoed verbatim into every output manifest.
struct RunConfig {
    uint64_t seed = 0;
    DatasetConfig dataset;
    VaeConfig vae_diffuse;
    VaeConfig vae_specular;
    DenoiserConfig denoiser;
    ScheduleConfig schedule;
    TrainConfig train;
    double beta_kl_diffuse = kBetaDiffuse;
    double beta_kl_specular = kBetaSpecular;
    std::map<std::string, StageOverride> stage_overrides;  // keys: vae-diffuse, ...

    RunConfig();
    TrainConfig stage_train(const std::string& stage) const;
};

std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::string& path);

std::string tool_version();

}  // namespace fringelab
