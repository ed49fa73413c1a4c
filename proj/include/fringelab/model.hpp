#pragma once

#include <string>
#include <vector>

#include "fringelab/diffusion.hpp"
#include "fringelab/fst.hpp"
#include "fringelab/nn.hpp"

namespace fringelab {

// ---- configs ----

struct VaeConfig {
    int in_channels = 24;       // 24 diffuse, 6 specular
    int base_width = 16;        // paper-scale 64
    std::vector<int> mult = {1, 2, 4, 4};
    int latent_channels = 4;    // encoder head emits 2x this
    uint64_t init_seed = 1;

    void validate() const;
    int downsamples() const { return static_cast<int>(mult.size()) - 1; }
    int spatial_factor() const { return 1 << downsamples(); }
};

struct DenoiserConfig {
    int latent_channels = 4;
    int cond_channels = 4;      // specular latent, concatenated channel-wise
    int base_width = 16;        // paper-scale 320
    std::vector<int> mult = {1, 2, 4, 4};
    int res_per_level = 2;
    int heads = 4;
    int tf_depth = 1;
    bool use_affine = true;
    bool use_channel_attention = true;
    bool use_bottleneck_attention = true;
    uint64_t init_seed = 2;

    void validate() const;
    int in_channels() const { return latent_channels + cond_channels; }
};

// ---- modules ----

struct Posterior {
    Tensor mean, logvar;
};

class Vae {
  public:
    explicit Vae(const VaeConfig& cfg);

    Posterior encode(const Tensor& x) const;
    Tensor sample(const Posterior& p, Rng& rng) const;  // mu + sigma * eps
    Tensor decode(const Tensor& z) const;
    nn::ParamList parameters(const std::string& prefix) const;
    const VaeConfig& config() const { return cfg_; }

  private:
    VaeConfig cfg_;
    nn::Conv2d enc_in_;
    struct EncLevel {
        nn::ResBlock r1, r2;
        nn::Downsample down;
        bool has_down = false;
    };
    std::vector<EncLevel> enc_;
    nn::ResBlock emid1_, emid2_;
    nn::AttentionBlock emid_attn_;
    nn::GroupNorm enc_norm_out_;
    nn::Conv2d enc_out_, quant_;

    nn::Conv2d post_quant_, dec_in_;
    nn::ResBlock dmid1_, dmid2_;
    nn::AttentionBlock dmid_attn_;
    struct DecLevel {
        nn::ResBlock r1, r2;
        nn::Upsample up;
        bool has_up = false;
    };
    std::vector<DecLevel> dec_;
    nn::GroupNorm dec_norm_out_;
    nn::Conv2d dec_out_;
};

class Denoiser {
  public:
    explicit Denoiser(const DenoiserConfig& cfg);

    // z_noisy: (B, latent, h, w); z_cond: (B, cond, h, w); t: per-item timestep.
    Tensor forward(const Tensor& z_noisy, const Tensor& z_cond,
                   const std::vector<double>& t) const;
    nn::ParamList parameters(const std::string& prefix) const;
    const DenoiserConfig& config() const { return cfg_; }

  private:
    DenoiserConfig cfg_;
    nn::TimeEmbedding temb_;
    nn::ChannelAffine affine_;
    nn::Conv2d conv_in_;
    nn::ChannelAttention attn_in_;
    struct DownLevel {
        std::vector<nn::ResBlock> res;
        nn::ChannelAttention attn;
        nn::Downsample down;
        bool has_down = false;
    };
    std::vector<DownLevel> down_;
    nn::ResBlock mid1_, mid2_;
    nn::BottleneckAttention mid_attn_;
    struct UpLevel {
        nn::Upsample up;
        nn::ChannelAttention attn;
        bool has_up = false;
        std::vector<nn::ResBlock> res;
    };
    std::vector<UpLevel> up_;
    nn::GroupNorm norm_out_;
    nn::Conv2d conv_out_;
};

// ---- losses ----

struct VaeLossTerms {
    Tensor total;       // Huber + (1 - SSIM) + beta * KL
    double huber = 0.0;
    double ssim_term = 0.0;  // 1 - SSIM
    double kl = 0.0;
};

constexpr double kHuberDelta = 1.0;
constexpr double kBetaDiffuse = 1e-5;
constexpr double kBetaSpecular = 1e-1;

VaeLossTerms vae_loss(const Tensor& x, const Tensor& x_hat, const Tensor& mu,
                      const Tensor& logvar, double beta);

// ---- training ----

struct TrainConfig {
    int steps = 4000;
    int batch = 2;
    double lr = 2e-5;           // paper value
    uint64_t seed = 0;
    int log_every = 25;
    int state_every = 1000;     // training-state autosave cadence (steps)
    int schedule_steps = 50;    // T
    double beta_start = 1e-4;
    double beta_end = 2e-2;
};

struct StageResult {
    double final_loss = 0.0;
    std::vector<std::pair<int, double>> loss_curve;  // (step, total)
};

// Stage 1: trains one VAE on its stacks with the composite loss. Writes
// <stage>.ldw, <stage>_state.bin and appends to <stage>_loss.csv in out_dir.
StageResult train_vae_stage(Vae& vae, const std::vector<Tensor>& targets, double kl_beta,
                            const TrainConfig& cfg, const std::string& out_dir,
                            const std::string& stage, const std::string& resume_path = "");

// Stage 2: frozen encoders; latents are precomputed posterior means already
// divided by their standardization scales.
StageResult train_denoiser_stage(Denoiser& den, const std::vector<Tensor>& z0,
                                 const std::vector<Tensor>& z_cond, const NoiseSchedule& sched,
                                 const TrainConfig& cfg, const std::string& out_dir,
                                 const std::string& stage, const std::string& resume_path = "");

// Posterior-mean latents of each stack (no gradients).
std::vector<Tensor> encode_means(const Vae& vae, const std::vector<Tensor>& stacks);

// Global standard deviation of all latent elements (standardization scale).
double latent_scale(const std::vector<Tensor>& latents);

// Deterministic restoration: encode the specular stack, run the reverse
// process from seeded Gaussian noise with sigma = 0, decode.
Tensor infer_restore(const Vae& diffuse_vae, const Vae& specular_vae, const Denoiser& den,
                     const NoiseSchedule& sched, double latent_scale_d, double cond_scale,
                     const Tensor& X, int steps, uint64_t seed);

// ---- tensor/file bridges ----

Tensor tensor_from_fst(const FstData& d);                       // (1, C, H, W)
FstData fst_from_tensor(const Tensor& t, FstDtype dtype);       // from (1, C, H, W)
Tensor stack_batch(const std::vector<Tensor>& items, const std::vector<size_t>& indices);

}  // namespace fringelab
