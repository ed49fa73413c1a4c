#pragma once

#include <string>
#include <vector>

#include "fringelab/tensor.hpp"

namespace fringelab::nn {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

enum class Init { he, zero };

// GroupNorm group count: 32 when the channel count is a multiple of 32,
// otherwise the channel count itself (per-channel normalization).
int default_groups(int channels);

// Sinusoidal timestep embedding: first half sin, second half cos over a
// geometric frequency ladder from 1 down to 1e-4. Forward-only.
Tensor sinusoid_embedding(const std::vector<double>& t, int dim);

// Differentiable mean SSIM with the canonical 11x11/1.5 window and unit
// dynamic range; valid window placements only. Cross-checked against
// metrics::ssim in the test suite.
Tensor ssim_mean(const Tensor& x, const Tensor& y);

// Convolutions that feed a normalization layer are built bias-free: a
// per-channel constant is cancelled exactly when the group count equals the
// channel count, leaving a dead parameter.
struct Conv2d {
    Tensor weight, bias;
    int stride = 1, padding = 1;

    Conv2d() = default;
    Conv2d(int cin, int cout, int ksize, int stride, int padding, Init init, Rng& rng,
           bool with_bias = true);
    Tensor forward(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }
    void collect(const std::string& prefix, ParamList& out) const;
};

struct Linear {
    Tensor weight, bias;

    Linear() = default;
    Linear(int in, int out, Init init, Rng& rng, bool with_bias = true);
    Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
    void collect(const std::string& prefix, ParamList& out) const;
};

struct GroupNorm {
    int groups = 1;
    double eps = 1e-6;
    Tensor gamma, beta;

    GroupNorm() = default;
    explicit GroupNorm(int channels);
    Tensor forward(const Tensor& x) const { return group_norm(x, groups, gamma, beta, eps); }
    void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
    double eps = 1e-6;
    Tensor gamma, beta;

    LayerNorm() = default;
    explicit LayerNorm(int channels);
    Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
    void collect(const std::string& prefix, ParamList& out) const;
};

// GroupNorm - Swish - 3x3 conv, twice, plus residual (1x1 projection when the
// channel count changes). The time-conditioned variant adds a projected
// embedding after the first convolution.
struct ResBlock {
    GroupNorm norm1, norm2;
    Conv2d conv1, conv2;
    Conv2d shortcut;
    bool has_shortcut = false;
    Linear time_proj;
    bool has_time = false;

    ResBlock() = default;
    ResBlock(int cin, int cout, int time_dim, Rng& rng);  // time_dim 0 = no conditioning
    Tensor forward(const Tensor& x) const;
    Tensor forward(const Tensor& x, const Tensor& emb) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Single-head spatial attention: 1x1 q/k/v projections, spatial softmax, 1x1
// output projection, residual.
struct AttentionBlock {
    GroupNorm norm;
    Conv2d q, k, v, proj;

    AttentionBlock() = default;
    AttentionBlock(int channels, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Per-token two-layer MLP over channels with sigmoid gates; gates vary per
// spatial location. Zero-initialized final layer gives 0.5 gates.
struct ChannelAttention {
    Linear fc1, fc2;

    ChannelAttention() = default;
    ChannelAttention(int channels, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Time-variant per-channel scale and shift predicted from global channel
// statistics and the time embedding; identity at initialization.
struct ChannelAffine {
    Linear fc1, fc2;
    int channels = 0;

    ChannelAffine() = default;
    ChannelAffine(int channels, int emb_dim, Rng& rng);
    Tensor forward(const Tensor& x, const Tensor& emb) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Pre-norm transformer layer over HW tokens (no positional encoding).
struct TransformerLayer {
    LayerNorm ln1, ln2;
    Linear qkv, attn_out, mlp1, mlp2;
    int heads = 4;

    TransformerLayer() = default;
    TransformerLayer(int channels, int heads, Rng& rng);
    Tensor forward(const Tensor& tokens) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Normalize -> 1x1 projection -> HW tokens -> transformer stack -> 1x1
// projection back, with an outer residual connection.
struct BottleneckAttention {
    GroupNorm norm;
    Conv2d proj_in, proj_out;
    std::vector<TransformerLayer> layers;

    BottleneckAttention() = default;
    BottleneckAttention(int channels, int depth, int heads, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Sinusoid of width `dim` mapped by a two-layer MLP to width 4*dim.
struct TimeEmbedding {
    int dim = 0;
    Linear fc1, fc2;

    TimeEmbedding() = default;
    TimeEmbedding(int dim, Rng& rng);
    Tensor forward(const std::vector<double>& t) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Zero-padding followed by a stride-2 3x3 convolution.
struct Downsample {
    Conv2d conv;

    Downsample() = default;
    Downsample(int channels, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Nearest-neighbor interpolation followed by a 3x3 convolution.
struct Upsample {
    Conv2d conv;

    Upsample() = default;
    Upsample(int channels, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct AdamConfig {
    double lr = 2e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
  public:
    Adam(ParamList params, AdamConfig cfg);

    void step();
    void zero_grad();

    int64_t step_count() const { return step_count_; }
    const ParamList& params() const { return params_; }
    AdamConfig& config() { return cfg_; }

    // Serialized alongside parameters for exact training resume.
    std::vector<std::vector<double>>& moment1() { return m_; }
    std::vector<std::vector<double>>& moment2() { return v_; }
    void set_step_count(int64_t s) { step_count_ = s; }

  private:
    ParamList params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    int64_t step_count_ = 0;
};

}  // namespace fringelab::nn
