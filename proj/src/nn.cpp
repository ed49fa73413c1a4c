#include "fringelab/nn.hpp"

#include <cmath>

#include "fringelab/metrics.hpp"

namespace fringelab::nn {

namespace {

Tensor init_tensor(const Shape& shape, int fan_in, Init init, Rng& rng) {
    if (init == Init::zero) return Tensor::zeros(shape, true);
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
    for (double& v : d) v = rng.normal() * std;
    return Tensor::from_data(shape, std::move(d), true);
}

}  // namespace

int default_groups(int channels) {
    if (channels >= 32 && channels % 32 == 0) return 32;
    return channels;
}

Tensor sinusoid_embedding(const std::vector<double>& t, int dim) {
    require(dim >= 2 && dim % 2 == 0, "sinusoid_embedding: dim must be even and >= 2");
    const int half = dim / 2;
    std::vector<double> out(t.size() * static_cast<size_t>(dim));
    for (size_t b = 0; b < t.size(); b++) {
        for (int i = 0; i < half; i++) {
            const double expo = half > 1 ? static_cast<double>(i) / (half - 1) : 0.0;
            const double freq = std::pow(10000.0, -expo);
            out[b * dim + static_cast<size_t>(i)] = std::sin(t[b] * freq);
            out[b * dim + static_cast<size_t>(half + i)] = std::cos(t[b] * freq);
        }
    }
    return Tensor::from_data({static_cast<int64_t>(t.size()), dim}, std::move(out));
}

Tensor ssim_mean(const Tensor& x, const Tensor& y) {
    const int k = metrics::kSsimWindow;
    const double sigma = metrics::kSsimSigma;
    const double c1 = metrics::kSsimK1 * metrics::kSsimK1;
    const double c2 = metrics::kSsimK2 * metrics::kSsimK2;
    Tensor mx = blur_valid(x, k, sigma);
    Tensor my = blur_valid(y, k, sigma);
    Tensor mxy = blur_valid(mul(x, y), k, sigma);
    Tensor mx2 = blur_valid(mul(x, x), k, sigma);
    Tensor my2 = blur_valid(mul(y, y), k, sigma);
    Tensor vx = sub(mx2, mul(mx, mx));
    Tensor vy = sub(my2, mul(my, my));
    Tensor vxy = sub(mxy, mul(mx, my));
    Tensor num = mul(add_scalar(mul_scalar(mul(mx, my), 2.0), c1),
                     add_scalar(mul_scalar(vxy, 2.0), c2));
    Tensor den = mul(add_scalar(add(mul(mx, mx), mul(my, my)), c1),
                     add_scalar(add(vx, vy), c2));
    return mean(div(num, den));
}

// ---- Conv2d / Linear / norms ----

Conv2d::Conv2d(int cin, int cout, int ksize, int stride_, int padding_, Init init, Rng& rng,
               bool with_bias)
    : stride(stride_), padding(padding_) {
    weight = init_tensor({cout, cin, ksize, ksize}, cin * ksize * ksize, init, rng);
    if (with_bias) bias = Tensor::zeros({cout}, true);
}

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".weight", weight});
    if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

Linear::Linear(int in, int out_dim, Init init, Rng& rng, bool with_bias) {
    weight = init_tensor({out_dim, in}, in, init, rng);
    if (with_bias) bias = Tensor::zeros({out_dim}, true);
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".weight", weight});
    if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

GroupNorm::GroupNorm(int channels) : groups(default_groups(channels)) {
    gamma = Tensor::full({channels}, 1.0, true);
    beta = Tensor::zeros({channels}, true);
}

void GroupNorm::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
}

LayerNorm::LayerNorm(int channels) {
    gamma = Tensor::full({channels}, 1.0, true);
    beta = Tensor::zeros({channels}, true);
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
}

// ---- ResBlock ----

ResBlock::ResBlock(int cin, int cout, int time_dim, Rng& rng)
    : norm1(cin), norm2(cout) {
    conv1 = Conv2d(cin, cout, 3, 1, 1, Init::he, rng, /*with_bias=*/false);
    conv2 = Conv2d(cout, cout, 3, 1, 1, Init::he, rng);
    has_shortcut = cin != cout;
    if (has_shortcut) shortcut = Conv2d(cin, cout, 1, 1, 0, Init::he, rng);
    has_time = time_dim > 0;
    if (has_time) time_proj = Linear(time_dim, cout, Init::he, rng);
}

Tensor ResBlock::forward(const Tensor& x) const {
    require(!has_time, "ResBlock: time embedding required");
    Tensor h = conv1.forward(swish(norm1.forward(x)));
    h = conv2.forward(swish(norm2.forward(h)));
    return add(h, has_shortcut ? shortcut.forward(x) : x);
}

Tensor ResBlock::forward(const Tensor& x, const Tensor& emb) const {
    require(has_time, "ResBlock: block has no time conditioning");
    Tensor h = conv1.forward(swish(norm1.forward(x)));
    // The embedding enters after the second normalization; a pre-norm
    // injection is a per-channel constant, which per-channel group counts
    // would cancel outright.
    h = add_channel(swish(norm2.forward(h)), time_proj.forward(swish(emb)));
    h = conv2.forward(h);
    return add(h, has_shortcut ? shortcut.forward(x) : x);
}

void ResBlock::collect(const std::string& prefix, ParamList& out) const {
    norm1.collect(prefix + ".norm1", out);
    conv1.collect(prefix + ".conv1", out);
    norm2.collect(prefix + ".norm2", out);
    conv2.collect(prefix + ".conv2", out);
    if (has_shortcut) shortcut.collect(prefix + ".shortcut", out);
    if (has_time) time_proj.collect(prefix + ".time_proj", out);
}

// ---- AttentionBlock ----

AttentionBlock::AttentionBlock(int channels, Rng& rng) : norm(channels) {
    q = Conv2d(channels, channels, 1, 1, 0, Init::he, rng, /*with_bias=*/false);
    k = Conv2d(channels, channels, 1, 1, 0, Init::he, rng, /*with_bias=*/false);
    v = Conv2d(channels, channels, 1, 1, 0, Init::he, rng);
    proj = Conv2d(channels, channels, 1, 1, 0, Init::zero, rng);
}

Tensor AttentionBlock::forward(const Tensor& x) const {
    const int64_t h = x.dim(2), w = x.dim(3);
    const double scale = 1.0 / std::sqrt(static_cast<double>(x.dim(1)));
    Tensor n = norm.forward(x);
    Tensor Q = bchw_to_tokens(q.forward(n));
    Tensor K = bchw_to_tokens(k.forward(n));
    Tensor V = bchw_to_tokens(v.forward(n));
    Tensor attn = softmax(mul_scalar(matmul_b(Q, transpose12(K)), scale), 2);
    Tensor o = tokens_to_bchw(matmul_b(attn, V), h, w);
    return add(x, proj.forward(o));
}

void AttentionBlock::collect(const std::string& prefix, ParamList& out) const {
    norm.collect(prefix + ".norm", out);
    q.collect(prefix + ".q", out);
    k.collect(prefix + ".k", out);
    v.collect(prefix + ".v", out);
    proj.collect(prefix + ".proj", out);
}

// ---- ChannelAttention ----

ChannelAttention::ChannelAttention(int channels, Rng& rng) {
    fc1 = Linear(channels, channels, Init::he, rng);
    fc2 = Linear(channels, channels, Init::zero, rng);
}

Tensor ChannelAttention::forward(const Tensor& x) const {
    const int64_t B = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor tokens = reshape(bchw_to_tokens(x), {B * h * w, C});
    Tensor gate = sigmoid(fc2.forward(swish(fc1.forward(tokens))));
    Tensor g = tokens_to_bchw(reshape(gate, {B, h * w, C}), h, w);
    return mul(x, g);
}

void ChannelAttention::collect(const std::string& prefix, ParamList& out) const {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

// ---- ChannelAffine ----

ChannelAffine::ChannelAffine(int channels_, int emb_dim, Rng& rng) : channels(channels_) {
    const int hidden = emb_dim;
    fc1 = Linear(channels_ + emb_dim, hidden, Init::he, rng);
    fc2 = Linear(hidden, 2 * channels_, Init::zero, rng);
}

Tensor ChannelAffine::forward(const Tensor& x, const Tensor& emb) const {
    require(x.dim(1) == channels, "ChannelAffine: channel mismatch");
    Tensor stats = global_avg_pool(x);                       // (B, C)
    Tensor h = concat_axis1(stats, emb);                     // (B, C + E)
    Tensor p = fc2.forward(swish(fc1.forward(h)));           // (B, 2C)
    Tensor alpha = add_scalar(slice_axis1(p, 0, channels), 1.0);
    Tensor beta = slice_axis1(p, channels, 2 * channels);
    return scale_shift(x, alpha, beta);
}

void ChannelAffine::collect(const std::string& prefix, ParamList& out) const {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

// ---- TransformerLayer ----

TransformerLayer::TransformerLayer(int channels, int heads_, Rng& rng)
    : ln1(channels), ln2(channels), heads(heads_) {
    qkv = Linear(channels, 3 * channels, Init::he, rng, /*with_bias=*/false);
    attn_out = Linear(channels, channels, Init::zero, rng);
    mlp1 = Linear(channels, 4 * channels, Init::he, rng);
    mlp2 = Linear(4 * channels, channels, Init::zero, rng);
}

Tensor TransformerLayer::forward(const Tensor& tokens) const {
    const int64_t B = tokens.dim(0), N = tokens.dim(1), C = tokens.dim(2);
    const int64_t dh = C / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor n1 = ln1.forward(tokens);
    Tensor p = qkv.forward(reshape(n1, {B * N, C}));  // (B*N, 3C)
    Tensor q = split_heads(reshape(slice_axis1(p, 0, C), {B, N, C}), heads);
    Tensor k = split_heads(reshape(slice_axis1(p, C, 2 * C), {B, N, C}), heads);
    Tensor v = split_heads(reshape(slice_axis1(p, 2 * C, 3 * C), {B, N, C}), heads);
    Tensor attn = softmax(mul_scalar(matmul_b(q, transpose12(k)), scale), 2);
    Tensor o = merge_heads(matmul_b(attn, v), heads);  // (B, N, C)
    Tensor x = add(tokens, reshape(attn_out.forward(reshape(o, {B * N, C})), {B, N, C}));

    Tensor n2 = reshape(ln2.forward(x), {B * N, C});
    Tensor m = mlp2.forward(swish(mlp1.forward(n2)));
    return add(x, reshape(m, {B, N, C}));
}

void TransformerLayer::collect(const std::string& prefix, ParamList& out) const {
    ln1.collect(prefix + ".ln1", out);
    qkv.collect(prefix + ".qkv", out);
    attn_out.collect(prefix + ".attn_out", out);
    ln2.collect(prefix + ".ln2", out);
    mlp1.collect(prefix + ".mlp1", out);
    mlp2.collect(prefix + ".mlp2", out);
}

// ---- BottleneckAttention ----

BottleneckAttention::BottleneckAttention(int channels, int depth, int heads, Rng& rng)
    : norm(channels) {
    proj_in = Conv2d(channels, channels, 1, 1, 0, Init::he, rng);
    proj_out = Conv2d(channels, channels, 1, 1, 0, Init::zero, rng);
    for (int i = 0; i < depth; i++) layers.emplace_back(channels, heads, rng);
}

Tensor BottleneckAttention::forward(const Tensor& x) const {
    const int64_t h = x.dim(2), w = x.dim(3);
    Tensor t = bchw_to_tokens(proj_in.forward(norm.forward(x)));
    for (const auto& layer : layers) t = layer.forward(t);
    return add(x, proj_out.forward(tokens_to_bchw(t, h, w)));
}

void BottleneckAttention::collect(const std::string& prefix, ParamList& out) const {
    norm.collect(prefix + ".norm", out);
    proj_in.collect(prefix + ".proj_in", out);
    for (size_t i = 0; i < layers.size(); i++)
        layers[i].collect(prefix + ".tf" + std::to_string(i), out);
    proj_out.collect(prefix + ".proj_out", out);
}

// ---- TimeEmbedding ----

TimeEmbedding::TimeEmbedding(int dim_, Rng& rng) : dim(dim_) {
    fc1 = Linear(dim_, 4 * dim_, Init::he, rng);
    fc2 = Linear(4 * dim_, 4 * dim_, Init::he, rng);
}

Tensor TimeEmbedding::forward(const std::vector<double>& t) const {
    Tensor s = sinusoid_embedding(t, dim);
    return fc2.forward(swish(fc1.forward(s)));
}

void TimeEmbedding::collect(const std::string& prefix, ParamList& out) const {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

// ---- resampling ----

Downsample::Downsample(int channels, Rng& rng) {
    conv = Conv2d(channels, channels, 3, 2, 1, Init::he, rng, /*with_bias=*/false);
}

Tensor Downsample::forward(const Tensor& x) const {
    require(x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0, "Downsample: spatial dims must be even");
    return conv.forward(x);
}

void Downsample::collect(const std::string& prefix, ParamList& out) const {
    conv.collect(prefix + ".conv", out);
}

Upsample::Upsample(int channels, Rng& rng) {
    conv = Conv2d(channels, channels, 3, 1, 1, Init::he, rng, /*with_bias=*/false);
}

Tensor Upsample::forward(const Tensor& x) const { return conv.forward(nearest_up2(x)); }

void Upsample::collect(const std::string& prefix, ParamList& out) const {
    conv.collect(prefix + ".conv", out);
}

// ---- Adam ----

Adam::Adam(ParamList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.data().size(), 0.0);
        v_.emplace_back(p.tensor.data().size(), 0.0);
    }
}

void Adam::step() {
    step_count_++;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (size_t p = 0; p < params_.size(); p++) {
        auto& t = params_[p].tensor;
        if (t.grad().empty()) continue;
        auto& m = m_[p];
        auto& v = v_[p];
        auto& val = t.data();
        const auto& g = t.grad();
        for (size_t i = 0; i < val.size(); i++) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            val[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            if (!std::isfinite(val[i])) throw NumericError("Adam: non-finite parameter update");
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace fringelab::nn
