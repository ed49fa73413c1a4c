#include "fringelab/model.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fringelab/checkpoint.hpp"

namespace fringelab {

using nn::Init;

void VaeConfig::validate() const {
    require(in_channels > 0 && base_width > 0 && latent_channels > 0, "VaeConfig: bad sizes");
    require(!mult.empty(), "VaeConfig: empty multiplier vector");
    for (size_t i = 1; i < mult.size(); i++)
        require(mult[i] >= mult[i - 1], "VaeConfig: multipliers must be non-decreasing");
}

void DenoiserConfig::validate() const {
    require(latent_channels > 0 && cond_channels > 0 && base_width > 0, "DenoiserConfig: bad sizes");
    require(!mult.empty(), "DenoiserConfig: empty multiplier vector");
    require(res_per_level >= 1, "DenoiserConfig: need at least one res block per level");
    require(base_width % heads == 0, "DenoiserConfig: heads must divide base width");
}

// ---- Vae ----

Vae::Vae(const VaeConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg.init_seed);
    const int L = static_cast<int>(cfg.mult.size());
    auto width = [&](int i) { return cfg.base_width * cfg.mult[static_cast<size_t>(i)]; };

    enc_in_ = nn::Conv2d(cfg.in_channels, width(0), 3, 1, 1, Init::he, rng, /*with_bias=*/false);
    int prev = width(0);
    for (int i = 0; i < L; i++) {
        EncLevel lvl;
        lvl.r1 = nn::ResBlock(prev, width(i), 0, rng);
        lvl.r2 = nn::ResBlock(width(i), width(i), 0, rng);
        lvl.has_down = i < L - 1;
        if (lvl.has_down) lvl.down = nn::Downsample(width(i), rng);
        enc_.push_back(std::move(lvl));
        prev = width(i);
    }
    emid1_ = nn::ResBlock(prev, prev, 0, rng);
    emid_attn_ = nn::AttentionBlock(prev, rng);
    emid2_ = nn::ResBlock(prev, prev, 0, rng);
    enc_norm_out_ = nn::GroupNorm(prev);
    enc_out_ = nn::Conv2d(prev, 2 * cfg.latent_channels, 3, 1, 1, Init::he, rng);
    quant_ = nn::Conv2d(2 * cfg.latent_channels, 2 * cfg.latent_channels, 1, 1, 0, Init::he, rng);

    post_quant_ = nn::Conv2d(cfg.latent_channels, cfg.latent_channels, 1, 1, 0, Init::he, rng);
    dec_in_ = nn::Conv2d(cfg.latent_channels, width(L - 1), 3, 1, 1, Init::he, rng,
                         /*with_bias=*/false);
    dmid1_ = nn::ResBlock(width(L - 1), width(L - 1), 0, rng);
    dmid_attn_ = nn::AttentionBlock(width(L - 1), rng);
    dmid2_ = nn::ResBlock(width(L - 1), width(L - 1), 0, rng);
    prev = width(L - 1);
    for (int i = L - 1; i >= 0; i--) {
        DecLevel lvl;
        lvl.r1 = nn::ResBlock(prev, width(i), 0, rng);
        lvl.r2 = nn::ResBlock(width(i), width(i), 0, rng);
        lvl.has_up = i > 0;
        if (lvl.has_up) lvl.up = nn::Upsample(width(i), rng);
        dec_.push_back(std::move(lvl));
        prev = width(i);
    }
    dec_norm_out_ = nn::GroupNorm(width(0));
    dec_out_ = nn::Conv2d(width(0), cfg.in_channels, 3, 1, 1, Init::zero, rng);
}

Posterior Vae::encode(const Tensor& x) const {
    require(x.shape().size() == 4 && x.dim(1) == cfg_.in_channels,
            "Vae::encode: wrong channel count");
    const int f = cfg_.spatial_factor();
    require(x.dim(2) % f == 0 && x.dim(3) % f == 0,
            "Vae::encode: spatial dims must be divisible by " + std::to_string(f));
    Tensor h = enc_in_.forward(x);
    for (const auto& lvl : enc_) {
        h = lvl.r2.forward(lvl.r1.forward(h));
        if (lvl.has_down) h = lvl.down.forward(h);
    }
    h = emid2_.forward(emid_attn_.forward(emid1_.forward(h)));
    h = quant_.forward(enc_out_.forward(swish(enc_norm_out_.forward(h))));
    Posterior p;
    p.mean = slice_axis1(h, 0, cfg_.latent_channels);
    p.logvar = slice_axis1(h, cfg_.latent_channels, 2 * cfg_.latent_channels);
    return p;
}

Tensor Vae::sample(const Posterior& p, Rng& rng) const {
    Tensor eps = Tensor::randn(p.mean.shape(), rng);
    return add(p.mean, mul(exp_t(mul_scalar(p.logvar, 0.5)), eps));
}

Tensor Vae::decode(const Tensor& z) const {
    require(z.shape().size() == 4 && z.dim(1) == cfg_.latent_channels,
            "Vae::decode: latent shape mismatch");
    Tensor h = dec_in_.forward(post_quant_.forward(z));
    h = dmid2_.forward(dmid_attn_.forward(dmid1_.forward(h)));
    for (const auto& lvl : dec_) {
        h = lvl.r2.forward(lvl.r1.forward(h));
        if (lvl.has_up) h = lvl.up.forward(h);
    }
    return dec_out_.forward(swish(dec_norm_out_.forward(h)));
}

nn::ParamList Vae::parameters(const std::string& prefix) const {
    nn::ParamList out;
    enc_in_.collect(prefix + ".enc_in", out);
    for (size_t i = 0; i < enc_.size(); i++) {
        const std::string p = prefix + ".enc" + std::to_string(i);
        enc_[i].r1.collect(p + ".r1", out);
        enc_[i].r2.collect(p + ".r2", out);
        if (enc_[i].has_down) enc_[i].down.collect(p + ".down", out);
    }
    emid1_.collect(prefix + ".emid1", out);
    emid_attn_.collect(prefix + ".emid_attn", out);
    emid2_.collect(prefix + ".emid2", out);
    enc_norm_out_.collect(prefix + ".enc_norm_out", out);
    enc_out_.collect(prefix + ".enc_out", out);
    quant_.collect(prefix + ".quant", out);
    post_quant_.collect(prefix + ".post_quant", out);
    dec_in_.collect(prefix + ".dec_in", out);
    dmid1_.collect(prefix + ".dmid1", out);
    dmid_attn_.collect(prefix + ".dmid_attn", out);
    dmid2_.collect(prefix + ".dmid2", out);
    for (size_t i = 0; i < dec_.size(); i++) {
        const std::string p = prefix + ".dec" + std::to_string(i);
        dec_[i].r1.collect(p + ".r1", out);
        dec_[i].r2.collect(p + ".r2", out);
        if (dec_[i].has_up) dec_[i].up.collect(p + ".up", out);
    }
    dec_norm_out_.collect(prefix + ".dec_norm_out", out);
    dec_out_.collect(prefix + ".dec_out", out);
    return out;
}

// ---- Denoiser ----

Denoiser::Denoiser(const DenoiserConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg.init_seed);
    const int L = static_cast<int>(cfg.mult.size());
    const int C = cfg.base_width;
    const int emb = 4 * C;
    auto width = [&](int i) { return C * cfg.mult[static_cast<size_t>(i)]; };

    temb_ = nn::TimeEmbedding(C, rng);
    if (cfg.use_affine) affine_ = nn::ChannelAffine(cfg.in_channels(), emb, rng);
    conv_in_ = nn::Conv2d(cfg.in_channels(), C, 3, 1, 1, Init::he, rng, /*with_bias=*/false);
    if (cfg.use_channel_attention) attn_in_ = nn::ChannelAttention(C, rng);

    int prev = C;
    for (int i = 0; i < L; i++) {
        DownLevel lvl;
        for (int r = 0; r < cfg.res_per_level; r++) {
            lvl.res.emplace_back(r == 0 ? prev : width(i), width(i), emb, rng);
        }
        lvl.has_down = i < L - 1;
        if (lvl.has_down) {
            if (cfg.use_channel_attention) lvl.attn = nn::ChannelAttention(width(i), rng);
            lvl.down = nn::Downsample(width(i), rng);
        }
        down_.push_back(std::move(lvl));
        prev = width(i);
    }
    mid1_ = nn::ResBlock(prev, prev, emb, rng);
    if (cfg.use_bottleneck_attention)
        mid_attn_ = nn::BottleneckAttention(prev, cfg.tf_depth, cfg.heads, rng);
    mid2_ = nn::ResBlock(prev, prev, emb, rng);

    for (int i = L - 1; i >= 0; i--) {
        UpLevel lvl;
        lvl.has_up = i < L - 1;
        if (lvl.has_up) {
            lvl.up = nn::Upsample(prev, rng);
            if (cfg.use_channel_attention) lvl.attn = nn::ChannelAttention(prev, rng);
        }
        for (int r = 0; r < cfg.res_per_level; r++) {
            const int cin = r == 0 ? prev + width(i) : width(i);  // skip concatenation
            lvl.res.emplace_back(cin, width(i), emb, rng);
        }
        up_.push_back(std::move(lvl));
        prev = width(i);
    }
    norm_out_ = nn::GroupNorm(C);
    conv_out_ = nn::Conv2d(C, cfg.latent_channels, 3, 1, 1, Init::zero, rng);
}

Tensor Denoiser::forward(const Tensor& z_noisy, const Tensor& z_cond,
                         const std::vector<double>& t) const {
    require(z_noisy.shape().size() == 4 && z_cond.shape().size() == 4,
            "Denoiser: latents must be (B,C,h,w)");
    require(z_noisy.dim(1) == cfg_.latent_channels && z_cond.dim(1) == cfg_.cond_channels,
            "Denoiser: latent channel mismatch");
    require(z_noisy.dim(0) == z_cond.dim(0) && z_noisy.dim(2) == z_cond.dim(2) &&
                z_noisy.dim(3) == z_cond.dim(3),
            "Denoiser: z_t and z_s shapes differ");
    require(static_cast<int64_t>(t.size()) == z_noisy.dim(0),
            "Denoiser: timestep count must match batch");

    Tensor emb = temb_.forward(t);
    Tensor h = concat_axis1(z_noisy, z_cond);
    if (cfg_.use_affine) h = affine_.forward(h, emb);
    h = conv_in_.forward(h);
    if (cfg_.use_channel_attention) h = attn_in_.forward(h);

    std::vector<Tensor> skips;
    for (const auto& lvl : down_) {
        for (const auto& r : lvl.res) h = r.forward(h, emb);
        skips.push_back(h);
        if (lvl.has_down) {
            if (cfg_.use_channel_attention) h = lvl.attn.forward(h);
            h = lvl.down.forward(h);
        }
    }
    h = mid1_.forward(h, emb);
    if (cfg_.use_bottleneck_attention) h = mid_attn_.forward(h);
    h = mid2_.forward(h, emb);

    for (size_t i = 0; i < up_.size(); i++) {
        const auto& lvl = up_[i];
        if (lvl.has_up) {
            h = lvl.up.forward(h);
            if (cfg_.use_channel_attention) h = lvl.attn.forward(h);
        }
        h = concat_axis1(h, skips[skips.size() - 1 - i]);
        for (const auto& r : lvl.res) h = r.forward(h, emb);
    }
    return conv_out_.forward(swish(norm_out_.forward(h)));
}

nn::ParamList Denoiser::parameters(const std::string& prefix) const {
    nn::ParamList out;
    temb_.collect(prefix + ".temb", out);
    if (cfg_.use_affine) affine_.collect(prefix + ".affine", out);
    conv_in_.collect(prefix + ".conv_in", out);
    if (cfg_.use_channel_attention) attn_in_.collect(prefix + ".attn_in", out);
    for (size_t i = 0; i < down_.size(); i++) {
        const std::string p = prefix + ".down" + std::to_string(i);
        for (size_t r = 0; r < down_[i].res.size(); r++)
            down_[i].res[r].collect(p + ".res" + std::to_string(r), out);
        if (down_[i].has_down) {
            if (cfg_.use_channel_attention) down_[i].attn.collect(p + ".attn", out);
            down_[i].down.collect(p + ".down", out);
        }
    }
    mid1_.collect(prefix + ".mid1", out);
    if (cfg_.use_bottleneck_attention) mid_attn_.collect(prefix + ".mid_attn", out);
    mid2_.collect(prefix + ".mid2", out);
    for (size_t i = 0; i < up_.size(); i++) {
        const std::string p = prefix + ".up" + std::to_string(i);
        if (up_[i].has_up) {
            up_[i].up.collect(p + ".up", out);
            if (cfg_.use_channel_attention) up_[i].attn.collect(p + ".attn", out);
        }
        for (size_t r = 0; r < up_[i].res.size(); r++)
            up_[i].res[r].collect(p + ".res" + std::to_string(r), out);
    }
    norm_out_.collect(prefix + ".norm_out", out);
    conv_out_.collect(prefix + ".conv_out", out);
    return out;
}

// ---- losses ----

VaeLossTerms vae_loss(const Tensor& x, const Tensor& x_hat, const Tensor& mu,
                      const Tensor& logvar, double beta) {
    VaeLossTerms terms;
    Tensor h = huber_loss(x_hat, x, kHuberDelta);
    Tensor s = sub(Tensor::scalar(1.0), nn::ssim_mean(x_hat, x));
    Tensor k = kl_loss(mu, logvar);
    terms.huber = h.item();
    terms.ssim_term = s.item();
    terms.kl = k.item();
    terms.total = add(add(h, s), mul_scalar(k, beta));
    return terms;
}

// ---- training ----

namespace {

struct LossLog {
    std::ofstream os;
    explicit LossLog(const std::string& path, bool append) {
        os.open(path, append ? std::ios::app : std::ios::out);
        if (!append) os << "step,stage,total,huber,ssim,kl\n";
    }
    void row(int step, const std::string& stage, double total, double huber, double ssim,
             double kl) {
        char line[192];
        std::snprintf(line, sizeof(line), "%d,%s,%.12g,%.12g,%.12g,%.12g\n", step, stage.c_str(),
                      total, huber, ssim, kl);
        os << line;
        os.flush();
    }
};

}  // namespace

Tensor stack_batch(const std::vector<Tensor>& items, const std::vector<size_t>& indices) {
    require(!indices.empty(), "stack_batch: empty batch");
    const Shape& s = items[indices[0]].shape();
    Shape out_shape = s;
    out_shape[0] = static_cast<int64_t>(indices.size());
    const size_t item_n = items[indices[0]].data().size();
    std::vector<double> data(indices.size() * item_n);
    for (size_t b = 0; b < indices.size(); b++) {
        require(items[indices[b]].shape() == s, "stack_batch: mismatched item shapes");
        std::copy_n(items[indices[b]].data().data(), item_n, data.data() + b * item_n);
    }
    return Tensor::from_data(out_shape, std::move(data));
}

StageResult train_vae_stage(Vae& vae, const std::vector<Tensor>& targets, double kl_beta,
                            const TrainConfig& cfg, const std::string& out_dir,
                            const std::string& stage, const std::string& resume_path) {
    require(!targets.empty(), "train_vae_stage: empty training set");
    std::filesystem::create_directories(out_dir);
    nn::AdamConfig acfg;
    acfg.lr = cfg.lr;
    nn::Adam opt(vae.parameters(stage), acfg);
    Rng rng(cfg.seed);
    int start_step = 0;
    if (!resume_path.empty()) {
        TrainState st = load_train_state(resume_path, opt);
        rng.load_state(st.rng_state);
        start_step = static_cast<int>(st.step);
    }
    LossLog log(out_dir + "/" + stage + "_loss.csv", start_step > 0);

    StageResult result;
    const int batch = std::min<int>(cfg.batch, static_cast<int>(targets.size()));
    for (int step = start_step + 1; step <= cfg.steps; step++) {
        std::vector<size_t> idx(static_cast<size_t>(batch));
        for (auto& i : idx) i = rng.index(targets.size());
        Tensor x = stack_batch(targets, idx);
        Posterior p = vae.encode(x);
        Tensor z = vae.sample(p, rng);
        Tensor x_hat = vae.decode(z);
        VaeLossTerms terms = vae_loss(x, x_hat, p.mean, p.logvar, kl_beta);
        opt.zero_grad();
        backward(terms.total);
        opt.step();
        const double total = terms.total.item();
        result.final_loss = total;
        if (step % cfg.log_every == 0 || step == cfg.steps) {
            log.row(step, stage, total, terms.huber, terms.ssim_term, terms.kl);
            result.loss_curve.push_back({step, total});
        }
        if (cfg.state_every > 0 && step % cfg.state_every == 0 && step < cfg.steps)
            save_train_state(out_dir + "/" + stage + "_state.bin", opt, rng.save_state(), step);
    }
    save_train_state(out_dir + "/" + stage + "_state.bin", opt, rng.save_state(), cfg.steps);
    save_ldw(out_dir + "/" + stage + ".ldw", opt.params());
    return result;
}

StageResult train_denoiser_stage(Denoiser& den, const std::vector<Tensor>& z0,
                                 const std::vector<Tensor>& z_cond, const NoiseSchedule& sched,
                                 const TrainConfig& cfg, const std::string& out_dir,
                                 const std::string& stage, const std::string& resume_path) {
    require(!z0.empty() && z0.size() == z_cond.size(), "train_denoiser_stage: latent sets differ");
    std::filesystem::create_directories(out_dir);
    nn::AdamConfig acfg;
    acfg.lr = cfg.lr;
    nn::Adam opt(den.parameters(stage), acfg);
    Rng rng(cfg.seed);
    int start_step = 0;
    if (!resume_path.empty()) {
        TrainState st = load_train_state(resume_path, opt);
        rng.load_state(st.rng_state);
        start_step = static_cast<int>(st.step);
    }
    LossLog log(out_dir + "/" + stage + "_loss.csv", start_step > 0);

    StageResult result;
    const int batch = std::min<int>(cfg.batch, static_cast<int>(z0.size()));
    const Shape& ls = z0[0].shape();
    const size_t item_n = z0[0].data().size();

    for (int step = start_step + 1; step <= cfg.steps; step++) {
        std::vector<size_t> idx(static_cast<size_t>(batch));
        for (auto& i : idx) i = rng.index(z0.size());
        std::vector<double> t_b(static_cast<size_t>(batch));
        for (auto& t : t_b) t = static_cast<double>(1 + rng.index(static_cast<uint64_t>(sched.steps)));

        // z_t assembled per item (values only; gradients flow from the
        // denoiser inputs, not the corruption arithmetic)
        Shape bshape = ls;
        bshape[0] = batch;
        std::vector<double> zt_data(static_cast<size_t>(batch) * item_n);
        std::vector<double> z0_data(static_cast<size_t>(batch) * item_n);
        std::vector<double> zc_data(static_cast<size_t>(batch) * item_n);
        for (int b = 0; b < batch; b++) {
            const auto& z = z0[idx[static_cast<size_t>(b)]].data();
            const auto& c = z_cond[idx[static_cast<size_t>(b)]].data();
            const int t = static_cast<int>(t_b[static_cast<size_t>(b)]);
            const double a = std::sqrt(sched.abar(t));
            const double s = std::sqrt(1.0 - sched.abar(t));
            for (size_t i = 0; i < item_n; i++) {
                const double eps = rng.normal();
                zt_data[b * item_n + i] = a * z[i] + s * eps;
                z0_data[b * item_n + i] = z[i];
                zc_data[b * item_n + i] = c[i];
            }
        }
        Tensor zt = Tensor::from_data(bshape, std::move(zt_data));
        Tensor ztrue = Tensor::from_data(bshape, std::move(z0_data));
        Tensor zc = Tensor::from_data(bshape, std::move(zc_data));

        Tensor pred = den.forward(zt, zc, t_b);
        Tensor loss = x0_loss(ztrue, pred);
        opt.zero_grad();
        backward(loss);
        opt.step();
        const double total = loss.item();
        result.final_loss = total;
        if (step % cfg.log_every == 0 || step == cfg.steps) {
            log.row(step, stage, total, 0.0, 0.0, 0.0);
            result.loss_curve.push_back({step, total});
        }
        if (cfg.state_every > 0 && step % cfg.state_every == 0 && step < cfg.steps)
            save_train_state(out_dir + "/" + stage + "_state.bin", opt, rng.save_state(), step);
    }
    save_train_state(out_dir + "/" + stage + "_state.bin", opt, rng.save_state(), cfg.steps);
    save_ldw(out_dir + "/" + stage + ".ldw", opt.params());
    return result;
}

std::vector<Tensor> encode_means(const Vae& vae, const std::vector<Tensor>& stacks) {
    NoGradGuard guard;
    std::vector<Tensor> out;
    out.reserve(stacks.size());
    for (const auto& s : stacks) out.push_back(vae.encode(s).mean);
    return out;
}

double latent_scale(const std::vector<Tensor>& latents) {
    double sum = 0.0, sum2 = 0.0;
    size_t n = 0;
    for (const auto& z : latents) {
        for (double v : z.data()) {
            sum += v;
            sum2 += v * v;
            n++;
        }
    }
    require(n > 0, "latent_scale: no latents");
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(1e-12, sum2 / static_cast<double>(n) - mean * mean);
    return std::sqrt(var);
}

Tensor infer_restore(const Vae& diffuse_vae, const Vae& specular_vae, const Denoiser& den,
                     const NoiseSchedule& sched, double latent_scale_d, double cond_scale,
                     const Tensor& X, int steps, uint64_t seed) {
    NoGradGuard guard;
    Posterior ps = specular_vae.encode(X);
    Tensor z_s = mul_scalar(ps.mean, 1.0 / cond_scale);

    Rng rng(seed);
    Tensor z = Tensor::randn(z_s.shape(), rng);
    auto timesteps = stride_timesteps(sched.steps, steps);
    z = ddim_sample(z, timesteps, sched, [&](const Tensor& zt, int t) {
        return den.forward(zt, z_s, {static_cast<double>(t)});
    });
    return diffuse_vae.decode(mul_scalar(z, latent_scale_d));
}

// ---- bridges ----

Tensor tensor_from_fst(const FstData& d) {
    std::vector<double> data = d.data;
    return Tensor::from_data({1, static_cast<int64_t>(d.channels), static_cast<int64_t>(d.height),
                              static_cast<int64_t>(d.width)},
                             std::move(data));
}

FstData fst_from_tensor(const Tensor& t, FstDtype dtype) {
    require(t.shape().size() == 4 && t.dim(0) == 1, "fst_from_tensor: need (1,C,H,W)");
    FstData d;
    d.channels = static_cast<uint32_t>(t.dim(1));
    d.height = static_cast<uint32_t>(t.dim(2));
    d.width = static_cast<uint32_t>(t.dim(3));
    d.dtype = dtype;
    d.data = t.data();
    return d;
}

}  // namespace fringelab
