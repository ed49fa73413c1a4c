#include "fringelab/diffusion.hpp"

#include <cmath>

namespace fringelab {

NoiseSchedule make_schedule_linear(int steps, double beta_start, double beta_end) {
    require(steps >= 1, "make_schedule: T must be >= 1");
    require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
            "make_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.steps = steps;
    s.beta.resize(static_cast<size_t>(steps));
    s.alpha_bar.resize(static_cast<size_t>(steps) + 1);
    s.alpha_bar[0] = 1.0;
    for (int t = 1; t <= steps; t++) {
        const double frac = steps > 1 ? static_cast<double>(t - 1) / (steps - 1) : 0.0;
        const double b = beta_start + (beta_end - beta_start) * frac;
        s.beta[static_cast<size_t>(t - 1)] = b;
        s.alpha_bar[static_cast<size_t>(t)] = s.alpha_bar[static_cast<size_t>(t - 1)] * (1.0 - b);
    }
    return s;
}

Tensor forward_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    require(t >= 0 && t <= sched.steps, "forward_sample: t out of range");
    require(eps.shape() == z0.shape(), "forward_sample: eps shape mismatch");
    const double a = std::sqrt(sched.abar(t));
    const double b = std::sqrt(1.0 - sched.abar(t));
    return add(mul_scalar(z0, a), mul_scalar(eps, b));
}

Tensor eps_from_x0(const Tensor& z_t, const Tensor& z0_hat, int t, const NoiseSchedule& sched) {
    require(t >= 1 && t <= sched.steps, "eps_from_x0: t must be in [1, T]");
    require(z_t.shape() == z0_hat.shape(), "eps_from_x0: shape mismatch");
    const double a = std::sqrt(sched.abar(t));
    const double b = std::sqrt(1.0 - sched.abar(t));
    return mul_scalar(sub(z_t, mul_scalar(z0_hat, a)), 1.0 / b);
}

Tensor ddim_step(const Tensor& z_t, const Tensor& z0_hat, int t, const NoiseSchedule& sched,
                 double sigma, const Tensor& noise, int t_prev) {
    if (t_prev < 0) t_prev = t - 1;
    require(t >= 1 && t <= sched.steps, "ddim_step: t must be in [1, T]");
    require(t_prev >= 0 && t_prev < t, "ddim_step: t_prev must be in [0, t)");
    const double abar_prev = sched.abar(t_prev);
    const double s2 = sigma * sigma;
    require(s2 <= 1.0 - abar_prev + 1e-15, "ddim_step: sigma^2 exceeds 1 - abar_prev");
    Tensor eps_hat = eps_from_x0(z_t, z0_hat, t, sched);
    Tensor out = add(mul_scalar(z0_hat, std::sqrt(abar_prev)),
                     mul_scalar(eps_hat, std::sqrt(std::max(0.0, 1.0 - abar_prev - s2))));
    if (sigma != 0.0) {
        require(noise.defined() && noise.shape() == z_t.shape(), "ddim_step: noise shape mismatch");
        out = add(out, mul_scalar(noise, sigma));
    }
    return out;
}

Tensor x0_loss(const Tensor& z0, const Tensor& z0_hat) { return mse_loss(z0_hat, z0); }

std::vector<int> stride_timesteps(int steps_total, int steps_used) {
    require(steps_total >= 1 && steps_used >= 1, "stride_timesteps: counts must be >= 1");
    if (steps_used >= steps_total) {
        std::vector<int> ts;
        for (int t = steps_total; t >= 1; t--) ts.push_back(t);
        return ts;
    }
    std::vector<int> ts;
    ts.reserve(static_cast<size_t>(steps_used));
    for (int i = 0; i < steps_used; i++) {
        // Evenly spaced over [1, T], descending, endpoints included.
        double f = steps_used > 1 ? static_cast<double>(i) / (steps_used - 1) : 0.0;
        int t = static_cast<int>(std::lround(steps_total - f * (steps_total - 1)));
        if (!ts.empty() && t >= ts.back()) t = ts.back() - 1;
        require(t >= 1, "stride_timesteps: sequence exhausted");
        ts.push_back(t);
    }
    return ts;
}

Tensor ddim_sample(const Tensor& z_T, const std::vector<int>& timesteps,
                   const NoiseSchedule& sched,
                   const std::function<Tensor(const Tensor&, int)>& predict) {
    require(!timesteps.empty(), "ddim_sample: empty timestep sequence");
    Tensor z = z_T;
    for (size_t i = 0; i < timesteps.size(); i++) {
        const int t = timesteps[i];
        const int t_prev = (i + 1 < timesteps.size()) ? timesteps[i + 1] : 0;
        Tensor z0_hat = predict(z, t);
        z = ddim_step(z, z0_hat, t, sched, 0.0, Tensor(), t_prev);
    }
    return z;
}

}  // namespace fringelab
