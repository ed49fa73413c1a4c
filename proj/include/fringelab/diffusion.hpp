#pragma once

#include <functional>
#include <vector>

#include "fringelab/tensor.hpp"

namespace fringelab {

// Noise schedule with alpha_bar[0] = 1 so the final reverse step at t = 1 is
// exact. Index t runs 1..T for beta/alpha, 0..T for alpha_bar.
struct NoiseSchedule {
    int steps = 0;                  // T
    std::vector<double> beta;       // size T, beta[t-1] is beta_t
    std::vector<double> alpha_bar;  // size T+1, alpha_bar[0] = 1

    double beta_at(int t) const { return beta[static_cast<size_t>(t - 1)]; }
    double abar(int t) const { return alpha_bar[static_cast<size_t>(t)]; }
};

NoiseSchedule make_schedule_linear(int steps, double beta_start, double beta_end);

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
Tensor forward_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched);

// eps_hat = (z_t - sqrt(abar_t) z0_hat) / sqrt(1 - abar_t); t >= 1
Tensor eps_from_x0(const Tensor& z_t, const Tensor& z0_hat, int t, const NoiseSchedule& sched);

// z_{t_prev} = sqrt(abar_prev) z0_hat + sqrt(1 - abar_prev - sigma^2) eps_hat + sigma n.
// t_prev defaults to t-1; a strided sampler passes the previous kept index.
Tensor ddim_step(const Tensor& z_t, const Tensor& z0_hat, int t, const NoiseSchedule& sched,
                 double sigma, const Tensor& noise, int t_prev = -1);

// Mean squared error training objective on the clean-sample prediction.
Tensor x0_loss(const Tensor& z0, const Tensor& z0_hat);

// Evenly strided subsequence of 1..T (descending), always containing T and 1.
std::vector<int> stride_timesteps(int steps_total, int steps_used);

// Deterministic reverse pass (sigma = 0) over the given descending timestep
// sequence; `predict` maps (z_t, t) to a clean-latent estimate.
Tensor ddim_sample(const Tensor& z_T, const std::vector<int>& timesteps,
                   const NoiseSchedule& sched,
                   const std::function<Tensor(const Tensor&, int)>& predict);

}  // namespace fringelab
