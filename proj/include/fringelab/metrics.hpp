#pragma once

#include <string>
#include <vector>

#include "fringelab/common.hpp"

namespace fringelab::metrics {

// PSNR for identical images is reported as this sentinel instead of infinity.
constexpr double kPsnrCap = 99.0;

// Canonical SSIM parameters (11x11 Gaussian window, sigma 1.5, K1/K2, unit
// dynamic range). The VAE loss reuses these constants.
constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;

double mse(const Image& x, const Image& y);
double psnr(const Image& x, const Image& y, double max_value = 1.0);

// Mean local SSIM over valid window placements (window fully inside).
double ssim(const Image& x, const Image& y);

// Multi-channel stacks score as the mean over channels.
double mse(const std::vector<Image>& x, const std::vector<Image>& y);
double psnr(const std::vector<Image>& x, const std::vector<Image>& y, double max_value = 1.0);
double ssim(const std::vector<Image>& x, const std::vector<Image>& y);

// (I_max - I_min) / (I_max + I_min) with 2nd/98th percentile extrema.
// Constant profiles return 0.
double michelson_contrast(const std::vector<double>& profile);

struct MetricRow {
    std::string scene;
    std::string method;
    double mse = 0.0;
    double ssim = 0.0;
    double psnr = 0.0;
};

// One row per (scene, method), columns per metric.
void write_metric_csv(const std::string& path, const std::vector<MetricRow>& rows);

}  // namespace fringelab::metrics
