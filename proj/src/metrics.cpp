#include "fringelab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace fringelab::metrics {

double mse(const Image& x, const Image& y) {
    require(x.same_size(y), "mse: shape mismatch");
    require(!x.empty(), "mse: empty image");
    double acc = 0.0;
    for (size_t i = 0; i < x.v.size(); i++) {
        double d = x.v[i] - y.v[i];
        acc += d * d;
    }
    return acc / static_cast<double>(x.v.size());
}

double psnr(const Image& x, const Image& y, double max_value) {
    require(max_value > 0.0, "psnr: max must be > 0");
    double m = mse(x, y);
    if (m <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(max_value * max_value / m));
}

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(size);
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; i++) {
        w[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable valid-mode blur: output is (h-size+1) x (w-size+1).
Image blur_valid(const Image& img, const std::vector<double>& w) {
    const int k = static_cast<int>(w.size());
    const int hw = img.width - k + 1;
    Image tmp(hw, img.height);
    for (int y = 0; y < img.height; y++)
        for (int x = 0; x < hw; x++) {
            double acc = 0.0;
            for (int i = 0; i < k; i++) acc += w[i] * img.at(y, x + i);
            tmp.at(y, x) = acc;
        }
    const int hh = img.height - k + 1;
    Image out(hw, hh);
    for (int y = 0; y < hh; y++)
        for (int x = 0; x < hw; x++) {
            double acc = 0.0;
            for (int i = 0; i < k; i++) acc += w[i] * tmp.at(y + i, x);
            out.at(y, x) = acc;
        }
    return out;
}

}  // namespace

double ssim(const Image& x, const Image& y) {
    require(x.same_size(y), "ssim: shape mismatch");
    require(x.width >= kSsimWindow && x.height >= kSsimWindow, "ssim: image smaller than window");
    const auto w = gaussian_window(kSsimWindow, kSsimSigma);
    Image xx(x), yy(y), x2(x.width, x.height), y2(x.width, x.height), xy(x.width, x.height);
    for (size_t i = 0; i < x.v.size(); i++) {
        x2.v[i] = x.v[i] * x.v[i];
        y2.v[i] = y.v[i] * y.v[i];
        xy.v[i] = x.v[i] * y.v[i];
    }
    Image mx = blur_valid(xx, w), my = blur_valid(yy, w);
    Image mx2 = blur_valid(x2, w), my2 = blur_valid(y2, w), mxy = blur_valid(xy, w);
    const double c1 = kSsimK1 * kSsimK1;
    const double c2 = kSsimK2 * kSsimK2;
    double acc = 0.0;
    for (size_t i = 0; i < mx.v.size(); i++) {
        double ux = mx.v[i], uy = my.v[i];
        double vx = mx2.v[i] - ux * ux;
        double vy = my2.v[i] - uy * uy;
        double vxy = mxy.v[i] - ux * uy;
        acc += ((2.0 * ux * uy + c1) * (2.0 * vxy + c2)) /
               ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    return acc / static_cast<double>(mx.v.size());
}

double mse(const std::vector<Image>& x, const std::vector<Image>& y) {
    require(x.size() == y.size() && !x.empty(), "mse: stack size mismatch");
    double acc = 0.0;
    for (size_t c = 0; c < x.size(); c++) acc += mse(x[c], y[c]);
    return acc / static_cast<double>(x.size());
}

double psnr(const std::vector<Image>& x, const std::vector<Image>& y, double max_value) {
    double m = mse(x, y);
    if (m <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(max_value * max_value / m));
}

double ssim(const std::vector<Image>& x, const std::vector<Image>& y) {
    require(x.size() == y.size() && !x.empty(), "ssim: stack size mismatch");
    double acc = 0.0;
    for (size_t c = 0; c < x.size(); c++) acc += ssim(x[c], y[c]);
    return acc / static_cast<double>(x.size());
}

double michelson_contrast(const std::vector<double>& profile) {
    require(profile.size() >= 2, "michelson_contrast: profile too short");
    std::vector<double> sorted(profile);
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    auto pct = [&](double p) {
        double idx = p * static_cast<double>(n - 1);
        size_t lo = static_cast<size_t>(idx);
        size_t hi = std::min(lo + 1, n - 1);
        double f = idx - static_cast<double>(lo);
        return sorted[lo] * (1.0 - f) + sorted[hi] * f;
    };
    double imax = pct(0.98), imin = pct(0.02);
    double denom = imax + imin;
    if (denom <= 0.0) return 0.0;
    return (imax - imin) / denom;
}

void write_metric_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_metric_csv: cannot open " + path);
    os << "scene,method,mse,ssim,psnr\n";
    char line[160];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%s,%s,%.8g,%.8g,%.8g\n", r.scene.c_str(),
                      r.method.c_str(), r.mse, r.ssim, r.psnr);
        os << line;
    }
}

}  // namespace fringelab::metrics
