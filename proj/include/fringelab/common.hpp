#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fringelab {

// Error categories map onto the CLI exit-code contract:
// ConfigError -> 2, MissingPrereqError -> 3, NumericError -> 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct MissingPrereqError : std::runtime_error {
    explicit MissingPrereqError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// Wrap an angle into (-pi, pi].
inline double wrap_phase(double phi) {
    double w = std::remainder(phi, kTwoPi);  // (-pi, pi], except -pi can appear
    if (w <= -kPi) w += kTwoPi;
    return w;
}

// Circular distance between two angles, in [0, pi].
inline double phase_distance(double a, double b) {
    return std::abs(wrap_phase(a - b));
}

// Single-channel image, row-major, double precision.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> v;

    Image() = default;
    Image(int w, int h, double fill = 0.0) : width(w), height(h), v(static_cast<size_t>(w) * h, fill) {}

    double& at(int y, int x) { return v[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return v[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }

    bool same_size(const Image& o) const { return width == o.width && height == o.height; }
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace fringelab
