#pragma once

#include <optional>
#include <vector>

#include "fringelab/common.hpp"

namespace fringelab {

// Phase-sign convention used project-wide
// ----------------------------------------
// The N-step estimator computes atan2(sum I_k sin(2pi(k-1)/N),
// sum I_k cos(2pi(k-1)/N)). For a stack I_k = A + B cos(phi + delta_k) with
// delta_k = 2pi(k-1)/N, those sums evaluate to -(N/2) B sin(phi) and
// (N/2) B cos(phi), so the raw arctangent recovers -phi. wrapped_phase()
// therefore returns the NEGATION of the raw value, making the synthetic
// round-trip an identity. The renderer models captures in the same
// I = A + B w(phi + delta_k) form, so recovered absolute phase increases
// with the projector column coordinate and u_p = Phi * P / (2pi) + u0.

enum class FringeProfile { binary, sinusoidal };
enum class ShiftRule { uniform, one_pixel_per_step };

struct PatternSet {
    FringeProfile profile = FringeProfile::sinusoidal;
    int pitch = 36;  // projector pixels per period
    int steps = 6;   // N
    ShiftRule shift_rule = ShiftRule::uniform;
    int width = 0;
    int height = 0;

    void validate() const;
    // delta_i = 2pi * i / N for both rules (one pixel per step requires
    // N == pitch, which makes the per-step shift exactly one column).
    double shift(int i) const { return kTwoPi * static_cast<double>(i) / steps; }
};

enum class StackRole { input_specular, target_diffuse };

struct FringeStack {
    PatternSet pattern;
    StackRole role = StackRole::target_diffuse;
    double exposure = 0.0;  // seconds; 0 = not applicable (e.g. HDR-fused)
    std::vector<Image> images;
};

struct PhaseMap {
    Image wrapped;                  // (-pi, pi]
    Image modulation;               // estimated B >= 0
    Image mean_intensity;           // estimated A (DC term)
    std::vector<uint8_t> valid;     // modulation >= threshold
    Image absolute;                 // empty until unwrapped
    std::vector<int32_t> order;     // fringe order k; empty until unwrapped

    bool has_absolute() const { return !absolute.empty(); }
};

// Pixels with modulation below this default are masked out of phase,
// unwrapping and reconstruction.
constexpr double kDefaultModulationThreshold = 0.02;

// Zero-mean fringe waveform at phase theta: cos(theta) for sinusoidal
// profiles; for binary, +1 on the half-open bright half-period
// wrap(theta) in (-pi/2, pi/2] and -1 otherwise, so integer column sampling
// yields an exact 50% duty cycle.
double fringe_waveform(FringeProfile profile, double theta);

// Projector images: 0.5 + 0.5*cos(2pi x / pitch - delta_i), binarized for the
// binary profile. Pattern i is pattern 0 translated +i*pitch/N columns.
std::vector<Image> generate_patterns(const PatternSet& set);

// N-step phase retrieval (N >= 3, uniform shifts). Zero-modulation pixels are
// flagged in the valid mask, not thrown.
PhaseMap wrapped_phase(const FringeStack& stack,
                       double modulation_threshold = kDefaultModulationThreshold);

// Standard N-step modulation estimator: (2/N) * sqrt(S^2 + C^2).
Image modulation_map(const FringeStack& stack);

// ---- gray-code unwrapping ----

struct GraycodeSet {
    int pitch = 36;
    int bits = 0;        // bits per code set
    bool two_sets = true;  // complementary half-period-offset set present
    int width = 0;
    int height = 0;

    int planes() const { return two_sets ? 2 * bits : bits; }
};

int graycode_bits_required(int width, int pitch);

// Plane value at projector column u in {0,1}. Planes [0, bits) encode the
// period-start-aligned code floor(u/P) MSB-first; with two_sets, planes
// [bits, 2*bits) encode the wrap-aligned code floor((u + P/2)/P).
double graycode_plane_value(const GraycodeSet& set, int plane, double u);

std::vector<Image> generate_graycode_patterns(const GraycodeSet& set);

// Decodes fringe order from captured bit planes (thresholded against the
// phase map's DC estimate) and applies the half-period guard: wrap-aligned
// codes where |phi| <= pi/2, otherwise the period-aligned code corrected by
// the sign of phi. Single-set inputs use the sign-snap rule alone.
PhaseMap graycode_unwrap(const PhaseMap& wrapped, const std::vector<Image>& code_images,
                         const GraycodeSet& set);

// Synthetic stand-in for unwrapping methods that need no extra patterns:
// k = round((Phi_truth - phi) / 2pi).
PhaseMap reference_unwrap(const PhaseMap& wrapped, const Image& truth_absolute);

}  // namespace fringelab
