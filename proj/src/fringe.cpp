#include "fringelab/fringe.hpp"

#include <cmath>

namespace fringelab {

void PatternSet::validate() const {
    require(pitch >= 2, "PatternSet: pitch must be >= 2");
    require(steps >= 3, "PatternSet: need N >= 3 for phase retrieval");
    require(width > 0 && height > 0, "PatternSet: empty projector size");
    if (shift_rule == ShiftRule::one_pixel_per_step)
        require(steps == pitch, "PatternSet: one-pixel shift rule requires N == pitch");
}

double fringe_waveform(FringeProfile profile, double theta) {
    if (profile == FringeProfile::sinusoidal) return std::cos(theta);
    const double w = wrap_phase(theta);
    return (w > -kPi / 2.0 && w <= kPi / 2.0) ? 1.0 : -1.0;
}

std::vector<Image> generate_patterns(const PatternSet& set) {
    set.validate();
    std::vector<Image> out;
    out.reserve(static_cast<size_t>(set.steps));
    const int64_t np = static_cast<int64_t>(set.steps) * set.pitch;
    for (int i = 0; i < set.steps; i++) {
        Image img(set.width, set.height);
        const double delta = set.shift(i);
        for (int x = 0; x < set.width; x++) {
            double v;
            if (set.profile == FringeProfile::binary) {
                // Integer-exact tie breaking: the fractional phase
                // (x/pitch - i/N) scaled by N*pitch; bright on the half-open
                // quarter-period boundaries so every period has an exact 50%
                // duty cycle and step i is step 0 translated by i*pitch/N.
                int64_t t = (static_cast<int64_t>(x) * set.steps -
                             static_cast<int64_t>(i) * set.pitch) % np;
                if (t < 0) t += np;
                v = (4 * t <= np || 4 * t > 3 * np) ? 1.0 : 0.0;
            } else {
                const double theta = kTwoPi * static_cast<double>(x) / set.pitch - delta;
                v = 0.5 + 0.5 * fringe_waveform(set.profile, theta);
            }
            for (int y = 0; y < set.height; y++) img.at(y, x) = v;
        }
        out.push_back(std::move(img));
    }
    return out;
}

PhaseMap wrapped_phase(const FringeStack& stack, double modulation_threshold) {
    const int n = static_cast<int>(stack.images.size());
    require(n >= 3, "wrapped_phase: need at least 3 images");
    const Image& first = stack.images[0];
    for (const auto& img : stack.images)
        require(img.same_size(first), "wrapped_phase: image dimensions differ");

    PhaseMap pm;
    pm.wrapped = Image(first.width, first.height);
    pm.modulation = Image(first.width, first.height);
    pm.mean_intensity = Image(first.width, first.height);
    pm.valid.assign(first.size(), 1);

    std::vector<double> sins(static_cast<size_t>(n)), coss(static_cast<size_t>(n));
    for (int k = 0; k < n; k++) {
        const double theta = kTwoPi * static_cast<double>(k) / n;
        sins[static_cast<size_t>(k)] = std::sin(theta);
        coss[static_cast<size_t>(k)] = std::cos(theta);
    }

    for (size_t i = 0; i < first.size(); i++) {
        double s = 0.0, c = 0.0, a = 0.0;
        for (int k = 0; k < n; k++) {
            const double v = stack.images[static_cast<size_t>(k)].v[i];
            s += v * sins[static_cast<size_t>(k)];
            c += v * coss[static_cast<size_t>(k)];
            a += v;
        }
        const double amp = 2.0 / n * std::hypot(s, c);
        pm.modulation.v[i] = amp;
        pm.mean_intensity.v[i] = a / n;
        if (amp < modulation_threshold || amp == 0.0) {
            pm.valid[i] = 0;
            pm.wrapped.v[i] = 0.0;
            continue;
        }
        // Raw Eq.-style arctangent recovers -phi for A + B cos(phi + delta_k);
        // negate and fold the -pi endpoint back into (-pi, pi].
        double phi = -std::atan2(s, c);
        if (phi <= -kPi) phi += kTwoPi;
        pm.wrapped.v[i] = phi;
    }
    return pm;
}

Image modulation_map(const FringeStack& stack) {
    return wrapped_phase(stack, 0.0).modulation;
}

// ---- gray code ----

namespace {

uint32_t gray_encode(uint32_t v) { return v ^ (v >> 1); }

uint32_t gray_decode(uint32_t g) {
    g ^= g >> 16;
    g ^= g >> 8;
    g ^= g >> 4;
    g ^= g >> 2;
    g ^= g >> 1;
    return g;
}

}  // namespace

int graycode_bits_required(int width, int pitch) {
    // Wrap-aligned codes reach floor((W - 1 + P/2) / P).
    const int max_code = (width - 1 + pitch / 2) / pitch;
    int bits = 1;
    while ((1 << bits) <= max_code) bits++;
    return bits;
}

double graycode_plane_value(const GraycodeSet& set, int plane, double u) {
    require(plane >= 0 && plane < set.planes(), "graycode_plane_value: plane out of range");
    const bool second = plane >= set.bits;
    const int bit = second ? plane - set.bits : plane;
    const double shifted = second ? u + set.pitch / 2.0 : u;
    const int code = shifted >= 0.0 ? static_cast<int>(std::floor(shifted / set.pitch)) : 0;
    const uint32_t gray = gray_encode(static_cast<uint32_t>(code));
    const int msb_index = set.bits - 1 - bit;
    return ((gray >> msb_index) & 1u) ? 1.0 : 0.0;
}

std::vector<Image> generate_graycode_patterns(const GraycodeSet& set) {
    require(set.bits >= 1 && set.width > 0 && set.height > 0, "graycode: invalid set");
    std::vector<Image> out;
    out.reserve(static_cast<size_t>(set.planes()));
    for (int p = 0; p < set.planes(); p++) {
        Image img(set.width, set.height);
        for (int x = 0; x < set.width; x++) {
            const double v = graycode_plane_value(set, p, static_cast<double>(x));
            for (int y = 0; y < set.height; y++) img.at(y, x) = v;
        }
        out.push_back(std::move(img));
    }
    return out;
}

PhaseMap graycode_unwrap(const PhaseMap& wrapped, const std::vector<Image>& code_images,
                         const GraycodeSet& set) {
    require(static_cast<int>(code_images.size()) == set.planes(),
            "graycode_unwrap: plane count mismatch");
    for (const auto& img : code_images)
        require(img.same_size(wrapped.wrapped), "graycode_unwrap: code dimensions differ");

    PhaseMap out = wrapped;
    out.absolute = Image(wrapped.wrapped.width, wrapped.wrapped.height);
    out.order.assign(wrapped.wrapped.size(), 0);

    for (size_t i = 0; i < wrapped.wrapped.size(); i++) {
        if (!wrapped.valid[i]) continue;
        const double threshold = wrapped.mean_intensity.v[i];
        uint32_t gray_a = 0, gray_b = 0;
        for (int b = 0; b < set.bits; b++) {
            gray_a = (gray_a << 1) | (code_images[static_cast<size_t>(b)].v[i] > threshold ? 1u : 0u);
        }
        const int code_a = static_cast<int>(gray_decode(gray_a));
        const double phi = wrapped.wrapped.v[i];
        int k;
        if (set.two_sets) {
            for (int b = 0; b < set.bits; b++) {
                gray_b = (gray_b << 1) |
                         (code_images[static_cast<size_t>(set.bits + b)].v[i] > threshold ? 1u : 0u);
            }
            const int code_b = static_cast<int>(gray_decode(gray_b));
            // Wrap-aligned code is exact mid-period; the period-aligned code
            // with a sign snap covers the wrap neighborhood.
            k = std::abs(phi) <= kPi / 2.0 ? code_b : code_a + (phi < 0.0 ? 1 : 0);
        } else {
            k = code_a + (phi < 0.0 ? 1 : 0);
        }
        out.order[i] = k;
        out.absolute.v[i] = phi + kTwoPi * static_cast<double>(k);
    }
    return out;
}

PhaseMap reference_unwrap(const PhaseMap& wrapped, const Image& truth_absolute) {
    require(!truth_absolute.empty(), "reference_unwrap: truth absolute phase missing");
    require(truth_absolute.same_size(wrapped.wrapped), "reference_unwrap: size mismatch");
    PhaseMap out = wrapped;
    out.absolute = Image(wrapped.wrapped.width, wrapped.wrapped.height);
    out.order.assign(wrapped.wrapped.size(), 0);
    for (size_t i = 0; i < wrapped.wrapped.size(); i++) {
        if (!wrapped.valid[i]) continue;
        const double phi = wrapped.wrapped.v[i];
        const int k = static_cast<int>(std::lround((truth_absolute.v[i] - phi) / kTwoPi));
        out.order[i] = k;
        out.absolute.v[i] = phi + kTwoPi * static_cast<double>(k);
    }
    return out;
}

}  // namespace fringelab
