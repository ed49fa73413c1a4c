#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "fringelab/tensor.hpp"

namespace fringelab::testutil {

// Central finite-difference gradient check at 64-bit. Returns the maximum
// relative error over every element of every parameter:
//   |analytic - fd| / (|fd| + 1e-8)
// `forward` must rebuild the graph from current parameter values and return
// the scalar loss.
inline double gradcheck(const std::function<Tensor()>& forward, std::vector<Tensor> params,
                        double step = 1e-4) {
    for (auto& p : params) p.zero_grad();
    Tensor loss = forward();
    backward(loss);

    double worst = 0.0;
    for (auto& p : params) {
        std::vector<double> analytic = p.grad();
        for (size_t i = 0; i < p.data().size(); i++) {
            const double saved = p.data()[i];
            p.data()[i] = saved + step;
            const double up = forward().item();
            p.data()[i] = saved - step;
            const double down = forward().item();
            p.data()[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double rel = std::abs(analytic[i] - fd) / (std::abs(fd) + 1e-8);
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); i++) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace fringelab::testutil
