#include "fringelab/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>
#include <unordered_set>

namespace fringelab {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using RowMap = Eigen::Map<RowMat>;
using CRowMap = Eigen::Map<const RowMat>;
using ColMap = Eigen::Map<ColMat>;
using CColMap = Eigen::Map<const ColMat>;

thread_local bool g_grad_enabled = true;

void check_finite(const std::vector<double>& v, const char* op) {
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite value produced");
    }
}

std::shared_ptr<TensorNode> make_leaf(Shape s, std::vector<double> data, bool rg) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(s);
    n->value = std::move(data);
    n->requires_grad = rg;
    return n;
}

// Builds the output node, enforces the finite invariant, and attaches the
// backward record when any input needs gradients.
Tensor make_result(Shape shape, std::vector<double> value, const char* name,
                   std::vector<std::shared_ptr<TensorNode>> inputs,
                   std::function<void(const TensorNode&)> bwd) {
    check_finite(value, name);
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool rg = false;
    if (g_grad_enabled) {
        for (const auto& in : inputs) rg = rg || in->requires_grad;
    }
    n->requires_grad = rg;
    if (rg) {
        n->producer = std::make_unique<OpRecord>();
        n->producer->name = name;
        n->producer->inputs = std::move(inputs);
        n->producer->backward = std::move(bwd);
    }
    return Tensor(n);
}

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
}

int g_threads = 0;  // 0 = uninitialized

}  // namespace

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); i++) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

int thread_count() {
    if (g_threads == 0) {
        const char* env = std::getenv("FRINGELAB_THREADS");
        if (env && *env) {
            g_threads = std::max(1, std::atoi(env));
        } else {
            g_threads = std::max(1u, std::min(4u, std::thread::hardware_concurrency()));
        }
    }
    return g_threads;
}

void set_thread_count(int n) { g_threads = std::max(1, n); }

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    const int nt = thread_count();
    if (nt <= 1 || n <= 1) {
        for (int64_t i = 0; i < n; i++) fn(i);
        return;
    }
    const int workers = static_cast<int>(std::min<int64_t>(nt, n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; w++) {
        pool.emplace_back([&, w]() {
            for (int64_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

// ---- Tensor factories ----

Tensor Tensor::zeros(const Shape& s, bool rg) {
    return Tensor(make_leaf(s, std::vector<double>(static_cast<size_t>(shape_numel(s)), 0.0), rg));
}

Tensor Tensor::full(const Shape& s, double v, bool rg) {
    return Tensor(make_leaf(s, std::vector<double>(static_cast<size_t>(shape_numel(s)), v), rg));
}

Tensor Tensor::from_data(const Shape& s, std::vector<double> data, bool rg) {
    require(static_cast<int64_t>(data.size()) == shape_numel(s),
            "from_data: element count does not match shape");
    check_finite(data, "from_data");
    return Tensor(make_leaf(s, std::move(data), rg));
}

Tensor Tensor::scalar(double v, bool rg) { return from_data({1}, {v}, rg); }

Tensor Tensor::randn(const Shape& s, Rng& rng, bool rg) {
    std::vector<double> d(static_cast<size_t>(shape_numel(s)));
    for (double& x : d) x = rng.normal();
    return Tensor(make_leaf(s, std::move(d), rg));
}

// ---- backward ----

void backward(const Tensor& loss) {
    require(loss.defined() && loss.numel() == 1, "backward: loss must be a scalar");
    if (!loss.node->requires_grad) return;

    // Iterative post-order DFS; reversed order puts consumers before inputs.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.push_back({loss.node.get(), 0});
    visited.insert(loss.node.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (!node->producer || idx >= node->producer->inputs.size()) {
            order.push_back(node);
            stack.pop_back();
            continue;
        }
        TensorNode* next = node->producer->inputs[idx++].get();
        if (next->requires_grad && !visited.count(next)) {
            visited.insert(next);
            stack.push_back({next, 0});
        }
    }

    loss.node->ensure_grad();
    loss.node->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->producer) {
            for (auto& in : n->producer->inputs)
                if (in->requires_grad) in->ensure_grad();
            n->producer->backward(*n);
        }
    }
}

// ---- elementwise ----

namespace {

template <class FwdFn, class BwdFn>
Tensor elementwise2(const Tensor& a, const Tensor& b, const char* name, FwdFn f, BwdFn bw) {
    same_shape(a, b, name);
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); i++) out[i] = f(a.data()[i], b.data()[i]);
    auto an = a.node, bn = b.node;
    return make_result(a.shape(), std::move(out), name, {an, bn},
                       [an, bn, bw](const TensorNode& o) {
                           for (size_t i = 0; i < o.value.size(); i++) {
                               double da, db;
                               bw(an->value[i], bn->value[i], o.value[i], o.grad[i], da, db);
                               if (an->requires_grad) an->grad[i] += da;
                               if (bn->requires_grad) bn->grad[i] += db;
                           }
                       });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise2(a, b, "add", [](double x, double y) { return x + y; },
                        [](double, double, double, double g, double& da, double& db) {
                            da = g;
                            db = g;
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise2(a, b, "sub", [](double x, double y) { return x - y; },
                        [](double, double, double, double g, double& da, double& db) {
                            da = g;
                            db = -g;
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise2(a, b, "mul", [](double x, double y) { return x * y; },
                        [](double x, double y, double, double g, double& da, double& db) {
                            da = g * y;
                            db = g * x;
                        });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return elementwise2(a, b, "div", [](double x, double y) { return x / y; },
                        [](double x, double y, double, double g, double& da, double& db) {
                            da = g / y;
                            db = -g * x / (y * y);
                        });
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); i++) out[i] = a.data()[i] + s;
    auto an = a.node;
    return make_result(a.shape(), std::move(out), "add_scalar", {an},
                       [an](const TensorNode& o) {
                           if (!an->requires_grad) return;
                           for (size_t i = 0; i < o.value.size(); i++) an->grad[i] += o.grad[i];
                       });
}

Tensor mul_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); i++) out[i] = a.data()[i] * s;
    auto an = a.node;
    return make_result(a.shape(), std::move(out), "mul_scalar", {an},
                       [an, s](const TensorNode& o) {
                           if (!an->requires_grad) return;
                           for (size_t i = 0; i < o.value.size(); i++) an->grad[i] += s * o.grad[i];
                       });
}

Tensor exp_t(const Tensor& a) {
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); i++) out[i] = std::exp(a.data()[i]);
    auto an = a.node;
    return make_result(a.shape(), std::move(out), "exp", {an},
                       [an](const TensorNode& o) {
                           if (!an->requires_grad) return;
                           for (size_t i = 0; i < o.value.size(); i++)
                               an->grad[i] += o.grad[i] * o.value[i];
                       });
}

// ---- activations ----

namespace {
inline double sigmoid_stable(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); i++) out[i] = sigmoid_stable(a.data()[i]);
    auto an = a.node;
    return make_result(a.shape(), std::move(out), "sigmoid", {an},
                       [an](const TensorNode& o) {
                           if (!an->requires_grad) return;
                           for (size_t i = 0; i < o.value.size(); i++) {
                               double s = o.value[i];
                               an->grad[i] += o.grad[i] * s * (1.0 - s);
                           }
                       });
}

Tensor swish(const Tensor& a) {
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); i++) out[i] = a.data()[i] * sigmoid_stable(a.data()[i]);
    auto an = a.node;
    return make_result(a.shape(), std::move(out), "swish", {an},
                       [an](const TensorNode& o) {
                           if (!an->requires_grad) return;
                           for (size_t i = 0; i < o.value.size(); i++) {
                               double s = sigmoid_stable(an->value[i]);
                               an->grad[i] += o.grad[i] * (s + an->value[i] * s * (1.0 - s));
                           }
                       });
}

Tensor softmax(const Tensor& a, int axis) {
    const auto& s = a.shape();
    require(axis >= 0 && axis < static_cast<int>(s.size()), "softmax: invalid axis");
    const int64_t len = s[static_cast<size_t>(axis)];
    int64_t inner = 1, outer = 1;
    for (int i = 0; i < axis; i++) outer *= s[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); i++) inner *= s[i];
    std::vector<double> out(a.data().size());
    const double* src = a.data().data();
    for (int64_t o = 0; o < outer; o++) {
        for (int64_t in = 0; in < inner; in++) {
            const int64_t base = o * len * inner + in;
            double mx = src[base];
            for (int64_t k = 1; k < len; k++) mx = std::max(mx, src[base + k * inner]);
            double z = 0.0;
            for (int64_t k = 0; k < len; k++) {
                double e = std::exp(src[base + k * inner] - mx);
                out[static_cast<size_t>(base + k * inner)] = e;
                z += e;
            }
            for (int64_t k = 0; k < len; k++) out[static_cast<size_t>(base + k * inner)] /= z;
        }
    }
    auto an = a.node;
    return make_result(s, std::move(out), "softmax", {an},
                       [an, axis, len, inner, outer](const TensorNode& o) {
                           if (!an->requires_grad) return;
                           for (int64_t ou = 0; ou < outer; ou++) {
                               for (int64_t in = 0; in < inner; in++) {
                                   const int64_t base = ou * len * inner + in;
                                   double dot = 0.0;
                                   for (int64_t k = 0; k < len; k++) {
                                       size_t idx = static_cast<size_t>(base + k * inner);
                                       dot += o.grad[idx] * o.value[idx];
                                   }
                                   for (int64_t k = 0; k < len; k++) {
                                       size_t idx = static_cast<size_t>(base + k * inner);
                                       an->grad[idx] += o.value[idx] * (o.grad[idx] - dot);
                                   }
                               }
                           }
                       });
}

// ---- reductions / shape ----

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    auto an = a.node;
    return make_result({1}, {acc}, "sum", {an}, [an](const TensorNode& o) {
        if (!an->requires_grad) return;
        for (double& g : an->grad) g += o.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    const double n = static_cast<double>(a.numel());
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    auto an = a.node;
    return make_result({1}, {acc / n}, "mean", {an}, [an, n](const TensorNode& o) {
        if (!an->requires_grad) return;
        const double g = o.grad[0] / n;
        for (double& gi : an->grad) gi += g;
    });
}

Tensor reshape(const Tensor& a, const Shape& s) {
    require(shape_numel(s) == a.numel(), "reshape: element count mismatch");
    auto an = a.node;
    std::vector<double> out = a.data();
    return make_result(s, std::move(out), "reshape", {an}, [an](const TensorNode& o) {
        if (!an->requires_grad) return;
        for (size_t i = 0; i < o.value.size(); i++) an->grad[i] += o.grad[i];
    });
}

Tensor concat_axis1(const Tensor& a, const Tensor& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    require(sa.size() == sb.size() && sa.size() >= 2, "concat_axis1: rank mismatch");
    require(sa[0] == sb[0], "concat_axis1: batch mismatch");
    int64_t inner_a = 1, inner_b = 1;
    for (size_t i = 2; i < sa.size(); i++) {
        require(sa[i] == sb[i], "concat_axis1: trailing dims differ");
        inner_a *= sa[i];
    }
    inner_b = inner_a;
    const int64_t rows_a = sa[1] * inner_a, rows_b = sb[1] * inner_b;
    Shape so = sa;
    so[1] = sa[1] + sb[1];
    std::vector<double> out(static_cast<size_t>(shape_numel(so)));
    for (int64_t n = 0; n < sa[0]; n++) {
        std::copy_n(a.data().data() + n * rows_a, rows_a, out.data() + n * (rows_a + rows_b));
        std::copy_n(b.data().data() + n * rows_b, rows_b,
                    out.data() + n * (rows_a + rows_b) + rows_a);
    }
    auto an = a.node, bn = b.node;
    const int64_t batch = sa[0];
    return make_result(so, std::move(out), "concat_axis1", {an, bn},
                       [an, bn, batch, rows_a, rows_b](const TensorNode& o) {
                           for (int64_t n = 0; n < batch; n++) {
                               const double* g = o.grad.data() + n * (rows_a + rows_b);
                               if (an->requires_grad)
                                   for (int64_t i = 0; i < rows_a; i++)
                                       an->grad[static_cast<size_t>(n * rows_a + i)] += g[i];
                               if (bn->requires_grad)
                                   for (int64_t i = 0; i < rows_b; i++)
                                       bn->grad[static_cast<size_t>(n * rows_b + i)] += g[rows_a + i];
                           }
                       });
}

Tensor slice_axis1(const Tensor& a, int64_t c0, int64_t c1) {
    const auto& s = a.shape();
    require(s.size() >= 2 && c0 >= 0 && c1 > c0 && c1 <= s[1], "slice_axis1: bad range");
    int64_t inner = 1;
    for (size_t i = 2; i < s.size(); i++) inner *= s[i];
    Shape so = s;
    so[1] = c1 - c0;
    const int64_t in_row = s[1] * inner, out_row = (c1 - c0) * inner;
    std::vector<double> out(static_cast<size_t>(shape_numel(so)));
    for (int64_t n = 0; n < s[0]; n++)
        std::copy_n(a.data().data() + n * in_row + c0 * inner, out_row, out.data() + n * out_row);
    auto an = a.node;
    const int64_t batch = s[0], off = c0 * inner;
    return make_result(so, std::move(out), "slice_axis1", {an},
                       [an, batch, in_row, out_row, off](const TensorNode& o) {
                           if (!an->requires_grad) return;
                           for (int64_t n = 0; n < batch; n++)
                               for (int64_t i = 0; i < out_row; i++)
                                   an->grad[static_cast<size_t>(n * in_row + off + i)] +=
                                       o.grad[static_cast<size_t>(n * out_row + i)];
                       });
}

// ---- conv2d ----

namespace {

struct ConvDims {
    int64_t batch, cin, h, w, cout, k, ho, wo;
    int stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& wt, int stride, int padding) {
    require(x.shape().size() == 4, "conv2d: input must be (B,C,H,W)");
    require(wt.shape().size() == 4, "conv2d: kernel must be (Cout,Cin,k,k)");
    ConvDims d;
    d.batch = x.dim(0);
    d.cin = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.cout = wt.dim(0);
    d.k = wt.dim(2);
    require(wt.dim(1) == d.cin, "conv2d: channel mismatch");
    require(wt.dim(3) == d.k && (d.k == 1 || d.k == 3), "conv2d: kernel size must be 1 or 3");
    require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
    require(padding == 0 || padding == 1, "conv2d: padding must be 0 or 1");
    d.stride = stride;
    d.pad = padding;
    d.ho = (d.h + 2 * padding - d.k) / stride + 1;
    d.wo = (d.w + 2 * padding - d.k) / stride + 1;
    require(d.ho >= 1 && d.wo >= 1, "conv2d: output would be empty");
    return d;
}

// Patch matrix for one image: (Cin*k*k) x (Ho*Wo), column-major so each
// output pixel's patch is contiguous.
void im2col(const double* img, const ConvDims& d, double* col) {
    const int64_t kk = d.k * d.k;
    const int64_t rows = d.cin * kk;
    for (int64_t oy = 0; oy < d.ho; oy++) {
        for (int64_t ox = 0; ox < d.wo; ox++) {
            double* dst = col + (oy * d.wo + ox) * rows;
            const int64_t iy0 = oy * d.stride - d.pad;
            const int64_t ix0 = ox * d.stride - d.pad;
            for (int64_t c = 0; c < d.cin; c++) {
                const double* plane = img + c * d.h * d.w;
                for (int64_t ky = 0; ky < d.k; ky++) {
                    const int64_t iy = iy0 + ky;
                    for (int64_t kx = 0; kx < d.k; kx++) {
                        const int64_t ix = ix0 + kx;
                        dst[c * kk + ky * d.k + kx] =
                            (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                                ? plane[iy * d.w + ix]
                                : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, const ConvDims& d, double* img) {
    const int64_t kk = d.k * d.k;
    const int64_t rows = d.cin * kk;
    for (int64_t oy = 0; oy < d.ho; oy++) {
        for (int64_t ox = 0; ox < d.wo; ox++) {
            const double* src = col + (oy * d.wo + ox) * rows;
            const int64_t iy0 = oy * d.stride - d.pad;
            const int64_t ix0 = ox * d.stride - d.pad;
            for (int64_t c = 0; c < d.cin; c++) {
                double* plane = img + c * d.h * d.w;
                for (int64_t ky = 0; ky < d.k; ky++) {
                    const int64_t iy = iy0 + ky;
                    if (iy < 0 || iy >= d.h) continue;
                    for (int64_t kx = 0; kx < d.k; kx++) {
                        const int64_t ix = ix0 + kx;
                        if (ix < 0 || ix >= d.w) continue;
                        plane[iy * d.w + ix] += src[c * kk + ky * d.k + kx];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
    const ConvDims d = conv_dims(x, weight, stride, padding);
    const bool has_bias = bias.defined();
    if (has_bias) require(bias.numel() == d.cout, "conv2d: bias size mismatch");

    const int64_t rows = d.cin * d.k * d.k;
    const int64_t pix = d.ho * d.wo;
    std::vector<double> out(static_cast<size_t>(d.batch * d.cout * pix));
    const double* wptr = weight.data().data();
    const double* bptr = has_bias ? bias.data().data() : nullptr;

    parallel_for(d.batch, [&](int64_t b) {
        std::vector<double> col(static_cast<size_t>(rows * pix));
        im2col(x.data().data() + b * d.cin * d.h * d.w, d, col.data());
        CRowMap W(wptr, d.cout, rows);
        CColMap A(col.data(), rows, pix);
        RowMap O(out.data() + b * d.cout * pix, d.cout, pix);
        O.noalias() = W * A;
        if (bptr) {
            for (int64_t c = 0; c < d.cout; c++) O.row(c).array() += bptr[c];
        }
    });

    auto xn = x.node, wn = weight.node;
    auto bn = has_bias ? bias.node : nullptr;
    std::vector<std::shared_ptr<TensorNode>> inputs = {xn, wn};
    if (bn) inputs.push_back(bn);
    return make_result(
        {d.batch, d.cout, d.ho, d.wo}, std::move(out), "conv2d", std::move(inputs),
        [xn, wn, bn, d, rows, pix](const TensorNode& o) {
            // Per-image partial weight grads, reduced in fixed image order so
            // results do not depend on the thread count.
            std::vector<std::vector<double>> wparts;
            std::vector<std::vector<double>> bparts;
            if (wn->requires_grad)
                wparts.assign(static_cast<size_t>(d.batch),
                              std::vector<double>(static_cast<size_t>(d.cout * rows), 0.0));
            if (bn && bn->requires_grad)
                bparts.assign(static_cast<size_t>(d.batch),
                              std::vector<double>(static_cast<size_t>(d.cout), 0.0));
            parallel_for(d.batch, [&](int64_t b) {
                std::vector<double> col(static_cast<size_t>(rows * pix));
                im2col(xn->value.data() + b * d.cin * d.h * d.w, d, col.data());
                CRowMap G(o.grad.data() + b * d.cout * pix, d.cout, pix);
                if (wn->requires_grad) {
                    CColMap A(col.data(), rows, pix);
                    RowMap dW(wparts[static_cast<size_t>(b)].data(), d.cout, rows);
                    dW.noalias() = G * A.transpose();
                }
                if (bn && bn->requires_grad) {
                    for (int64_t c = 0; c < d.cout; c++)
                        bparts[static_cast<size_t>(b)][static_cast<size_t>(c)] = G.row(c).sum();
                }
                if (xn->requires_grad) {
                    std::vector<double> dcol(static_cast<size_t>(rows * pix));
                    CRowMap W(wn->value.data(), d.cout, rows);
                    ColMap dA(dcol.data(), rows, pix);
                    dA.noalias() = W.transpose() * G;
                    col2im_add(dcol.data(), d, xn->grad.data() + b * d.cin * d.h * d.w);
                }
            });
            if (wn->requires_grad) {
                for (const auto& part : wparts)
                    for (size_t i = 0; i < part.size(); i++) wn->grad[i] += part[i];
            }
            if (bn && bn->requires_grad) {
                for (const auto& part : bparts)
                    for (size_t i = 0; i < part.size(); i++) bn->grad[i] += part[i];
            }
        });
}

// ---- group norm ----

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  double eps) {
    require(x.shape().size() == 4, "group_norm: input must be (B,C,H,W)");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(groups >= 1 && C % groups == 0, "group_norm: groups must divide channels");
    require(gamma.numel() == C && beta.numel() == C, "group_norm: affine size mismatch");
    const int64_t cg = C / groups;
    const int64_t m = cg * H * W;

    std::vector<double> out(x.data().size());
    auto mu = std::make_shared<std::vector<double>>(static_cast<size_t>(B * groups));
    auto rstd = std::make_shared<std::vector<double>>(static_cast<size_t>(B * groups));
    const double* src = x.data().data();
    const double* gp = gamma.data().data();
    const double* bp = beta.data().data();
    for (int64_t b = 0; b < B; b++) {
        for (int64_t g = 0; g < groups; g++) {
            const double* base = src + (b * C + g * cg) * H * W;
            double s = 0.0, s2 = 0.0;
            for (int64_t i = 0; i < m; i++) {
                s += base[i];
                s2 += base[i] * base[i];
            }
            const double mean = s / static_cast<double>(m);
            const double var = std::max(0.0, s2 / static_cast<double>(m) - mean * mean);
            const double r = 1.0 / std::sqrt(var + eps);
            (*mu)[static_cast<size_t>(b * groups + g)] = mean;
            (*rstd)[static_cast<size_t>(b * groups + g)] = r;
            double* dst = out.data() + (b * C + g * cg) * H * W;
            for (int64_t c = 0; c < cg; c++) {
                const double ga = gp[g * cg + c], be = bp[g * cg + c];
                const double* ip = base + c * H * W;
                double* op = dst + c * H * W;
                for (int64_t i = 0; i < H * W; i++) op[i] = (ip[i] - mean) * r * ga + be;
            }
        }
    }

    auto xn = x.node, gn = gamma.node, bn = beta.node;
    return make_result(
        x.shape(), std::move(out), "group_norm", {xn, gn, bn},
        [xn, gn, bn, mu, rstd, B, C, H, W, groups, cg, m](const TensorNode& o) {
            const int64_t hw = H * W;
            for (int64_t b = 0; b < B; b++) {
                for (int64_t g = 0; g < groups; g++) {
                    const double mean = (*mu)[static_cast<size_t>(b * groups + g)];
                    const double r = (*rstd)[static_cast<size_t>(b * groups + g)];
                    const int64_t off = (b * C + g * cg) * hw;
                    const double* xv = xn->value.data() + off;
                    const double* gv = o.grad.data() + off;
                    // ghat = g * gamma; accumulate means of ghat and ghat*xhat
                    double sum_gh = 0.0, sum_ghx = 0.0;
                    for (int64_t c = 0; c < cg; c++) {
                        const double ga = gn->value[static_cast<size_t>(g * cg + c)];
                        for (int64_t i = 0; i < hw; i++) {
                            const double gh = gv[c * hw + i] * ga;
                            const double xh = (xv[c * hw + i] - mean) * r;
                            sum_gh += gh;
                            sum_ghx += gh * xh;
                        }
                    }
                    const double mean_gh = sum_gh / static_cast<double>(m);
                    const double mean_ghx = sum_ghx / static_cast<double>(m);
                    for (int64_t c = 0; c < cg; c++) {
                        const double ga = gn->value[static_cast<size_t>(g * cg + c)];
                        double dga = 0.0, dbe = 0.0;
                        for (int64_t i = 0; i < hw; i++) {
                            const double xh = (xv[c * hw + i] - mean) * r;
                            const double gr = gv[c * hw + i];
                            if (xn->requires_grad)
                                xn->grad[static_cast<size_t>(off + c * hw + i)] +=
                                    r * (gr * ga - mean_gh - xh * mean_ghx);
                            dga += gr * xh;
                            dbe += gr;
                        }
                        if (gn->requires_grad) gn->grad[static_cast<size_t>(g * cg + c)] += dga;
                        if (bn->requires_grad) bn->grad[static_cast<size_t>(g * cg + c)] += dbe;
                    }
                }
            }
        });
}

// ---- layer norm over last dim ----

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const auto& s = x.shape();
    require(!s.empty(), "layer_norm: empty shape");
    const int64_t C = s.back();
    require(gamma.numel() == C && beta.numel() == C, "layer_norm: affine size mismatch");
    const int64_t rows = x.numel() / C;
    std::vector<double> out(x.data().size());
    auto mu = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    auto rstd = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    const double* src = x.data().data();
    for (int64_t rI = 0; rI < rows; rI++) {
        const double* base = src + rI * C;
        double sum = 0.0, sum2 = 0.0;
        for (int64_t i = 0; i < C; i++) {
            sum += base[i];
            sum2 += base[i] * base[i];
        }
        const double mean = sum / static_cast<double>(C);
        const double var = std::max(0.0, sum2 / static_cast<double>(C) - mean * mean);
        const double r = 1.0 / std::sqrt(var + eps);
        (*mu)[static_cast<size_t>(rI)] = mean;
        (*rstd)[static_cast<size_t>(rI)] = r;
        double* dst = out.data() + rI * C;
        for (int64_t i = 0; i < C; i++)
            dst[i] = (base[i] - mean) * r * gamma.data()[static_cast<size_t>(i)] +
                     beta.data()[static_cast<size_t>(i)];
    }
    auto xn = x.node, gn = gamma.node, bn = beta.node;
    return make_result(
        s, std::move(out), "layer_norm", {xn, gn, bn},
        [xn, gn, bn, mu, rstd, rows, C](const TensorNode& o) {
            for (int64_t rI = 0; rI < rows; rI++) {
                const double mean = (*mu)[static_cast<size_t>(rI)];
                const double r = (*rstd)[static_cast<size_t>(rI)];
                const double* xv = xn->value.data() + rI * C;
                const double* gv = o.grad.data() + rI * C;
                double sum_gh = 0.0, sum_ghx = 0.0;
                for (int64_t i = 0; i < C; i++) {
                    const double gh = gv[i] * gn->value[static_cast<size_t>(i)];
                    const double xh = (xv[i] - mean) * r;
                    sum_gh += gh;
                    sum_ghx += gh * xh;
                }
                const double mean_gh = sum_gh / static_cast<double>(C);
                const double mean_ghx = sum_ghx / static_cast<double>(C);
                for (int64_t i = 0; i < C; i++) {
                    const double xh = (xv[i] - mean) * r;
                    if (xn->requires_grad)
                        xn->grad[static_cast<size_t>(rI * C + i)] +=
                            r * (gv[i] * gn->value[static_cast<size_t>(i)] - mean_gh -
                                 xh * mean_ghx);
                    if (gn->requires_grad) gn->grad[static_cast<size_t>(i)] += gv[i] * xh;
                    if (bn->requires_grad) bn->grad[static_cast<size_t>(i)] += gv[i];
                }
            }
        });
}

// ---- spatial resampling & pooling ----

Tensor nearest_up2(const Tensor& x) {
    require(x.shape().size() == 4, "nearest_up2: input must be (B,C,H,W)");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    std::vector<double> out(static_cast<size_t>(B * C * 4 * H * W));
    const double* src = x.data().data();
    for (int64_t p = 0; p < B * C; p++) {
        const double* ip = src + p * H * W;
        double* op = out.data() + p * 4 * H * W;
        for (int64_t y = 0; y < H; y++) {
            for (int64_t x2 = 0; x2 < W; x2++) {
                const double v = ip[y * W + x2];
                op[(2 * y) * 2 * W + 2 * x2] = v;
                op[(2 * y) * 2 * W + 2 * x2 + 1] = v;
                op[(2 * y + 1) * 2 * W + 2 * x2] = v;
                op[(2 * y + 1) * 2 * W + 2 * x2 + 1] = v;
            }
        }
    }
    auto xn = x.node;
    return make_result({B, C, 2 * H, 2 * W}, std::move(out), "nearest_up2", {xn},
                       [xn, B, C, H, W](const TensorNode& o) {
                           if (!xn->requires_grad) return;
                           for (int64_t p = 0; p < B * C; p++) {
                               const double* gp = o.grad.data() + p * 4 * H * W;
                               double* dp = xn->grad.data() + p * H * W;
                               for (int64_t y = 0; y < H; y++)
                                   for (int64_t x2 = 0; x2 < W; x2++)
                                       dp[y * W + x2] += gp[(2 * y) * 2 * W + 2 * x2] +
                                                         gp[(2 * y) * 2 * W + 2 * x2 + 1] +
                                                         gp[(2 * y + 1) * 2 * W + 2 * x2] +
                                                         gp[(2 * y + 1) * 2 * W + 2 * x2 + 1];
                           }
                       });
}

Tensor global_avg_pool(const Tensor& x) {
    require(x.shape().size() == 4, "global_avg_pool: input must be (B,C,H,W)");
    const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    std::vector<double> out(static_cast<size_t>(B * C));
    for (int64_t p = 0; p < B * C; p++) {
        double s = 0.0;
        for (int64_t i = 0; i < HW; i++) s += x.data()[static_cast<size_t>(p * HW + i)];
        out[static_cast<size_t>(p)] = s / static_cast<double>(HW);
    }
    auto xn = x.node;
    return make_result({B, C}, std::move(out), "global_avg_pool", {xn},
                       [xn, B, C, HW](const TensorNode& o) {
                           if (!xn->requires_grad) return;
                           for (int64_t p = 0; p < B * C; p++) {
                               const double g = o.grad[static_cast<size_t>(p)] /
                                                static_cast<double>(HW);
                               for (int64_t i = 0; i < HW; i++)
                                   xn->grad[static_cast<size_t>(p * HW + i)] += g;
                           }
                       });
}

Tensor scale_shift(const Tensor& x, const Tensor& alpha, const Tensor& beta) {
    require(x.shape().size() == 4, "scale_shift: input must be (B,C,H,W)");
    const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    require(alpha.shape() == Shape({B, C}) && beta.shape() == Shape({B, C}),
            "scale_shift: alpha/beta must be (B,C)");
    std::vector<double> out(x.data().size());
    for (int64_t p = 0; p < B * C; p++) {
        const double a = alpha.data()[static_cast<size_t>(p)];
        const double be = beta.data()[static_cast<size_t>(p)];
        for (int64_t i = 0; i < HW; i++)
            out[static_cast<size_t>(p * HW + i)] = x.data()[static_cast<size_t>(p * HW + i)] * a + be;
    }
    auto xn = x.node, an = alpha.node, bn = beta.node;
    return make_result(x.shape(), std::move(out), "scale_shift", {xn, an, bn},
                       [xn, an, bn, B, C, HW](const TensorNode& o) {
                           for (int64_t p = 0; p < B * C; p++) {
                               const double a = an->value[static_cast<size_t>(p)];
                               double da = 0.0, db = 0.0;
                               for (int64_t i = 0; i < HW; i++) {
                                   const size_t idx = static_cast<size_t>(p * HW + i);
                                   const double g = o.grad[idx];
                                   if (xn->requires_grad) xn->grad[idx] += g * a;
                                   da += g * xn->value[idx];
                                   db += g;
                               }
                               if (an->requires_grad) an->grad[static_cast<size_t>(p)] += da;
                               if (bn->requires_grad) bn->grad[static_cast<size_t>(p)] += db;
                           }
                       });
}

Tensor add_channel(const Tensor& x, const Tensor& v) {
    require(x.shape().size() == 4, "add_channel: input must be (B,C,H,W)");
    const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    require(v.shape() == Shape({B, C}), "add_channel: v must be (B,C)");
    std::vector<double> out(x.data().size());
    for (int64_t p = 0; p < B * C; p++) {
        const double a = v.data()[static_cast<size_t>(p)];
        for (int64_t i = 0; i < HW; i++)
            out[static_cast<size_t>(p * HW + i)] = x.data()[static_cast<size_t>(p * HW + i)] + a;
    }
    auto xn = x.node, vn = v.node;
    return make_result(x.shape(), std::move(out), "add_channel", {xn, vn},
                       [xn, vn, B, C, HW](const TensorNode& o) {
                           for (int64_t p = 0; p < B * C; p++) {
                               double dv = 0.0;
                               for (int64_t i = 0; i < HW; i++) {
                                   const size_t idx = static_cast<size_t>(p * HW + i);
                                   if (xn->requires_grad) xn->grad[idx] += o.grad[idx];
                                   dv += o.grad[idx];
                               }
                               if (vn->requires_grad) vn->grad[static_cast<size_t>(p)] += dv;
                           }
                       });
}

// ---- separable valid-mode Gaussian blur (fixed kernel) ----

namespace {

std::vector<double> gaussian_taps(int ksize, double sigma) {
    std::vector<double> w(static_cast<size_t>(ksize));
    const double c = (ksize - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < ksize; i++) {
        w[static_cast<size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
        sum += w[static_cast<size_t>(i)];
    }
    for (double& v : w) v /= sum;
    return w;
}

}  // namespace

Tensor blur_valid(const Tensor& x, int ksize, double sigma) {
    require(x.shape().size() == 4, "blur_valid: input must be (B,C,H,W)");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(H >= ksize && W >= ksize, "blur_valid: image smaller than window");
    const auto w = gaussian_taps(ksize, sigma);
    const int64_t ho = H - ksize + 1, wo = W - ksize + 1;

    auto apply = [&](const double* src, double* dst) {
        std::vector<double> tmp(static_cast<size_t>(H * wo));
        for (int64_t y = 0; y < H; y++)
            for (int64_t x2 = 0; x2 < wo; x2++) {
                double acc = 0.0;
                for (int i = 0; i < ksize; i++) acc += w[static_cast<size_t>(i)] * src[y * W + x2 + i];
                tmp[static_cast<size_t>(y * wo + x2)] = acc;
            }
        for (int64_t y = 0; y < ho; y++)
            for (int64_t x2 = 0; x2 < wo; x2++) {
                double acc = 0.0;
                for (int i = 0; i < ksize; i++)
                    acc += w[static_cast<size_t>(i)] * tmp[static_cast<size_t>((y + i) * wo + x2)];
                dst[y * wo + x2] = acc;
            }
    };

    std::vector<double> out(static_cast<size_t>(B * C * ho * wo));
    for (int64_t p = 0; p < B * C; p++)
        apply(x.data().data() + p * H * W, out.data() + p * ho * wo);

    auto xn = x.node;
    return make_result(
        {B, C, ho, wo}, std::move(out), "blur_valid", {xn},
        [xn, w, B, C, H, W, ho, wo, ksize](const TensorNode& o) {
            if (!xn->requires_grad) return;
            // Adjoint of valid correlation: scatter each output grad through
            // the same separable taps.
            for (int64_t p = 0; p < B * C; p++) {
                const double* g = o.grad.data() + p * ho * wo;
                std::vector<double> tmp(static_cast<size_t>(H * wo), 0.0);
                for (int64_t y = 0; y < ho; y++)
                    for (int i = 0; i < ksize; i++) {
                        const double wi = w[static_cast<size_t>(i)];
                        for (int64_t x2 = 0; x2 < wo; x2++)
                            tmp[static_cast<size_t>((y + i) * wo + x2)] += wi * g[y * wo + x2];
                    }
                double* dx = xn->grad.data() + p * H * W;
                for (int64_t y = 0; y < H; y++)
                    for (int64_t x2 = 0; x2 < wo; x2++) {
                        const double t = tmp[static_cast<size_t>(y * wo + x2)];
                        if (t == 0.0) continue;
                        for (int i = 0; i < ksize; i++)
                            dx[y * W + x2 + i] += w[static_cast<size_t>(i)] * t;
                    }
            }
        });
}

// ---- linear & batched matmul ----

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require(x.shape().size() == 2, "linear: input must be (B,F)");
    require(weight.shape().size() == 2, "linear: weight must be (O,F)");
    const int64_t B = x.dim(0), F = x.dim(1), O = weight.dim(0);
    require(weight.dim(1) == F, "linear: feature mismatch");
    const bool has_bias = bias.defined();
    if (has_bias) require(bias.numel() == O, "linear: bias size mismatch");

    std::vector<double> out(static_cast<size_t>(B * O));
    {
        CRowMap X(x.data().data(), B, F);
        CRowMap Wm(weight.data().data(), O, F);
        RowMap Y(out.data(), B, O);
        Y.noalias() = X * Wm.transpose();
        if (has_bias)
            for (int64_t b = 0; b < B; b++)
                for (int64_t o2 = 0; o2 < O; o2++)
                    out[static_cast<size_t>(b * O + o2)] += bias.data()[static_cast<size_t>(o2)];
    }
    auto xn = x.node, wn = weight.node;
    auto bn = has_bias ? bias.node : nullptr;
    std::vector<std::shared_ptr<TensorNode>> inputs = {xn, wn};
    if (bn) inputs.push_back(bn);
    return make_result({B, O}, std::move(out), "linear", std::move(inputs),
                       [xn, wn, bn, B, F, O](const TensorNode& o) {
                           CRowMap G(o.grad.data(), B, O);
                           if (xn->requires_grad) {
                               CRowMap Wm(wn->value.data(), O, F);
                               RowMap dX(xn->grad.data(), B, F);
                               dX.noalias() += G * Wm;
                           }
                           if (wn->requires_grad) {
                               CRowMap X(xn->value.data(), B, F);
                               RowMap dW(wn->grad.data(), O, F);
                               dW.noalias() += G.transpose() * X;
                           }
                           if (bn && bn->requires_grad) {
                               for (int64_t b = 0; b < B; b++)
                                   for (int64_t j = 0; j < O; j++)
                                       bn->grad[static_cast<size_t>(j)] +=
                                           o.grad[static_cast<size_t>(b * O + j)];
                           }
                       });
}

Tensor matmul_b(const Tensor& a, const Tensor& b) {
    require(a.shape().size() == 3 && b.shape().size() == 3, "matmul_b: inputs must be rank 3");
    const int64_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
    require(b.dim(0) == B && b.dim(1) == K, "matmul_b: shape mismatch");
    std::vector<double> out(static_cast<size_t>(B * M * N));
    for (int64_t i = 0; i < B; i++) {
        CRowMap A(a.data().data() + i * M * K, M, K);
        CRowMap Bm(b.data().data() + i * K * N, K, N);
        RowMap C(out.data() + i * M * N, M, N);
        C.noalias() = A * Bm;
    }
    auto an = a.node, bn = b.node;
    return make_result({B, M, N}, std::move(out), "matmul_b", {an, bn},
                       [an, bn, B, M, K, N](const TensorNode& o) {
                           for (int64_t i = 0; i < B; i++) {
                               CRowMap G(o.grad.data() + i * M * N, M, N);
                               if (an->requires_grad) {
                                   CRowMap Bm(bn->value.data() + i * K * N, K, N);
                                   RowMap dA(an->grad.data() + i * M * K, M, K);
                                   dA.noalias() += G * Bm.transpose();
                               }
                               if (bn->requires_grad) {
                                   CRowMap A(an->value.data() + i * M * K, M, K);
                                   RowMap dB(bn->grad.data() + i * K * N, K, N);
                                   dB.noalias() += A.transpose() * G;
                               }
                           }
                       });
}

Tensor transpose12(const Tensor& a) {
    require(a.shape().size() == 3, "transpose12: input must be rank 3");
    const int64_t B = a.dim(0), M = a.dim(1), N = a.dim(2);
    std::vector<double> out(a.data().size());
    for (int64_t b = 0; b < B; b++)
        for (int64_t m = 0; m < M; m++)
            for (int64_t n = 0; n < N; n++)
                out[static_cast<size_t>(b * N * M + n * M + m)] =
                    a.data()[static_cast<size_t>(b * M * N + m * N + n)];
    auto an = a.node;
    return make_result({B, N, M}, std::move(out), "transpose12", {an},
                       [an, B, M, N](const TensorNode& o) {
                           if (!an->requires_grad) return;
                           for (int64_t b = 0; b < B; b++)
                               for (int64_t n = 0; n < N; n++)
                                   for (int64_t m = 0; m < M; m++)
                                       an->grad[static_cast<size_t>(b * M * N + m * N + n)] +=
                                           o.grad[static_cast<size_t>(b * N * M + n * M + m)];
                       });
}

Tensor bchw_to_tokens(const Tensor& x) {
    require(x.shape().size() == 4, "bchw_to_tokens: input must be (B,C,H,W)");
    const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    std::vector<double> out(x.data().size());
    for (int64_t b = 0; b < B; b++)
        for (int64_t c = 0; c < C; c++)
            for (int64_t i = 0; i < HW; i++)
                out[static_cast<size_t>(b * HW * C + i * C + c)] =
                    x.data()[static_cast<size_t>(b * C * HW + c * HW + i)];
    auto xn = x.node;
    return make_result({B, HW, C}, std::move(out), "bchw_to_tokens", {xn},
                       [xn, B, C, HW](const TensorNode& o) {
                           if (!xn->requires_grad) return;
                           for (int64_t b = 0; b < B; b++)
                               for (int64_t i = 0; i < HW; i++)
                                   for (int64_t c = 0; c < C; c++)
                                       xn->grad[static_cast<size_t>(b * C * HW + c * HW + i)] +=
                                           o.grad[static_cast<size_t>(b * HW * C + i * C + c)];
                       });
}

Tensor tokens_to_bchw(const Tensor& x, int64_t h, int64_t w) {
    require(x.shape().size() == 3, "tokens_to_bchw: input must be (B,HW,C)");
    const int64_t B = x.dim(0), HW = x.dim(1), C = x.dim(2);
    require(HW == h * w, "tokens_to_bchw: token count mismatch");
    std::vector<double> out(x.data().size());
    for (int64_t b = 0; b < B; b++)
        for (int64_t i = 0; i < HW; i++)
            for (int64_t c = 0; c < C; c++)
                out[static_cast<size_t>(b * C * HW + c * HW + i)] =
                    x.data()[static_cast<size_t>(b * HW * C + i * C + c)];
    auto xn = x.node;
    return make_result({B, C, h, w}, std::move(out), "tokens_to_bchw", {xn},
                       [xn, B, C, HW](const TensorNode& o) {
                           if (!xn->requires_grad) return;
                           for (int64_t b = 0; b < B; b++)
                               for (int64_t c = 0; c < C; c++)
                                   for (int64_t i = 0; i < HW; i++)
                                       xn->grad[static_cast<size_t>(b * HW * C + i * C + c)] +=
                                           o.grad[static_cast<size_t>(b * C * HW + c * HW + i)];
                       });
}

Tensor split_heads(const Tensor& x, int heads) {
    require(x.shape().size() == 3, "split_heads: input must be (B,N,C)");
    const int64_t B = x.dim(0), N = x.dim(1), C = x.dim(2);
    require(C % heads == 0, "split_heads: heads must divide channels");
    const int64_t dh = C / heads;
    std::vector<double> out(x.data().size());
    for (int64_t b = 0; b < B; b++)
        for (int64_t j = 0; j < heads; j++)
            for (int64_t n = 0; n < N; n++)
                for (int64_t d = 0; d < dh; d++)
                    out[static_cast<size_t>(((b * heads + j) * N + n) * dh + d)] =
                        x.data()[static_cast<size_t>((b * N + n) * C + j * dh + d)];
    auto xn = x.node;
    return make_result({B * heads, N, dh}, std::move(out), "split_heads", {xn},
                       [xn, B, N, C, heads, dh](const TensorNode& o) {
                           if (!xn->requires_grad) return;
                           for (int64_t b = 0; b < B; b++)
                               for (int64_t j = 0; j < heads; j++)
                                   for (int64_t n = 0; n < N; n++)
                                       for (int64_t d = 0; d < dh; d++)
                                           xn->grad[static_cast<size_t>((b * N + n) * C + j * dh +
                                                                        d)] +=
                                               o.grad[static_cast<size_t>(
                                                   ((b * heads + j) * N + n) * dh + d)];
                       });
}

Tensor merge_heads(const Tensor& x, int heads) {
    require(x.shape().size() == 3, "merge_heads: input must be (B*h,N,dh)");
    const int64_t Bh = x.dim(0), N = x.dim(1), dh = x.dim(2);
    require(Bh % heads == 0, "merge_heads: batch not divisible by heads");
    const int64_t B = Bh / heads, C = dh * heads;
    std::vector<double> out(x.data().size());
    for (int64_t b = 0; b < B; b++)
        for (int64_t j = 0; j < heads; j++)
            for (int64_t n = 0; n < N; n++)
                for (int64_t d = 0; d < dh; d++)
                    out[static_cast<size_t>((b * N + n) * C + j * dh + d)] =
                        x.data()[static_cast<size_t>(((b * heads + j) * N + n) * dh + d)];
    auto xn = x.node;
    return make_result({B, N, C}, std::move(out), "merge_heads", {xn},
                       [xn, B, N, C, heads, dh](const TensorNode& o) {
                           if (!xn->requires_grad) return;
                           for (int64_t b = 0; b < B; b++)
                               for (int64_t j = 0; j < heads; j++)
                                   for (int64_t n = 0; n < N; n++)
                                       for (int64_t d = 0; d < dh; d++)
                                           xn->grad[static_cast<size_t>(
                                               ((b * heads + j) * N + n) * dh + d)] +=
                                               o.grad[static_cast<size_t>((b * N + n) * C +
                                                                          j * dh + d)];
                       });
}

// ---- losses ----

Tensor mse_loss(const Tensor& a, const Tensor& b) {
    same_shape(a, b, "mse_loss");
    const double n = static_cast<double>(a.numel());
    double acc = 0.0;
    for (size_t i = 0; i < a.data().size(); i++) {
        const double d = a.data()[i] - b.data()[i];
        acc += d * d;
    }
    auto an = a.node, bn = b.node;
    return make_result({1}, {acc / n}, "mse_loss", {an, bn}, [an, bn, n](const TensorNode& o) {
        const double g = 2.0 * o.grad[0] / n;
        for (size_t i = 0; i < an->value.size(); i++) {
            const double d = an->value[i] - bn->value[i];
            if (an->requires_grad) an->grad[i] += g * d;
            if (bn->requires_grad) bn->grad[i] -= g * d;
        }
    });
}

Tensor huber_loss(const Tensor& a, const Tensor& b, double delta) {
    same_shape(a, b, "huber_loss");
    const double n = static_cast<double>(a.numel());
    double acc = 0.0;
    for (size_t i = 0; i < a.data().size(); i++) {
        const double e = std::abs(a.data()[i] - b.data()[i]);
        acc += e <= delta ? 0.5 * e * e : delta * (e - 0.5 * delta);
    }
    auto an = a.node, bn = b.node;
    return make_result({1}, {acc / n}, "huber_loss", {an, bn},
                       [an, bn, n, delta](const TensorNode& o) {
                           const double g = o.grad[0] / n;
                           for (size_t i = 0; i < an->value.size(); i++) {
                               double e = an->value[i] - bn->value[i];
                               e = std::clamp(e, -delta, delta);
                               if (an->requires_grad) an->grad[i] += g * e;
                               if (bn->requires_grad) bn->grad[i] -= g * e;
                           }
                       });
}

Tensor kl_loss(const Tensor& mu, const Tensor& logvar) {
    same_shape(mu, logvar, "kl_loss");
    const double n = static_cast<double>(mu.numel());
    double acc = 0.0;
    for (size_t i = 0; i < mu.data().size(); i++) {
        const double m = mu.data()[i], lv = logvar.data()[i];
        acc += 0.5 * (m * m + std::exp(lv) - 1.0 - lv);
    }
    auto mn = mu.node, ln = logvar.node;
    return make_result({1}, {acc / n}, "kl_loss", {mn, ln}, [mn, ln, n](const TensorNode& o) {
        const double g = o.grad[0] / n;
        for (size_t i = 0; i < mn->value.size(); i++) {
            if (mn->requires_grad) mn->grad[i] += g * mn->value[i];
            if (ln->requires_grad) ln->grad[i] += g * 0.5 * (std::exp(ln->value[i]) - 1.0);
        }
    });
}

}  // namespace fringelab
