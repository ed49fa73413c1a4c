#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fringelab/common.hpp"
#include "fringelab/rng.hpp"

namespace fringelab {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode;

// One recorded op: the inputs it read and a closure that routes the output
// gradient into them. Records form a DAG hanging off the loss; backward walks
// it in reverse topological order, visiting each node exactly once.
struct OpRecord {
    const char* name = "";
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::function<void(const TensorNode&)> backward;
};

struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily; accumulates additively
    bool requires_grad = false;
    std::unique_ptr<OpRecord> producer;

    int64_t numel() const { return static_cast<int64_t>(value.size()); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

// Value-semantics handle onto a shared node.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : node(std::move(n)) {}

    static Tensor zeros(const Shape& s, bool requires_grad = false);
    static Tensor full(const Shape& s, double v, bool requires_grad = false);
    static Tensor from_data(const Shape& s, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor randn(const Shape& s, Rng& rng, bool requires_grad = false);

    bool defined() const { return node != nullptr; }
    const Shape& shape() const { return node->shape; }
    int64_t numel() const { return node->numel(); }
    int64_t dim(int i) const { return node->shape[static_cast<size_t>(i)]; }

    const std::vector<double>& data() const { return node->value; }
    std::vector<double>& data() { return node->value; }
    const std::vector<double>& grad() const { return node->grad; }

    bool requires_grad() const { return node->requires_grad; }
    void set_requires_grad(bool rg) { node->requires_grad = rg; }
    void zero_grad() {
        if (node) node->grad.assign(node->value.size(), 0.0);
    }
    double item() const {
        require(node && node->numel() == 1, "item: tensor is not scalar");
        return node->value[0];
    }

    std::shared_ptr<TensorNode> node;
};

// Gradient recording is on by default; inference paths disable it to skip
// closure construction.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();

  private:
    bool prev_;
};

// Reverse pass from a scalar loss. Double-backward is not supported.
void backward(const Tensor& loss);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor exp_t(const Tensor& a);

// ---- activations ----
Tensor sigmoid(const Tensor& a);
Tensor swish(const Tensor& a);
Tensor softmax(const Tensor& a, int axis);

// ---- reductions / shape ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, const Shape& s);
Tensor concat_axis1(const Tensor& a, const Tensor& b);
Tensor slice_axis1(const Tensor& a, int64_t c0, int64_t c1);

// ---- image ops (B, C, H, W) ----
// Kernel spatial size must be 1 or 3; stride 1 or 2. Bias may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding);
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  double eps);
Tensor nearest_up2(const Tensor& x);
Tensor global_avg_pool(const Tensor& x);                                    // -> (B, C)
Tensor scale_shift(const Tensor& x, const Tensor& alpha, const Tensor& beta);  // per-channel
Tensor add_channel(const Tensor& x, const Tensor& v);                       // x + v(B,C)
// Separable Gaussian blur, valid placements only; kernel is a fixed constant.
Tensor blur_valid(const Tensor& x, int ksize, double sigma);

// ---- token ops ----
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);   // (B,F)x(O,F)->(B,O)
Tensor matmul_b(const Tensor& a, const Tensor& b);                          // (B,M,K)x(B,K,N)
Tensor transpose12(const Tensor& a);                                        // (B,M,N)->(B,N,M)
Tensor bchw_to_tokens(const Tensor& x);                                     // -> (B, HW, C)
Tensor tokens_to_bchw(const Tensor& x, int64_t h, int64_t w);
Tensor split_heads(const Tensor& x, int heads);   // (B,N,C) -> (B*h, N, C/h)
Tensor merge_heads(const Tensor& x, int heads);   // inverse

// ---- losses ----
Tensor mse_loss(const Tensor& a, const Tensor& b);
Tensor huber_loss(const Tensor& a, const Tensor& b, double delta);
Tensor kl_loss(const Tensor& mu, const Tensor& logvar);  // vs N(0, I), averaged per element

// Fixed-order deterministic parallel loop; results are identical for any
// thread count because work items write disjoint outputs.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);
int thread_count();
void set_thread_count(int n);

}  // namespace fringelab
