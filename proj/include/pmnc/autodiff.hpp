#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "pmnc/rng.hpp"
#include "pmnc/tensor.hpp"

namespace pmnc::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode tape.
struct Node {
    Tensor value;
    Tensor grad; // allocated on demand during backward
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (grad.data.empty()) grad = Tensor::zeros(value.shape);
        return grad;
    }
};

/// Handle to a tape node. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : node_(std::move(n)) {}

    static Var leaf(Tensor t, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        n->value = std::move(t);
        n->requires_grad = requires_grad;
        return Var(std::move(n));
    }

    bool valid() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& value_mut() { return node_->value; }
    Tensor& grad() { return node_->ensure_grad(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const NodePtr& node() const { return node_; }

    double scalar() const { return node_->value.data.at(0); }

    /// Reverse pass from a scalar root (seeds d(root)/d(root) = 1).
    void backward() const;

    void zero_grad() {
        if (node_ && !node_->grad.data.empty())
            std::fill(node_->grad.data.begin(), node_->grad.data.end(), 0.0);
    }

private:
    NodePtr node_;
};

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_const(const Var& a, double c);
Var mul_const(const Var& a, double c);
Var sigmoid(const Var& a);
Var tanh_(const Var& a);
Var relu(const Var& a);
Var abs_(const Var& a);
Var square(const Var& a);
Var sqrt_(const Var& a); // d/dx guarded near 0
Var huber_elem(const Var& a, double delta);

// ---- reductions ----
Var mean_all(const Var& a);
Var sum_all(const Var& a);

// ---- structure (NCHW) ----
Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& a, int c0, int c1); // [c0, c1)
Var slice_batch(const Var& a, int n);
Var crop_center(const Var& a, int out_h, int out_w);
Var pad_reflect(const Var& a, int p);
Var upsample_bilinear2(const Var& a);
Var maxpool2(const Var& a);

/// 2D convolution, NCHW, stride 1, zero padding `pad`.
/// w: (Cout, Cin, k, k); b: (Cout) or invalid Var for no bias.
Var conv2d(const Var& x, const Var& w, const Var& b, int pad);

/// Depthwise separable Gaussian blur with a fixed (non-learned) 1D kernel,
/// "valid" output (H-k+1, W-k+1). Gradient flows to the input only.
Var gauss_blur_valid(const Var& x, const std::vector<double>& kernel1d);

/// Channelwise (2D) dropout. Training mode masks whole channels per sample
/// and rescales by 1/(1-rate); eval mode is the identity.
Var dropout_channels(const Var& x, double rate, Rng& rng, bool training);

/// Batch normalization over (N,H,W) per channel.
struct BatchNormState {
    Tensor running_mean; // (C)
    Tensor running_var;  // (C)
    double momentum = 0.1;
    double eps = 1e-5;
};
Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
                bool training);

/// Sum of a non-empty list of same-shape Vars.
Var vsum(const std::vector<Var>& vs);

} // namespace pmnc::ad
