#pragma once

#include "dragsplat/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace dragsplat::ad {

// Reverse-mode autodiff over Tensors. Graphs are built per forward pass and
// discarded after backward(); parameters persist across passes.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor val;
    Tensor grad;  // allocated lazily, same shape as val
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> back;  // accumulates into parents' grads

    Tensor& g() {
        if (grad.numel() == 0) grad = Tensor::zeros(val.shape);
        return grad;
    }
};

Var constant(Tensor t);
Var param(Tensor t);  // requires_grad = true

// Runs reverse accumulation from a scalar root (seeds grad with 1).
void backward(const Var& root);

// Elementwise / scalar
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

// Nonlinearities
Var sigmoid(const Var& a);
Var silu(const Var& a);
Var softplus(const Var& a);
Var softplus_clamp(const Var& a, double lo, double hi);
Var relu(const Var& a);

// Linear algebra. Shapes are (rows, cols) views of the flat buffers.
Var matmul(const Var& a, long m, long k, const Var& b, long n);
Var transpose(const Var& a, long m, long n);
Var add_row_bias(const Var& a, long m, long n, const Var& bias);
Var softmax_rows(const Var& a, long m, long n);

// Per-row L2 normalization with an epsilon added to the norm.
Var rows_normalize(const Var& a, long rows, long cols, double eps);

// Reductions
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_sq_diff(const Var& a, const Var& b);  // sum((a-b)^2)
Var mse(const Var& a, const Var& b);

// Shape ops
Var reshape(const Var& a, std::vector<int> shape);
Var concat_channels(const std::vector<Var>& xs);           // [Ci,H,W] -> [sum Ci,H,W]
Var concat_rows(const std::vector<Var>& xs, long cols);    // [mi,n] -> [sum mi,n]
Var slice_rows(const Var& a, long rows, long cols, long r0, long r1);
Var slice_cols(const Var& a, long rows, long cols, long c0, long c1);
Var chw_to_tokens(const Var& a);  // [C,H,W] -> [H*W, C]
Var tokens_to_chw(const Var& a, int C, int H, int W);

// Convolution over [B,C,H,W] with weight [Co,Ci,kh,kw] and bias [Co].
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var avg_pool2d(const Var& x, int k);       // [B,C,H,W], stride = k
Var upsample2_nearest(const Var& x);       // [B,C,H,W] -> [B,C,2H,2W]

}  // namespace dragsplat::ad
