#pragma once

#include "pgan/tensor.hpp"

#include <cstddef>

namespace pgan {

// Elementwise binary ops broadcast numpy-style (trailing dims aligned, size-1 dims stretch).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reduces one axis away.
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);

Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor reshape(const Tensor& x, Shape shape);
/// Rows [begin, end) along axis 0.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
/// Stacks tensors along axis 0; trailing dims must agree.
Tensor concat_rows(const Tensor& a, const Tensor& b);

/// (m,k) x (k,n) -> (m,n)
Tensor matmul(const Tensor& a, const Tensor& b);

/// x (batch,in) . weight (in,out) + bias (out), bias optional.
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

struct Conv2dGeometry {
    std::size_t stride = 1;
    std::size_t pad = 0;
};

/// x (N,C,H,W), weight (O,C,kh,kw), bias (O) optional -> (N,O,OH,OW).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dGeometry geom);

struct ConvTranspose2dGeometry {
    std::size_t stride = 1;
    std::size_t crop = 0;            // removed from both borders
    std::size_t output_padding = 0;  // extra rows/cols on the trailing border, < stride
};

/// Adjoint of conv2d. x (N,Cin,H,W), weight (Cin,Cout,kh,kw), bias (Cout) optional.
/// Output side = (H-1)*stride - 2*crop + k + output_padding.
Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        ConvTranspose2dGeometry geom);

/// Running statistics of a batch-norm layer. momentum is the weight kept on the old value.
struct BatchNormState {
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.9;
    double eps = 1e-5;

    explicit BatchNormState(std::size_t channels = 0, double momentum_ = 0.9, double eps_ = 1e-5);
};

/// Per-channel normalization of (N,C) or (N,C,H,W) input. In training mode uses batch
/// statistics and advances the running ones; in eval mode is a fixed affine map. A nonzero
/// `stat_rows` takes the training statistics from the first stat_rows rows only and applies them
/// to every row, so those rows do not depend on the rest of the batch.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training, std::size_t stat_rows = 0);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }

}  // namespace pgan
