#include "node.hpp"
#include "pgan/error.hpp"
#include "pgan/ops.hpp"

#include <Eigen/Core>

namespace pgan {

using detail::make_result;
using detail::Node;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

CMapMat cmap(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
    return {v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
MapMat map(std::vector<double>& v, std::size_t rows, std::size_t cols) {
    return {v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

// Geometry of a strided, zero-padded 2-D correlation over an (N,C,H,W) image batch.
struct Window {
    std::size_t n, c, h, w;  // input
    std::size_t kh, kw, stride, pad;
    std::size_t oh, ow;  // output

    std::size_t patch() const { return c * kh * kw; }
    std::size_t positions() const { return n * oh * ow; }
};

// cols (C*kh*kw, N*OH*OW)
std::vector<double> im2col(const std::vector<double>& x, const Window& g) {
    std::vector<double> cols(g.patch() * g.positions(), 0.0);
    const std::size_t P = g.oh * g.ow;
    for (std::size_t c = 0; c < g.c; ++c)
        for (std::size_t i = 0; i < g.kh; ++i)
            for (std::size_t j = 0; j < g.kw; ++j) {
                double* row = cols.data() + ((c * g.kh + i) * g.kw + j) * g.positions();
                for (std::size_t n = 0; n < g.n; ++n) {
                    const double* img = x.data() + (n * g.c + c) * g.h * g.w;
                    for (std::size_t oy = 0; oy < g.oh; ++oy) {
                        const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                                 static_cast<std::ptrdiff_t>(g.pad);
                        if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) continue;
                        for (std::size_t ox = 0; ox < g.ow; ++ox) {
                            const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                                                      static_cast<std::ptrdiff_t>(g.pad);
                            if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(g.w)) continue;
                            row[n * P + oy * g.ow + ox] = img[static_cast<std::size_t>(y) * g.w +
                                                              static_cast<std::size_t>(xx)];
                        }
                    }
                }
            }
    return cols;
}

// Scatter-adds cols back into an (N,C,H,W) buffer.
void col2im(const std::vector<double>& cols, const Window& g, std::vector<double>& x) {
    const std::size_t P = g.oh * g.ow;
    for (std::size_t c = 0; c < g.c; ++c)
        for (std::size_t i = 0; i < g.kh; ++i)
            for (std::size_t j = 0; j < g.kw; ++j) {
                const double* row = cols.data() + ((c * g.kh + i) * g.kw + j) * g.positions();
                for (std::size_t n = 0; n < g.n; ++n) {
                    double* img = x.data() + (n * g.c + c) * g.h * g.w;
                    for (std::size_t oy = 0; oy < g.oh; ++oy) {
                        const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                                 static_cast<std::ptrdiff_t>(g.pad);
                        if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) continue;
                        for (std::size_t ox = 0; ox < g.ow; ++ox) {
                            const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                                                      static_cast<std::ptrdiff_t>(g.pad);
                            if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(g.w)) continue;
                            img[static_cast<std::size_t>(y) * g.w + static_cast<std::size_t>(xx)] +=
                                row[n * P + oy * g.ow + ox];
                        }
                    }
                }
            }
}

// (N, C, P) <-> (C, N*P)
std::vector<double> nchw_to_cn(std::span<const double> x, std::size_t n, std::size_t c, std::size_t p) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c; ++k)
            std::copy_n(x.data() + (i * c + k) * p, p, out.data() + k * n * p + i * p);
    return out;
}

std::vector<double> cn_to_nchw(const std::vector<double>& y, std::size_t n, std::size_t c, std::size_t p) {
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c; ++k)
            std::copy_n(y.data() + k * n * p + i * p, p, out.data() + (i * c + k) * p);
    return out;
}

void add_channel_bias(std::vector<double>& out, const Tensor& bias, std::size_t n, std::size_t c, std::size_t p) {
    const auto& b = bias.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c; ++k) {
            double* o = out.data() + (i * c + k) * p;
            for (std::size_t q = 0; q < p; ++q) o[q] += b[k];
        }
}

void accumulate_channel_bias_grad(Node& bias, const std::vector<double>& g, std::size_t n, std::size_t c,
                                  std::size_t p) {
    auto& gb = bias.ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c; ++k) {
            const double* src = g.data() + (i * c + k) * p;
            double s = 0.0;
            for (std::size_t q = 0; q < p; ++q) s += src[q];
            gb[k] += s;
        }
}

void require_rank(const char* op, const char* what, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
    }
}

void check_bias(const char* op, const Tensor& bias, std::size_t channels) {
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != channels)) {
        throw ShapeError(std::string(op) + ": bias shape " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(channels) + " output channels");
    }
}

std::vector<std::shared_ptr<Node>> operands(std::initializer_list<const Tensor*> ts) {
    std::vector<std::shared_ptr<Node>> out;
    for (const auto* t : ts)
        if (t->defined()) out.push_back(t->node_ptr());
    return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", "lhs", a, 2);
    require_rank("matmul", "rhs", b, 2);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul: inner dims differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    std::vector<double> out(m * n);
    map(out, m, n).noalias() = cmap(a.node().value, m, k) * cmap(b.node().value, k, n);
    auto backward = [m, k, n](Node& self) {
        auto& A = *self.inputs[0];
        auto& B = *self.inputs[1];
        auto G = cmap(self.grad, m, n);
        if (A.requires_grad) map(A.ensure_grad(), m, k).noalias() += G * cmap(B.value, k, n).transpose();
        if (B.requires_grad) map(B.ensure_grad(), k, n).noalias() += cmap(A.value, m, k).transpose() * G;
    };
    return make_result("matmul", {m, n}, std::move(out), {a.node_ptr(), b.node_ptr()}, std::move(backward));
}

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank("dense", "input", x, 2);
    require_rank("dense", "weight", weight, 2);
    const std::size_t batch = x.dim(0), in = x.dim(1), out_dim = weight.dim(1);
    if (weight.dim(0) != in) {
        throw ShapeError("dense: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
    }
    check_bias("dense", bias, out_dim);
    std::vector<double> out(batch * out_dim);
    auto Y = map(out, batch, out_dim);
    Y.noalias() = cmap(x.node().value, batch, in) * cmap(weight.node().value, in, out_dim);
    if (bias.defined()) {
        const auto& b = bias.data();
        for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t c = 0; c < out_dim; ++c) out[r * out_dim + c] += b[c];
    }
    const bool has_bias = bias.defined();
    auto backward = [batch, in, out_dim, has_bias](Node& self) {
        auto& X = *self.inputs[0];
        auto& W = *self.inputs[1];
        auto G = cmap(self.grad, batch, out_dim);
        if (X.requires_grad) map(X.ensure_grad(), batch, in).noalias() += G * cmap(W.value, in, out_dim).transpose();
        if (W.requires_grad) map(W.ensure_grad(), in, out_dim).noalias() += cmap(X.value, batch, in).transpose() * G;
        if (has_bias && self.inputs[2]->requires_grad) {
            auto& gb = self.inputs[2]->ensure_grad();
            for (std::size_t r = 0; r < batch; ++r)
                for (std::size_t c = 0; c < out_dim; ++c) gb[c] += self.grad[r * out_dim + c];
        }
    };
    return make_result("dense", {batch, out_dim}, std::move(out), operands({&x, &weight, &bias}), std::move(backward));
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dGeometry geom) {
    require_rank("conv2d", "input", x, 4);
    require_rank("conv2d", "weight", weight, 4);
    if (geom.stride == 0) throw ShapeError("conv2d: stride must be positive");
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    if (ws[1] != xs[1]) {
        throw ShapeError("conv2d: input channels " + std::to_string(xs[1]) + " do not match weight " +
                         shape_str(ws));
    }
    if (xs[2] + 2 * geom.pad < ws[2] || xs[3] + 2 * geom.pad < ws[3]) {
        throw ShapeError("conv2d: padded input " + shape_str(xs) + " (pad " + std::to_string(geom.pad) +
                         ") smaller than kernel " + shape_str(ws));
    }
    check_bias("conv2d", bias, ws[0]);
    Window g{xs[0], xs[1], xs[2], xs[3], ws[2], ws[3], geom.stride, geom.pad,
             (xs[2] + 2 * geom.pad - ws[2]) / geom.stride + 1, (xs[3] + 2 * geom.pad - ws[3]) / geom.stride + 1};
    const std::size_t O = ws[0], P = g.oh * g.ow;

    auto cols = im2col(x.node().value, g);
    std::vector<double> y(O * g.positions());
    map(y, O, g.positions()).noalias() = cmap(weight.node().value, O, g.patch()) * cmap(cols, g.patch(), g.positions());
    auto out = cn_to_nchw(y, g.n, O, P);
    if (bias.defined()) add_channel_bias(out, bias, g.n, O, P);

    const bool has_bias = bias.defined();
    auto backward = [g, O, P, has_bias, cols = std::move(cols)](Node& self) {
        auto& X = *self.inputs[0];
        auto& W = *self.inputs[1];
        const auto gy = nchw_to_cn(self.grad, g.n, O, P);
        auto GY = cmap(gy, O, g.positions());
        if (W.requires_grad) map(W.ensure_grad(), O, g.patch()).noalias() += GY * cmap(cols, g.patch(), g.positions()).transpose();
        if (X.requires_grad) {
            std::vector<double> gcols(g.patch() * g.positions());
            map(gcols, g.patch(), g.positions()).noalias() = cmap(W.value, O, g.patch()).transpose() * GY;
            col2im(gcols, g, X.ensure_grad());
        }
        if (has_bias && self.inputs[2]->requires_grad) accumulate_channel_bias_grad(*self.inputs[2], self.grad, g.n, O, P);
    };
    return make_result("conv2d", {g.n, O, g.oh, g.ow}, std::move(out), operands({&x, &weight, &bias}),
                       std::move(backward));
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvTranspose2dGeometry geom) {
    require_rank("conv_transpose2d", "input", x, 4);
    require_rank("conv_transpose2d", "weight", weight, 4);
    if (geom.stride == 0) throw ShapeError("conv_transpose2d: stride must be positive");
    if (geom.output_padding >= geom.stride) {
        throw ShapeError("conv_transpose2d: output_padding " + std::to_string(geom.output_padding) +
                         " must be smaller than stride " + std::to_string(geom.stride));
    }
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    if (ws[0] != xs[1]) {
        throw ShapeError("conv_transpose2d: input channels " + std::to_string(xs[1]) + " do not match weight " +
                         shape_str(ws));
    }
    const std::size_t full_h = (xs[2] - 1) * geom.stride + ws[2] + geom.output_padding;
    const std::size_t full_w = (xs[3] - 1) * geom.stride + ws[3] + geom.output_padding;
    if (full_h <= 2 * geom.crop || full_w <= 2 * geom.crop) {
        throw ShapeError("conv_transpose2d: crop " + std::to_string(geom.crop) + " removes the whole output of " +
                         shape_str(xs) + " with kernel " + shape_str(ws));
    }
    const std::size_t Cin = ws[0], Cout = ws[1];
    check_bias("conv_transpose2d", bias, Cout);
    // The forward pass is the data-gradient of a conv2d mapping the output back onto x.
    Window g{xs[0], Cout, full_h - 2 * geom.crop, full_w - 2 * geom.crop, ws[2], ws[3], geom.stride, geom.crop,
             xs[2], xs[3]};
    const std::size_t Q = g.h * g.w, P = g.oh * g.ow;

    const auto xm = nchw_to_cn(x.data(), g.n, Cin, P);
    std::vector<double> cols(g.patch() * g.positions());
    map(cols, g.patch(), g.positions()).noalias() =
        cmap(weight.node().value, Cin, g.patch()).transpose() * cmap(xm, Cin, g.positions());
    std::vector<double> out(g.n * Cout * Q, 0.0);
    col2im(cols, g, out);
    if (bias.defined()) add_channel_bias(out, bias, g.n, Cout, Q);

    const bool has_bias = bias.defined();
    auto backward = [g, Cin, Cout, P, Q, has_bias, xm](Node& self) {
        auto& X = *self.inputs[0];
        auto& W = *self.inputs[1];
        const auto gcols = im2col(self.grad, g);
        auto GC = cmap(gcols, g.patch(), g.positions());
        if (W.requires_grad) map(W.ensure_grad(), Cin, g.patch()).noalias() += cmap(xm, Cin, g.positions()) * GC.transpose();
        if (X.requires_grad) {
            std::vector<double> gx(Cin * g.positions());
            map(gx, Cin, g.positions()).noalias() = cmap(W.value, Cin, g.patch()) * GC;
            const auto gx_nchw = cn_to_nchw(gx, g.n, Cin, P);
            auto& dst = X.ensure_grad();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gx_nchw[i];
        }
        if (has_bias && self.inputs[2]->requires_grad) accumulate_channel_bias_grad(*self.inputs[2], self.grad, g.n, Cout, Q);
    };
    return make_result("conv_transpose2d", {g.n, Cout, g.h, g.w}, std::move(out), operands({&x, &weight, &bias}),
                       std::move(backward));
}

}  // namespace pgan
