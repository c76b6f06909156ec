#include "node.hpp"
#include "pgan/error.hpp"
#include "pgan/ops.hpp"

#include <cmath>

namespace pgan {

using detail::make_result;
using detail::Node;

BatchNormState::BatchNormState(std::size_t channels, double momentum_, double eps_)
    : running_mean(Tensor::zeros({channels})), running_var(Tensor::full({channels}, 1.0)), momentum(momentum_),
      eps(eps_) {}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, bool training,
                  std::size_t stat_rows) {
    const auto& xs = x.shape();
    if (xs.size() != 2 && xs.size() != 4) {
        throw ShapeError("batch_norm: input must be (N,C) or (N,C,H,W), got " + shape_str(xs));
    }
    const std::size_t N = xs[0], C = xs[1];
    const std::size_t P = xs.size() == 4 ? xs[2] * xs[3] : 1;
    for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &state.running_mean, &state.running_var}) {
        if (t->rank() != 1 || t->dim(0) != C) {
            throw ShapeError("batch_norm: per-channel tensor " + shape_str(t->shape()) + " does not match " +
                             std::to_string(C) + " channels of " + shape_str(xs));
        }
    }
    if (training && N * P == 0) throw ShapeError("batch_norm: empty batch in training mode");
    if (stat_rows > N) {
        throw ShapeError("batch_norm: " + std::to_string(stat_rows) + " statistics rows exceed batch " +
                         std::to_string(N));
    }
    const std::size_t S = stat_rows == 0 ? N : stat_rows;

    const auto& xv = x.data();
    const auto& gv = gamma.data();
    const auto& bv = beta.data();
    const double m = static_cast<double>(S * P);
    std::vector<double> mu(C), inv(C);
    if (training) {
        auto rm = state.running_mean.mutable_data();
        auto rv = state.running_var.mutable_data();
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t n = 0; n < S; ++n)
                for (std::size_t p = 0; p < P; ++p) s += xv[(n * C + c) * P + p];
            mu[c] = s / m;
            double q = 0.0;
            for (std::size_t n = 0; n < S; ++n)
                for (std::size_t p = 0; p < P; ++p) {
                    const double d = xv[(n * C + c) * P + p] - mu[c];
                    q += d * d;
                }
            const double var = q / m;
            inv[c] = 1.0 / std::sqrt(var + state.eps);
            const double unbiased = m > 1 ? q / (m - 1) : var;
            rm[c] = state.momentum * rm[c] + (1.0 - state.momentum) * mu[c];
            rv[c] = state.momentum * rv[c] + (1.0 - state.momentum) * unbiased;
        }
    } else {
        const auto& rm = state.running_mean.data();
        const auto& rv = state.running_var.data();
        for (std::size_t c = 0; c < C; ++c) {
            mu[c] = rm[c];
            inv[c] = 1.0 / std::sqrt(rv[c] + state.eps);
        }
    }

    std::vector<double> xhat(xv.size()), out(xv.size());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t p = 0; p < P; ++p) {
                const std::size_t i = (n * C + c) * P + p;
                xhat[i] = (xv[i] - mu[c]) * inv[c];
                out[i] = gv[c] * xhat[i] + bv[c];
            }

    auto backward = [N, S, C, P, m, training, inv = std::move(inv), xhat = std::move(xhat)](Node& self) {
        auto& X = *self.inputs[0];
        auto& G = *self.inputs[1];
        auto& B = *self.inputs[2];
        const auto& dy = self.grad;
        for (std::size_t c = 0; c < C; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t p = 0; p < P; ++p) {
                    const std::size_t i = (n * C + c) * P + p;
                    sum_dy += dy[i];
                    sum_dy_xhat += dy[i] * xhat[i];
                }
            if (G.requires_grad) G.ensure_grad()[c] += sum_dy_xhat;
            if (B.requires_grad) B.ensure_grad()[c] += sum_dy;
            if (!X.requires_grad) continue;
            auto& gx = X.ensure_grad();
            const double scale = G.value[c] * inv[c];
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t p = 0; p < P; ++p) {
                    const std::size_t i = (n * C + c) * P + p;
                    if (training && n < S) {
                        gx[i] += scale * (dy[i] - sum_dy / m - xhat[i] * sum_dy_xhat / m);
                    } else {
                        gx[i] += scale * dy[i];
                    }
                }
        }
    };
    return make_result("batch_norm", xs, std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
                       std::move(backward));
}

}  // namespace pgan
