#include "node.hpp"
#include "pgan/error.hpp"
#include "pgan/ops.hpp"

#include <cmath>
#include <numeric>

namespace pgan {

using detail::make_result;
using detail::Node;

namespace {

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                             shape_str(b) + " (axis " + std::to_string(i) + ": " + std::to_string(da) +
                             " vs " + std::to_string(db) + ")");
        }
        out[i] = std::max(da, db);
    }
    return out;
}

// For every flat index of `out`, the flat index into a tensor of shape `in` broadcast to it.
std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
    const std::size_t rank = out.size();
    const std::size_t offset = rank - in.size();
    std::vector<std::size_t> stride(rank, 0);
    std::size_t s = 1;
    for (std::size_t i = in.size(); i-- > 0;) {
        stride[i + offset] = in[i] == 1 ? 0 : s;
        s *= in[i];
    }
    const std::size_t n = shape_numel(out);
    std::vector<std::size_t> idx(n);
    std::vector<std::size_t> counter(rank, 0);
    std::size_t flat = 0;
    for (std::size_t k = 0; k < n; ++k) {
        idx[k] = flat;
        for (std::size_t ax = rank; ax-- > 0;) {
            ++counter[ax];
            flat += stride[ax];
            if (counter[ax] < out[ax]) break;
            flat -= stride[ax] * counter[ax];
            counter[ax] = 0;
        }
    }
    return idx;
}

enum class BinOp { Add, Sub, Mul, Div };

Tensor binary(const char* op, BinOp kind, const Tensor& a, const Tensor& b) {
    const auto& av = a.data();
    const auto& bv = b.data();
    Shape out_shape = a.shape() == b.shape() ? a.shape() : broadcast_shape(op, a.shape(), b.shape());
    const std::size_t n = shape_numel(out_shape);
    const bool same_a = a.shape() == out_shape;
    const bool same_b = b.shape() == out_shape;
    std::vector<std::size_t> ia, ib;
    if (!same_a) ia = broadcast_index(a.shape(), out_shape);
    if (!same_b) ib = broadcast_index(b.shape(), out_shape);

    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double x = av[same_a ? k : ia[k]];
        const double y = bv[same_b ? k : ib[k]];
        switch (kind) {
            case BinOp::Add: out[k] = x + y; break;
            case BinOp::Sub: out[k] = x - y; break;
            case BinOp::Mul: out[k] = x * y; break;
            case BinOp::Div: out[k] = x / y; break;
        }
    }
    auto backward = [kind, n, same_a, same_b, ia = std::move(ia), ib = std::move(ib)](Node& self) {
        auto& A = *self.inputs[0];
        auto& B = *self.inputs[1];
        const auto& g = self.grad;
        if (A.requires_grad) {
            auto& ga = A.ensure_grad();
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t j = same_a ? k : ia[k];
                const std::size_t l = same_b ? k : ib[k];
                switch (kind) {
                    case BinOp::Add:
                    case BinOp::Sub: ga[j] += g[k]; break;
                    case BinOp::Mul: ga[j] += g[k] * B.value[l]; break;
                    case BinOp::Div: ga[j] += g[k] / B.value[l]; break;
                }
            }
        }
        if (B.requires_grad) {
            auto& gb = B.ensure_grad();
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t j = same_a ? k : ia[k];
                const std::size_t l = same_b ? k : ib[k];
                switch (kind) {
                    case BinOp::Add: gb[l] += g[k]; break;
                    case BinOp::Sub: gb[l] -= g[k]; break;
                    case BinOp::Mul: gb[l] += g[k] * A.value[j]; break;
                    case BinOp::Div: gb[l] -= g[k] * A.value[j] / (B.value[l] * B.value[l]); break;
                }
            }
        }
    };
    return make_result(op, std::move(out_shape), std::move(out), {a.node_ptr(), b.node_ptr()},
                       std::move(backward));
}

// y = f(x) with dy/dx = df(x, y).
template <class F, class DF>
Tensor unary(const char* op, const Tensor& x, F f, DF df) {
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    auto backward = [df](Node& self) {
        auto& X = *self.inputs[0];
        auto& gx = X.ensure_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * df(X.value[i], self.value[i]);
    };
    return make_result(op, x.shape(), std::move(out), {x.node_ptr()}, std::move(backward));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinOp::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinOp::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinOp::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary("div", BinOp::Div, a, b); }

Tensor add_scalar(const Tensor& x, double c) {
    return unary("add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double c) {
    return unary("mul_scalar", x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& x) {
    return unary("neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& x) {
    return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
    return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        "sigmoid", x,
        [](double v) {
            // Branches keep exp() from overflowing for large |v|.
            if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor leaky_relu(const Tensor& x, double slope) {
    return unary(
        "leaky_relu", x, [slope](double v) { return v > 0 ? v : slope * v; },
        [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

Tensor sum(const Tensor& x) {
    const auto& xv = x.data();
    const double s = std::accumulate(xv.begin(), xv.end(), 0.0);
    auto backward = [](Node& self) {
        auto& gx = self.inputs[0]->ensure_grad();
        for (auto& g : gx) g += self.grad[0];
    };
    return make_result("sum", {}, {s}, {x.node_ptr()}, std::move(backward));
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw ShapeError("mean: empty tensor");
    return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum(const Tensor& x, std::size_t axis) {
    const auto& s = x.shape();
    if (axis >= s.size()) {
        throw ShapeError("sum: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[axis];
    Shape out_shape;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis) out_shape.push_back(s[i]);

    const auto& xv = x.data();
    std::vector<double> out(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < len; ++l)
            for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * len + l) * inner + i];

    auto backward = [outer, inner, len](Node& self) {
        auto& gx = self.inputs[0]->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t l = 0; l < len; ++l)
                for (std::size_t i = 0; i < inner; ++i) gx[(o * len + l) * inner + i] += self.grad[o * inner + i];
    };
    return make_result("sum_axis", std::move(out_shape), std::move(out), {x.node_ptr()}, std::move(backward));
}

Tensor mean(const Tensor& x, std::size_t axis) {
    const std::size_t len = x.dim(axis);
    if (len == 0) throw ShapeError("mean: reducing an empty axis");
    return mul_scalar(sum(x, axis), 1.0 / static_cast<double>(len));
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
    if (broadcast_shape("broadcast_to", x.shape(), shape) != shape) {
        throw ShapeError("broadcast_to: " + shape_str(x.shape()) + " does not broadcast to " + shape_str(shape));
    }
    auto idx = broadcast_index(x.shape(), shape);
    const auto& xv = x.data();
    std::vector<double> out(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out[k] = xv[idx[k]];
    auto backward = [idx = std::move(idx)](Node& self) {
        auto& gx = self.inputs[0]->ensure_grad();
        for (std::size_t k = 0; k < idx.size(); ++k) gx[idx[k]] += self.grad[k];
    };
    return make_result("broadcast_to", shape, std::move(out), {x.node_ptr()}, std::move(backward));
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    auto backward = [](Node& self) {
        auto& gx = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    };
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result("reshape", std::move(shape), std::move(out), {x.node_ptr()}, std::move(backward));
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    const auto& s = x.shape();
    if (s.empty() || begin > end || end > s[0]) {
        throw ShapeError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + shape_str(s));
    }
    const std::size_t row = s[0] == 0 ? 0 : x.numel() / s[0];
    Shape out_shape = s;
    out_shape[0] = end - begin;
    std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                            x.data().begin() + static_cast<std::ptrdiff_t>(end * row));
    auto backward = [offset = begin * row](Node& self) {
        auto& gx = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[offset + i] += self.grad[i];
    };
    return make_result("slice_rows", std::move(out_shape), std::move(out), {x.node_ptr()}, std::move(backward));
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.empty() || sa.size() != sb.size() || !std::equal(sa.begin() + 1, sa.end(), sb.begin() + 1)) {
        throw ShapeError("concat_rows: trailing dims differ: " + shape_str(sa) + " vs " + shape_str(sb));
    }
    Shape out_shape = sa;
    out_shape[0] += sb[0];
    std::vector<double> out(a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    auto backward = [na = a.numel()](Node& self) {
        if (self.inputs[0]->requires_grad) {
            auto& ga = self.inputs[0]->ensure_grad();
            for (std::size_t i = 0; i < na; ++i) ga[i] += self.grad[i];
        }
        if (self.inputs[1]->requires_grad) {
            auto& gb = self.inputs[1]->ensure_grad();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[na + i];
        }
    };
    return make_result("concat_rows", std::move(out_shape), std::move(out), {a.node_ptr(), b.node_ptr()},
                       std::move(backward));
}

}  // namespace pgan
