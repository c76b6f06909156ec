#include "pgan/tensor.hpp"

#include "node.hpp"
#include "pgan/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace pgan {

namespace {
thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_seq = 0;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

namespace detail {

std::uint64_t next_seq() noexcept { return ++g_seq; }

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> value, bool requires_grad) {
    if (shape_numel(shape) != value.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " elements, got " +
                         std::to_string(value.size()));
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->seq = next_seq();
    return n;
}

Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::vector<std::shared_ptr<Node>> inputs,
                   std::function<void(Node&)> backward) {
    for (double v : value) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + ": non-finite output");
        }
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    n->seq = next_seq();
    const bool record =
        g_grad_enabled &&
        std::any_of(inputs.begin(), inputs.end(), [](const auto& in) { return in->requires_grad; });
    if (record) {
        n->requires_grad = true;
        n->inputs = std::move(inputs);
        n->backward_fn = std::move(backward);
    }
    return Tensor(std::move(n));
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(detail::make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    return Tensor(detail::make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({}, {value}, requires_grad);
}

detail::Node& Tensor::node() const {
    if (!node_) throw AutogradError("use of an undefined tensor");
    return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("dim: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return node().value.size(); }

std::span<const double> Tensor::data() const { return node().value; }

std::span<double> Tensor::mutable_data() {
    auto& n = node();
    if (!n.is_leaf()) throw AutogradError("mutable_data: tensor is an op result, not a leaf");
    return n.value;
}

double Tensor::item() const {
    const auto& n = node();
    if (n.value.size() != 1) throw ShapeError("item: tensor " + shape_str(n.shape) + " is not a scalar");
    return n.value[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

void Tensor::set_requires_grad(bool on) {
    auto& n = node();
    if (!n.is_leaf()) throw AutogradError("set_requires_grad: only leaves can be toggled");
    n.requires_grad = on;
}

bool Tensor::is_leaf() const { return node().is_leaf(); }

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<const double> Tensor::grad() const { return node().grad; }

std::span<double> Tensor::mutable_grad() { return node().ensure_grad(); }

void Tensor::zero_grad() {
    auto& g = node().grad;
    std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::detach() const {
    const auto& n = node();
    return Tensor(detail::make_leaf(n.shape, n.value, false));
}

std::uint64_t Tensor::id() const { return node().seq; }

std::string Tensor::op_name() const { return node().op; }

std::vector<Tensor> Tensor::inputs() const {
    std::vector<Tensor> out;
    for (const auto& in : node().inputs) out.emplace_back(in);
    return out;
}

Graph::Graph(const Tensor& root) {
    std::vector<detail::Node*> stack{&root.node()};
    std::unordered_set<const detail::Node*> seen{&root.node()};
    std::vector<std::shared_ptr<detail::Node>> found{root.node_ptr()};
    while (!stack.empty()) {
        auto* n = stack.back();
        stack.pop_back();
        for (const auto& in : n->inputs) {
            if (!in->requires_grad || !seen.insert(in.get()).second) continue;
            found.push_back(in);
            stack.push_back(in.get());
        }
    }
    // Inputs are always created before the ops consuming them.
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a->seq < b->seq; });
    nodes_.reserve(found.size());
    for (auto& n : found) nodes_.emplace_back(std::move(n));
}

void Tensor::backward() const {
    auto& root = node();
    if (root.value.size() != 1) {
        throw AutogradError("backward: loss must be a scalar, got shape " + shape_str(root.shape));
    }
    if (!root.requires_grad) {
        throw AutogradError("backward: loss is detached from every tensor that requires grad");
    }
    Graph graph(*this);
    for (const auto& t : graph.nodes()) {
        auto& n = t.node();
        if (!n.is_leaf()) n.grad.assign(n.value.size(), 0.0);
    }
    root.ensure_grad()[0] += 1.0;
    const auto& nodes = graph.nodes();
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        auto& n = it->node();
        if (!n.is_leaf()) n.backward_fn(n);
    }
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace pgan
