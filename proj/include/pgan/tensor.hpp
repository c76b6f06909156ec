#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pgan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major array of doubles that may take part in a differentiation graph.
///
/// A Tensor is a shared handle: copies alias the same storage. Results of ops on
/// tensors that require grad record the producing op so that backward() can
/// propagate gradients to every reachable leaf. The graph is rebuilt on each
/// forward pass and released when the last handle to the loss goes away.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    /// Writable view for leaves (parameters, buffers); throws for op results.
    std::span<double> mutable_data();
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool is_leaf() const;

    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    /// New leaf holding a copy of the values, cut from any graph.
    Tensor detach() const;

    /// d(this)/d(leaf) accumulated into every reachable leaf that requires grad.
    void backward() const;

    std::uint64_t id() const;
    std::string op_name() const;
    std::vector<Tensor> inputs() const;

    detail::Node& node() const;
    const std::shared_ptr<detail::Node>& node_ptr() const noexcept { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

/// Recorded operations reachable from a root, inputs before outputs.
class Graph {
public:
    explicit Graph(const Tensor& root);

    const std::vector<Tensor>& nodes() const noexcept { return nodes_; }

private:
    std::vector<Tensor> nodes_;
};

bool grad_enabled() noexcept;

/// Disables graph recording for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace pgan
