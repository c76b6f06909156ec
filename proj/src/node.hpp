#pragma once

#include "pgan/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace pgan::detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first written
    bool requires_grad = false;
    std::uint64_t seq = 0;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs that require grad.
    std::function<void(Node&)> backward_fn;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
    bool is_leaf() const { return !backward_fn; }
};

std::uint64_t next_seq() noexcept;

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> value, bool requires_grad);

/// Builds an op result. Throws NumericError naming `op` if any value is non-finite.
/// Records `backward` only when grad mode is on and some input requires grad.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::vector<std::shared_ptr<Node>> inputs,
                   std::function<void(Node&)> backward);

}  // namespace pgan::detail
