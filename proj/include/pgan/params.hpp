#pragma once

#include "pgan/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pgan {

/// Named learnable tensors of one network plus its non-learnable buffers
/// (batch-norm running statistics) and Adam moment state keyed by the same names.
class NetParams {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
    };

    /// Registers a learnable tensor; it is switched to requires_grad. Names must be unique.
    Tensor add(const std::string& name, Tensor tensor);
    /// Registers a non-learnable tensor that is still checkpointed.
    Tensor add_buffer(const std::string& name, Tensor tensor);

    const std::vector<Entry>& params() const noexcept { return params_; }
    const std::vector<Entry>& buffers() const noexcept { return buffers_; }
    Tensor get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t parameter_count() const;
    void zero_grad();
    /// Temporarily freezes or re-enables gradient recording for every learnable tensor.
    void set_requires_grad(bool on);

    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };
    std::map<std::string, Moments>& adam_moments() noexcept { return moments_; }
    std::uint64_t& adam_steps() noexcept { return adam_steps_; }
    std::uint64_t adam_steps() const noexcept { return adam_steps_; }

private:
    void check_unique(const std::string& name) const;

    std::vector<Entry> params_;
    std::vector<Entry> buffers_;
    std::map<std::string, Moments> moments_;
    std::uint64_t adam_steps_ = 0;
};

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update of every learnable tensor. Throws AutogradError
/// if a tensor has never received a gradient.
void adam_step(NetParams& params, const AdamOptions& options);
void adam_step(NetParams& params, double lr, double beta1, double beta2, double eps);

}  // namespace pgan
