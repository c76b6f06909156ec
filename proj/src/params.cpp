#include "pgan/params.hpp"

#include "pgan/error.hpp"

#include <algorithm>
#include <cmath>

namespace pgan {

void NetParams::check_unique(const std::string& name) const {
    if (contains(name)) throw Error("NetParams: duplicate tensor name '" + name + "'");
}

Tensor NetParams::add(const std::string& name, Tensor tensor) {
    check_unique(name);
    tensor.set_requires_grad(true);
    params_.push_back({name, tensor});
    return tensor;
}

Tensor NetParams::add_buffer(const std::string& name, Tensor tensor) {
    check_unique(name);
    buffers_.push_back({name, tensor});
    return tensor;
}

bool NetParams::contains(const std::string& name) const {
    auto match = [&](const Entry& e) { return e.name == name; };
    return std::any_of(params_.begin(), params_.end(), match) || std::any_of(buffers_.begin(), buffers_.end(), match);
}

Tensor NetParams::get(const std::string& name) const {
    for (const auto* list : {&params_, &buffers_})
        for (const auto& e : *list)
            if (e.name == name) return e.tensor;
    throw Error("NetParams: no tensor named '" + name + "'");
}

std::size_t NetParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : params_) n += e.tensor.numel();
    return n;
}

void NetParams::zero_grad() {
    for (auto& e : params_) e.tensor.zero_grad();
}

void NetParams::set_requires_grad(bool on) {
    for (auto& e : params_) e.tensor.set_requires_grad(on);
}

void adam_step(NetParams& params, const AdamOptions& o) {
    for (const auto& e : params.params()) {
        if (!e.tensor.has_grad()) throw AutogradError("adam_step: parameter '" + e.name + "' has no gradient");
    }
    const auto t = static_cast<double>(++params.adam_steps());
    const double c1 = 1.0 - std::pow(o.beta1, t);
    const double c2 = 1.0 - std::pow(o.beta2, t);
    for (const auto& e : params.params()) {
        Tensor p = e.tensor;
        auto& mom = params.adam_moments()[e.name];
        if (mom.m.empty()) {
            mom.m.assign(p.numel(), 0.0);
            mom.v.assign(p.numel(), 0.0);
        }
        auto value = p.mutable_data();
        const auto grad = p.grad();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = grad[i];
            mom.m[i] = o.beta1 * mom.m[i] + (1.0 - o.beta1) * g;
            mom.v[i] = o.beta2 * mom.v[i] + (1.0 - o.beta2) * g * g;
            value[i] -= o.lr * (mom.m[i] / c1) / (std::sqrt(mom.v[i] / c2) + o.eps);
        }
    }
}

void adam_step(NetParams& params, double lr, double beta1, double beta2, double eps) {
    adam_step(params, AdamOptions{lr, beta1, beta2, eps});
}

}  // namespace pgan
