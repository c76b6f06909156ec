#pragma once

#include "pgan/tensor.hpp"

#include <cstddef>
#include <random>
#include <string>
#include <vector>

namespace pgan {

inline constexpr double kVarianceFloor = 1e-4;

/// Diagonal-covariance Gaussian mixture over bottleneck embeddings.
/// Component i occupies rows i of `means` and `variances` (each `dim` wide).
struct GmmModel {
    std::size_t components = 0;
    std::size_t dim = 0;
    std::vector<double> weights;
    std::vector<double> means;
    std::vector<double> variances;

    /// Throws Error when weights do not sum to 1 (1e-12), are negative, or a variance is below `floor`.
    void validate(double floor = kVarianceFloor) const;
};

enum class LikelihoodMode {
    Raw,             // sum_i w_i N(b; mu_i, Sigma_i), a density that may exceed 1
    PeakNormalized,  // each Gaussian divided by its own peak, bounded by 1
};

LikelihoodMode parse_likelihood_mode(const std::string& s);
std::string to_string(LikelihoodMode mode);

/// Mixture density per row of b (batch, dim) -> (batch). Differentiable w.r.t. b only;
/// the model enters as constants. Components are summed in a canonical order so the
/// result does not depend on how they are listed.
Tensor likelihood(const GmmModel& model, const Tensor& b, LikelihoodMode mode = LikelihoodMode::Raw);

/// Sum over rows of log p(x_row).
double data_log_likelihood(const GmmModel& model, const Tensor& x);

/// Means at K distinct random rows, variances at the global per-dimension variance, uniform weights.
GmmModel init_gmm(const Tensor& embeddings, std::size_t components, std::mt19937_64& rng,
                  double variance_floor = kVarianceFloor);

struct EmOptions {
    double variance_floor = kVarianceFloor;
    /// A component whose responsibility mass falls below this counts as empty.
    double empty_mass = 1e-8;
};

struct EmResult {
    GmmModel model;
    /// Data log-likelihood of the initial model followed by one entry per iteration.
    std::vector<double> log_likelihood;
};

/// Expectation-maximization from a given starting model.
EmResult fit_em(const Tensor& embeddings, GmmModel initial, std::size_t iterations, const EmOptions& options = {});
/// init_gmm followed by fit_em.
EmResult fit_em(const Tensor& embeddings, std::size_t components, std::size_t iterations, std::mt19937_64& rng,
                const EmOptions& options = {});

}  // namespace pgan
