#include "pgan/gmm.hpp"

#include "pgan/error.hpp"
#include "pgan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace pgan {

namespace {

void check_embeddings(const char* op, const Tensor& x, std::size_t dim) {
    if (x.rank() != 2 || (dim != 0 && x.dim(1) != dim)) {
        throw ShapeError(std::string(op) + ": embeddings must be (n," + (dim ? std::to_string(dim) : "d") +
                         "), got " + shape_str(x.shape()));
    }
}

// Per-row log p(x) and, when `resp` is given, responsibilities (n, K).
std::vector<double> row_log_likelihood(const GmmModel& m, std::span<const double> x, std::size_t n,
                                       std::vector<double>* resp) {
    const std::size_t K = m.components, d = m.dim;
    std::vector<double> log_norm(K), out(n), comp(K);
    for (std::size_t k = 0; k < K; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += std::log(2.0 * std::numbers::pi * m.variances[k * d + j]);
        log_norm[k] = m.weights[k] > 0 ? std::log(m.weights[k]) - 0.5 * s : -std::numeric_limits<double>::infinity();
    }
    if (resp) resp->assign(n * K, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            double q = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = x[i * d + j] - m.means[k * d + j];
                q += diff * diff / m.variances[k * d + j];
            }
            comp[k] = log_norm[k] - 0.5 * q;
            best = std::max(best, comp[k]);
        }
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += std::exp(comp[k] - best);
        out[i] = best + std::log(s);
        if (resp)
            for (std::size_t k = 0; k < K; ++k) (*resp)[i * K + k] = std::exp(comp[k] - out[i]);
    }
    return out;
}

std::vector<double> global_variance(std::span<const double> x, std::size_t n, std::size_t d, double floor) {
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += x[i * d + j];
    for (auto& v : mean) v /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = x[i * d + j] - mean[j];
            var[j] += diff * diff;
        }
    for (auto& v : var) v = std::max(v / static_cast<double>(n), floor);
    return var;
}

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void normalize_weights(GmmModel& m) {
    const double s = total(m.weights);
    for (auto& w : m.weights) w /= s;
}

}  // namespace

void GmmModel::validate(double floor) const {
    if (components == 0 || dim == 0) throw Error("GmmModel: needs at least one component and dimension");
    if (weights.size() != components || means.size() != components * dim || variances.size() != components * dim) {
        throw Error("GmmModel: parameter arrays do not match K=" + std::to_string(components) +
                    ", d=" + std::to_string(dim));
    }
    double s = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw Error("GmmModel: negative or NaN weight");
        s += w;
    }
    if (std::abs(s - 1.0) > 1e-12) throw Error("GmmModel: weights sum to " + std::to_string(s));
    for (double v : variances)
        if (!(v >= floor)) throw Error("GmmModel: variance " + std::to_string(v) + " below floor");
    for (double mu : means)
        if (!std::isfinite(mu)) throw Error("GmmModel: non-finite mean");
}

LikelihoodMode parse_likelihood_mode(const std::string& s) {
    if (s == "raw") return LikelihoodMode::Raw;
    if (s == "peak_normalized") return LikelihoodMode::PeakNormalized;
    throw ConfigError("unknown likelihood_mode '" + s + "' (expected raw | peak_normalized)");
}

std::string to_string(LikelihoodMode mode) { return mode == LikelihoodMode::Raw ? "raw" : "peak_normalized"; }

Tensor likelihood(const GmmModel& model, const Tensor& b, LikelihoodMode mode) {
    check_embeddings("likelihood", b, model.dim);
    const std::size_t K = model.components, d = model.dim;

    std::vector<std::size_t> order(K);
    std::iota(order.begin(), order.end(), 0);
    auto row = [&](const std::vector<double>& v, std::size_t k) {
        return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(k * d),
                                   v.begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
    };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
        const auto ma = row(model.means, a), mc = row(model.means, c);
        if (ma != mc) return ma < mc;
        const auto va = row(model.variances, a), vc = row(model.variances, c);
        if (va != vc) return va < vc;
        return model.weights[a] < model.weights[c];
    });

    Tensor total_density;
    for (std::size_t k : order) {
        auto mu = Tensor::from_data({d}, row(model.means, k));
        std::vector<double> inv(d);
        double log_det = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            inv[j] = 1.0 / model.variances[k * d + j];
            log_det += std::log(2.0 * std::numbers::pi * model.variances[k * d + j]);
        }
        const double scale = model.weights[k] * (mode == LikelihoodMode::Raw ? std::exp(-0.5 * log_det) : 1.0);
        auto q = sum(mul(square(sub(b, mu)), Tensor::from_data({d}, std::move(inv))), 1);
        auto term = mul_scalar(exp(mul_scalar(q, -0.5)), scale);
        total_density = total_density.defined() ? add(total_density, term) : term;
    }
    return total_density;
}

double data_log_likelihood(const GmmModel& model, const Tensor& x) {
    check_embeddings("data_log_likelihood", x, model.dim);
    return total(row_log_likelihood(model, x.data(), x.dim(0), nullptr));
}

GmmModel init_gmm(const Tensor& embeddings, std::size_t components, std::mt19937_64& rng, double variance_floor) {
    check_embeddings("init_gmm", embeddings, 0);
    const std::size_t n = embeddings.dim(0), d = embeddings.dim(1);
    if (components == 0) throw Error("init_gmm: need at least one component");
    if (n < components) {
        throw Error("init_gmm: " + std::to_string(n) + " embeddings cannot seed " + std::to_string(components) +
                    " components");
    }
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    // Partial Fisher-Yates: the first K entries become distinct random rows.
    for (std::size_t k = 0; k < components; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, n - 1);
        std::swap(rows[k], rows[pick(rng)]);
    }
    GmmModel m;
    m.components = components;
    m.dim = d;
    m.weights.assign(components, 1.0 / static_cast<double>(components));
    const auto x = embeddings.data();
    for (std::size_t k = 0; k < components; ++k)
        m.means.insert(m.means.end(), x.begin() + static_cast<std::ptrdiff_t>(rows[k] * d),
                       x.begin() + static_cast<std::ptrdiff_t>((rows[k] + 1) * d));
    const auto var = global_variance(x, n, d, variance_floor);
    for (std::size_t k = 0; k < components; ++k) m.variances.insert(m.variances.end(), var.begin(), var.end());
    return m;
}

// One M-step from responsibilities. Components whose mass falls below `empty_mass`
// keep their old parameters with weight 0 and are reported in `empty`.
static GmmModel m_step(const GmmModel& model, std::span<const double> x, std::size_t n, const std::vector<double>& resp,
                const EmOptions& options, std::vector<std::size_t>& empty) {
    const std::size_t d = model.dim, K = model.components;
    GmmModel next = model;
    empty.clear();
    for (std::size_t k = 0; k < K; ++k) {
        double mass = 0.0;
        for (std::size_t i = 0; i < n; ++i) mass += resp[i * K + k];
        if (mass < options.empty_mass) {
            next.weights[k] = 0.0;
            empty.push_back(k);
            continue;
        }
        next.weights[k] = mass / static_cast<double>(n);
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += resp[i * K + k] * x[i * d + j];
            next.means[k * d + j] = s / mass;
        }
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double diff = x[i * d + j] - next.means[k * d + j];
                s += resp[i * K + k] * diff * diff;
            }
            next.variances[k * d + j] = std::max(s / mass, options.variance_floor);
        }
    }
    normalize_weights(next);
    return next;
}

EmResult fit_em(const Tensor& embeddings, GmmModel model, std::size_t iterations, const EmOptions& options) {
    check_embeddings("fit_em", embeddings, model.dim);
    const std::size_t n = embeddings.dim(0), d = model.dim;
    if (n < model.components) {
        throw Error("fit_em: " + std::to_string(n) + " embeddings for " + std::to_string(model.components) +
                    " components");
    }
    if (iterations == 0) throw Error("fit_em: iterations must be >= 1");
    model.validate(options.variance_floor);
    const auto x = embeddings.data();

    EmResult result;
    std::vector<double> resp;
    std::vector<std::size_t> empty, ignored;
    result.log_likelihood.push_back(total(row_log_likelihood(model, x, n, &resp)));

    for (std::size_t it = 0; it < iterations; ++it) {
        GmmModel next = m_step(model, x, n, resp, options, empty);
        auto next_ll = row_log_likelihood(next, x, n, nullptr);
        if (!empty.empty()) {
            // Move each empty component onto the worst-explained point and let it settle for
            // one EM update; keep the result only if it explains the data at least as well.
            GmmModel rescued = next;
            const auto worst =
                static_cast<std::size_t>(std::min_element(next_ll.begin(), next_ll.end()) - next_ll.begin());
            const auto var = global_variance(x, n, d, options.variance_floor);
            for (std::size_t k : empty) {
                std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(worst * d), d,
                            rescued.means.begin() + static_cast<std::ptrdiff_t>(k * d));
                std::copy(var.begin(), var.end(), rescued.variances.begin() + static_cast<std::ptrdiff_t>(k * d));
                rescued.weights[k] = 1.0 / static_cast<double>(n);
            }
            normalize_weights(rescued);
            std::vector<double> rescued_resp;
            row_log_likelihood(rescued, x, n, &rescued_resp);
            rescued = m_step(rescued, x, n, rescued_resp, options, ignored);
            auto rescued_ll = row_log_likelihood(rescued, x, n, nullptr);
            if (total(rescued_ll) > total(next_ll)) {
                next = std::move(rescued);
                next_ll = std::move(rescued_ll);
            }
        }
        model = std::move(next);
        result.log_likelihood.push_back(total(row_log_likelihood(model, x, n, &resp)));
    }
    result.model = std::move(model);
    return result;
}

EmResult fit_em(const Tensor& embeddings, std::size_t components, std::size_t iterations, std::mt19937_64& rng,
                const EmOptions& options) {
    return fit_em(embeddings, init_gmm(embeddings, components, rng, options.variance_floor), iterations, options);
}

}  // namespace pgan
