#include "doctest.h"
#include "pgan/error.hpp"
#include "pgan/gmm.hpp"
#include "pgan/losses.hpp"
#include "pgan/nn.hpp"
#include "pgan/ops.hpp"
#include "support/finite_difference.hpp"

#include <cmath>

using namespace pgan;
using pgan::testing::random_tensor;

namespace {

Tensor vec(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor::from_data({n}, std::move(v));
}

}  // namespace

TEST_CASE("least-squares losses at their targets") {
    for (auto kind : {LossKind::LsGan, LossKind::Pgan}) {
        CHECK(disc_loss(kind, vec({1, 1, 1}), vec({0, 0, 0})).item() == 0.0);
        CHECK(disc_loss(kind, vec({0, 0}), vec({1, 1})).item() == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(gen_loss(kind, vec({1, 1, 1, 1})).item() == 0.0);
        CHECK(gen_loss(kind, vec({0, 0, 0, 0})).item() == doctest::Approx(0.5).epsilon(1e-15));
    }
}

TEST_CASE("original GAN losses at the fixed point") {
    CHECK(disc_loss(LossKind::OriginalGan, vec({0.5, 0.5}), vec({0.5, 0.5})).item() ==
          doctest::Approx(2 * std::log(2.0)).epsilon(1e-14));
    CHECK(gen_loss(LossKind::OriginalGan, vec({0.5, 0.5, 0.5})).item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK_THROWS_AS(disc_loss(LossKind::OriginalGan, vec({1.0}), vec({0.5})), NumericError);
    CHECK_THROWS_AS(gen_loss(LossKind::OriginalGan, vec({0.0})), NumericError);
}

TEST_CASE("loss errors and parsing") {
    CHECK_THROWS_AS(disc_loss(LossKind::Pgan, vec({1, 1}), vec({0})), ShapeError);
    CHECK_THROWS_AS(gen_loss(LossKind::Pgan, Tensor::zeros({2, 1})), ShapeError);
    for (auto kind : {LossKind::OriginalGan, LossKind::LsGan, LossKind::Pgan})
        CHECK(parse_loss_kind(to_string(kind)) == kind);
    CHECK_THROWS_AS(parse_loss_kind("wgan"), ConfigError);
}

TEST_CASE("least-squares disc loss ignores batch order") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> r(8), f(8);
        std::uniform_real_distribution<double> u(-1, 2);
        for (auto& v : r) v = u(rng);
        for (auto& v : f) v = u(rng);
        std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5, 6, 7};
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> rp(8), fp(8);
        for (std::size_t i = 0; i < 8; ++i) {
            rp[i] = r[perm[i]];
            fp[i] = f[perm[i]];
        }
        for (auto kind : {LossKind::LsGan, LossKind::Pgan})
            CHECK(disc_loss(kind, vec(r), vec(f)).item() ==
                  doctest::Approx(disc_loss(kind, vec(rp), vec(fp)).item()).epsilon(1e-14));
    }
}

TEST_CASE("pgan generator loss decreases in every likelihood on [0,1]") {
    std::mt19937_64 rng(2);
    auto l = random_tensor({16}, rng, 0.0, 1.0);
    l.set_requires_grad(true);
    gen_loss(LossKind::Pgan, l).backward();
    for (double g : l.grad()) CHECK(g < 0.0);
}

TEST_CASE("identical real and fake batches give the closed-form disc loss") {
    auto l = vec({0.2, 0.5, 0.9});
    double expect = 0;
    for (double v : l.data()) expect += 0.5 * (v - 1) * (v - 1) + 0.5 * v * v;
    CHECK(disc_loss(LossKind::Pgan, l, l).item() == doctest::Approx(expect / 3).epsilon(1e-14));
    // d/dl of 1/2 (l-1)^2 + 1/2 l^2 vanishes at l = 0.5.
    auto h = vec({0.5, 0.5});
    h.set_requires_grad(true);
    disc_loss(LossKind::Pgan, h, h).backward();
    CHECK(h.grad()[0] == doctest::Approx(0.0));
}

TEST_CASE("full pgan losses back-propagate to encoder, embeddings and generator") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto gen = build_toy_generator(3, 6, seed);
        auto enc = build_toy_encoder(6, 1, seed + 100);
        std::mt19937_64 rng(seed);
        // Unit-scale weights keep activations away from the LReLU kink relative to the FD step.
        for (auto* net : {&gen, &enc})
            for (auto e : net->params().params())
                for (auto& v : e.tensor.mutable_data()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
        auto real = random_tensor({6, 2}, rng, -2, 2);
        auto z = random_tensor({6, 3}, rng, -1, 1);
        Tensor emb;
        {
            NoGradGuard ng;
            emb = enc.forward(real, Mode::Eval);
        }
        auto model = fit_em(emb, 1, 3, rng).model;
        model.variances[0] = std::max(model.variances[0], 1.0);  // keep likelihoods O(1)
        std::vector<Tensor> leaves;
        for (auto& e : enc.params().params()) leaves.push_back(e.tensor);
        for (auto& e : gen.params().params()) leaves.push_back(e.tensor);
        auto loss = [&] {
            auto lr = likelihood(model, enc.forward(real, Mode::Eval));
            auto lf = likelihood(model, enc.forward(gen.forward(z, Mode::Eval), Mode::Eval));
            return add(disc_loss(LossKind::Pgan, lr, lf), gen_loss(LossKind::Pgan, lf));
        };
        auto res = pgan::testing::check_gradients(loss, leaves, 1e-5, 8, seed);
        CHECK(res.max_rel_error <= 1e-4);
    }
}
