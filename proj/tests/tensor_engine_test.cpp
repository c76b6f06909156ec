#include "doctest.h"
#include "pgan/checkpoint.hpp"
#include "pgan/error.hpp"
#include "pgan/nn.hpp"
#include "pgan/ops.hpp"
#include "pgan/params.hpp"
#include "support/gradcheck_catalog.hpp"

#include <bit>
#include <filesystem>
#include <fstream>

using namespace pgan;
using pgan::testing::random_tensor;

TEST_CASE("matmul with identity") {
    auto eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    auto v = Tensor::from_data({2, 1}, {3, 4});
    auto y = matmul(eye, v);
    CHECK(y.shape() == Shape{2, 1});
    CHECK(y.data()[0] == 3);
    CHECK(y.data()[1] == 4);
}

TEST_CASE("leaky relu on a negative input") {
    auto y = leaky_relu(Tensor::scalar(-2.0), 0.2);
    CHECK(y.item() == doctest::Approx(-0.4).epsilon(1e-15));
    CHECK(leaky_relu(Tensor::scalar(3.0), 0.2).item() == 3.0);
}

TEST_CASE("conv2d with an all-ones kernel sums its input") {
    std::mt19937_64 rng(1);
    auto x = random_tensor({1, 1, 3, 3}, rng);
    auto y = conv2d(x, Tensor::full({1, 1, 3, 3}, 1.0), {}, {1, 0});
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    double s = 0;
    for (double v : x.data()) s += v;
    CHECK(y.item() == doctest::Approx(s).epsilon(1e-14));
}

TEST_CASE("backward of simple scalar functions") {
    SUBCASE("sum(w*w)") {
        auto w = Tensor::from_data({1}, {3.0}, true);
        sum(mul(w, w)).backward();
        CHECK(w.grad()[0] == 6.0);
    }
    SUBCASE("sigmoid at zero") {
        auto x = Tensor::scalar(0.0, true);
        sigmoid(x).backward();
        CHECK(x.grad()[0] == 0.25);
    }
    SUBCASE("grads accumulate until zero_grad") {
        auto w = Tensor::from_data({1}, {3.0}, true);
        sum(mul(w, w)).backward();
        sum(mul(w, w)).backward();
        CHECK(w.grad()[0] == 12.0);
        w.zero_grad();
        CHECK(w.grad()[0] == 0.0);
    }
    SUBCASE("repeated backward on one graph accumulates the same amount") {
        auto w = Tensor::from_data({2}, {1.0, -2.0}, true);
        auto loss = sum(square(mul_scalar(w, 3.0)));
        loss.backward();
        loss.backward();
        CHECK(w.grad()[0] == doctest::Approx(36.0));
        CHECK(w.grad()[1] == doctest::Approx(-72.0));
    }
}

TEST_CASE("random two-layer dense net matches finite differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(seed);
        auto x = random_tensor({4, 5}, rng);
        auto w1 = random_tensor({5, 6}, rng), b1 = random_tensor({6}, rng);
        auto w2 = random_tensor({6, 1}, rng), b2 = random_tensor({1}, rng);
        auto loss = [&] { return sum(square(dense(sigmoid(dense(x, w1, b1)), w2, b2))); };
        auto res = testing::check_gradients(loss, {x, w1, b1, w2, b2});
        CHECK(res.max_rel_error <= 1e-4);
    }
}

TEST_CASE("every op kind passes the gradient check on 20 random instances") {
    for (const auto& c : testing::op_grad_cases()) {
        double worst = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) worst = std::max(worst, c.run(seed).max_rel_error);
        INFO(c.name << " worst relative error " << worst);
        CHECK(worst <= c.tolerance);
    }
}

TEST_CASE("backward visits nodes in reverse topological order") {
    auto a = Tensor::from_data({2}, {1, 2}, true);
    auto b = mul(a, a);
    auto c = add(b, a);
    auto loss = sum(mul(c, b));
    Graph g(loss);
    const auto& nodes = g.nodes();
    CHECK(nodes.size() == 5);
    for (std::size_t i = 0; i < nodes.size(); ++i)
        for (const auto& in : nodes[i].inputs()) {
            if (!in.requires_grad()) continue;
            auto pos = std::find_if(nodes.begin(), nodes.end(), [&](const Tensor& t) { return t.id() == in.id(); });
            REQUIRE(pos != nodes.end());
            CHECK(static_cast<std::size_t>(pos - nodes.begin()) < i);
        }
    CHECK(nodes.back().id() == loss.id());
}

TEST_CASE("no-grad mode records nothing") {
    auto w = Tensor::from_data({1}, {2.0}, true);
    Tensor y;
    {
        NoGradGuard guard;
        y = mul(w, w);
    }
    CHECK_FALSE(y.requires_grad());
    CHECK_THROWS_AS(sum(y).backward(), AutogradError);
}

TEST_CASE("op errors") {
    SUBCASE("matmul inner dimension mismatch names the op and dims") {
        try {
            matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
            FAIL("expected ShapeError");
        } catch (const ShapeError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("matmul") != std::string::npos);
            CHECK(msg.find("(2,3)") != std::string::npos);
        }
    }
    SUBCASE("conv kernel larger than padded input") {
        CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), {}, {1, 0}), ShapeError);
    }
    SUBCASE("non-finite output") {
        CHECK_THROWS_AS(pgan::log(Tensor::scalar(0.0)), NumericError);
        CHECK_THROWS_AS(pgan::div(Tensor::scalar(1.0), Tensor::scalar(0.0)), NumericError);
    }
    SUBCASE("non-scalar loss") {
        auto w = Tensor::from_data({2}, {1, 2}, true);
        CHECK_THROWS_AS(mul(w, w).backward(), AutogradError);
    }
    SUBCASE("detached loss") {
        auto w = Tensor::from_data({2}, {1, 2}, true);
        CHECK_THROWS_AS(sum(w.detach()).backward(), AutogradError);
    }
    SUBCASE("broadcast mismatch") { CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({2})), ShapeError); }
}

TEST_CASE("batch norm in eval mode is a fixed affine map") {
    std::mt19937_64 rng(3);
    BatchNormState st(3);
    auto rm = st.running_mean.mutable_data();
    auto rv = st.running_var.mutable_data();
    for (std::size_t c = 0; c < 3; ++c) {
        rm[c] = 0.1 * static_cast<double>(c) - 0.2;
        rv[c] = 0.5 + 0.3 * static_cast<double>(c);
    }
    auto gamma = random_tensor({3}, rng), beta = random_tensor({3}, rng);
    auto a = random_tensor({4, 3}, rng), b = random_tensor({4, 3}, rng);
    // Swap in a's first row as b's first row: the output row must not depend on its batch mates.
    auto bd = b.mutable_data();
    for (std::size_t c = 0; c < 3; ++c) bd[c] = a.data()[c];
    const auto ya = batch_norm(a, gamma, beta, st, false);
    const auto yb = batch_norm(b, gamma, beta, st, false);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(ya.data()[c] == yb.data()[c]);
        const double expect = gamma.data()[c] * (a.data()[c] - rm[c]) / std::sqrt(rv[c] + 1e-5) + beta.data()[c];
        CHECK(ya.data()[c] == doctest::Approx(expect).epsilon(1e-14));
    }
    // Eval mode leaves running stats alone.
    CHECK(st.running_mean.data()[1] == doctest::Approx(-0.1));
}

TEST_CASE("batch norm training mode updates running statistics with momentum 0.9") {
    BatchNormState st(1);
    auto x = Tensor::from_data({4, 1}, {1, 2, 3, 4});
    batch_norm(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), st, true);
    CHECK(st.running_mean.data()[0] == doctest::Approx(0.25));
    // unbiased batch variance 5/3
    CHECK(st.running_var.data()[0] == doctest::Approx(0.9 + 0.1 * 5.0 / 3.0));
}

TEST_CASE("batch norm with reference rows") {
    std::mt19937_64 rng(8);
    auto gamma = random_tensor({2}, rng, 0.5, 1.5), beta = random_tensor({2}, rng);
    auto x = random_tensor({5, 2, 2, 2}, rng);
    auto head = Tensor::from_data({3, 2, 2, 2}, std::vector<double>(x.data().begin(), x.data().begin() + 24));
    BatchNormState sa(2), sb(2);
    const auto y = batch_norm(x, gamma, beta, sa, true, 3);
    const auto y_head = batch_norm(head, gamma, beta, sb, true);
    // Reference rows match a pass over them alone, running statistics included.
    for (std::size_t i = 0; i < 24; ++i) CHECK(y.data()[i] == y_head.data()[i]);
    CHECK(std::ranges::equal(sa.running_mean.data(), sb.running_mean.data()));
    CHECK(std::ranges::equal(sa.running_var.data(), sb.running_var.data()));
    // Other rows use the reference statistics: the affine map fixed by two reference values.
    for (std::size_t c = 0; c < 2; ++c) {
        const std::size_t i0 = c * 4, i1 = c * 4 + 1;
        const double slope = (y.data()[i1] - y.data()[i0]) / (x.data()[i1] - x.data()[i0]);
        for (std::size_t n = 3; n < 5; ++n)
            for (std::size_t p = 0; p < 4; ++p) {
                const std::size_t i = (n * 2 + c) * 4 + p;
                CHECK(y.data()[i] == doctest::Approx(y.data()[i0] + slope * (x.data()[i] - x.data()[i0])).epsilon(1e-12));
            }
    }
    BatchNormState sc(2);
    CHECK_THROWS_AS(batch_norm(x, gamma, beta, sc, true, 6), ShapeError);
}

TEST_CASE("transposed conv equals the data gradient of conv") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        const std::size_t stride = 1 + seed % 3, pad = seed % 2, k = 2 + seed % 3;
        const std::size_t h = 7 + seed % 4, w = h;
        auto x = random_tensor({2, 3, h, w}, rng);
        auto kernel = random_tensor({4, 3, k, k}, rng);
        x.set_requires_grad(true);
        auto y = conv2d(x, kernel, {}, {stride, pad});
        auto g = random_tensor(y.shape(), rng);
        sum(mul(y, g)).backward();

        const std::size_t oh = y.dim(2);
        const std::size_t base = (oh - 1) * stride + k - 2 * pad;
        const std::size_t out_pad = h - base;
        REQUIRE(out_pad < stride);
        REQUIRE(w - ((y.dim(3) - 1) * stride + k - 2 * pad) == out_pad);
        auto t = conv_transpose2d(g, kernel, {}, {stride, pad, out_pad});
        REQUIRE(t.shape() == x.shape());
        for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t.data()[i] == doctest::Approx(x.grad()[i]).epsilon(1e-12));
    }
}

TEST_CASE("adam") {
    SUBCASE("one step moves by about lr") {
        NetParams p;
        auto w = p.add("w", Tensor::from_data({1}, {1.0}));
        w.mutable_grad()[0] = 1.0;
        adam_step(p, 0.1, 0.9, 0.999, 1e-8);
        // m_hat = 1, v_hat = 1 -> step = 0.1 / (1 + 1e-8)
        CHECK(w.data()[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-14));
        CHECK(p.adam_steps() == 1);
    }
    SUBCASE("zero gradient leaves params unchanged") {
        NetParams p;
        auto w = p.add("w", Tensor::from_data({3}, {1.0, -2.0, 0.5}));
        w.mutable_grad();
        for (int i = 0; i < 5; ++i) adam_step(p, AdamOptions{});
        CHECK(w.data()[0] == 1.0);
        CHECK(w.data()[1] == -2.0);
        CHECK(w.data()[2] == 0.5);
    }
    SUBCASE("identical params with identical grads stay identical") {
        NetParams p;
        auto a = p.add("a", Tensor::from_data({1}, {0.3}));
        auto b = p.add("b", Tensor::from_data({1}, {0.3}));
        std::mt19937_64 rng(5);
        std::normal_distribution<double> nd;
        for (int i = 0; i < 50; ++i) {
            const double g = nd(rng);
            a.mutable_grad()[0] = g;
            b.mutable_grad()[0] = g;
            adam_step(p, AdamOptions{0.01});
            CHECK(std::bit_cast<std::uint64_t>(a.data()[0]) == std::bit_cast<std::uint64_t>(b.data()[0]));
        }
    }
    SUBCASE("missing gradient is an error") {
        NetParams p;
        p.add("w", Tensor::from_data({1}, {1.0}));
        CHECK_THROWS_AS(adam_step(p, AdamOptions{}), AutogradError);
    }
}

namespace {
std::vector<double> train_briefly(std::uint64_t seed) {
    auto g = build_toy_generator(3, 8, seed);
    std::mt19937_64 rng(seed);
    for (int step = 0; step < 5; ++step) {
        auto z = random_tensor({6, 3}, rng);
        g.params().zero_grad();
        mean(square(g.forward(z, Mode::Train))).backward();
        adam_step(g.params(), AdamOptions{1e-2});
    }
    std::vector<double> flat;
    for (const auto& e : g.params().params()) flat.insert(flat.end(), e.tensor.data().begin(), e.tensor.data().end());
    return flat;
}
}  // namespace

TEST_CASE("seeded runs give bit-identical parameter trajectories") {
    const auto a = train_briefly(11);
    const auto b = train_briefly(11);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::bit_cast<std::uint64_t>(a[i]) == std::bit_cast<std::uint64_t>(b[i]));
    CHECK(train_briefly(12) != a);
}

TEST_CASE("checkpoint round trip is bit exact") {
    const auto dir = std::filesystem::temp_directory_path() / "pgan_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "a.ckpt";
    std::vector<NamedTensor> recs{
        {"w", {2, 2}, {1.0, -0.0, 3.5e-300, std::nextafter(1.0, 2.0)}},
        {"scalar", {}, {42.0}},
        {"empty", {0}, {}},
    };
    save_checkpoint(path, recs);
    CHECK(load_checkpoint(path) == recs);
    const auto back = load_checkpoint(path);
    CHECK(std::signbit(back[0].data[1]));

    SUBCASE("network params restore") {
        auto g1 = build_toy_generator(3, 4, 1);
        auto g2 = build_toy_generator(3, 4, 2);
        save_checkpoint(path, collect_tensors(g1.params(), "gen."));
        restore_tensors(g2.params(), load_checkpoint(path), "gen.");
        CHECK(collect_tensors(g1.params(), "") == collect_tensors(g2.params(), ""));
    }
    SUBCASE("bad magic") {
        std::ofstream(path, std::ios::binary) << "NOTACKPT and more bytes";
        CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    }
    SUBCASE("truncated") {
        save_checkpoint(path, recs);
        std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
        CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    }
}
