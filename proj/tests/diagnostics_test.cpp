#include "doctest.h"
#include "pgan/diagnostics.hpp"
#include "pgan/gmm.hpp"
#include "pgan/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

using namespace pgan;
namespace fs = std::filesystem;

namespace {

std::vector<double> normal_draws(std::size_t n, double mean, double sd, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(mean, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

Tensor points(std::vector<double> xy) {
    const std::size_t n = xy.size() / 2;
    return Tensor::from_data({n, 2}, std::move(xy));
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "pgan_diagnostics_test" / name;
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("histogram overlap of identical and disjoint sets") {
    const auto a = normal_draws(5000, 0, 1, 1);
    auto h = histogram_overlap(a, a);
    CHECK(h.overlap == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(h.edges.size() == 101);
    std::size_t total = 0;
    for (auto c : h.real_counts) total += c;
    CHECK(total == a.size());

    std::vector<double> lo(100), hi(100);
    for (std::size_t i = 0; i < 100; ++i) {
        lo[i] = -10 + 0.01 * static_cast<double>(i);
        hi[i] = 10 + 0.01 * static_cast<double>(i);
    }
    CHECK(histogram_overlap(lo, hi).overlap == 0.0);
    CHECK_THROWS(histogram_overlap({}, a));
    CHECK_THROWS(histogram_overlap(a, a, 0));
}

TEST_CASE("histogram overlap of shifted unit normals") {
    // Densities N(0,1) and N(2,1) share area 2*Phi(-1).
    const double expect = std::erfc(1.0 / std::numbers::sqrt2);
    auto h = histogram_overlap(normal_draws(100000, 0, 1, 2), normal_draws(100000, 2, 1, 3));
    CHECK(std::abs(h.overlap - expect) < 0.01);
}

TEST_CASE("histogram overlap is symmetric and affine invariant") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto a = normal_draws(300 + seed, 0, 1, seed * 2 + 10);
        auto b = normal_draws(200, 0.5, 1.5, seed * 2 + 11);
        const double ab = histogram_overlap(a, b, 37).overlap;
        CHECK(histogram_overlap(b, a, 37).overlap == doctest::Approx(ab).epsilon(1e-12));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        // Powers of two keep the bin assignment exact.
        for (auto& v : a) v = 4 * v + 8;
        for (auto& v : b) v = 4 * v + 8;
        CHECK(histogram_overlap(a, b, 37).overlap == doctest::Approx(ab).epsilon(1e-12));
    }
}

TEST_CASE("landscape grid geometry") {
    GridSpec g{0, 2, 0, 2, 2};
    auto disc = [](const Tensor& x) { return std::vector<double>(x.dim(0), 0.7); };
    auto grid = compute_landscape(disc, g, points({0.5, 0.5}), points({1.5, 1.5}));
    REQUIRE(grid.cells() == 4);
    CHECK(grid.center(0, 0) == std::array<double, 2>{0.5, 0.5});
    CHECK(grid.center(0, 1) == std::array<double, 2>{1.5, 0.5});
    CHECK(grid.center(1, 0) == std::array<double, 2>{0.5, 1.5});
    for (double s : grid.scores) CHECK(s == 0.7);
    auto n = normalize_minmax(grid);
    for (double s : n.scores) CHECK(s == 0.0);
    CHECK(grid.real_points.size() == 1);
    CHECK(grid.fake_points[0] == std::array<double, 2>{1.5, 1.5});

    auto around = grid_around(points({-1, 0, 3, 2}), 0.25, 10);
    CHECK(around.x_min == -2.0);
    CHECK(around.x_max == 4.0);
    CHECK(around.y_min == -0.5);
    CHECK(around.y_max == 2.5);
    CHECK(around.resolution == 10);

    auto bad = [](const Tensor& x) { return std::vector<double>(x.dim(0), std::nan("")); };
    CHECK_THROWS_AS(compute_landscape(bad, g, points({0, 0}), points({0, 0})), NumericError);
}

TEST_CASE("mixture landscape equals the direct density") {
    GmmModel m;
    m.components = 2;
    m.dim = 2;
    m.weights = {0.3, 0.7};
    m.means = {-1, 0, 1, 0.5};
    m.variances = {0.5, 0.2, 0.3, 1.0};
    DiscFn disc = [&](const Tensor& x) {
        auto l = likelihood(m, x);
        return std::vector<double>(l.data().begin(), l.data().end());
    };
    GridSpec g{-3, 3, -2, 2, 40};
    auto grid = compute_landscape(disc, g, points({0, 0}), points({0, 0}));
    for (std::size_t r = 0; r < 40; r += 3)
        for (std::size_t c = 0; c < 40; c += 3) {
            const auto p = grid.center(r, c);
            double dens = 0;
            for (std::size_t k = 0; k < 2; ++k) {
                double v = m.weights[k];
                for (std::size_t j = 0; j < 2; ++j) {
                    const double var = m.variances[k * 2 + j], d = p[j] - m.means[k * 2 + j];
                    v *= std::exp(-d * d / (2 * var)) / std::sqrt(2 * std::numbers::pi * var);
                }
                dens += v;
            }
            CHECK(grid.scores[r * 40 + c] == doctest::Approx(dens).epsilon(1e-12));
        }
    auto n = normalize_minmax(grid);
    CHECK(*std::min_element(n.scores.begin(), n.scores.end()) == 0.0);
    CHECK(*std::max_element(n.scores.begin(), n.scores.end()) == 1.0);
}

TEST_CASE("far region matches a brute-force count") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> xy(60);
    for (auto& v : xy) v = u(rng);
    auto real = points(xy);
    GridSpec g{-2, 2, -2, 2, 30};
    DiscFn disc = [](const Tensor& x) {
        std::vector<double> s(x.dim(0));
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = x.data()[2 * i] + 3 * x.data()[2 * i + 1];
        return s;
    };
    auto grid = compute_landscape(disc, g, real, real);

    // Oracle radius: 0.95 quantile of nearest-neighbour distances, linear interpolation.
    std::vector<double> nn;
    for (std::size_t i = 0; i < 30; ++i) {
        double best = INFINITY;
        for (std::size_t j = 0; j < 30; ++j)
            if (i != j) best = std::min(best, std::hypot(xy[2 * i] - xy[2 * j], xy[2 * i + 1] - xy[2 * j + 1]));
        nn.push_back(best);
    }
    std::sort(nn.begin(), nn.end());
    const double pos = 0.95 * (nn.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double radius = nn[lo] + (pos - lo) * (nn[std::min(lo + 1, nn.size() - 1)] - nn[lo]);
    double far_sum = 0, near_sum = 0;
    std::size_t far_n = 0, near_n = 0;
    for (std::size_t r = 0; r < 30; ++r)
        for (std::size_t c = 0; c < 30; ++c) {
            const auto p = grid.center(r, c);
            double d = INFINITY;
            for (std::size_t j = 0; j < 30; ++j) d = std::min(d, std::hypot(p[0] - xy[2 * j], p[1] - xy[2 * j + 1]));
            (d > radius ? far_sum : near_sum) += grid.scores[r * 30 + c];
            (d > radius ? far_n : near_n)++;
        }
    REQUIRE(far_n > 0);
    REQUIRE(near_n > 0);
    CHECK(far_region_mean_score(grid) == doctest::Approx(far_sum / far_n).epsilon(1e-12));
    CHECK(near_region_mean_score(grid) == doctest::Approx(near_sum / near_n).epsilon(1e-12));

    GridSpec tiny{0, 0.01, 0, 0.01, 2};
    auto close = compute_landscape(disc, tiny, points({0, 0, 0.01, 0.01}), points({0, 0}));
    CHECK_THROWS_AS(far_region_mean_score(close), Error);
}

TEST_CASE("a mixture fit on the data scores the far region lower") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n01;
    std::vector<double> xy;
    for (int i = 0; i < 400; ++i) {
        const double cx = i % 2 ? 2.0 : -2.0;
        xy.push_back(cx + 0.3 * n01(rng));
        xy.push_back(0.3 * n01(rng));
    }
    auto real = points(xy);
    auto fit = fit_em(real, 2, 50, rng).model;
    DiscFn disc = [&](const Tensor& x) {
        auto l = likelihood(fit, x);
        return std::vector<double>(l.data().begin(), l.data().end());
    };
    auto grid = normalize_minmax(compute_landscape(disc, grid_around(real, 0.25, 60), real, real));
    const double far = far_region_mean_score(grid), near = near_region_mean_score(grid);
    CHECK(far < 0.5 * near);
}

TEST_CASE("median") {
    CHECK(median({3, 1, 2}) == 2.0);
    CHECK(median({4, 1, 3, 2}) == 2.5);
    CHECK_THROWS(median({}));
}

TEST_CASE("image writers") {
    auto dir = scratch("writers");
    fs::create_directories(dir);
    write_pgm(dir / "a.pgm", 3, 2, {0, 0.5, 1, 2, -1, 0.25});
    std::ifstream in(dir / "a.pgm", std::ios::binary);
    std::string magic;
    std::size_t w, h, maxv;
    in >> magic >> w >> h >> maxv;
    in.get();
    std::vector<unsigned char> px(6);
    in.read(reinterpret_cast<char*>(px.data()), 6);
    CHECK(magic == "P5");
    CHECK(w == 3);
    CHECK(h == 2);
    CHECK(maxv == 255);
    CHECK(px[0] == 0);
    CHECK(px[2] == 255);
    CHECK(px[3] == 255);
    CHECK(px[4] == 0);
    CHECK_THROWS(write_pgm(dir / "b.pgm", 3, 3, {0, 1}));

    write_image_grid(dir / "grid.pgm", Tensor::full({5, 1, 28, 28}, 0.5));
    std::ifstream g(dir / "grid.pgm", std::ios::binary);
    g >> magic >> w >> h;
    CHECK(w == 3 * 28);
    CHECK(h == 2 * 28);
    CHECK(fs::file_size(dir / "grid.pgm") > 84 * 56);

    GridSpec spec{0, 1, 0, 1, 4};
    auto grid = compute_landscape([](const Tensor& x) { return std::vector<double>(x.dim(0), 0.5); }, spec,
                                  points({0.5, 0.5}), points({0.1, 0.9}));
    write_landscape_ppm(dir / "l.ppm", grid);
    write_landscape_csv(dir / "l.csv", grid);
    CHECK(lines_of(dir / "l.csv").size() == 17);
    std::ifstream p(dir / "l.ppm", std::ios::binary);
    p >> magic >> w >> h;
    CHECK(magic == "P6");
    CHECK(w == 4);
}

TEST_CASE("summary formatting") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    Summary s;
    s.set("a", 1.5);
    s.set("b", "text");
    s.set("a", 2.0);
    CHECK(s.text() == "a = 2\nb = text\n");
}

TEST_CASE("figure emission") {
    auto dir = scratch("emit");
    RunLog empty;
    emit_figures(empty, dir);
    CHECK(lines_of(dir / "likelihood_curve.csv").size() == 1);
    CHECK(lines_of(dir / "grad_stats.csv").size() == 1);
    CHECK(fs::exists(dir / "summary.txt"));

    RunLog log;
    log.loss = "pgan";
    for (std::size_t e = 0; e < 3; ++e) {
        EpochRecord r;
        r.epoch = e;
        r.real_likelihood = 0.5 + 0.1 * e;
        r.fake_likelihood = 0.4 - 0.1 * e;
        r.histogram_overlap = 0.25;
        log.epochs.push_back(r);
        for (Player p : {Player::Disc, Player::Gen}) {
            StepRecord s;
            s.step = log.steps.size();
            s.epoch = e;
            s.player = p;
            s.grad.norm = 1.0 + e;
            log.steps.push_back(s);
        }
    }
    log.abort_reason = "non-finite loss";
    auto sum = emit_figures(log, dir);
    auto curve = lines_of(dir / "likelihood_curve.csv");
    REQUIRE(curve.size() == 4);
    CHECK(curve[3].rfind("2,0.7", 0) == 0);
    CHECK(lines_of(dir / "grad_stats.csv").size() == 7);
    const auto text = sum.text();
    CHECK(text.find("final_real_likelihood = 0.7") != std::string::npos);
    CHECK(text.find("final_histogram_overlap = 0.25") != std::string::npos);
    CHECK(text.find("aborted = non-finite loss") != std::string::npos);
    std::ifstream in(dir / "summary.txt");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == text);
}
