#include "pgan/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numbers>

namespace pgan {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::size_t kSide = 28;

std::uint32_t read_be32(const unsigned char* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

void write_be32(std::ostream& os, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    os.write(b, 4);
}

}  // namespace

TruncatedFileError::TruncatedFileError(const std::string& path, std::uint64_t expected, std::uint64_t actual)
    : FormatError(path + ": truncated IDX file, expected " + std::to_string(expected) + " bytes, found " +
                  std::to_string(actual)),
      expected_(expected),
      actual_(actual) {}

Shape DataSource::sample_shape() const {
    if (!samples.defined()) return {};
    return Shape(samples.shape().begin() + 1, samples.shape().end());
}

Tensor DataSource::gather(const std::vector<std::size_t>& rows) const {
    const std::size_t stride = shape_numel(sample_shape());
    const auto src = samples.data();
    std::vector<double> out(rows.size() * stride);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= length()) throw ShapeError("gather: row " + std::to_string(rows[i]) + " out of range");
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[i] * stride), stride,
                    out.begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    Shape shape{rows.size()};
    const auto tail = sample_shape();
    shape.insert(shape.end(), tail.begin(), tail.end());
    return Tensor::from_data(std::move(shape), std::move(out));
}

fs::path resolve_data_path(const fs::path& path) {
    if (fs::exists(path)) return path;
    if (const char* root = std::getenv("PGAN_DATA_DIR"); root && *root) {
        if (path.is_relative() && fs::exists(fs::path(root) / path)) return fs::path(root) / path;
        if (fs::exists(fs::path(root) / path.filename())) return fs::path(root) / path.filename();
    }
    throw MissingDatasetError("dataset not found: " + path.string() + " (also looked under PGAN_DATA_DIR)");
}

DataSource load_mnist(const fs::path& requested, std::size_t limit) {
    const auto path = resolve_data_path(requested);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string name = path.string();

    if (bytes.size() < 16) throw TruncatedFileError(name, 16, bytes.size());
    if (const auto magic = read_be32(bytes.data()); magic != kIdxImageMagic) {
        char hex[11];
        std::snprintf(hex, sizeof hex, "0x%08x", magic);
        throw BadMagicError(name + ": bad IDX magic " + hex + ", expected 0x00000803");
    }
    const std::size_t n = read_be32(bytes.data() + 4);
    const std::size_t rows = read_be32(bytes.data() + 8), cols = read_be32(bytes.data() + 12);
    if (rows != kSide || cols != kSide) {
        throw DimensionMismatchError(name + ": images are " + std::to_string(rows) + "x" + std::to_string(cols) +
                                     ", expected 28x28");
    }
    const std::uint64_t expected = 16 + static_cast<std::uint64_t>(n) * rows * cols;
    if (bytes.size() < expected) throw TruncatedFileError(name, expected, bytes.size());

    const std::size_t keep = limit > 0 ? std::min(limit, n) : n;
    std::vector<double> pixels(keep * kSide * kSide);
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = bytes[16 + i] / 255.0;
    return {DataKind::Mnist, Tensor::from_data({keep, 1, kSide, kSide}, std::move(pixels))};
}

void write_idx_images(const fs::path& path, const Tensor& images) {
    if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != kSide || images.dim(3) != kSide) {
        throw ShapeError("write_idx_images: expected (n,1,28,28), got " + shape_str(images.shape()));
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    write_be32(os, kIdxImageMagic);
    write_be32(os, static_cast<std::uint32_t>(images.dim(0)));
    write_be32(os, kSide);
    write_be32(os, kSide);
    for (double v : images.data()) {
        const auto b = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        os.put(static_cast<char>(b));
    }
    if (!os) throw IoError("write failed: " + path.string());
}

Toy2dSpec Toy2dSpec::standard() {
    Toy2dSpec s;
    for (int k = 0; k < 5; ++k) s.angles.push_back(k * std::numbers::pi / 5);
    s.weights.assign(5, 0.2);
    return s;
}

void Toy2dSpec::validate() const {
    if (angles.empty() || angles.size() != weights.size()) {
        throw ConfigError("toy2d: need one angle per weight and at least one component");
    }
    double s = 0;
    for (double w : weights) {
        if (!(w >= 0)) throw ConfigError("toy2d: weights must be non-negative");
        s += w;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("toy2d: weights sum to " + std::to_string(s));
    if (!(eigenvalues[0] > 0 && eigenvalues[1] > 0)) throw ConfigError("toy2d: eigenvalues must be positive");
}

std::array<double, 4> Toy2dSpec::covariance() const {
    std::array<double, 4> c{};
    for (std::size_t k = 0; k < angles.size(); ++k) {
        const double co = std::cos(angles[k]), si = std::sin(angles[k]);
        const double a = eigenvalues[0], b = eigenvalues[1];
        c[0] += weights[k] * (a * co * co + b * si * si);
        c[1] += weights[k] * (a - b) * co * si;
        c[3] += weights[k] * (a * si * si + b * co * co);
    }
    c[2] = c[1];
    return c;
}

Tensor sample_toy2d(const Toy2dSpec& spec, std::size_t n, std::mt19937_64& rng) {
    spec.validate();
    if (n == 0) throw ShapeError("sample_toy2d: n must be >= 1");
    std::discrete_distribution<std::size_t> pick(spec.weights.begin(), spec.weights.end());
    std::normal_distribution<double> n01;
    const double s0 = std::sqrt(spec.eigenvalues[0]), s1 = std::sqrt(spec.eigenvalues[1]);
    std::vector<double> out(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = pick(rng);
        const double e0 = s0 * n01(rng), e1 = s1 * n01(rng);
        const double co = std::cos(spec.angles[k]), si = std::sin(spec.angles[k]);
        out[2 * i] = spec.mean[0] + co * e0 - si * e1;
        out[2 * i + 1] = spec.mean[1] + si * e0 + co * e1;
    }
    return Tensor::from_data({n, 2}, std::move(out));
}

DataSource make_toy2d(const Toy2dSpec& spec, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return {DataKind::Toy2d, sample_toy2d(spec, n, rng)};
}

std::vector<std::size_t> epoch_permutation(std::size_t length, std::uint64_t seed, std::uint64_t epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> p(length);
    for (std::size_t i = 0; i < length; ++i) p[i] = i;
    for (std::size_t i = length; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(p[i - 1], p[pick(rng)]);
    }
    return p;
}

std::vector<Tensor> minibatches(const DataSource& source, std::size_t batch_size, std::uint64_t seed,
                                std::uint64_t epoch) {
    if (batch_size == 0 || batch_size > source.length()) {
        throw ShapeError("minibatches: batch size " + std::to_string(batch_size) + " for " +
                         std::to_string(source.length()) + " samples");
    }
    const auto perm = epoch_permutation(source.length(), seed, epoch);
    std::vector<Tensor> out;
    for (std::size_t b = 0; b + batch_size <= perm.size(); b += batch_size) {
        out.push_back(source.gather({perm.begin() + static_cast<std::ptrdiff_t>(b),
                                     perm.begin() + static_cast<std::ptrdiff_t>(b + batch_size)}));
    }
    return out;
}

}  // namespace pgan
