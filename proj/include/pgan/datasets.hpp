#pragma once

#include "pgan/error.hpp"
#include "pgan/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace pgan {

/// IDX file whose magic number is not 0x00000803.
class BadMagicError : public FormatError {
public:
    using FormatError::FormatError;
};

/// File shorter than its header promises.
class TruncatedFileError : public FormatError {
public:
    TruncatedFileError(const std::string& path, std::uint64_t expected, std::uint64_t actual);
    std::uint64_t expected() const noexcept { return expected_; }
    std::uint64_t actual() const noexcept { return actual_; }

private:
    std::uint64_t expected_, actual_;
};

/// Images are not 28x28.
class DimensionMismatchError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Requested dataset file does not exist (also after the PGAN_DATA_DIR fallback).
class MissingDatasetError : public IoError {
public:
    using IoError::IoError;
};

enum class DataKind { Mnist, Toy2d };

/// In-memory, immutable collection of samples stacked along axis 0.
struct DataSource {
    DataKind kind = DataKind::Toy2d;
    Tensor samples;

    std::size_t length() const { return samples.defined() ? samples.dim(0) : 0; }
    Shape sample_shape() const;
    /// Rows at the given indices, stacked.
    Tensor gather(const std::vector<std::size_t>& rows) const;
};

/// Finds `path` as given, else under $PGAN_DATA_DIR (as a relative path, then by file name).
std::filesystem::path resolve_data_path(const std::filesystem::path& path);

/// IDX3 ubyte image file -> (n,1,28,28) with pixels scaled to [0,1]. limit > 0 keeps the first `limit` images.
DataSource load_mnist(const std::filesystem::path& path, std::size_t limit = 0);

/// Writes images (n,1,28,28) in [0,1] as an IDX3 ubyte file, rounding to the nearest byte.
void write_idx_images(const std::filesystem::path& path, const Tensor& images);

/// Five zero-mean-shared Gaussians whose covariances are one base covariance rotated.
struct Toy2dSpec {
    std::array<double, 2> mean{0.0, 0.0};
    std::array<double, 2> eigenvalues{2.0, 0.05};
    std::vector<double> angles;   // radians, one per component
    std::vector<double> weights;  // one per component, summing to 1

    /// Defaults: angles k*pi/5, k = 0..4, uniform weights.
    static Toy2dSpec standard();
    void validate() const;
    /// Population covariance sum_k w_k R(theta_k) diag(lambda) R(theta_k)^T, row-major 2x2.
    std::array<double, 4> covariance() const;
};

/// n draws: component by weight, then mean + R(theta) diag(sqrt(lambda)) eps.
Tensor sample_toy2d(const Toy2dSpec& spec, std::size_t n, std::mt19937_64& rng);
DataSource make_toy2d(const Toy2dSpec& spec, std::size_t n, std::uint64_t seed);

/// Permutation of [0, length) determined by (seed, epoch).
std::vector<std::size_t> epoch_permutation(std::size_t length, std::uint64_t seed, std::uint64_t epoch);

/// Shuffled full batches for one epoch; the trailing partial batch is dropped.
std::vector<Tensor> minibatches(const DataSource& source, std::size_t batch_size, std::uint64_t seed,
                                std::uint64_t epoch);

}  // namespace pgan
