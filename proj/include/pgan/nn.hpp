#pragma once

#include "pgan/ops.hpp"
#include "pgan/params.hpp"
#include "pgan/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pgan {

enum class LayerKind { Dense, Conv2d, ConvTranspose2d, BatchNorm, LeakyRelu, Sigmoid, Reshape, Flatten };

std::string to_string(LayerKind kind);

/// One entry of a declarative layer stack. Fields not used by a kind are ignored.
struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    std::string name;
    std::size_t units = 0;  // dense outputs or conv output channels
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t pad = 0;             // conv padding; transposed-conv crop
    std::size_t output_padding = 0;  // transposed conv only
    bool bias = true;
    double slope = 0.2;     // leaky relu
    double init_std = 0.02;
    Shape target;           // reshape, without the batch dim
};

struct NetSpec {
    std::string name;
    Shape input_shape;  // without the batch dim
    std::vector<LayerSpec> layers;
};

/// Output shape (without batch) after every layer; throws ShapeError when layers do not compose.
std::vector<Shape> infer_shapes(const NetSpec& spec);
Shape output_shape(const NetSpec& spec);

/// Human-readable block, one layer per line.
std::string to_text(const NetSpec& spec);

enum class Mode { Train, Eval };

/// A NetSpec instantiated with parameters. Weights ~ Normal(0, init_std), biases 0,
/// batch-norm scale 1 and shift 0.
class Network {
public:
    Network(NetSpec spec, std::uint64_t seed);
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;
    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;

    const NetSpec& spec() const noexcept { return spec_; }
    NetParams& params() noexcept { return params_; }
    const NetParams& params() const noexcept { return params_; }

    /// x has shape (batch, input_shape...). In train mode a nonzero `stat_rows` makes every
    /// batch-norm layer take its statistics from the first stat_rows rows.
    Tensor forward(const Tensor& x, Mode mode, std::size_t stat_rows = 0);

    /// Train-mode output for x with every batch-norm layer normalized by the statistics of
    /// `reference`, which passes without gradient. Values and input gradient match the x rows of
    /// forward(concat(reference, x), Train, reference rows). Parameter gradients omit the path
    /// through the reference statistics, so use it only where the parameters are constants.
    /// Running statistics advance as in that forward.
    Tensor forward_against(const Tensor& reference, const Tensor& x);

private:
    void check_input(const Tensor& x) const;
    Tensor apply_layer(std::size_t i, const Tensor& h, bool training, std::size_t stat_rows = 0);

    struct LayerState {
        Tensor weight, bias, gamma, beta;
        BatchNormState bn;
    };

    NetSpec spec_;
    NetParams params_;
    std::vector<LayerState> state_;
};

/// 1x100 -> Dense 1024 -> Dense 6272 -> (128,7,7) -> Deconv 64 -> Deconv 1 -> sigmoid, output (1,28,28).
Network build_mnist_generator(std::uint64_t seed, std::size_t z_dim = 100);
/// (1,28,28) -> Conv 64 s2 -> Conv 128 s2 -> Dense 1024 -> Dense bottleneck (linear).
Network build_mnist_encoder(std::size_t bottleneck_dim, std::uint64_t seed);
NetSpec mnist_generator_spec(std::size_t z_dim = 100);
NetSpec mnist_encoder_spec(std::size_t bottleneck_dim);

/// Three hidden LReLU layers of width `hidden`, linear 2-D output.
Network build_toy_generator(std::size_t z_dim, std::size_t hidden, std::uint64_t seed);
/// Three hidden LReLU layers of width `hidden`, linear bottleneck output.
Network build_toy_encoder(std::size_t hidden, std::size_t bottleneck_dim, std::uint64_t seed);
NetSpec toy_generator_spec(std::size_t z_dim, std::size_t hidden);
NetSpec toy_encoder_spec(std::size_t hidden, std::size_t bottleneck_dim);

}  // namespace pgan
