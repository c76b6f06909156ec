#include "pgan/nn.hpp"

#include "pgan/error.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace pgan {

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::ConvTranspose2d: return "conv_transpose2d";
        case LayerKind::BatchNorm: return "batch_norm";
        case LayerKind::LeakyRelu: return "leaky_relu";
        case LayerKind::Sigmoid: return "sigmoid";
        case LayerKind::Reshape: return "reshape";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

namespace {

std::string where(const NetSpec& spec, std::size_t i) {
    return spec.name + " layer " + std::to_string(i) + " (" + to_string(spec.layers[i].kind) + ")";
}

Shape next_shape(const NetSpec& spec, std::size_t i, const Shape& in) {
    const auto& l = spec.layers[i];
    auto need_rank = [&](std::size_t r) {
        if (in.size() != r) {
            throw ShapeError(where(spec, i) + ": expects rank-" + std::to_string(r) + " input, got " + shape_str(in));
        }
    };
    switch (l.kind) {
        case LayerKind::Dense:
            need_rank(1);
            return {l.units};
        case LayerKind::Conv2d: {
            need_rank(3);
            if (in[1] + 2 * l.pad < l.kernel || in[2] + 2 * l.pad < l.kernel || l.stride == 0) {
                throw ShapeError(where(spec, i) + ": kernel " + std::to_string(l.kernel) + " does not fit " +
                                 shape_str(in) + " with pad " + std::to_string(l.pad));
            }
            return {l.units, (in[1] + 2 * l.pad - l.kernel) / l.stride + 1, (in[2] + 2 * l.pad - l.kernel) / l.stride + 1};
        }
        case LayerKind::ConvTranspose2d: {
            need_rank(3);
            const std::size_t h = (in[1] - 1) * l.stride + l.kernel + l.output_padding;
            const std::size_t w = (in[2] - 1) * l.stride + l.kernel + l.output_padding;
            if (h <= 2 * l.pad || w <= 2 * l.pad || l.output_padding >= l.stride) {
                throw ShapeError(where(spec, i) + ": crop/output padding invalid for input " + shape_str(in));
            }
            return {l.units, h - 2 * l.pad, w - 2 * l.pad};
        }
        case LayerKind::BatchNorm:
            if (in.size() != 1 && in.size() != 3) {
                throw ShapeError(where(spec, i) + ": expects (C) or (C,H,W) input, got " + shape_str(in));
            }
            return in;
        case LayerKind::LeakyRelu:
        case LayerKind::Sigmoid:
            return in;
        case LayerKind::Reshape:
            if (shape_numel(l.target) != shape_numel(in)) {
                throw ShapeError(where(spec, i) + ": cannot reshape " + shape_str(in) + " to " + shape_str(l.target));
            }
            return l.target;
        case LayerKind::Flatten:
            return {shape_numel(in)};
    }
    throw ShapeError(where(spec, i) + ": unknown layer kind");
}

Shape with_batch(std::size_t batch, const Shape& s) {
    Shape out{batch};
    out.insert(out.end(), s.begin(), s.end());
    return out;
}

LayerSpec dense(std::string name, std::size_t units, bool bias) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.name = std::move(name);
    l.units = units;
    l.bias = bias;
    return l;
}

LayerSpec conv(LayerKind kind, std::string name, std::size_t channels, std::size_t kernel, std::size_t stride,
               std::size_t pad, std::size_t output_padding, bool bias) {
    LayerSpec l;
    l.kind = kind;
    l.name = std::move(name);
    l.units = channels;
    l.kernel = kernel;
    l.stride = stride;
    l.pad = pad;
    l.output_padding = output_padding;
    l.bias = bias;
    return l;
}

LayerSpec simple(LayerKind kind, std::string name = {}) {
    LayerSpec l;
    l.kind = kind;
    l.name = std::move(name);
    return l;
}

LayerSpec lrelu() { return simple(LayerKind::LeakyRelu); }

}  // namespace

std::vector<Shape> infer_shapes(const NetSpec& spec) {
    std::vector<Shape> shapes;
    Shape cur = spec.input_shape;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        cur = next_shape(spec, i, cur);
        shapes.push_back(cur);
    }
    return shapes;
}

Shape output_shape(const NetSpec& spec) {
    auto shapes = infer_shapes(spec);
    return shapes.empty() ? spec.input_shape : shapes.back();
}

std::string to_text(const NetSpec& spec) {
    const auto shapes = infer_shapes(spec);
    std::ostringstream os;
    os << "net " << spec.name << " input=" << shape_str(spec.input_shape) << '\n';
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        os << "  " << to_string(l.kind);
        if (!l.name.empty()) os << " name=" << l.name;
        switch (l.kind) {
            case LayerKind::Dense: os << " units=" << l.units << " bias=" << l.bias; break;
            case LayerKind::Conv2d:
                os << " channels=" << l.units << " kernel=" << l.kernel << " stride=" << l.stride << " pad=" << l.pad;
                break;
            case LayerKind::ConvTranspose2d:
                os << " channels=" << l.units << " kernel=" << l.kernel << " stride=" << l.stride << " crop=" << l.pad
                   << " output_padding=" << l.output_padding;
                break;
            case LayerKind::LeakyRelu: os << " slope=" << l.slope; break;
            case LayerKind::Reshape: os << " target=" << shape_str(l.target); break;
            default: break;
        }
        os << " -> " << shape_str(shapes[i]) << '\n';
    }
    return os.str();
}

Network::Network(NetSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    const auto shapes = infer_shapes(spec_);
    std::mt19937_64 rng(seed);
    auto normal = [&](Shape s, double std) {
        std::normal_distribution<double> dist(0.0, std);
        std::vector<double> v(shape_numel(s));
        for (auto& x : v) x = dist(rng);
        return Tensor::from_data(std::move(s), std::move(v));
    };
    Shape in = spec_.input_shape;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const auto& l = spec_.layers[i];
        const std::string prefix = (l.name.empty() ? "layer" + std::to_string(i) : l.name) + ".";
        LayerState st;
        switch (l.kind) {
            case LayerKind::Dense:
                st.weight = params_.add(prefix + "weight", normal({in[0], l.units}, l.init_std));
                if (l.bias) st.bias = params_.add(prefix + "bias", Tensor::zeros({l.units}));
                break;
            case LayerKind::Conv2d:
                st.weight = params_.add(prefix + "weight", normal({l.units, in[0], l.kernel, l.kernel}, l.init_std));
                if (l.bias) st.bias = params_.add(prefix + "bias", Tensor::zeros({l.units}));
                break;
            case LayerKind::ConvTranspose2d:
                st.weight = params_.add(prefix + "weight", normal({in[0], l.units, l.kernel, l.kernel}, l.init_std));
                if (l.bias) st.bias = params_.add(prefix + "bias", Tensor::zeros({l.units}));
                break;
            case LayerKind::BatchNorm:
                st.gamma = params_.add(prefix + "gamma", Tensor::full({in[0]}, 1.0));
                st.beta = params_.add(prefix + "beta", Tensor::zeros({in[0]}));
                st.bn = BatchNormState(in[0]);
                params_.add_buffer(prefix + "running_mean", st.bn.running_mean);
                params_.add_buffer(prefix + "running_var", st.bn.running_var);
                break;
            default: break;
        }
        state_.push_back(std::move(st));
        in = shapes[i];
    }
}

void Network::check_input(const Tensor& x) const {
    if (x.rank() != spec_.input_shape.size() + 1 ||
        !std::equal(spec_.input_shape.begin(), spec_.input_shape.end(), x.shape().begin() + 1)) {
        throw ShapeError(spec_.name + ": input " + shape_str(x.shape()) + " does not match (batch," +
                         shape_str(spec_.input_shape).substr(1));
    }
}

Tensor Network::apply_layer(std::size_t i, const Tensor& h, bool training, std::size_t stat_rows) {
    const auto& l = spec_.layers[i];
    auto& st = state_[i];
    const std::size_t batch = h.dim(0);
    switch (l.kind) {
        case LayerKind::Dense: return dense(h, st.weight, st.bias);
        case LayerKind::Conv2d: return conv2d(h, st.weight, st.bias, {l.stride, l.pad});
        case LayerKind::ConvTranspose2d:
            return conv_transpose2d(h, st.weight, st.bias, {l.stride, l.pad, l.output_padding});
        case LayerKind::BatchNorm: return batch_norm(h, st.gamma, st.beta, st.bn, training, stat_rows);
        case LayerKind::LeakyRelu: return leaky_relu(h, l.slope);
        case LayerKind::Sigmoid: return sigmoid(h);
        case LayerKind::Reshape: return reshape(h, with_batch(batch, l.target));
        case LayerKind::Flatten: return reshape(h, {batch, h.numel() / std::max<std::size_t>(batch, 1)});
    }
    return h;
}

Tensor Network::forward(const Tensor& x, Mode mode, std::size_t stat_rows) {
    check_input(x);
    Tensor h = x;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) h = apply_layer(i, h, mode == Mode::Train, stat_rows);
    return h;
}

Tensor Network::forward_against(const Tensor& reference, const Tensor& x) {
    check_input(reference);
    check_input(x);
    Tensor ref = reference;
    Tensor h = x;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        if (spec_.layers[i].kind != LayerKind::BatchNorm) {
            {
                NoGradGuard ng;
                ref = apply_layer(i, ref, true);
            }
            h = apply_layer(i, h, true);
            continue;
        }
        // The reference batch statistics, as constants: an eval-mode pass whose running values
        // are the biased batch moments gives the same affine map as the training pass.
        const auto& rv = ref.data();
        const std::size_t n = ref.dim(0), c = ref.dim(1), p = ref.numel() / std::max<std::size_t>(n * c, 1);
        const double m = static_cast<double>(n * p);
        auto& st = state_[i];
        BatchNormState fixed(c, st.bn.momentum, st.bn.eps);
        auto fm = fixed.running_mean.mutable_data();
        auto fv = fixed.running_var.mutable_data();
        for (std::size_t ch = 0; ch < c; ++ch) {
            double sum = 0.0;
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t q = 0; q < p; ++q) sum += rv[(r * c + ch) * p + q];
            fm[ch] = sum / m;
            double sq = 0.0;
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t q = 0; q < p; ++q) {
                    const double d = rv[(r * c + ch) * p + q] - fm[ch];
                    sq += d * d;
                }
            fv[ch] = sq / m;
        }
        h = batch_norm(h, st.gamma, st.beta, fixed, false);
        NoGradGuard ng;
        ref = apply_layer(i, ref, true);
    }
    return h;
}

// "(n, LReLu) + BN" is read as affine -> LReLU -> BN. The output deconv keeps its BN ahead of the
// sigmoid so samples stay in (0,1). The encoder bottleneck is a plain affine map: batch norm on it
// would pin every batch of embeddings to the same mean and variance.
NetSpec mnist_generator_spec(std::size_t z_dim) {
    NetSpec s;
    s.name = "mnist_generator";
    s.input_shape = {z_dim};
    s.layers = {
        dense("fc1", 1024, true),
        lrelu(),
        simple(LayerKind::BatchNorm, "bn1"),
        dense("fc2", 128 * 7 * 7, true),
        lrelu(),
        simple(LayerKind::BatchNorm, "bn2"),
        simple(LayerKind::Reshape),
        // 7x7 -> 14x14 -> 28x28: (in-1)*2 - 2*2 + 5 + 1 = 2*in
        conv(LayerKind::ConvTranspose2d, "deconv1", 64, 5, 2, 2, 1, true),
        lrelu(),
        simple(LayerKind::BatchNorm, "bn3"),
        conv(LayerKind::ConvTranspose2d, "deconv2", 1, 5, 2, 2, 1, true),
        simple(LayerKind::BatchNorm, "bn4"),
        simple(LayerKind::Sigmoid),
    };
    s.layers[6].target = {128, 7, 7};
    return s;
}

NetSpec mnist_encoder_spec(std::size_t bottleneck_dim) {
    if (bottleneck_dim == 0) throw ShapeError("mnist encoder: bottleneck_dim must be >= 1");
    NetSpec s;
    s.name = "mnist_encoder";
    s.input_shape = {1, 28, 28};
    s.layers = {
        // 28 -> 14 -> 7 with pad 2
        conv(LayerKind::Conv2d, "conv1", 64, 5, 2, 2, 0, true),
        lrelu(),
        simple(LayerKind::BatchNorm, "bn1"),
        conv(LayerKind::Conv2d, "conv2", 128, 5, 2, 2, 0, true),
        lrelu(),
        simple(LayerKind::BatchNorm, "bn2"),
        simple(LayerKind::Flatten),
        dense("fc1", 1024, true),
        lrelu(),
        simple(LayerKind::BatchNorm, "bn3"),
        dense("bottleneck", bottleneck_dim, true),
    };
    return s;
}

// Toy layers start at unit fan-in scale. At std 0.02 a three-layer MLP maps every z to nearly the
// same point, and the PGAN generator never leaves that collapsed start.
static LayerSpec toy_dense(const std::string& name, std::size_t units, std::size_t fan_in) {
    auto l = dense(name, units, true);
    l.init_std = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return l;
}

NetSpec toy_generator_spec(std::size_t z_dim, std::size_t hidden) {
    if (z_dim == 0 || hidden == 0) throw ShapeError("toy generator: dims must be >= 1");
    NetSpec s;
    s.name = "toy_generator";
    s.input_shape = {z_dim};
    s.layers = {toy_dense("fc1", hidden, z_dim), lrelu(), toy_dense("fc2", hidden, hidden), lrelu(),
                toy_dense("fc3", hidden, hidden), lrelu(), toy_dense("out", 2, hidden)};
    return s;
}

NetSpec toy_encoder_spec(std::size_t hidden, std::size_t bottleneck_dim) {
    if (hidden == 0 || bottleneck_dim == 0) throw ShapeError("toy encoder: dims must be >= 1");
    NetSpec s;
    s.name = "toy_encoder";
    s.input_shape = {2};
    s.layers = {toy_dense("fc1", hidden, 2), lrelu(), toy_dense("fc2", hidden, hidden), lrelu(),
                toy_dense("fc3", hidden, hidden), lrelu(), toy_dense("bottleneck", bottleneck_dim, hidden)};
    return s;
}

Network build_mnist_generator(std::uint64_t seed, std::size_t z_dim) { return Network(mnist_generator_spec(z_dim), seed); }

Network build_mnist_encoder(std::size_t bottleneck_dim, std::uint64_t seed) {
    return Network(mnist_encoder_spec(bottleneck_dim), seed);
}

Network build_toy_generator(std::size_t z_dim, std::size_t hidden, std::uint64_t seed) {
    return Network(toy_generator_spec(z_dim, hidden), seed);
}

Network build_toy_encoder(std::size_t hidden, std::size_t bottleneck_dim, std::uint64_t seed) {
    return Network(toy_encoder_spec(hidden, bottleneck_dim), seed);
}

}  // namespace pgan
