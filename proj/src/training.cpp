#include "pgan/training.hpp"

#include "pgan/checkpoint.hpp"
#include "pgan/ops.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace pgan {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::uint64_t stream_seed(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (std::uint64_t{words[0]} << 32) | words[1];
}

namespace {

double mean_of(const Tensor& t) {
    double s = 0;
    for (double v : t.data()) s += v;
    return s / static_cast<double>(t.numel());
}

/// Flushes subnormal results and operands to zero while in scope. Once fake likelihoods reach
/// ~1e-300 their gradients underflow, and subnormal arithmetic made later epochs up to 2x slower.
class FlushSubnormals {
public:
#if defined(__SSE__)
    FlushSubnormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }
    ~FlushSubnormals() { _mm_setcsr(saved_); }
#else
    FlushSubnormals() = default;
#endif
    FlushSubnormals(const FlushSubnormals&) = delete;
    FlushSubnormals& operator=(const FlushSubnormals&) = delete;

#if defined(__SSE__)
private:
    unsigned saved_;
#endif
};

/// Restores requires_grad on a parameter set when leaving scope.
class FrozenParams {
public:
    explicit FrozenParams(NetParams& p) : params_(p) { params_.set_requires_grad(false); }
    ~FrozenParams() { params_.set_requires_grad(true); }
    FrozenParams(const FrozenParams&) = delete;
    FrozenParams& operator=(const FrozenParams&) = delete;

private:
    NetParams& params_;
};

/// Snapshot of batch-norm running statistics, restored when leaving scope.
class BufferSnapshot {
public:
    explicit BufferSnapshot(NetParams& p) : params_(p) {
        for (const auto& e : params_.buffers()) saved_.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
    }
    ~BufferSnapshot() {
        for (std::size_t i = 0; i < saved_.size(); ++i) {
            auto t = params_.buffers()[i].tensor;
            std::copy(saved_[i].begin(), saved_[i].end(), t.mutable_data().begin());
        }
    }
    BufferSnapshot(const BufferSnapshot&) = delete;
    BufferSnapshot& operator=(const BufferSnapshot&) = delete;

private:
    NetParams& params_;
    std::vector<std::vector<double>> saved_;
};

json step_json(const StepRecord& r) {
    return {{"type", "step"},
            {"step", r.step},
            {"epoch", r.epoch},
            {"player", to_string(r.player)},
            {"loss", r.loss},
            {"real_likelihood", r.real_likelihood},
            {"fake_likelihood", r.fake_likelihood},
            {"grad_mean", r.grad.mean},
            {"grad_variance", r.grad.variance},
            {"grad_norm", r.grad.norm},
            {"applied", r.applied}};
}

json epoch_json(const EpochRecord& r) {
    return {{"type", "epoch"},
            {"epoch", r.epoch},
            {"real_likelihood", r.real_likelihood},
            {"fake_likelihood", r.fake_likelihood},
            {"disc_loss", r.disc_loss},
            {"gen_loss", r.gen_loss},
            {"histogram_overlap", r.histogram_overlap},
            {"histogram_path", r.histogram_path},
            {"samples_path", r.samples_path},
            {"checkpoint_path", r.checkpoint_path}};
}

bool finite(const StepRecord& r) {
    for (double v : {r.loss, r.real_likelihood, r.fake_likelihood, r.grad.mean, r.grad.variance, r.grad.norm})
        if (!std::isfinite(v)) return false;
    return true;
}

std::string epoch_tag(std::size_t epoch) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", epoch);
    return buf;
}

void write_histogram_csv(const fs::path& path, const HistogramPair& h) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << "bin_lo,bin_hi,real,fake\n";
    for (std::size_t i = 0; i + 1 < h.edges.size(); ++i) {
        os << format_double(h.edges[i]) << ',' << format_double(h.edges[i + 1]) << ',' << h.real_counts[i] << ','
           << h.fake_counts[i] << '\n';
    }
}

void write_points_csv(const fs::path& path, const Tensor& pts) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << "x,y\n";
    for (std::size_t i = 0; i < pts.dim(0); ++i)
        os << format_double(pts.data()[2 * i]) << ',' << format_double(pts.data()[2 * i + 1]) << '\n';
}

/// Appends records to runlog.ndjson as they are produced.
class RunLogWriter {
public:
    explicit RunLogWriter(const fs::path& outdir) {
        if (outdir.empty()) return;
        fs::create_directories(outdir);
        out_.open(outdir / "runlog.ndjson");
        if (!out_) throw IoError("cannot write " + (outdir / "runlog.ndjson").string());
    }
    void write(const json& j) {
        if (out_.is_open()) out_ << j.dump() << '\n';
    }
    void flush() {
        if (out_.is_open()) out_.flush();
    }

private:
    std::ofstream out_;
};

}  // namespace

GradStats grad_stats(const NetParams& params) {
    std::size_t n = 0;
    double sum = 0;
    for (const auto& e : params.params()) {
        if (!e.tensor.has_grad()) throw AutogradError("grad_stats: parameter '" + e.name + "' has no gradient");
        for (double g : e.tensor.grad()) sum += g;
        n += e.tensor.numel();
    }
    GradStats s;
    if (n == 0) return s;
    s.mean = sum / static_cast<double>(n);
    double sq = 0, norm2 = 0;
    for (const auto& e : params.params()) {
        for (double g : e.tensor.grad()) {
            sq += (g - s.mean) * (g - s.mean);
            norm2 += g * g;
        }
    }
    s.variance = sq / static_cast<double>(n);
    s.norm = std::sqrt(norm2);
    return s;
}

DataSource load_dataset(const TrainConfig& config) {
    if (config.is_toy()) return make_toy2d(config.toy, config.toy_samples, stream_seed(config.seed, 4));
    return load_mnist(config.data_path, config.data_limit);
}

Trainer::Trainer(TrainConfig config, DataSource data)
    : config_((config.validate(), std::move(config))),
      data_(std::move(data)),
      gen_(config_.is_toy() ? build_toy_generator(config_.z_dim, config_.toy_hidden, stream_seed(config_.seed, 0))
                            : build_mnist_generator(stream_seed(config_.seed, 0), config_.z_dim)),
      enc_(config_.is_toy()
               ? build_toy_encoder(config_.toy_hidden, config_.bottleneck_dim, stream_seed(config_.seed, 1))
               : build_mnist_encoder(config_.bottleneck_dim, stream_seed(config_.seed, 1))),
      z_rng_(stream_seed(config_.seed, 2)),
      gmm_rng_(stream_seed(config_.seed, 3)) {
    const Shape want = config_.is_toy() ? Shape{2} : Shape{1, 28, 28};
    if (data_.sample_shape() != want) {
        throw ShapeError("dataset samples are " + shape_str(data_.sample_shape()) + ", expected " + shape_str(want));
    }
    if (data_.length() < config_.batch_size) {
        throw ConfigError("batch_size " + std::to_string(config_.batch_size) + " exceeds dataset length " +
                              std::to_string(data_.length()),
                          0, "batch_size");
    }
}

void Trainer::set_gmm(GmmModel model) {
    model.validate();
    gmm_ = std::move(model);
}

Tensor Trainer::sample_z(std::size_t n) {
    std::normal_distribution<double> n01;
    std::vector<double> v(n * config_.z_dim);
    for (auto& x : v) x = n01(z_rng_);
    return Tensor::from_data({n, config_.z_dim}, std::move(v));
}

Tensor Trainer::disc_output(const Tensor& emb) const {
    switch (config_.loss) {
        case LossKind::Pgan:
            if (!gmm_) throw Error("no GMM has been fitted yet");
            return likelihood(*gmm_, emb, config_.likelihood_mode);
        case LossKind::LsGan: return reshape(emb, {emb.dim(0)});
        case LossKind::OriginalGan: return sigmoid(reshape(emb, {emb.dim(0)}));
    }
    return {};
}

void Trainer::refit_gmm(const Tensor& real_emb) {
    Tensor x = real_emb;
    const std::size_t d = real_emb.dim(1);
    if (config_.gmm_fit == GmmFit::Buffer) {
        for (std::size_t i = 0; i < real_emb.dim(0); ++i) {
            buffer_.emplace_back(real_emb.data().begin() + static_cast<std::ptrdiff_t>(i * d),
                                 real_emb.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
        }
        while (buffer_.size() > config_.gmm_buffer) buffer_.pop_front();
        std::vector<double> flat;
        for (const auto& row : buffer_) flat.insert(flat.end(), row.begin(), row.end());
        x = Tensor::from_data({buffer_.size(), d}, std::move(flat));
    }
    EmOptions opts;
    if (gmm_ && gmm_->components == config_.gmm_components && gmm_->dim == d) {
        gmm_ = fit_em(x, *gmm_, config_.gmm_iters, opts).model;
    } else {
        gmm_ = fit_em(x, config_.gmm_components, config_.gmm_iters, gmm_rng_, opts).model;
    }
}

StepStats Trainer::disc_step(const Tensor& real, const Tensor& fake, bool apply) {
    if (real.dim(0) != fake.dim(0)) {
        throw ShapeError("disc_step: real batch " + std::to_string(real.dim(0)) + " vs fake batch " +
                         std::to_string(fake.dim(0)));
    }
    const Tensor fake_const = fake.detach();
    enc_.params().zero_grad();
    const std::size_t n = real.dim(0);

    // Real and fake pass as one batch whose BN statistics come from the real rows alone. Separate
    // batches would give every fake batch the same mean embedding, since the bottleneck is affine
    // in the last BN output. The real rows never depend on the fakes, so the E-step can reuse them.
    auto emb = enc_.forward(concat_rows(real, fake_const), Mode::Train, n);
    auto emb_real = slice_rows(emb, 0, n);
    auto emb_fake = slice_rows(emb, n, 2 * n);
    StepStats st;
    st.real_embedding = emb_real.detach();
    st.fake_embedding = emb_fake.detach();
    if (config_.loss == LossKind::Pgan && (apply || !gmm_)) refit_gmm(st.real_embedding);
    auto d_real = disc_output(emb_real);
    auto d_fake = disc_output(emb_fake);
    auto loss = disc_loss(config_.loss, d_real, d_fake);
    loss.backward();

    st.loss = loss.item();
    st.real_likelihood = mean_of(d_real);
    st.fake_likelihood = mean_of(d_fake);
    st.grad = grad_stats(enc_.params());
    st.applied = apply;
    if (apply) adam_step(enc_.params(), config_.adam);
    return st;
}

StepStats Trainer::gen_step(const Tensor& real, const Tensor& fake, bool apply) {
    gen_.params().zero_grad();
    StepStats st;
    {
        FrozenParams frozen(enc_.params());
        BufferSnapshot keep(enc_.params());
        // Fakes are normalized with the real batch statistics, as in the disc step. The encoder is
        // frozen, so those statistics are constants here.
        auto emb = enc_.forward_against(real, fake);
        st.fake_embedding = emb.detach();
        auto d_fake = disc_output(emb);
        auto loss = gen_loss(config_.loss, d_fake);
        loss.backward();
        st.loss = loss.item();
        st.fake_likelihood = mean_of(d_fake);
    }
    st.grad = grad_stats(gen_.params());
    st.applied = apply;
    if (apply) adam_step(gen_.params(), config_.adam);
    return st;
}

std::pair<StepStats, StepStats> Trainer::train_step(const Tensor& real, std::size_t epoch) {
    FlushSubnormals ftz;
    auto fake = gen_.forward(sample_z(real.dim(0)), Mode::Train);
    auto d = disc_step(real, fake, !config_.frozen(Player::Disc, epoch));
    auto g = gen_step(real, fake, !config_.frozen(Player::Gen, epoch));
    return {std::move(d), std::move(g)};
}

std::vector<double> Trainer::score(const Tensor& x) {
    NoGradGuard ng;
    auto d = disc_output(enc_.forward(x, Mode::Eval));
    return {d.data().begin(), d.data().end()};
}

Tensor Trainer::embed(const Tensor& x) {
    NoGradGuard ng;
    return enc_.forward(x, Mode::Eval);
}

std::vector<NamedTensor> Trainer::checkpoint_tensors() const {
    auto out = collect_tensors(gen_.params(), "gen.");
    auto enc = collect_tensors(enc_.params(), "enc.");
    out.insert(out.end(), enc.begin(), enc.end());
    if (gmm_) {
        out.push_back({"gmm.weights", {gmm_->components}, gmm_->weights});
        out.push_back({"gmm.means", {gmm_->components, gmm_->dim}, gmm_->means});
        out.push_back({"gmm.variances", {gmm_->components, gmm_->dim}, gmm_->variances});
    }
    return out;
}

RunLog Trainer::train(const fs::path& outdir) {
    RunLogWriter writer(outdir);
    RunLog log;
    log.loss = to_string(config_.loss);
    writer.write({{"type", "run"}, {"loss", log.loss}, {"dataset", config_.dataset}, {"seed", config_.seed}});
    if (!outdir.empty()) {
        std::ofstream cfg(outdir / "config.txt");
        cfg << config_.to_text();
    }

    // Fixed latent draws for the per-epoch sample grids, separate from the training stream.
    std::mt19937_64 vis_rng(stream_seed(config_.seed, 5));
    std::normal_distribution<double> n01;
    std::vector<double> zv(config_.sample_count * config_.z_dim);
    for (auto& v : zv) v = n01(vis_rng);
    const Tensor z_vis = Tensor::from_data({config_.sample_count, config_.z_dim}, std::move(zv));

    auto abort = [&](const std::string& reason) {
        log.abort_reason = reason;
        writer.write({{"type", "abort"}, {"reason", reason}, {"step", log.steps.size()}});
        writer.flush();
        throw TrainingAborted("training aborted: " + reason);
    };

    std::size_t step = 0;
    std::string last_checkpoint;
    for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
        const bool want_hist = config_.histogram_every && (epoch + 1) % config_.histogram_every == 0;
        std::vector<double> real_emb, fake_emb;
        EpochRecord er;
        er.epoch = epoch;
        std::size_t nb = 0;
        for (const auto& real : minibatches(data_, config_.batch_size, config_.seed, epoch)) {
            std::pair<StepStats, StepStats> out;
            try {
                out = train_step(real, epoch);
            } catch (const NumericError& e) {
                abort(e.what());
            }
            const auto& [d, g] = out;
            StepRecord dr{step, epoch, Player::Disc, d.loss, d.real_likelihood, d.fake_likelihood, d.grad, d.applied};
            StepRecord gr{step, epoch, Player::Gen, g.loss, 0.0, g.fake_likelihood, g.grad, g.applied};
            for (const auto* r : {&dr, &gr}) {
                if (!finite(*r)) abort("non-finite " + to_string(r->player) + " telemetry at step " + std::to_string(step));
                log.steps.push_back(*r);
                writer.write(step_json(*r));
            }
            er.real_likelihood += d.real_likelihood;
            er.fake_likelihood += d.fake_likelihood;
            er.disc_loss += d.loss;
            er.gen_loss += g.loss;
            if (want_hist) {
                const std::size_t dim = d.real_embedding.dim(1);
                for (std::size_t i = 0; i < d.real_embedding.dim(0); ++i) {
                    real_emb.push_back(d.real_embedding.data()[i * dim]);
                    fake_emb.push_back(d.fake_embedding.data()[i * dim]);
                }
            }
            ++nb;
            ++step;
        }
        er.real_likelihood /= static_cast<double>(nb);
        er.fake_likelihood /= static_cast<double>(nb);
        er.disc_loss /= static_cast<double>(nb);
        er.gen_loss /= static_cast<double>(nb);

        const std::string tag = epoch_tag(epoch);
        if (want_hist) {
            const auto h = histogram_overlap(real_emb, fake_emb, config_.histogram_bins);
            er.histogram_overlap = h.overlap;
            if (!outdir.empty()) {
                er.histogram_path = "hist_epoch" + tag + ".csv";
                write_histogram_csv(outdir / er.histogram_path, h);
            }
        }
        if (!outdir.empty() && config_.samples_every && (epoch + 1) % config_.samples_every == 0) {
            NoGradGuard ng;
            auto samples = gen_.forward(z_vis, Mode::Eval);
            if (config_.is_toy()) {
                er.samples_path = "samples_epoch" + tag + ".csv";
                write_points_csv(outdir / er.samples_path, samples);
            } else {
                er.samples_path = "samples_epoch" + tag + ".pgm";
                write_image_grid(outdir / er.samples_path, samples);
            }
        }
        if (!outdir.empty() && config_.checkpoint_every && (epoch + 1) % config_.checkpoint_every == 0) {
            er.checkpoint_path = "checkpoint_epoch" + tag + ".bin";
            save_checkpoint(outdir / er.checkpoint_path, checkpoint_tensors());
            if (!config_.keep_all_checkpoints && !last_checkpoint.empty()) fs::remove(outdir / last_checkpoint);
            last_checkpoint = er.checkpoint_path;
        }
        log.epochs.push_back(er);
        writer.write(epoch_json(er));
        writer.flush();
    }
    return log;
}

RunLog RunLog::read(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read run log " + path.string());
    RunLog log;
    int line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        const auto type = j.value("type", "");
        if (type == "run") {
            log.loss = j.value("loss", "");
        } else if (type == "step") {
            StepRecord r;
            r.step = j.at("step");
            r.epoch = j.at("epoch");
            r.player = j.at("player") == "gen" ? Player::Gen : Player::Disc;
            r.loss = j.at("loss");
            r.real_likelihood = j.at("real_likelihood");
            r.fake_likelihood = j.at("fake_likelihood");
            r.grad = {j.at("grad_mean"), j.at("grad_variance"), j.at("grad_norm")};
            r.applied = j.at("applied");
            log.steps.push_back(r);
        } else if (type == "epoch") {
            EpochRecord r;
            r.epoch = j.at("epoch");
            r.real_likelihood = j.at("real_likelihood");
            r.fake_likelihood = j.at("fake_likelihood");
            r.disc_loss = j.at("disc_loss");
            r.gen_loss = j.at("gen_loss");
            r.histogram_overlap = j.at("histogram_overlap");
            r.histogram_path = j.value("histogram_path", "");
            r.samples_path = j.value("samples_path", "");
            r.checkpoint_path = j.value("checkpoint_path", "");
            log.epochs.push_back(r);
        } else if (type == "abort") {
            log.abort_reason = j.value("reason", "");
        } else {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": unknown record type '" + type + "'");
        }
    }
    return log;
}

}  // namespace pgan
