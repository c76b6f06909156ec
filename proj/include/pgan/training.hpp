#pragma once

#include "pgan/checkpoint.hpp"
#include "pgan/datasets.hpp"
#include "pgan/diagnostics.hpp"
#include "pgan/gmm.hpp"
#include "pgan/losses.hpp"
#include "pgan/nn.hpp"
#include "pgan/params.hpp"

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace pgan {

enum class Player { Gen, Disc };
std::string to_string(Player p);

/// Player's optimizer steps are skipped for epochs in [start, end).
struct FreezeInterval {
    Player player = Player::Gen;
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const FreezeInterval&) const = default;
};

enum class GmmFit { Minibatch, Buffer };

struct TrainConfig {
    std::string dataset = "mnist";  // mnist | toy2d
    std::string data_path = "data/mnist/train-images-idx3-ubyte";
    std::size_t data_limit = 2048;
    std::size_t toy_samples = 8192;
    Toy2dSpec toy = Toy2dSpec::standard();
    std::size_t toy_hidden = 64;

    LossKind loss = LossKind::Pgan;
    std::size_t z_dim = 100;
    std::size_t batch_size = 64;
    std::size_t epochs = 10;
    AdamOptions adam{};

    std::size_t bottleneck_dim = 1;
    std::size_t gmm_components = 1;
    std::size_t gmm_iters = 5;
    GmmFit gmm_fit = GmmFit::Minibatch;
    std::size_t gmm_buffer = 2048;
    LikelihoodMode likelihood_mode = LikelihoodMode::Raw;

    std::vector<FreezeInterval> freeze;
    std::uint64_t seed = 1;

    std::size_t histogram_bins = 100;
    std::size_t histogram_every = 1;  // epochs; 0 disables
    std::size_t samples_every = 1;
    std::size_t sample_count = 64;
    std::size_t checkpoint_every = 1;
    bool keep_all_checkpoints = false;

    /// key = value lines; '#' starts a comment. Unknown keys and bad values throw ConfigError
    /// naming the line and key.
    static TrainConfig parse(const std::string& text);
    static TrainConfig load(const std::filesystem::path& path);
    /// Every key with its effective value, followed by the network layouts as comments.
    std::string to_text() const;
    void validate() const;

    bool frozen(Player p, std::size_t epoch) const;
    bool is_toy() const { return dataset == "toy2d"; }
};

struct GradStats {
    double mean = 0.0;
    double variance = 0.0;  // population
    double norm = 0.0;
};

/// Statistics over the concatenation of every parameter gradient. Throws AutogradError when a
/// gradient is missing.
GradStats grad_stats(const NetParams& params);

struct StepRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    Player player = Player::Disc;
    double loss = 0.0;
    double real_likelihood = 0.0;  // mean over the batch; disc steps only
    double fake_likelihood = 0.0;
    GradStats grad;
    bool applied = true;  // false while the player is frozen
};

struct EpochRecord {
    std::size_t epoch = 0;
    double real_likelihood = 0.0;  // mean of the epoch's disc-step batch means
    double fake_likelihood = 0.0;
    double disc_loss = 0.0;
    double gen_loss = 0.0;
    double histogram_overlap = -1.0;  // -1 when no histogram was taken
    std::string histogram_path;
    std::string samples_path;
    std::string checkpoint_path;
};

struct RunLog {
    std::string loss;
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    std::optional<std::string> abort_reason;

    /// Parses a newline-delimited record file written during training.
    static RunLog read(const std::filesystem::path& path);
};

/// Training was stopped by a non-finite value; the run log was flushed first.
class TrainingAborted : public NumericError {
public:
    using NumericError::NumericError;
};

/// Output of one discriminator or generator update.
struct StepStats {
    double loss = 0.0;
    double real_likelihood = 0.0;
    double fake_likelihood = 0.0;
    GradStats grad;
    bool applied = true;
    Tensor real_embedding;  // (batch, d), detached
    Tensor fake_embedding;
};

class Trainer {
public:
    Trainer(TrainConfig config, DataSource data);

    const TrainConfig& config() const noexcept { return config_; }
    Network& generator() noexcept { return gen_; }
    Network& encoder() noexcept { return enc_; }
    const std::optional<GmmModel>& gmm() const noexcept { return gmm_; }
    /// Replaces the current mixture; it is validated first.
    void set_gmm(GmmModel model);
    const DataSource& data() const noexcept { return data_; }

    /// (n, z_dim) standard normal draws from the trainer's stream.
    Tensor sample_z(std::size_t n);

    /// Discriminator update on a real batch and a batch of generated images, which is used
    /// detached. Real and fake are encoded as one batch with BN statistics from the
    /// real rows. PGAN: fit the GMM on the real embeddings (skipped when frozen and a GMM exists),
    /// then one Adam step on the encoder for the likelihood loss. `apply` = false computes everything but leaves the encoder and GMM
    /// untouched.
    StepStats disc_step(const Tensor& real, const Tensor& fake, bool apply = true);

    /// Generator update: `fake` must be the generator's output with its graph attached. It is
    /// encoded in one batch with `real`, as in the disc step. Encoder and GMM are constants.
    StepStats gen_step(const Tensor& real, const Tensor& fake, bool apply = true);

    /// One disc step then one gen step on a single minibatch.
    std::pair<StepStats, StepStats> train_step(const Tensor& real, std::size_t epoch);

    /// Full run. With a non-empty `outdir`, writes runlog.ndjson, per-epoch histograms,
    /// sample grids and checkpoints there. Throws TrainingAborted on a non-finite value.
    RunLog train(const std::filesystem::path& outdir = {});

    /// Discriminator score in eval mode without gradients: GMM likelihood of the embedding for
    /// PGAN, D(x) otherwise (sigmoid for the original loss).
    std::vector<double> score(const Tensor& x);
    /// Encoder output in eval mode without gradients.
    Tensor embed(const Tensor& x);

    std::vector<NamedTensor> checkpoint_tensors() const;

private:
    Tensor disc_output(const Tensor& emb) const;
    void refit_gmm(const Tensor& real_emb);

    TrainConfig config_;
    DataSource data_;
    Network gen_;
    Network enc_;
    std::optional<GmmModel> gmm_;
    std::deque<std::vector<double>> buffer_;
    std::mt19937_64 z_rng_;
    std::mt19937_64 gmm_rng_;
};

/// Independent seed for a numbered random stream derived from the run seed. Streams: 0 generator
/// init, 1 encoder init, 2 latent draws, 3 mixture init, 4 toy data, 5 sample grids, 6 evaluation.
std::uint64_t stream_seed(std::uint64_t seed, std::uint32_t stream);

/// Data source described by the config (MNIST file or sampled toy set).
DataSource load_dataset(const TrainConfig& config);

}  // namespace pgan
