#pragma once

#include "pgan/diagnostics.hpp"
#include "pgan/training.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace pgan {

/// Config for one loss kind derived from a shared experiment config. Non-PGAN kinds use a scalar
/// discriminator output, so their bottleneck is forced to 1.
TrainConfig with_loss(TrainConfig config, LossKind loss);

struct FixedGeneratorRun {
    LossKind loss = LossKind::Pgan;
    RunLog log;
    double final_real = 0.0;  // final-epoch mean discriminator score on real batches
    double final_fake = 0.0;
    double overlap = -1.0;  // final-epoch bottleneck histogram overlap
};

struct FixedGeneratorReport {
    std::vector<FixedGeneratorRun> runs;
    Summary summary;
};

/// Generator frozen from epoch 0 for the whole run, once per loss kind. Each run writes into
/// outdir/<loss>; the summary goes to outdir/summary.txt.
FixedGeneratorReport fixed_generator_experiment(const TrainConfig& config, const std::filesystem::path& outdir,
                                                const std::vector<LossKind>& kinds = {LossKind::Pgan,
                                                                                      LossKind::LsGan});

struct ToyRun {
    LossKind loss = LossKind::Pgan;
    RunLog log;
    std::array<double, 2> sample_mean{};
    std::array<double, 4> sample_cov{};  // row-major 2x2
    double far_score = 0.0;              // on the min-max normalized grid
    double near_score = 0.0;
};

struct ToyLandscapeReport {
    std::vector<ToyRun> runs;
    std::array<double, 4> target_cov{};
    Summary summary;
};

/// Trains each loss kind on the toy set, measures the generated-sample moments from
/// `eval_samples` draws and evaluates the discriminator landscape around the real data.
ToyLandscapeReport toy_landscape_experiment(const TrainConfig& config, const std::filesystem::path& outdir,
                                            std::size_t eval_samples = 10000,
                                            const std::vector<LossKind>& kinds = {LossKind::Pgan, LossKind::LsGan});

/// Largest relative covariance error; off-diagonal entries are scaled by sqrt(C_00 * C_11).
double covariance_relative_error(const std::array<double, 4>& estimate, const std::array<double, 4>& target);

struct FreezeRun {
    LossKind loss = LossKind::Pgan;
    RunLog log;
    double disc_pre = 0.0;     // median disc grad norm before the freeze
    double disc_late = 0.0;    // second half of the freeze
    double gen_pre = 0.0;      // median gen grad norm before the freeze
    double gen_release = 0.0;  // first three epochs after release
};

struct FreezeReport {
    FreezeInterval freeze;
    std::vector<FreezeRun> runs;
    Summary summary;
};

/// Generator freeze schedule from the config (gen:5:15 when none is given), once per loss kind.
FreezeReport freeze_experiment(const TrainConfig& config, const std::filesystem::path& outdir,
                               const std::vector<LossKind>& kinds = {LossKind::Pgan, LossKind::LsGan});

/// Median gradient norm of `player` over steps with epoch in [begin, end).
double median_grad_norm(const RunLog& log, Player player, std::size_t begin, std::size_t end);

}  // namespace pgan
