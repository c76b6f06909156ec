#include "pgan/experiments.hpp"

#include "pgan/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pgan {

namespace fs = std::filesystem;

namespace {

fs::path run_dir(const fs::path& outdir, LossKind loss) {
    return outdir.empty() ? fs::path{} : outdir / to_string(loss);
}

RunLog train_into(Trainer& trainer, const fs::path& dir) {
    if (!dir.empty()) fs::create_directories(dir);
    auto log = trainer.train(dir);
    if (!dir.empty()) emit_figures(log, dir);
    return log;
}

// Real and generated points drawn over a landscape; the far region is measured against the same
// real points.
constexpr std::size_t kOverlayPoints = 2048;

std::vector<std::size_t> first_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    return rows;
}

Tensor slice_rows(const Tensor& x, std::size_t n) {
    const std::size_t width = x.numel() / x.dim(0);
    std::vector<double> v(x.data().begin(), x.data().begin() + static_cast<std::ptrdiff_t>(n * width));
    return Tensor::from_data({n, width}, std::move(v));
}

void finish(Summary& summary, const fs::path& outdir) {
    if (!outdir.empty()) {
        fs::create_directories(outdir);
        summary.write(outdir / "summary.txt");
    }
}

}  // namespace

TrainConfig with_loss(TrainConfig config, LossKind loss) {
    config.loss = loss;
    if (loss != LossKind::Pgan) config.bottleneck_dim = 1;
    config.validate();
    return config;
}

FixedGeneratorReport fixed_generator_experiment(const TrainConfig& config, const fs::path& outdir,
                                                const std::vector<LossKind>& kinds) {
    FixedGeneratorReport report;
    for (LossKind kind : kinds) {
        auto cfg = with_loss(config, kind);
        cfg.freeze = {FreezeInterval{Player::Gen, 0, cfg.epochs}};
        if (cfg.histogram_every == 0) cfg.histogram_every = cfg.epochs;
        Trainer trainer(cfg, load_dataset(cfg));
        FixedGeneratorRun run;
        run.loss = kind;
        run.log = train_into(trainer, run_dir(outdir, kind));
        const auto& last = run.log.epochs.back();
        run.final_real = last.real_likelihood;
        run.final_fake = last.fake_likelihood;
        run.overlap = last.histogram_overlap;

        // Real score may wobble by 0.05 once EM and encoder have settled after epoch 2.
        bool nondecreasing = true;
        for (std::size_t e = 3; e < run.log.epochs.size(); ++e)
            if (run.log.epochs[e].real_likelihood < run.log.epochs[e - 1].real_likelihood - 0.05) nondecreasing = false;

        const std::string p = to_string(kind) + "_";
        report.summary.set(p + "final_real_likelihood", run.final_real);
        report.summary.set(p + "final_fake_likelihood", run.final_fake);
        report.summary.set(p + "histogram_overlap", run.overlap);
        report.summary.set(p + "real_likelihood_nondecreasing", nondecreasing ? "true" : "false");
        report.runs.push_back(std::move(run));
    }
    finish(report.summary, outdir);
    return report;
}

double covariance_relative_error(const std::array<double, 4>& estimate, const std::array<double, 4>& target) {
    const double scale = std::sqrt(target[0] * target[3]);
    double worst = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        const double denom = (i == 0 || i == 3) ? target[i] : scale;
        worst = std::max(worst, std::abs(estimate[i] - target[i]) / denom);
    }
    return worst;
}

ToyLandscapeReport toy_landscape_experiment(const TrainConfig& config, const fs::path& outdir,
                                            std::size_t eval_samples, const std::vector<LossKind>& kinds) {
    if (!config.is_toy()) throw ConfigError("toy-landscape needs dataset = toy2d", 0, "dataset");
    if (eval_samples < 2) throw ConfigError("toy-landscape needs at least two evaluation samples");
    ToyLandscapeReport report;
    report.target_cov = config.toy.covariance();
    report.summary.set("target_cov_xx", report.target_cov[0]);
    report.summary.set("target_cov_xy", report.target_cov[1]);
    report.summary.set("target_cov_yy", report.target_cov[3]);

    for (LossKind kind : kinds) {
        auto cfg = with_loss(config, kind);
        Trainer trainer(cfg, load_dataset(cfg));
        ToyRun run;
        run.loss = kind;
        const auto dir = run_dir(outdir, kind);
        run.log = train_into(trainer, dir);

        std::mt19937_64 rng(stream_seed(cfg.seed, 6));
        std::normal_distribution<double> n01;
        std::vector<double> zv(eval_samples * cfg.z_dim);
        for (auto& v : zv) v = n01(rng);
        Tensor samples;
        {
            NoGradGuard ng;
            samples = trainer.generator().forward(Tensor::from_data({eval_samples, cfg.z_dim}, std::move(zv)), Mode::Eval);
        }
        const auto s = samples.data();
        const double n = static_cast<double>(eval_samples);
        for (std::size_t i = 0; i < eval_samples; ++i)
            for (std::size_t j = 0; j < 2; ++j) run.sample_mean[j] += s[2 * i + j] / n;
        for (std::size_t i = 0; i < eval_samples; ++i)
            for (std::size_t a = 0; a < 2; ++a)
                for (std::size_t b = 0; b < 2; ++b)
                    run.sample_cov[2 * a + b] +=
                        (s[2 * i + a] - run.sample_mean[a]) * (s[2 * i + b] - run.sample_mean[b]) / (n - 1);

        const auto& data = trainer.data();
        const auto real = data.gather(first_rows(std::min(data.length(), kOverlayPoints)));
        const auto fake = slice_rows(samples, std::min(eval_samples, kOverlayPoints));
        DiscFn disc = [&](const Tensor& x) { return trainer.score(x); };
        const auto grid = compute_landscape(disc, grid_around(data.samples, 0.25, 200), real, fake);
        const auto norm = normalize_minmax(grid);
        run.far_score = far_region_mean_score(norm);
        run.near_score = near_region_mean_score(norm);
        if (!dir.empty()) {
            write_landscape_ppm(dir / "landscape.ppm", norm);
            write_landscape_csv(dir / "landscape.csv", grid);
        }

        const std::string p = to_string(kind) + "_";
        report.summary.set(p + "sample_mean_x", run.sample_mean[0]);
        report.summary.set(p + "sample_mean_y", run.sample_mean[1]);
        report.summary.set(p + "sample_cov_xx", run.sample_cov[0]);
        report.summary.set(p + "sample_cov_xy", run.sample_cov[1]);
        report.summary.set(p + "sample_cov_yy", run.sample_cov[3]);
        report.summary.set(p + "cov_relative_error", covariance_relative_error(run.sample_cov, report.target_cov));
        report.summary.set(p + "far_region_score", run.far_score);
        report.summary.set(p + "near_region_score", run.near_score);
        report.runs.push_back(std::move(run));
    }
    finish(report.summary, outdir);
    return report;
}

double median_grad_norm(const RunLog& log, Player player, std::size_t begin, std::size_t end) {
    std::vector<double> v;
    for (const auto& s : log.steps)
        if (s.player == player && s.epoch >= begin && s.epoch < end) v.push_back(s.grad.norm);
    if (v.empty()) throw Error("no " + to_string(player) + " steps in epochs [" + std::to_string(begin) + ", " +
                               std::to_string(end) + ")");
    return median(std::move(v));
}

FreezeReport freeze_experiment(const TrainConfig& config, const fs::path& outdir, const std::vector<LossKind>& kinds) {
    FreezeReport report;
    report.freeze = FreezeInterval{Player::Gen, 5, 15};
    for (const auto& f : config.freeze)
        if (f.player == Player::Gen) {
            report.freeze = f;
            break;
        }
    const auto& fr = report.freeze;
    if (fr.start == 0 || fr.end <= fr.start || fr.end >= config.epochs) {
        throw ConfigError("freeze-experiment needs a generator freeze [a, b) with 0 < a < b < epochs", 0, "freeze");
    }
    const std::size_t late = fr.start + (fr.end - fr.start) / 2;
    const std::size_t release_end = std::min(fr.end + 3, config.epochs);

    for (LossKind kind : kinds) {
        auto cfg = with_loss(config, kind);
        cfg.freeze = {fr};
        Trainer trainer(cfg, load_dataset(cfg));
        FreezeRun run;
        run.loss = kind;
        run.log = train_into(trainer, run_dir(outdir, kind));
        run.disc_pre = median_grad_norm(run.log, Player::Disc, 0, fr.start);
        run.disc_late = median_grad_norm(run.log, Player::Disc, late, fr.end);
        run.gen_pre = median_grad_norm(run.log, Player::Gen, 0, fr.start);
        run.gen_release = median_grad_norm(run.log, Player::Gen, fr.end, release_end);

        const std::string p = to_string(kind) + "_";
        report.summary.set(p + "disc_grad_median_pre", run.disc_pre);
        report.summary.set(p + "disc_grad_median_late_freeze", run.disc_late);
        report.summary.set(p + "disc_grad_ratio", run.disc_late / run.disc_pre);
        report.summary.set(p + "gen_grad_median_pre", run.gen_pre);
        report.summary.set(p + "gen_grad_median_release", run.gen_release);
        report.summary.set(p + "gen_grad_ratio", run.gen_release / run.gen_pre);
        report.runs.push_back(std::move(run));
    }
    finish(report.summary, outdir);
    return report;
}

}  // namespace pgan
