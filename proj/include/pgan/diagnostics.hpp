#pragma once

#include "pgan/tensor.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace pgan {

struct HistogramPair {
    std::vector<double> edges;  // bins + 1, shared by both sets
    std::vector<std::size_t> real_counts;
    std::vector<std::size_t> fake_counts;
    double overlap = 0.0;  // sum over bins of min(real_i / n_real, fake_i / n_fake)
};

/// Shared bins over the pooled [min, max]; the last bin is closed on the right.
HistogramPair histogram_overlap(const std::vector<double>& real, const std::vector<double>& fake,
                                std::size_t bins = 100);

struct GridSpec {
    double x_min = -1, x_max = 1, y_min = -1, y_max = 1;
    std::size_t resolution = 200;  // cells per side
};

/// Scores at cell centers, row-major with y growing with the row index.
struct LandscapeGrid {
    GridSpec spec;
    std::vector<double> scores;
    std::vector<std::array<double, 2>> real_points;
    std::vector<std::array<double, 2>> fake_points;

    std::array<double, 2> center(std::size_t row, std::size_t col) const;
    std::size_t cells() const { return spec.resolution * spec.resolution; }
};

/// Batched discriminator score: (n,2) -> (n).
using DiscFn = std::function<std::vector<double>(const Tensor&)>;

/// Evaluates `disc` on every cell center without recording gradients.
LandscapeGrid compute_landscape(const DiscFn& disc, const GridSpec& grid, const Tensor& real_pts,
                                const Tensor& fake_pts);

/// Bounding box of the points padded by `margin` times its extent on every side.
GridSpec grid_around(const Tensor& points, double margin = 0.25, std::size_t resolution = 200);

/// Copy with scores mapped to [0,1] by the grid's own min and max (all zero when constant).
LandscapeGrid normalize_minmax(const LandscapeGrid& grid);

/// Mean score over cells whose distance to every real point exceeds the given quantile of the
/// real points' nearest-neighbour distances. Throws Error when no cell qualifies.
double far_region_mean_score(const LandscapeGrid& grid, double radius_quantile = 0.95);
/// Mean score over the complementary (near) cells.
double near_region_mean_score(const LandscapeGrid& grid, double radius_quantile = 0.95);

double median(std::vector<double> values);

/// Writes 8-bit binary PGM (P5). Values are clamped to [0,1]; row 0 of `values` is the bottom image row
/// when `flip_rows` is set.
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               const std::vector<double>& values, bool flip_rows = false);
/// Binary PPM (P6) heat map of values in [0,1] with real points drawn white and fake points black.
void write_landscape_ppm(const std::filesystem::path& path, const LandscapeGrid& normalized);
/// Landscape as CSV: x,y,score per cell.
void write_landscape_csv(const std::filesystem::path& path, const LandscapeGrid& grid);
/// Tiles (n,1,28,28) images into a near-square PGM grid.
void write_image_grid(const std::filesystem::path& path, const Tensor& images);

/// Ordered key/value lines; doubles printed with round-trip precision.
class Summary {
public:
    void set(const std::string& key, double value);
    void set(const std::string& key, const std::string& value);
    std::string text() const;
    void write(const std::filesystem::path& path) const;
    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

std::string format_double(double v);

struct RunLog;

/// Likelihood curves (one row per epoch), per-step gradient statistics and a summary report.
/// Returns the summary that was written.
Summary emit_figures(const RunLog& log, const std::filesystem::path& outdir);

}  // namespace pgan
