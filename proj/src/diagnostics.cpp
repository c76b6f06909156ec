#include "pgan/diagnostics.hpp"

#include "pgan/error.hpp"
#include "pgan/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

namespace pgan {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path, bool binary = false) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
    if (!os) throw IoError("cannot write " + path.string());
    return os;
}

unsigned char to_byte(double v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

/// Distance from every real point to its nearest other real point.
std::vector<double> nearest_neighbour_distances(const std::vector<std::array<double, 2>>& pts) {
    std::vector<double> out(pts.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            const double d = std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
            out[i] = std::min(out[i], d);
            out[j] = std::min(out[j], d);
        }
    return out;
}

/// Linear-interpolated quantile, q in [0,1].
double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Cells farther than the radius from every real point.
std::vector<bool> far_cells(const LandscapeGrid& grid, double radius_quantile) {
    if (grid.real_points.size() < 2) throw Error("far region: need at least two real points");
    if (!(radius_quantile >= 0 && radius_quantile <= 1)) throw Error("far region: quantile must lie in [0,1]");
    const double radius = quantile(nearest_neighbour_distances(grid.real_points), radius_quantile);
    const double r2 = radius * radius;
    const std::size_t n = grid.spec.resolution;
    std::vector<bool> far(grid.cells(), true);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const auto p = grid.center(r, c);
            for (const auto& q : grid.real_points) {
                const double dx = p[0] - q[0], dy = p[1] - q[1];
                if (dx * dx + dy * dy <= r2) {
                    far[r * n + c] = false;
                    break;
                }
            }
        }
    return far;
}

double region_mean(const LandscapeGrid& grid, const std::vector<bool>& mask, bool want, const char* what) {
    double s = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] == want) {
            s += grid.scores[i];
            ++n;
        }
    if (n == 0) throw Error(std::string(what) + " region is empty; lower the radius quantile or widen the grid");
    return s / static_cast<double>(n);
}

std::vector<std::array<double, 2>> to_points(const Tensor& t) {
    if (!t.defined() || t.numel() == 0) return {};
    if (t.rank() != 2 || t.dim(1) != 2) throw ShapeError("landscape overlay must be (n,2), got " + shape_str(t.shape()));
    std::vector<std::array<double, 2>> out(t.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {t.data()[2 * i], t.data()[2 * i + 1]};
    return out;
}

}  // namespace

std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

HistogramPair histogram_overlap(const std::vector<double>& real, const std::vector<double>& fake, std::size_t bins) {
    if (real.empty() || fake.empty()) throw Error("histogram_overlap: both sample sets must be nonempty");
    if (bins == 0) throw Error("histogram_overlap: bins must be >= 1");
    const auto [rlo, rhi] = std::minmax_element(real.begin(), real.end());
    const auto [flo, fhi] = std::minmax_element(fake.begin(), fake.end());
    const double lo = std::min(*rlo, *flo), hi = std::max(*rhi, *fhi);

    HistogramPair h;
    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    h.real_counts.assign(bins, 0);
    h.fake_counts.assign(bins, 0);
    auto bin_of = [&](double v) -> std::size_t {
        if (hi == lo) return 0;
        const auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
        return std::min(b, bins - 1);
    };
    for (double v : real) ++h.real_counts[bin_of(v)];
    for (double v : fake) ++h.fake_counts[bin_of(v)];
    for (std::size_t i = 0; i < bins; ++i) {
        h.overlap += std::min(static_cast<double>(h.real_counts[i]) / static_cast<double>(real.size()),
                              static_cast<double>(h.fake_counts[i]) / static_cast<double>(fake.size()));
    }
    h.overlap = std::clamp(h.overlap, 0.0, 1.0);
    return h;
}

std::array<double, 2> LandscapeGrid::center(std::size_t row, std::size_t col) const {
    const double n = static_cast<double>(spec.resolution);
    return {spec.x_min + (static_cast<double>(col) + 0.5) * (spec.x_max - spec.x_min) / n,
            spec.y_min + (static_cast<double>(row) + 0.5) * (spec.y_max - spec.y_min) / n};
}

LandscapeGrid compute_landscape(const DiscFn& disc, const GridSpec& spec, const Tensor& real_pts,
                                const Tensor& fake_pts) {
    if (spec.resolution == 0 || !(spec.x_max > spec.x_min) || !(spec.y_max > spec.y_min)) {
        throw Error("compute_landscape: empty grid");
    }
    LandscapeGrid g;
    g.spec = spec;
    g.real_points = to_points(real_pts);
    g.fake_points = to_points(fake_pts);
    const std::size_t n = spec.resolution;
    std::vector<double> xy(2 * n * n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const auto p = g.center(r, c);
            xy[2 * (r * n + c)] = p[0];
            xy[2 * (r * n + c) + 1] = p[1];
        }
    NoGradGuard ng;
    g.scores = disc(Tensor::from_data({n * n, 2}, std::move(xy)));
    if (g.scores.size() != n * n) throw ShapeError("compute_landscape: discriminator returned the wrong count");
    for (double v : g.scores)
        if (!std::isfinite(v)) throw NumericError("compute_landscape: non-finite discriminator score");
    return g;
}

GridSpec grid_around(const Tensor& points, double margin, std::size_t resolution) {
    const auto pts = to_points(points);
    if (pts.empty()) throw Error("grid_around: no points");
    GridSpec s;
    s.resolution = resolution;
    s.x_min = s.x_max = pts[0][0];
    s.y_min = s.y_max = pts[0][1];
    for (const auto& p : pts) {
        s.x_min = std::min(s.x_min, p[0]);
        s.x_max = std::max(s.x_max, p[0]);
        s.y_min = std::min(s.y_min, p[1]);
        s.y_max = std::max(s.y_max, p[1]);
    }
    const double dx = std::max(s.x_max - s.x_min, 1e-9) * margin, dy = std::max(s.y_max - s.y_min, 1e-9) * margin;
    s.x_min -= dx;
    s.x_max += dx;
    s.y_min -= dy;
    s.y_max += dy;
    return s;
}

LandscapeGrid normalize_minmax(const LandscapeGrid& grid) {
    LandscapeGrid out = grid;
    if (grid.scores.empty()) return out;
    const auto [lo, hi] = std::minmax_element(grid.scores.begin(), grid.scores.end());
    const double a = *lo, span = *hi - *lo;
    for (auto& v : out.scores) v = span > 0 ? (v - a) / span : 0.0;
    return out;
}

double far_region_mean_score(const LandscapeGrid& grid, double radius_quantile) {
    return region_mean(grid, far_cells(grid, radius_quantile), true, "far");
}

double near_region_mean_score(const LandscapeGrid& grid, double radius_quantile) {
    return region_mean(grid, far_cells(grid, radius_quantile), false, "near");
}

double median(std::vector<double> values) {
    if (values.empty()) throw Error("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void write_pgm(const fs::path& path, std::size_t width, std::size_t height, const std::vector<double>& values,
               bool flip_rows) {
    if (values.size() != width * height) throw ShapeError("write_pgm: value count does not match the image size");
    auto os = open_out(path, true);
    os << "P5\n" << width << ' ' << height << "\n255\n";
    for (std::size_t r = 0; r < height; ++r) {
        const std::size_t src = flip_rows ? height - 1 - r : r;
        for (std::size_t c = 0; c < width; ++c) os.put(static_cast<char>(to_byte(values[src * width + c])));
    }
    if (!os) throw IoError("write failed: " + path.string());
}

void write_landscape_ppm(const fs::path& path, const LandscapeGrid& g) {
    const std::size_t n = g.spec.resolution;
    std::vector<std::array<unsigned char, 3>> px(n * n);
    for (std::size_t i = 0; i < n * n; ++i) {
        // Dark blue (low) to yellow (high).
        const double t = std::clamp(g.scores[i], 0.0, 1.0);
        px[i] = {to_byte(t), to_byte(0.2 + 0.7 * t), to_byte(0.5 * (1 - t))};
    }
    auto plot = [&](const std::vector<std::array<double, 2>>& pts, unsigned char v) {
        for (const auto& p : pts) {
            const double fx = (p[0] - g.spec.x_min) / (g.spec.x_max - g.spec.x_min);
            const double fy = (p[1] - g.spec.y_min) / (g.spec.y_max - g.spec.y_min);
            if (fx < 0 || fx >= 1 || fy < 0 || fy >= 1) continue;
            const auto c = static_cast<std::size_t>(fx * static_cast<double>(n));
            const auto r = static_cast<std::size_t>(fy * static_cast<double>(n));
            px[r * n + c] = {v, v, v};
        }
    };
    plot(g.real_points, 255);
    plot(g.fake_points, 0);
    auto os = open_out(path, true);
    os << "P6\n" << n << ' ' << n << "\n255\n";
    for (std::size_t r = 0; r < n; ++r)  // top image row = largest y
        for (std::size_t c = 0; c < n; ++c) {
            const auto& p = px[(n - 1 - r) * n + c];
            os.write(reinterpret_cast<const char*>(p.data()), 3);
        }
    if (!os) throw IoError("write failed: " + path.string());
}

void write_landscape_csv(const fs::path& path, const LandscapeGrid& g) {
    auto os = open_out(path);
    os << "x,y,score\n";
    const std::size_t n = g.spec.resolution;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const auto p = g.center(r, c);
            os << format_double(p[0]) << ',' << format_double(p[1]) << ',' << format_double(g.scores[r * n + c])
               << '\n';
        }
}

void write_image_grid(const fs::path& path, const Tensor& images) {
    if (images.rank() != 4 || images.dim(1) != 1) {
        throw ShapeError("write_image_grid: expected (n,1,h,w), got " + shape_str(images.shape()));
    }
    const std::size_t n = images.dim(0), h = images.dim(2), w = images.dim(3);
    const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(std::max<std::size_t>(n, 1)))));
    const std::size_t rows = (n + cols - 1) / cols;
    std::vector<double> canvas(rows * h * cols * w, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t r0 = (k / cols) * h, c0 = (k % cols) * w;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                canvas[(r0 + y) * cols * w + c0 + x] = images.data()[k * h * w + y * w + x];
    }
    write_pgm(path, cols * w, rows * h, canvas);
}

void Summary::set(const std::string& key, double value) { set(key, format_double(value)); }

void Summary::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_)
        if (k == key) {
            v = value;
            return;
        }
    entries_.emplace_back(key, value);
}

std::string Summary::text() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
}

void Summary::write(const fs::path& path) const {
    auto os = open_out(path);
    os << text();
    if (!os) throw IoError("write failed: " + path.string());
}

Summary emit_figures(const RunLog& log, const fs::path& outdir) {
    fs::create_directories(outdir);
    {
        auto os = open_out(outdir / "likelihood_curve.csv");
        os << "epoch,real_likelihood,fake_likelihood,disc_loss,gen_loss,histogram_overlap\n";
        for (const auto& e : log.epochs) {
            os << e.epoch << ',' << format_double(e.real_likelihood) << ',' << format_double(e.fake_likelihood) << ','
               << format_double(e.disc_loss) << ',' << format_double(e.gen_loss) << ','
               << format_double(e.histogram_overlap) << '\n';
        }
    }
    {
        auto os = open_out(outdir / "grad_stats.csv");
        os << "step,epoch,player,applied,loss,real_likelihood,fake_likelihood,grad_mean,grad_variance,grad_norm\n";
        for (const auto& s : log.steps) {
            os << s.step << ',' << s.epoch << ',' << to_string(s.player) << ',' << (s.applied ? 1 : 0) << ','
               << format_double(s.loss) << ',' << format_double(s.real_likelihood) << ','
               << format_double(s.fake_likelihood) << ',' << format_double(s.grad.mean) << ','
               << format_double(s.grad.variance) << ',' << format_double(s.grad.norm) << '\n';
        }
    }
    Summary sum;
    sum.set("loss", log.loss.empty() ? std::string("unknown") : log.loss);
    sum.set("epochs", static_cast<double>(log.epochs.size()));
    sum.set("steps", static_cast<double>(log.steps.size()));
    if (!log.epochs.empty()) {
        const auto& first = log.epochs.front();
        const auto& last = log.epochs.back();
        sum.set("first_epoch_real_likelihood", first.real_likelihood);
        sum.set("first_epoch_fake_likelihood", first.fake_likelihood);
        sum.set("final_real_likelihood", last.real_likelihood);
        sum.set("final_fake_likelihood", last.fake_likelihood);
        if (last.histogram_overlap >= 0) sum.set("final_histogram_overlap", last.histogram_overlap);
    }
    if (log.abort_reason) sum.set("aborted", *log.abort_reason);
    sum.write(outdir / "summary.txt");
    return sum;
}

}  // namespace pgan
