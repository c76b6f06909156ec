#include "pgan/training.hpp"

#include "pgan/diagnostics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace pgan {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, sep);) out.push_back(trim(item));
    return out;
}

struct Field {
    int line;
    std::string key;

    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError("line " + std::to_string(line) + ": key '" + key + "': " + what, line, key);
    }

    std::size_t to_size(const std::string& v) const {
        std::size_t out = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || p != v.data() + v.size()) fail("expected a non-negative integer, got '" + v + "'");
        return out;
    }

    double to_double(const std::string& v) const {
        double out = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
            fail("expected a finite number, got '" + v + "'");
        }
        return out;
    }

    std::vector<double> to_doubles(const std::string& v, std::size_t count = 0) const {
        std::vector<double> out;
        for (const auto& item : split(v, ',')) out.push_back(to_double(item));
        if (count && out.size() != count) fail("expected " + std::to_string(count) + " comma-separated numbers");
        return out;
    }

    bool to_bool(const std::string& v) const {
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        fail("expected true or false, got '" + v + "'");
    }
};

std::string join(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
    return out;
}

Player parse_player(const Field& f, const std::string& s) {
    if (s == "gen") return Player::Gen;
    if (s == "disc") return Player::Disc;
    f.fail("unknown player '" + s + "' (expected gen | disc)");
}

using Setter = std::function<void(TrainConfig&, const Field&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"dataset",
         [](TrainConfig& c, const Field& f, const std::string& v) {
             if (v != "mnist" && v != "toy2d") f.fail("expected mnist | toy2d, got '" + v + "'");
             c.dataset = v;
         }},
        {"data_path", [](TrainConfig& c, const Field&, const std::string& v) { c.data_path = v; }},
        {"data_limit", [](TrainConfig& c, const Field& f, const std::string& v) { c.data_limit = f.to_size(v); }},
        {"toy_samples", [](TrainConfig& c, const Field& f, const std::string& v) { c.toy_samples = f.to_size(v); }},
        {"toy_mean",
         [](TrainConfig& c, const Field& f, const std::string& v) {
             auto m = f.to_doubles(v, 2);
             c.toy.mean = {m[0], m[1]};
         }},
        {"toy_eigenvalues",
         [](TrainConfig& c, const Field& f, const std::string& v) {
             auto m = f.to_doubles(v, 2);
             c.toy.eigenvalues = {m[0], m[1]};
         }},
        {"toy_angles", [](TrainConfig& c, const Field& f, const std::string& v) { c.toy.angles = f.to_doubles(v); }},
        {"toy_weights", [](TrainConfig& c, const Field& f, const std::string& v) { c.toy.weights = f.to_doubles(v); }},
        {"toy_hidden", [](TrainConfig& c, const Field& f, const std::string& v) { c.toy_hidden = f.to_size(v); }},
        {"loss",
         [](TrainConfig& c, const Field& f, const std::string& v) {
             try {
                 c.loss = parse_loss_kind(v);
             } catch (const ConfigError& e) {
                 f.fail(e.what());
             }
         }},
        {"z_dim", [](TrainConfig& c, const Field& f, const std::string& v) { c.z_dim = f.to_size(v); }},
        {"batch_size", [](TrainConfig& c, const Field& f, const std::string& v) { c.batch_size = f.to_size(v); }},
        {"epochs", [](TrainConfig& c, const Field& f, const std::string& v) { c.epochs = f.to_size(v); }},
        {"lr", [](TrainConfig& c, const Field& f, const std::string& v) { c.adam.lr = f.to_double(v); }},
        {"beta1", [](TrainConfig& c, const Field& f, const std::string& v) { c.adam.beta1 = f.to_double(v); }},
        {"beta2", [](TrainConfig& c, const Field& f, const std::string& v) { c.adam.beta2 = f.to_double(v); }},
        {"adam_eps", [](TrainConfig& c, const Field& f, const std::string& v) { c.adam.eps = f.to_double(v); }},
        {"bottleneck_dim",
         [](TrainConfig& c, const Field& f, const std::string& v) { c.bottleneck_dim = f.to_size(v); }},
        {"gmm_components",
         [](TrainConfig& c, const Field& f, const std::string& v) { c.gmm_components = f.to_size(v); }},
        {"gmm_iters", [](TrainConfig& c, const Field& f, const std::string& v) { c.gmm_iters = f.to_size(v); }},
        {"gmm_fit",
         [](TrainConfig& c, const Field& f, const std::string& v) {
             if (v == "minibatch") c.gmm_fit = GmmFit::Minibatch;
             else if (v == "buffer") c.gmm_fit = GmmFit::Buffer;
             else f.fail("expected minibatch | buffer, got '" + v + "'");
         }},
        {"gmm_buffer", [](TrainConfig& c, const Field& f, const std::string& v) { c.gmm_buffer = f.to_size(v); }},
        {"likelihood_mode",
         [](TrainConfig& c, const Field& f, const std::string& v) {
             try {
                 c.likelihood_mode = parse_likelihood_mode(v);
             } catch (const ConfigError& e) {
                 f.fail(e.what());
             }
         }},
        {"freeze",
         [](TrainConfig& c, const Field& f, const std::string& v) {
             c.freeze.clear();
             for (const auto& item : split(v, ',')) {
                 auto parts = split(item, ':');
                 if (parts.size() != 3) f.fail("freeze entries are player:start:end, got '" + item + "'");
                 c.freeze.push_back({parse_player(f, parts[0]), f.to_size(parts[1]), f.to_size(parts[2])});
             }
         }},
        {"seed", [](TrainConfig& c, const Field& f, const std::string& v) { c.seed = f.to_size(v); }},
        {"histogram_bins",
         [](TrainConfig& c, const Field& f, const std::string& v) { c.histogram_bins = f.to_size(v); }},
        {"histogram_every",
         [](TrainConfig& c, const Field& f, const std::string& v) { c.histogram_every = f.to_size(v); }},
        {"samples_every", [](TrainConfig& c, const Field& f, const std::string& v) { c.samples_every = f.to_size(v); }},
        {"sample_count", [](TrainConfig& c, const Field& f, const std::string& v) { c.sample_count = f.to_size(v); }},
        {"checkpoint_every",
         [](TrainConfig& c, const Field& f, const std::string& v) { c.checkpoint_every = f.to_size(v); }},
        {"keep_all_checkpoints",
         [](TrainConfig& c, const Field& f, const std::string& v) { c.keep_all_checkpoints = f.to_bool(v); }},
    };
    return table;
}

}  // namespace

std::string to_string(Player p) { return p == Player::Gen ? "gen" : "disc"; }

TrainConfig TrainConfig::parse(const std::string& text) {
    TrainConfig c;
    std::istringstream in(text);
    int line_no = 0;
    std::map<std::string, int> seen;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value", line_no);
        }
        Field f{line_no, trim(std::string_view(line).substr(0, eq))};
        const auto value = trim(std::string_view(line).substr(eq + 1));
        const auto it = setters().find(f.key);
        if (it == setters().end()) f.fail("unknown key");
        if (auto [pos, fresh] = seen.emplace(f.key, line_no); !fresh) {
            f.fail("duplicate key (first set on line " + std::to_string(pos->second) + ")");
        }
        it->second(c, f, value);
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void TrainConfig::validate() const {
    auto bad = [](const std::string& key, const std::string& msg) { throw ConfigError(key + ": " + msg, 0, key); };
    if (epochs < 1) bad("epochs", "must be >= 1");
    if (batch_size < 1) bad("batch_size", "must be >= 1");
    if (z_dim < 1) bad("z_dim", "must be >= 1");
    if (!(adam.lr > 0)) bad("lr", "must be > 0");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1)) bad("beta1", "must lie in [0,1)");
    if (!(adam.beta2 >= 0 && adam.beta2 < 1)) bad("beta2", "must lie in [0,1)");
    if (!(adam.eps > 0)) bad("adam_eps", "must be > 0");
    if (bottleneck_dim < 1) bad("bottleneck_dim", "must be >= 1");
    if (gmm_components < 1) bad("gmm_components", "must be >= 1");
    if (gmm_iters < 1) bad("gmm_iters", "must be >= 1");
    if (gmm_fit == GmmFit::Buffer && gmm_buffer < gmm_components) bad("gmm_buffer", "smaller than gmm_components");
    if (gmm_components > batch_size) bad("gmm_components", "exceeds batch_size");
    if (histogram_bins < 1) bad("histogram_bins", "must be >= 1");
    if (loss != LossKind::Pgan && bottleneck_dim != 1) bad("bottleneck_dim", "must be 1 for a single-output discriminator");
    if (is_toy()) {
        if (toy_hidden < 1) bad("toy_hidden", "must be >= 1");
        if (toy_samples < batch_size) bad("toy_samples", "fewer samples than one batch");
        try {
            toy.validate();
        } catch (const ConfigError& e) {
            bad("toy", e.what());
        }
    }
    for (const auto& f : freeze) {
        if (f.start >= f.end || f.end > epochs) {
            bad("freeze", "interval " + to_string(f.player) + ":" + std::to_string(f.start) + ":" +
                              std::to_string(f.end) + " must satisfy start < end <= epochs");
        }
    }
}

bool TrainConfig::frozen(Player p, std::size_t epoch) const {
    for (const auto& f : freeze)
        if (f.player == p && epoch >= f.start && epoch < f.end) return true;
    return false;
}

std::string TrainConfig::to_text() const {
    std::ostringstream os;
    auto kv = [&](const std::string& k, const std::string& v) { os << k << " = " << v << '\n'; };
    auto num = [&](const std::string& k, std::size_t v) { kv(k, std::to_string(v)); };
    kv("dataset", dataset);
    kv("data_path", data_path);
    num("data_limit", data_limit);
    num("toy_samples", toy_samples);
    kv("toy_mean", join({toy.mean[0], toy.mean[1]}));
    kv("toy_eigenvalues", join({toy.eigenvalues[0], toy.eigenvalues[1]}));
    kv("toy_angles", join(toy.angles));
    kv("toy_weights", join(toy.weights));
    num("toy_hidden", toy_hidden);
    kv("loss", to_string(loss));
    num("z_dim", z_dim);
    num("batch_size", batch_size);
    num("epochs", epochs);
    kv("lr", format_double(adam.lr));
    kv("beta1", format_double(adam.beta1));
    kv("beta2", format_double(adam.beta2));
    kv("adam_eps", format_double(adam.eps));
    num("bottleneck_dim", bottleneck_dim);
    num("gmm_components", gmm_components);
    num("gmm_iters", gmm_iters);
    kv("gmm_fit", gmm_fit == GmmFit::Minibatch ? "minibatch" : "buffer");
    num("gmm_buffer", gmm_buffer);
    kv("likelihood_mode", to_string(likelihood_mode));
    std::string fr;
    for (std::size_t i = 0; i < freeze.size(); ++i) {
        fr += (i ? "," : "") + to_string(freeze[i].player) + ":" + std::to_string(freeze[i].start) + ":" +
              std::to_string(freeze[i].end);
    }
    kv("freeze", fr);
    kv("seed", std::to_string(seed));
    num("histogram_bins", histogram_bins);
    num("histogram_every", histogram_every);
    num("samples_every", samples_every);
    num("sample_count", sample_count);
    num("checkpoint_every", checkpoint_every);
    kv("keep_all_checkpoints", keep_all_checkpoints ? "true" : "false");

    const NetSpec g = is_toy() ? toy_generator_spec(z_dim, toy_hidden) : mnist_generator_spec(z_dim);
    const NetSpec e = is_toy() ? toy_encoder_spec(toy_hidden, bottleneck_dim) : mnist_encoder_spec(bottleneck_dim);
    for (const auto* spec : {&g, &e}) {
        std::istringstream lines(pgan::to_text(*spec));
        for (std::string l; std::getline(lines, l);) os << "# " << l << '\n';
    }
    return os.str();
}

}  // namespace pgan
