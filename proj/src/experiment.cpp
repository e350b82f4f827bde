#include "sddp/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "parallel.hpp"
#include "sddp/serialize.hpp"

namespace sddp {

namespace {

using nlohmann::ordered_json;

constexpr int kBundleFormatVersion = 1;
constexpr int kReportFormatVersion = 1;

constexpr std::uint64_t kPanelSeedTag = 0xda7a;
constexpr std::uint64_t kMaskTrainTag = 0x3a51;
constexpr std::uint64_t kMaskTestTag = 0x7e57;
constexpr std::uint64_t kForecasterSeedTag = 0xfc;

const std::set<std::string> kKnownMethods = {"sddp", "sdpca", "pca", "vanilla"};

std::uint64_t method_tag(const std::string& method) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : method) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Config file parsing: sectioned key = value text, '#' comments, unknown
// sections or keys are errors.

struct RawConfig {
    std::map<std::string, std::map<std::string, std::string>> sections;
};

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

RawConfig parse_raw(const std::string& text) {
    RawConfig raw;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            raw.sections[section]; // create
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        if (section.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": key outside of any [section]");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!raw.sections[section].emplace(key, value).second) {
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");
        }
    }
    return raw;
}

class SectionReader {
public:
    SectionReader(const RawConfig& raw, const std::string& name) : name_(name) {
        auto it = raw.sections.find(name);
        if (it != raw.sections.end()) entries_ = &it->second;
    }

    bool present() const { return entries_ != nullptr; }

    std::optional<std::string> get(const std::string& key) {
        seen_.insert(key);
        if (!entries_) return std::nullopt;
        auto it = entries_->find(key);
        if (it == entries_->end()) return std::nullopt;
        return it->second;
    }

    double number(const std::string& key, double fallback) {
        auto v = get(key);
        if (!v) return fallback;
        try {
            size_t pos = 0;
            const double x = std::stod(*v, &pos);
            if (pos != v->size()) throw std::invalid_argument("trailing junk");
            return x;
        } catch (const std::exception&) {
            throw ConfigError("[" + name_ + "] " + key + ": not a number: '" + *v + "'");
        }
    }

    int integer(const std::string& key, int fallback) {
        const double x = number(key, static_cast<double>(fallback));
        if (x != std::floor(x)) {
            throw ConfigError("[" + name_ + "] " + key + ": expected an integer");
        }
        return static_cast<int>(x);
    }

    std::uint64_t unsigned64(const std::string& key, std::uint64_t fallback) {
        auto v = get(key);
        if (!v) return fallback;
        try {
            return std::stoull(*v);
        } catch (const std::exception&) {
            throw ConfigError("[" + name_ + "] " + key + ": not an unsigned integer");
        }
    }

    bool boolean(const std::string& key, bool fallback) {
        auto v = get(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1") return true;
        if (*v == "false" || *v == "0") return false;
        throw ConfigError("[" + name_ + "] " + key + ": expected true or false");
    }

    std::string text(const std::string& key, const std::string& fallback) {
        auto v = get(key);
        return v ? *v : fallback;
    }

    std::vector<std::string> list(const std::string& key,
                                  const std::vector<std::string>& fallback) {
        auto v = get(key);
        if (!v) return fallback;
        std::vector<std::string> items;
        std::stringstream ss(*v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) items.push_back(item);
        }
        return items;
    }

    void finish(const RawConfig& raw) const {
        auto it = raw.sections.find(name_);
        if (it == raw.sections.end()) return;
        for (const auto& [key, value] : it->second) {
            if (!seen_.count(key)) {
                throw ConfigError("[" + name_ + "] unknown key '" + key + "'");
            }
        }
    }

private:
    std::string name_;
    const std::map<std::string, std::string>* entries_ = nullptr;
    std::set<std::string> seen_;
};

Matrix concat_cols(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), a.cols() + b.cols());
    out.leftCols(a.cols()) = a;
    out.rightCols(b.cols()) = b;
    return out;
}

Vector concat(const Vector& a, const Vector& b) {
    Vector out(a.size() + b.size());
    out.head(a.size()) = a;
    out.tail(b.size()) = b;
    return out;
}

StandardizationStats identity_stats(int n) {
    StandardizationStats stats;
    stats.means = Vector::Zero(n);
    stats.scales = Vector::Ones(n);
    stats.target_mean = 0.0;
    stats.target_scale = 1.0;
    return stats;
}

} // namespace

void ExperimentConfig::validate() const {
    if (methods.empty()) throw ConfigError("methods must not be empty");
    for (const auto& m : methods) {
        if (!kKnownMethods.count(m)) {
            throw ConfigError("unknown method '" + m + "' (expected sddp, sdpca, pca, vanilla)");
        }
    }
    if (horizon < 1) throw ConfigError("horizon must be positive");
    if (window < 1) throw ConfigError("window must be positive");
    if (repetitions < 1) throw ConfigError("repetitions must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie in (0, 1)");
    }
    for (double r : missing_rates) {
        if (!(r >= 0.0 && r < 1.0)) throw ConfigError("missing rates must lie in [0, 1)");
    }
    if (missing_rates.empty()) throw ConfigError("missing_rates must not be empty");
    if (factors < 0) throw ConfigError("factors must be nonnegative (0 = auto)");
    if (kmax < 1) throw ConfigError("kmax must be positive");
    if (refinement_passes < 0) throw ConfigError("refinement_passes must be nonnegative");
    if (source == DataSource::Csv && csv_path.empty()) {
        throw ConfigError("[data] path is required for source = csv");
    }
    if (source == DataSource::Synthetic) synthetic.validate();
    net.validate();
    train.validate();
}

std::string ExperimentConfig::digest() const {
    ordered_json j;
    j["source"] = source == DataSource::Csv ? "csv" : "synthetic";
    j["csv_path"] = csv_path;
    j["target_column"] = target_column;
    j["delimiter"] = std::string(1, csv.delimiter);
    j["header"] = csv.header;
    j["mask_path"] = mask_path;
    j["synthetic"] = {
        {"n", synthetic.n},         {"t", synthetic.t},
        {"k", synthetic.k},         {"k1", synthetic.k1},
        {"q", synthetic.q},         {"nu", synthetic.nu},
        {"sigma_u", synthetic.sigma_u}, {"sigma_eps", synthetic.sigma_eps},
        {"zeta_scale", synthetic.zeta_scale},
        {"loading", to_string(synthetic.loading)},
        {"link", to_string(synthetic.link)},
        {"seed", synthetic.seed},
    };
    j["methods"] = methods;
    j["horizon"] = horizon;
    j["window"] = window;
    j["repetitions"] = repetitions;
    j["base_seed"] = base_seed;
    j["train_fraction"] = train_fraction;
    j["missing_rates"] = missing_rates;
    j["factors"] = factors;
    j["kmax"] = kmax;
    j["standardize"] = standardize;
    j["correlation_selection"] = correlation_selection;
    j["refinement_passes"] = refinement_passes;
    j["net"] = net_config_to_json(net);
    j["train"] = {
        {"learning_rate", train.learning_rate}, {"beta1", train.beta1},
        {"beta2", train.beta2},                 {"epsilon", train.epsilon},
        {"batch_size", train.batch_size},       {"max_epochs", train.max_epochs},
        {"patience", train.patience},           {"validation_fraction", train.validation_fraction},
    };
    return digest_string(j.dump());
}

ExperimentConfig parse_config_text(const std::string& text) {
    const RawConfig raw = parse_raw(text);
    for (const auto& [name, entries] : raw.sections) {
        (void)entries;
        if (name != "data" && name != "synthetic" && name != "experiment" && name != "net" &&
            name != "train" && name != "convergence") {
            throw ConfigError("unknown config section [" + name + "]");
        }
    }

    ExperimentConfig cfg;

    SectionReader data(raw, "data");
    const std::string source = data.text("source", "synthetic");
    if (source == "synthetic") {
        cfg.source = DataSource::Synthetic;
    } else if (source == "csv") {
        cfg.source = DataSource::Csv;
    } else {
        throw ConfigError("[data] source must be synthetic or csv");
    }
    cfg.csv_path = data.text("path", "");
    cfg.target_column = data.text("target", "y");
    const std::string delim = data.text("delimiter", ",");
    if (delim.size() != 1) throw ConfigError("[data] delimiter must be a single character");
    cfg.csv.delimiter = delim[0];
    cfg.csv.header = data.boolean("header", true);
    cfg.mask_path = data.text("mask", "");
    data.finish(raw);

    SectionReader syn(raw, "synthetic");
    cfg.synthetic.n = syn.integer("n", cfg.synthetic.n);
    cfg.synthetic.t = syn.integer("t", cfg.synthetic.t);
    cfg.synthetic.k = syn.integer("k", cfg.synthetic.k);
    cfg.synthetic.k1 = syn.integer("k1", cfg.synthetic.k1);
    cfg.synthetic.q = syn.integer("q", cfg.synthetic.q);
    cfg.synthetic.nu = syn.number("nu", cfg.synthetic.nu);
    cfg.synthetic.sigma_u = syn.number("sigma_u", cfg.synthetic.sigma_u);
    cfg.synthetic.sigma_eps = syn.number("sigma_eps", cfg.synthetic.sigma_eps);
    cfg.synthetic.zeta_scale = syn.number("zeta_scale", cfg.synthetic.zeta_scale);
    cfg.synthetic.loading = loading_kind_from_string(syn.text("loading", "linear"));
    cfg.synthetic.link = link_kind_from_string(syn.text("link", "linear"));
    cfg.synthetic.seed = syn.unsigned64("seed", cfg.synthetic.seed);
    syn.finish(raw);

    SectionReader exp(raw, "experiment");
    cfg.methods = exp.list("methods", cfg.methods);
    cfg.horizon = exp.integer("horizon", cfg.horizon);
    cfg.window = exp.integer("window", cfg.window);
    cfg.repetitions = exp.integer("repetitions", cfg.repetitions);
    cfg.base_seed = exp.unsigned64("base_seed", cfg.base_seed);
    cfg.train_fraction = exp.number("train_fraction", cfg.train_fraction);
    {
        std::vector<std::string> rates = exp.list("missing_rates", {});
        if (!rates.empty()) {
            cfg.missing_rates.clear();
            for (const auto& r : rates) {
                try {
                    cfg.missing_rates.push_back(std::stod(r));
                } catch (const std::exception&) {
                    throw ConfigError("[experiment] missing_rates: not a number: '" + r + "'");
                }
            }
        }
    }
    cfg.factors = exp.integer("factors", cfg.factors);
    cfg.kmax = exp.integer("kmax", cfg.kmax);
    cfg.standardize = exp.boolean("standardize", cfg.standardize);
    cfg.correlation_selection = exp.boolean("correlation_selection", cfg.correlation_selection);
    cfg.refinement_passes = exp.integer("refinement_passes", cfg.refinement_passes);
    exp.finish(raw);

    SectionReader net(raw, "net");
    cfg.net.architecture = architecture_from_string(net.text("architecture", "causal-conv"));
    cfg.net.blocks = net.integer("blocks", cfg.net.blocks);
    cfg.net.channel_width = net.integer("channels", cfg.net.channel_width);
    cfg.net.kernel = net.integer("kernel", cfg.net.kernel);
    net.finish(raw);

    SectionReader tr(raw, "train");
    cfg.train.learning_rate = tr.number("learning_rate", cfg.train.learning_rate);
    cfg.train.beta1 = tr.number("beta1", cfg.train.beta1);
    cfg.train.beta2 = tr.number("beta2", cfg.train.beta2);
    cfg.train.epsilon = tr.number("epsilon", cfg.train.epsilon);
    cfg.train.batch_size = tr.integer("batch_size", cfg.train.batch_size);
    cfg.train.max_epochs = tr.integer("max_epochs", cfg.train.max_epochs);
    cfg.train.patience = tr.integer("patience", cfg.train.patience);
    cfg.train.validation_fraction = tr.number("validation_fraction", cfg.train.validation_fraction);
    cfg.train.threads = tr.integer("threads", cfg.train.threads);
    tr.finish(raw);

    SectionReader conv(raw, "convergence");
    {
        std::vector<std::string> grid = conv.list("n_grid", {});
        if (!grid.empty()) {
            cfg.convergence_n_grid.clear();
            for (const auto& g : grid) {
                try {
                    cfg.convergence_n_grid.push_back(std::stoi(g));
                } catch (const std::exception&) {
                    throw ConfigError("[convergence] n_grid: not an integer: '" + g + "'");
                }
            }
        }
    }
    cfg.convergence_seeds = conv.integer("seeds", cfg.convergence_seeds);
    conv.finish(raw);

    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

// ---------------------------------------------------------------------------
// Pipeline fitting and forecasting.

PipelineModel fit_pipeline_standardized(const TimePanel& train_std, const Matrix* train_mask,
                                        const StandardizationStats& stats,
                                        const ExperimentConfig& cfg, const std::string& method,
                                        std::uint64_t cell_seed) {
    if (!kKnownMethods.count(method)) {
        throw ConfigError("unknown method '" + method + "'");
    }
    const int h = cfg.horizon;
    const int q0 = cfg.window;

    PipelineModel model;
    model.method = method;
    model.horizon = h;
    model.window = q0;
    model.refinement_passes = cfg.refinement_passes;
    model.standardized = cfg.standardize;
    model.stats = stats;
    model.config_digest = cfg.digest();

    TrainConfig tc = cfg.train;
    tc.seed = mix64(cell_seed, method_tag(method));

    Matrix factor_input; // stage-1 output feeding the factor extraction
    if (method == "sddp") {
        TargetAwarePanel ta;
        if (train_mask) {
            MaskedPanel view;
            view.panel = train_std;
            view.mask = *train_mask;
            ta = fit_target_aware_masked(view, h, q0, cfg.net, tc, cfg.refinement_passes);
        } else {
            ta = fit_target_aware(train_std, h, q0, cfg.net, tc);
        }
        model.regressors = std::move(ta.regressors);
        factor_input = std::move(ta.xstar);
    } else if (method == "sdpca") {
        auto [coef, ta] = fit_sdpca_linear(train_std, h, q0);
        model.sdpca = std::move(coef);
        factor_input = std::move(ta.xstar);
    } else if (method == "pca") {
        factor_input = train_std.values;
    }

    Matrix channels; // forecaster input channels over the training range
    if (method == "vanilla") {
        channels = train_std.values;
    } else {
        int k = cfg.factors;
        if (k <= 0) {
            const int kmax = std::min(cfg.kmax, train_std.n() / 2);
            if (kmax < 1) {
                throw DataError("panel too narrow for automatic factor selection");
            }
            const Vector spectrum = selection_spectrum(factor_input, cfg.correlation_selection);
            k = select_num_factors(spectrum, kmax).kstar;
        }
        const FactorSource tag = method == "pca"   ? FactorSource::Pca
                                 : method == "sdpca" ? FactorSource::Sdpca
                                                     : FactorSource::Sddp;
        model.factor_model = extract_factors(factor_input, k, tag);
        channels = model.factor_model.factors;
    }

    TrainConfig tc_forecast = tc;
    tc_forecast.seed = mix64(tc.seed, kForecasterSeedTag);
    model.forecaster = fit_forecaster(channels, train_std.target, h, q0, cfg.net, tc_forecast);
    if (cfg.standardize) {
        model.forecaster.target_stats = stats;
    }
    return model;
}

PipelineModel fit_pipeline(const TimePanel& panel, const Matrix* mask,
                           const ExperimentConfig& cfg, const std::string& method) {
    panel.validate();
    TimePanel panel_std = panel;
    StandardizationStats stats = identity_stats(panel.n());
    Matrix mask_copy;
    if (cfg.standardize) {
        if (mask) {
            MaskedPanel view;
            view.panel = panel;
            view.mask = *mask;
            auto [std_masked, s] = standardize_masked(view);
            panel_std = std::move(std_masked.panel);
            mask_copy = std_masked.mask;
            stats = std::move(s);
        } else {
            auto [std_panel, s] = standardize(panel);
            panel_std = std::move(std_panel);
            stats = std::move(s);
        }
    } else if (mask) {
        mask_copy = *mask;
        panel_std.values = panel.values.array() * mask->array(); // zero-fill missing
    }
    return fit_pipeline_standardized(panel_std, mask ? &mask_copy : nullptr, stats, cfg, method,
                                     cfg.base_seed);
}

Matrix pipeline_channels(const PipelineModel& model, const Matrix& values_std,
                         const Matrix* mask) {
    if (model.method == "vanilla") {
        return values_std;
    }
    Matrix factor_input;
    if (model.method == "sddp") {
        if (mask) {
            MaskedPanel view;
            view.panel.values = values_std;
            view.panel.target = Vector::Zero(values_std.cols());
            view.mask = *mask;
            factor_input = evaluate_target_aware_masked(model.regressors, view, model.window,
                                                        model.refinement_passes)
                               .first;
        } else {
            factor_input = evaluate_target_aware(model.regressors, values_std, model.window);
        }
    } else if (model.method == "sdpca") {
        factor_input = sdpca_fitted(model.sdpca, values_std);
    } else { // pca
        factor_input = values_std;
    }
    return model.factor_model.project(factor_input);
}

Vector pipeline_forecast(const PipelineModel& model, const TimePanel& raw, const Matrix* mask) {
    raw.validate();
    TimePanel panel_std = raw;
    Matrix mask_copy;
    if (model.standardized) {
        if (mask) {
            MaskedPanel view;
            view.panel = raw;
            view.mask = *mask;
            auto [std_masked, s] = standardize_masked(view, model.stats);
            (void)s;
            panel_std = std::move(std_masked.panel);
            mask_copy = std_masked.mask;
        } else {
            panel_std = standardize(raw, model.stats).first;
        }
    } else if (mask) {
        mask_copy = *mask;
        panel_std.values = raw.values.array() * mask->array();
    }
    const Matrix channels =
        pipeline_channels(model, panel_std.values, mask ? &mask_copy : nullptr);
    return predict(model.forecaster, channels, panel_std.target);
}

// ---------------------------------------------------------------------------
// Bundle serialization.

void save_bundle(const PipelineModel& model, const std::string& path) {
    ordered_json j;
    j["format"] = "sddp.bundle";
    j["version"] = kBundleFormatVersion;
    j["method"] = model.method;
    j["horizon"] = model.horizon;
    j["window"] = model.window;
    j["refinement_passes"] = model.refinement_passes;
    j["standardized"] = model.standardized;
    j["config_digest"] = model.config_digest;
    j["stats"] = stats_to_json(model.stats);
    ordered_json regs = ordered_json::array();
    for (const auto& reg : model.regressors) regs.push_back(regressor_to_json(reg));
    j["regressors"] = std::move(regs);
    j["sdpca"] = {
        {"gamma", matrix_to_json(model.sdpca.gamma)},
        {"intercepts", vector_to_json(model.sdpca.intercepts)},
        {"skipped", model.sdpca.skipped},
    };
    j["factor_model"] = {
        {"loadings", matrix_to_json(model.factor_model.loadings)},
        {"factors", matrix_to_json(model.factor_model.factors)},
        {"k", model.factor_model.k},
        {"eigenvalues", vector_to_json(model.factor_model.eigenvalues)},
        {"source", to_string(model.factor_model.source)},
    };
    j["forecaster"] = {
        {"net", regressor_to_json(model.forecaster.net)},
        {"horizon", model.forecaster.horizon},
        {"window", model.forecaster.window},
        {"factor_channels", model.forecaster.factor_channels},
        {"has_target_stats", model.forecaster.target_stats.has_value()},
    };
    if (model.forecaster.target_stats) {
        j["forecaster"]["target_stats"] = stats_to_json(*model.forecaster.target_stats);
    }

    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out << j.dump(2) << "\n";
}

PipelineModel load_bundle(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open bundle: " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw DataError("cannot parse bundle " + path + ": " + e.what());
    }
    if (j.value("format", "") != "sddp.bundle" ||
        j.value("version", -1) != kBundleFormatVersion) {
        throw DataError("unrecognized bundle format in " + path);
    }

    PipelineModel model;
    model.method = j.at("method").get<std::string>();
    model.horizon = j.at("horizon").get<int>();
    model.window = j.at("window").get<int>();
    model.refinement_passes = j.at("refinement_passes").get<int>();
    model.standardized = j.at("standardized").get<bool>();
    model.config_digest = j.at("config_digest").get<std::string>();
    model.stats = stats_from_json(j.at("stats"));
    for (const auto& r : j.at("regressors")) {
        model.regressors.push_back(regressor_from_json(r));
    }
    model.sdpca.gamma = matrix_from_json(j.at("sdpca").at("gamma"));
    model.sdpca.intercepts = vector_from_json(j.at("sdpca").at("intercepts"));
    model.sdpca.skipped = j.at("sdpca").at("skipped").get<std::vector<int>>();
    model.factor_model.loadings = matrix_from_json(j.at("factor_model").at("loadings"));
    model.factor_model.factors = matrix_from_json(j.at("factor_model").at("factors"));
    model.factor_model.k = j.at("factor_model").at("k").get<int>();
    model.factor_model.eigenvalues = vector_from_json(j.at("factor_model").at("eigenvalues"));
    model.factor_model.source =
        factor_source_from_string(j.at("factor_model").at("source").get<std::string>());
    model.forecaster.net = regressor_from_json(j.at("forecaster").at("net"));
    model.forecaster.horizon = j.at("forecaster").at("horizon").get<int>();
    model.forecaster.window = j.at("forecaster").at("window").get<int>();
    model.forecaster.factor_channels = j.at("forecaster").at("factor_channels").get<int>();
    if (j.at("forecaster").value("has_target_stats", false)) {
        model.forecaster.target_stats = stats_from_json(j.at("forecaster").at("target_stats"));
    }
    return model;
}

// ---------------------------------------------------------------------------
// Experiment runner.

namespace {

struct CellSpec {
    std::string method;
    int rate_index = 0;
    int repetition = 0;
};

CellResult run_cell(const ExperimentConfig& cfg, const TimePanel* csv_panel,
                    const CellSpec& spec) {
    CellResult result;
    result.method = spec.method;
    result.missing_rate = cfg.missing_rates[spec.rate_index];
    result.repetition = spec.repetition;

    const auto start = std::chrono::steady_clock::now();
    try {
        const std::uint64_t cell_seed = mix64(cfg.base_seed, spec.repetition);

        TimePanel panel;
        if (cfg.source == DataSource::Csv) {
            panel = *csv_panel;
        } else {
            SyntheticConfig syn = cfg.synthetic;
            syn.seed = mix64(cell_seed, kPanelSeedTag);
            panel = simulate(syn).panel;
        }

        auto [train_panel, test_panel] = chronological_split(panel, cfg.train_fraction);

        TimePanel train_std = train_panel, test_std = test_panel;
        StandardizationStats stats = identity_stats(panel.n());
        if (cfg.standardize) {
            auto [ts, s] = standardize(train_panel);
            train_std = std::move(ts);
            stats = std::move(s);
            test_std = standardize(test_panel, stats).first;
        }

        const double rate = cfg.missing_rates[spec.rate_index];
        std::optional<Matrix> train_mask, test_mask;
        if (rate > 0.0) {
            const MaskedPanel masked_train = inject_missing(
                train_std, rate, mix64(cell_seed, mix64(kMaskTrainTag, spec.rate_index)));
            const MaskedPanel masked_test = inject_missing(
                test_std, rate, mix64(cell_seed, mix64(kMaskTestTag, spec.rate_index)));
            result.realized_missing =
                (masked_train.realized_missing * train_std.t() +
                 masked_test.realized_missing * test_std.t()) /
                static_cast<double>(train_std.t() + test_std.t());
            train_mask = masked_train.mask;
            test_mask = masked_test.mask;
            train_std = masked_train.panel;
            test_std = masked_test.panel;
        }

        TrainConfig cell_tc = cfg.train;
        cell_tc.threads = 1; // cells already run concurrently
        ExperimentConfig cell_cfg = cfg;
        cell_cfg.train = cell_tc;

        const PipelineModel model = fit_pipeline_standardized(
            train_std, train_mask ? &*train_mask : nullptr, stats, cell_cfg, spec.method,
            cell_seed);
        result.kstar = model.method == "vanilla" ? 0 : model.factor_model.k;

        // Forecast over the concatenated series so early test windows see
        // real train history; score the test range only.
        const Matrix full_values = concat_cols(train_std.values, test_std.values);
        const Vector full_targets = concat(train_std.target, test_std.target);
        std::optional<Matrix> full_mask;
        if (train_mask) {
            full_mask = concat_cols(*train_mask, *test_mask);
        }
        const Matrix channels =
            pipeline_channels(model, full_values, full_mask ? &*full_mask : nullptr);
        const Vector preds = predict(model.forecaster, channels, full_targets);

        const int t_train = train_std.t();
        const int t_total = t_train + test_std.t();
        const int h = cfg.horizon;
        Vector test_preds(test_std.t());
        for (int s = t_train; s < t_total; ++s) {
            test_preds(s - t_train) = preds(s - h);
        }
        result.metric = metrics(test_preds, test_panel.target);
        result.ok = true;
    } catch (const ConfigError& e) {
        result.error = std::string("config error: ") + e.what();
    } catch (const DataError& e) {
        result.error = std::string("data error: ") + e.what();
    } catch (const NumericError& e) {
        result.error = std::string("numeric error: ") + e.what();
    }
    result.runtime_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

} // namespace

double empirical_percentile(std::vector<double> values, double percentile) {
    if (values.empty()) throw ShapeError("percentile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = percentile / 100.0 * static_cast<double>(values.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = static_cast<size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();

    TimePanel csv_panel;
    if (cfg.source == DataSource::Csv) {
        csv_panel = load_panel(cfg.csv_path, cfg.target_column, cfg.csv);
    }

    std::vector<CellSpec> specs;
    for (const auto& method : cfg.methods) {
        for (size_t ri = 0; ri < cfg.missing_rates.size(); ++ri) {
            for (int rep = 0; rep < cfg.repetitions; ++rep) {
                specs.push_back({method, static_cast<int>(ri), rep});
            }
        }
    }

    ExperimentReport report;
    report.config_digest = cfg.digest();
    report.base_seed = cfg.base_seed;
    report.repetitions = cfg.repetitions;
    report.methods = cfg.methods;
    report.missing_rates = cfg.missing_rates;
    report.cells.resize(specs.size());

    parallel_for(static_cast<int>(specs.size()), cfg.train.threads, [&](int i) {
        report.cells[i] = run_cell(cfg, cfg.source == DataSource::Csv ? &csv_panel : nullptr,
                                   specs[i]);
    });

    for (const auto& method : cfg.methods) {
        for (size_t ri = 0; ri < cfg.missing_rates.size(); ++ri) {
            Aggregate agg;
            agg.method = method;
            agg.missing_rate = cfg.missing_rates[ri];
            std::vector<double> maes, rmses;
            for (const auto& cell : report.cells) {
                if (cell.method == method && cell.ok &&
                    cell.missing_rate == cfg.missing_rates[ri]) {
                    maes.push_back(cell.metric.mae);
                    rmses.push_back(cell.metric.rmse);
                }
            }
            agg.count = static_cast<int>(maes.size());
            if (agg.count > 0) {
                agg.mean_mae = std::accumulate(maes.begin(), maes.end(), 0.0) / agg.count;
                agg.mean_rmse = std::accumulate(rmses.begin(), rmses.end(), 0.0) / agg.count;
                agg.mae_lo = empirical_percentile(maes, 2.5);
                agg.mae_hi = empirical_percentile(maes, 97.5);
                agg.rmse_lo = empirical_percentile(rmses, 2.5);
                agg.rmse_hi = empirical_percentile(rmses, 97.5);
            }
            report.aggregates.push_back(agg);
        }
    }
    return report;
}

void write_report(const ExperimentReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    ordered_json j;
    j["format"] = "sddp.report";
    j["version"] = kReportFormatVersion;
    j["config_digest"] = report.config_digest;
    j["base_seed"] = report.base_seed;
    j["repetitions"] = report.repetitions;
    j["methods"] = report.methods;
    j["missing_rates"] = report.missing_rates;

    ordered_json cells = ordered_json::array();
    for (const auto& cell : report.cells) {
        ordered_json c;
        c["method"] = cell.method;
        c["missing_rate"] = cell.missing_rate;
        c["repetition"] = cell.repetition;
        c["ok"] = cell.ok;
        if (cell.ok) {
            c["mae"] = cell.metric.mae;
            c["rmse"] = cell.metric.rmse;
            c["kstar"] = cell.kstar;
            c["realized_missing"] = cell.realized_missing;
        } else {
            c["error"] = cell.error;
        }
        cells.push_back(std::move(c));
    }
    j["cells"] = std::move(cells);

    ordered_json aggs = ordered_json::array();
    for (const auto& agg : report.aggregates) {
        ordered_json a;
        a["method"] = agg.method;
        a["missing_rate"] = agg.missing_rate;
        a["count"] = agg.count;
        a["mean_mae"] = agg.mean_mae;
        a["mae_interval"] = {agg.mae_lo, agg.mae_hi};
        a["mean_rmse"] = agg.mean_rmse;
        a["rmse_interval"] = {agg.rmse_lo, agg.rmse_hi};
        aggs.push_back(std::move(a));
    }
    j["aggregates"] = std::move(aggs);

    std::ofstream out(fs::path(dir) / "report.json");
    if (!out) throw DataError("cannot write report.json in " + dir);
    out << j.dump(2) << "\n";

    std::ofstream csv(fs::path(dir) / "report.csv");
    if (!csv) throw DataError("cannot write report.csv in " + dir);
    csv << "method,missing_rate,repetition,ok,mae,rmse,kstar,realized_missing,error\n";
    csv.precision(17);
    for (const auto& cell : report.cells) {
        csv << cell.method << "," << cell.missing_rate << "," << cell.repetition << ","
            << (cell.ok ? 1 : 0) << ",";
        if (cell.ok) {
            csv << cell.metric.mae << "," << cell.metric.rmse << "," << cell.kstar << ","
                << cell.realized_missing << ",";
        } else {
            csv << ",,,,";
        }
        std::string msg = cell.error;
        std::replace(msg.begin(), msg.end(), ',', ';');
        csv << msg << "\n";
    }

    // Wall-clock data is not reproducible, so it lives in a sidecar and the
    // canonical report stays byte-identical across reruns.
    std::ofstream runtimes(fs::path(dir) / "runtimes.csv");
    if (!runtimes) throw DataError("cannot write runtimes.csv in " + dir);
    runtimes << "method,missing_rate,repetition,runtime_sec\n";
    for (const auto& cell : report.cells) {
        runtimes << cell.method << "," << cell.missing_rate << "," << cell.repetition << ","
                 << cell.runtime_sec << "\n";
    }
}

void write_matrix_csv(const Matrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out.precision(17);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) out << ",";
            out << m(r, c);
        }
        out << "\n";
    }
}

} // namespace sddp
