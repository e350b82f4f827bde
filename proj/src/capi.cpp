#include "sddp/sddp_c.h"

#include <filesystem>
#include <fstream>
#include <string>

#include "sddp/experiment.hpp"
#include "sddp/serialize.hpp"

namespace {

thread_local std::string g_last_error;

// Handles own a masked panel; a full panel is an all-ones mask.
struct PanelHandle {
    sddp::MaskedPanel masked;
};

struct ModelHandle {
    sddp::PipelineModel model;
};

sddp_status to_status(const std::exception& e) noexcept {
    g_last_error = e.what();
    if (dynamic_cast<const sddp::ConfigError*>(&e)) return SDDP_ERR_CONFIG;
    if (dynamic_cast<const sddp::DataError*>(&e)) return SDDP_ERR_DATA;
    if (dynamic_cast<const sddp::NumericError*>(&e)) return SDDP_ERR_NUMERIC;
    return SDDP_ERR_NUMERIC;
}

template <typename Fn>
sddp_status guarded(Fn&& fn) noexcept {
    try {
        fn();
        return SDDP_OK;
    } catch (const std::exception& e) {
        return to_status(e);
    } catch (...) {
        g_last_error = "unknown error";
        return SDDP_ERR_NUMERIC;
    }
}

sddp_status require(bool ok, const char* message) noexcept {
    if (!ok) {
        g_last_error = message;
        return SDDP_ERR_CONFIG;
    }
    return SDDP_OK;
}

char parse_delimiter(const char* delimiter) {
    if (delimiter == nullptr || delimiter[0] == '\0') return ',';
    if (delimiter[1] != '\0') {
        throw sddp::ConfigError("delimiter must be a single character");
    }
    return delimiter[0];
}

PanelHandle* wrap_full(sddp::TimePanel panel) {
    auto* h = new PanelHandle;
    h->masked.mask = sddp::Matrix::Ones(panel.n(), panel.t());
    h->masked.panel = std::move(panel);
    h->masked.realized_missing = 0.0;
    return h;
}

const sddp::Matrix* mask_or_null(const PanelHandle* h) {
    return h->masked.realized_missing > 0.0 ? &h->masked.mask : nullptr;
}

} // namespace

extern "C" {

const char* sddp_last_error(void) {
    return g_last_error.c_str();
}

const char* sddp_version(void) {
    return "sddp 1.0.0";
}

sddp_status sddp_panel_load(const char* path, const char* target_column,
                            const char* delimiter, int has_header, sddp_panel** out) {
    if (auto bad = require(path && target_column && out, "null argument")) return bad;
    return guarded([&] {
        sddp::CsvOptions options;
        options.delimiter = parse_delimiter(delimiter);
        options.header = has_header != 0;
        *out = reinterpret_cast<sddp_panel*>(
            wrap_full(sddp::load_panel(path, target_column, options)));
    });
}

sddp_status sddp_panel_load_masked(const char* path, const char* mask_path,
                                   const char* target_column, const char* delimiter,
                                   int has_header, sddp_panel** out) {
    if (auto bad = require(path && target_column && out, "null argument")) return bad;
    return guarded([&] {
        sddp::CsvOptions options;
        options.delimiter = parse_delimiter(delimiter);
        options.header = has_header != 0;
        std::optional<std::string> sidecar;
        if (mask_path && mask_path[0]) sidecar = mask_path;
        auto* h = new PanelHandle;
        h->masked = sddp::load_masked_panel(path, target_column, options, sidecar);
        *out = reinterpret_cast<sddp_panel*>(h);
    });
}

sddp_status sddp_panel_save(const sddp_panel* panel, const char* path) {
    if (auto bad = require(panel && path, "null argument")) return bad;
    return guarded([&] {
        const auto* h = reinterpret_cast<const PanelHandle*>(panel);
        sddp::write_panel(h->masked.panel, path);
    });
}

sddp_status sddp_panel_save_masked(const sddp_panel* panel, const char* path,
                                   const char* mask_path) {
    if (auto bad = require(panel && path && mask_path, "null argument")) return bad;
    return guarded([&] {
        const auto* h = reinterpret_cast<const PanelHandle*>(panel);
        sddp::write_masked_panel(h->masked, path, mask_path);
    });
}

sddp_status sddp_panel_dims(const sddp_panel* panel, int* n_out, int* t_out) {
    if (auto bad = require(panel && n_out && t_out, "null argument")) return bad;
    const auto* h = reinterpret_cast<const PanelHandle*>(panel);
    *n_out = h->masked.panel.n();
    *t_out = h->masked.panel.t();
    return SDDP_OK;
}

sddp_status sddp_panel_missing_fraction(const sddp_panel* panel, double* out) {
    if (auto bad = require(panel && out, "null argument")) return bad;
    *out = reinterpret_cast<const PanelHandle*>(panel)->masked.realized_missing;
    return SDDP_OK;
}

sddp_status sddp_panel_split(const sddp_panel* panel, double train_fraction,
                             sddp_panel** train_out, sddp_panel** test_out) {
    if (auto bad = require(panel && train_out && test_out, "null argument")) return bad;
    return guarded([&] {
        const auto* h = reinterpret_cast<const PanelHandle*>(panel);
        auto [train, test] = sddp::chronological_split(h->masked.panel, train_fraction);
        const int t_train = train.t();
        auto* ht = new PanelHandle;
        ht->masked.panel = std::move(train);
        ht->masked.mask = h->masked.mask.leftCols(t_train);
        auto* he = new PanelHandle;
        he->masked.panel = std::move(test);
        he->masked.mask = h->masked.mask.rightCols(h->masked.panel.t() - t_train);
        for (PanelHandle* hh : {ht, he}) {
            const double total = static_cast<double>(hh->masked.mask.size());
            hh->masked.realized_missing = (total - hh->masked.mask.sum()) / total;
        }
        *train_out = reinterpret_cast<sddp_panel*>(ht);
        *test_out = reinterpret_cast<sddp_panel*>(he);
    });
}

sddp_status sddp_panel_inject_missing(const sddp_panel* panel, double rate, uint64_t seed,
                                      sddp_panel** out) {
    if (auto bad = require(panel && out, "null argument")) return bad;
    return guarded([&] {
        const auto* h = reinterpret_cast<const PanelHandle*>(panel);
        auto* hm = new PanelHandle;
        hm->masked = sddp::inject_missing(h->masked.panel, rate, seed);
        *out = reinterpret_cast<sddp_panel*>(hm);
    });
}

void sddp_panel_free(sddp_panel* panel) {
    delete reinterpret_cast<PanelHandle*>(panel);
}

sddp_status sddp_train_file(const char* config_path, const char* bundle_path) {
    if (auto bad = require(config_path && bundle_path, "null argument")) return bad;
    return guarded([&] {
        const sddp::ExperimentConfig cfg = sddp::parse_config_file(config_path);
        sddp::TimePanel panel;
        std::optional<sddp::Matrix> mask;
        if (cfg.source == sddp::DataSource::Csv) {
            if (!cfg.mask_path.empty()) {
                sddp::MaskedPanel mp = sddp::load_masked_panel(
                    cfg.csv_path, cfg.target_column, cfg.csv, cfg.mask_path);
                panel = mp.panel;
                if (mp.realized_missing > 0.0) mask = mp.mask;
            } else {
                panel = sddp::load_panel(cfg.csv_path, cfg.target_column, cfg.csv);
            }
        } else {
            sddp::SyntheticConfig syn = cfg.synthetic;
            syn.seed = sddp::mix64(cfg.base_seed, syn.seed);
            panel = sddp::simulate(syn).panel;
        }
        const sddp::PipelineModel model =
            sddp::fit_pipeline(panel, mask ? &*mask : nullptr, cfg, cfg.methods.front());
        sddp::save_bundle(model, bundle_path);
    });
}

sddp_status sddp_model_load(const char* bundle_path, sddp_model** out) {
    if (auto bad = require(bundle_path && out, "null argument")) return bad;
    return guarded([&] {
        auto* h = new ModelHandle;
        h->model = sddp::load_bundle(bundle_path);
        *out = reinterpret_cast<sddp_model*>(h);
    });
}

sddp_status sddp_model_save(const sddp_model* model, const char* bundle_path) {
    if (auto bad = require(model && bundle_path, "null argument")) return bad;
    return guarded([&] {
        sddp::save_bundle(reinterpret_cast<const ModelHandle*>(model)->model, bundle_path);
    });
}

sddp_status sddp_forecast_values(const sddp_model* model, const sddp_panel* panel,
                                 double* predictions, int capacity, int* written) {
    if (auto bad = require(model && panel && predictions && written, "null argument")) return bad;
    return guarded([&] {
        const auto* hm = reinterpret_cast<const ModelHandle*>(model);
        const auto* hp = reinterpret_cast<const PanelHandle*>(panel);
        if (hp->masked.panel.t() > capacity) {
            throw sddp::ConfigError("prediction buffer too small");
        }
        const sddp::Vector preds =
            sddp::pipeline_forecast(hm->model, hp->masked.panel, mask_or_null(hp));
        for (int i = 0; i < preds.size(); ++i) predictions[i] = preds(i);
        *written = static_cast<int>(preds.size());
    });
}

sddp_status sddp_forecast(const sddp_model* model, const sddp_panel* panel,
                          const char* out_csv) {
    if (auto bad = require(model && panel && out_csv, "null argument")) return bad;
    return guarded([&] {
        const auto* hm = reinterpret_cast<const ModelHandle*>(model);
        const auto* hp = reinterpret_cast<const PanelHandle*>(panel);
        const sddp::Vector preds =
            sddp::pipeline_forecast(hm->model, hp->masked.panel, mask_or_null(hp));
        std::ofstream out(out_csv);
        if (!out) throw sddp::DataError(std::string("cannot open file for writing: ") + out_csv);
        out << "t,prediction\n";
        out.precision(17);
        for (int i = 0; i < preds.size(); ++i) {
            out << (i + 1) << "," << preds(i) << "\n";
        }
    });
}

void sddp_model_free(sddp_model* model) {
    delete reinterpret_cast<ModelHandle*>(model);
}

sddp_status sddp_simulate_files(const char* config_path, const char* out_dir) {
    if (auto bad = require(config_path && out_dir, "null argument")) return bad;
    return guarded([&] {
        namespace fs = std::filesystem;
        const sddp::ExperimentConfig cfg = sddp::parse_config_file(config_path);
        const sddp::SyntheticTruth truth = sddp::simulate(cfg.synthetic);
        fs::create_directories(out_dir);
        sddp::write_panel(truth.panel, (fs::path(out_dir) / "panel.csv").string());
        sddp::write_matrix_csv(truth.f, (fs::path(out_dir) / "factors.csv").string());
        sddp::write_matrix_csv(truth.gstar_true,
                               (fs::path(out_dir) / "gstar_true.csv").string());
        sddp::write_matrix_csv(truth.common, (fs::path(out_dir) / "common.csv").string());

        nlohmann::ordered_json meta;
        meta["format"] = "sddp.truth";
        meta["version"] = 1;
        meta["n"] = truth.config.n;
        meta["t"] = truth.config.t;
        meta["k"] = truth.config.k;
        meta["k1"] = truth.config.k1;
        meta["q"] = truth.config.q;
        meta["nu"] = truth.config.nu;
        meta["sigma_u"] = truth.config.sigma_u;
        meta["sigma_eps"] = truth.config.sigma_eps;
        meta["zeta_scale"] = truth.config.zeta_scale;
        meta["loading"] = to_string(truth.config.loading);
        meta["link"] = to_string(truth.config.link);
        meta["seed"] = truth.config.seed;
        meta["beta"] = sddp::matrix_to_json(truth.beta);
        std::ofstream mout(fs::path(out_dir) / "truth.json");
        if (!mout) throw sddp::DataError("cannot write truth.json");
        mout << meta.dump(2) << "\n";
    });
}

sddp_status sddp_evaluate_files(const char* config_path, const char* out_dir) {
    if (auto bad = require(config_path && out_dir, "null argument")) return bad;
    return guarded([&] {
        const sddp::ExperimentConfig cfg = sddp::parse_config_file(config_path);
        const sddp::ExperimentReport report = sddp::run_experiment(cfg);
        sddp::write_report(report, out_dir);
    });
}

sddp_status sddp_normalize_files(const char* table_csv, const char* out_dir) {
    if (auto bad = require(table_csv && out_dir, "null argument")) return bad;
    return guarded([&] {
        namespace fs = std::filesystem;
        const sddp::ErrorTable table = sddp::load_error_table(table_csv);
        const sddp::NormalizedErrors result = sddp::cumulative_normalized_error(table);
        fs::create_directories(out_dir);
        sddp::write_error_table(result.normalized,
                                (fs::path(out_dir) / "normalized.csv").string());
        sddp::write_nce(table.methods, result.nce, (fs::path(out_dir) / "nce.csv").string());
        if (!result.degenerate_columns.empty()) {
            std::ofstream flags(fs::path(out_dir) / "degenerate_columns.txt");
            for (const auto& col : result.degenerate_columns) flags << col << "\n";
        }
    });
}

sddp_status sddp_convergence_files(const char* config_path, const char* out_dir) {
    if (auto bad = require(config_path && out_dir, "null argument")) return bad;
    return guarded([&] {
        namespace fs = std::filesystem;
        const sddp::ExperimentConfig cfg = sddp::parse_config_file(config_path);

        std::vector<std::uint64_t> seeds;
        for (int s = 0; s < cfg.convergence_seeds; ++s) {
            seeds.push_back(sddp::mix64(cfg.base_seed, s));
        }
        sddp::NetConfig net = cfg.net;
        const sddp::ConvergenceStudy study = sddp::convergence_study(
            cfg.synthetic, cfg.convergence_n_grid, seeds, net, cfg.train, cfg.horizon);

        fs::create_directories(out_dir);
        std::ofstream csv(fs::path(out_dir) / "study.csv");
        if (!csv) throw sddp::DataError("cannot write study.csv");
        csv << "n,seed,residual,canonical_correlations,runtime_sec\n";
        csv.precision(17);
        for (const auto& cell : study.cells) {
            csv << cell.n << "," << cell.seed << "," << cell.residual << ",";
            for (int i = 0; i < cell.canonical_correlations.size(); ++i) {
                if (i) csv << ";";
                csv << cell.canonical_correlations(i);
            }
            csv << "," << cell.runtime_sec << "\n";
        }

        nlohmann::ordered_json summary;
        summary["format"] = "sddp.convergence";
        summary["version"] = 1;
        summary["n_grid"] = study.n_grid;
        summary["mean_residual"] = sddp::vector_to_json(study.mean_residual);
        summary["std_residual"] = sddp::vector_to_json(study.std_residual);
        summary["spearman_residual_vs_n"] = study.spearman;
        std::ofstream sout(fs::path(out_dir) / "summary.json");
        if (!sout) throw sddp::DataError("cannot write summary.json");
        sout << summary.dump(2) << "\n";
    });
}

} // extern "C"
