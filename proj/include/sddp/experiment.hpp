#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sddp/factors.hpp"
#include "sddp/forecast.hpp"
#include "sddp/metrics.hpp"
#include "sddp/net.hpp"
#include "sddp/panel.hpp"
#include "sddp/simulate.hpp"
#include "sddp/target_aware.hpp"

namespace sddp {

enum class DataSource { Synthetic, Csv };

/// Parsed experiment configuration (the sectioned key=value file format).
/// Unknown sections or keys are errors.
struct ExperimentConfig {
    // [data]
    DataSource source = DataSource::Synthetic;
    std::string csv_path;
    std::string target_column = "y";
    CsvOptions csv;
    std::string mask_path; // optional sidecar for masked CSV input

    // [synthetic]
    SyntheticConfig synthetic;

    // [experiment]
    std::vector<std::string> methods = {"sddp"};
    int horizon = 1;
    int window = 8;
    int repetitions = 10;
    std::uint64_t base_seed = 42;
    double train_fraction = 0.8;
    std::vector<double> missing_rates = {0.0};
    int factors = 0; // 0 = select by the eigenvalue-ratio rule
    int kmax = 15;
    bool standardize = true;
    bool correlation_selection = false;
    int refinement_passes = 1;

    // [net] and [train]
    NetConfig net;
    TrainConfig train;

    // [convergence]
    std::vector<int> convergence_n_grid = {25, 50, 100, 200};
    int convergence_seeds = 10;

    void validate() const;
    std::string digest() const; // hash of the canonical serialization
};

ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

/// Complete fitted pipeline for one method, sufficient to reproduce any
/// forecast bit-exactly.
struct PipelineModel {
    std::string method; // sddp | sdpca | pca | vanilla
    int horizon = 1;
    int window = 8;
    int refinement_passes = 1;
    bool standardized = true;
    StandardizationStats stats;
    std::vector<TemporalRegressor> regressors; // sddp stage 1
    SdpcaCoefficients sdpca;                   // sdpca stage 1
    FactorModel factor_model;                  // all but vanilla
    ForecastModel forecaster;
    std::string config_digest;
};

/// Fits stage 1-3 on an already-standardized training panel. `train_mask`
/// selects the masked variants (null = fully observed).
PipelineModel fit_pipeline_standardized(const TimePanel& train_std, const Matrix* train_mask,
                                        const StandardizationStats& stats,
                                        const ExperimentConfig& cfg, const std::string& method,
                                        std::uint64_t cell_seed);

/// Fits a pipeline on a raw (unstandardized) panel; used by the train CLI.
PipelineModel fit_pipeline(const TimePanel& panel, const Matrix* mask,
                           const ExperimentConfig& cfg, const std::string& method);

/// Input channels for the forecaster on arbitrary standardized values.
Matrix pipeline_channels(const PipelineModel& model, const Matrix& values_std,
                         const Matrix* mask);

/// End-to-end forecasts from a raw panel: standardizes with the stored
/// stats, rebuilds channels, and returns original-scale predictions of
/// y_{t+h}, one per input position t.
Vector pipeline_forecast(const PipelineModel& model, const TimePanel& raw, const Matrix* mask);

void save_bundle(const PipelineModel& model, const std::string& path);
PipelineModel load_bundle(const std::string& path);

struct CellResult {
    std::string method;
    double missing_rate = 0.0;
    int repetition = 0;
    bool ok = false;
    std::string error;
    MetricPair metric;
    double realized_missing = 0.0;
    int kstar = 0;
    double runtime_sec = 0.0; // reported in the sidecar only
};

struct Aggregate {
    std::string method;
    double missing_rate = 0.0;
    int count = 0; // successful repetitions
    double mean_mae = 0.0, mae_lo = 0.0, mae_hi = 0.0;
    double mean_rmse = 0.0, rmse_lo = 0.0, rmse_hi = 0.0;
};

struct ExperimentReport {
    std::string config_digest;
    std::uint64_t base_seed = 0;
    int repetitions = 0;
    std::vector<std::string> methods;
    std::vector<double> missing_rates;
    std::vector<CellResult> cells;    // fixed (method, rate, repetition) order
    std::vector<Aggregate> aggregates;
};

/// Runs the repetition grid: every cell reseeds all streams from
/// (base_seed, repetition), runs split -> standardize -> (optional mask) ->
/// pipeline -> metrics. Cells may execute concurrently; results are
/// identical regardless of scheduling. Failed cells are recorded, not fatal.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Writes report.json (byte-deterministic for a fixed config and seed),
/// report.csv, and runtimes.csv (wall-clock sidecar) into `dir`.
void write_report(const ExperimentReport& report, const std::string& dir);

/// Empirical percentile with linear interpolation (quantile type 7).
double empirical_percentile(std::vector<double> values, double percentile);

void write_matrix_csv(const Matrix& m, const std::string& path);

} // namespace sddp
