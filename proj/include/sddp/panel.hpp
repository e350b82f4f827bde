#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sddp/linalg.hpp"

namespace sddp {

/// Observed predictor panel: row i of `values` is predictor i over time,
/// `target` is the forecast series on the same time axis.
struct TimePanel {
    Matrix values;                  // N x T
    Vector target;                  // T
    std::vector<std::string> names; // empty or one label per predictor
    std::optional<int> horizon_hint;

    int n() const { return static_cast<int>(values.rows()); }
    int t() const { return static_cast<int>(values.cols()); }

    /// Checks the construction invariants (finite entries, matching sizes).
    void validate() const;
};

/// Panel with partially observed covariates. mask(i,t)=1 means observed;
/// missing cells hold 0 in `panel.values` so the math path stays NaN-free.
/// The target is always fully observed.
struct MaskedPanel {
    TimePanel panel;
    Matrix mask;                    // N x T, entries in {0,1}
    double realized_missing = 0.0;  // fraction of covariate cells masked

    void validate() const;
};

struct StandardizationStats {
    Vector means;   // length N
    Vector scales;  // length N, strictly positive
    double target_mean = 0.0;
    double target_scale = 1.0;
    std::vector<int> degenerate_rows; // zero-variance predictors, scale forced to 1
    bool target_degenerate = false;
};

struct CsvOptions {
    char delimiter = ',';
    bool header = true;
};

/// Loads a panel from CSV: one row per time point, columns = target plus
/// predictors. `target_column` is a header name, or a 0-based column index
/// when there is no header (or the name parses as an index).
TimePanel load_panel(const std::string& path, const std::string& target_column,
                     const CsvOptions& options = {});

void write_panel(const TimePanel& panel, const std::string& path,
                 const CsvOptions& options = {});

/// Masked loader: empty cells become missing covariates. When `mask_path`
/// is given, the sidecar mask file (same shape, cells in {0,1}) overrides;
/// cells that are empty in the CSV must be 0 in the sidecar.
MaskedPanel load_masked_panel(const std::string& path, const std::string& target_column,
                              const CsvOptions& options = {},
                              const std::optional<std::string>& mask_path = std::nullopt);

void write_masked_panel(const MaskedPanel& mpanel, const std::string& path,
                        const std::string& mask_path, const CsvOptions& options = {});

/// Chronological train/test split: train takes the first
/// floor(train_fraction * T) columns, test the remainder. No shuffling.
std::pair<TimePanel, TimePanel> chronological_split(const TimePanel& panel,
                                                    double train_fraction);

/// Per-row z-scoring. Without `stats`, moments are computed from the panel
/// (std with n-1 denominator); zero-variance rows get scale 1 and a
/// degenerate flag. With `stats`, the supplied transform is applied
/// (test-set transform uses train-set stats).
std::pair<TimePanel, StandardizationStats> standardize(
    const TimePanel& panel, const std::optional<StandardizationStats>& stats = std::nullopt);

/// Inverse of standardize.
TimePanel destandardize(const TimePanel& panel, const StandardizationStats& stats);

/// Masked variant: moments over observed cells only; missing cells stay 0.
std::pair<MaskedPanel, StandardizationStats> standardize_masked(
    const MaskedPanel& mpanel, const std::optional<StandardizationStats>& stats = std::nullopt);

/// MCAR corruption: masks each covariate cell independently with
/// probability `rate`, deterministically in `seed`. The target is never
/// masked.
MaskedPanel inject_missing(const TimePanel& panel, double rate, std::uint64_t seed);

} // namespace sddp
