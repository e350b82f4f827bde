#pragma once

#include <string>
#include <vector>

#include "sddp/linalg.hpp"

namespace sddp {

struct MetricPair {
    double mae = 0.0;
    double rmse = 0.0;
};

/// MAE and RMSE over a prediction/target pair.
MetricPair metrics(const Vector& predictions, const Vector& targets);

struct NormalizedColumn {
    Vector values;          // best method -> 0, worst -> 1
    bool degenerate = false; // max == min: all zeros, flagged
};

/// Min-max normalization of one error column across methods.
NormalizedColumn minmax_normalize(const Vector& column);

/// Method x dataset grid of error pairs (the published-table layout).
struct ErrorTable {
    std::vector<std::string> methods;
    std::vector<std::string> datasets;
    std::vector<std::vector<MetricPair>> entries; // [method][dataset]

    void validate() const;
};

struct NormalizedErrors {
    ErrorTable normalized;                        // same grid, normalized entries
    Vector nce;                                   // per-method cumulative normalized error
    std::vector<std::string> degenerate_columns;  // "<dataset>:<metric>" labels
};

/// Normalizes each (dataset, metric) column independently and sums each
/// method's normalized MAE and RMSE across datasets. Lower is better.
NormalizedErrors cumulative_normalized_error(const ErrorTable& table);

/// CSV schema: header `method,<ds>_mae,<ds>_rmse,...`; one row per method.
ErrorTable load_error_table(const std::string& path);
void write_error_table(const ErrorTable& table, const std::string& path);
void write_nce(const std::vector<std::string>& methods, const Vector& nce,
               const std::string& path);

} // namespace sddp
