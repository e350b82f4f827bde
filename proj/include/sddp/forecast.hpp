#pragma once

#include <optional>

#include "sddp/factors.hpp"
#include "sddp/net.hpp"
#include "sddp/panel.hpp"

namespace sddp {

/// Factor-augmented forecaster: a temporal regressor on K factor channels
/// stacked over one lagged-target channel, trained against y_{t+h}.
/// Predictions are inverse-transformed with the training target stats when
/// present.
struct ForecastModel {
    TemporalRegressor net; // input_channels = K + 1
    int horizon = 1;       // h
    int window = 1;        // q0
    int factor_channels = 0;
    std::optional<StandardizationStats> target_stats;
};

/// Algorithm Step 3: fits the forecaster on training-range factors and
/// (standardized) targets. K = 0 is rejected; the vanilla path covers the
/// no-factor case with raw covariate channels.
ForecastModel fit_forecaster(const Matrix& factors, const Vector& targets, int h, int q0,
                             const NetConfig& net, const TrainConfig& tc);

/// Forecasts ŷ_{t+h} for every t of the supplied series. The forecast at
/// index t uses only inputs at times <= t; output is on the original target
/// scale when the model carries stats.
Vector predict(const ForecastModel& model, const Matrix& factors, const Vector& targets);

/// Baseline that feeds all raw covariates (plus the lagged target) into the
/// net without dimension reduction.
ForecastModel fit_vanilla(const TimePanel& panel, int h, int q0, const NetConfig& net,
                          const TrainConfig& tc);

} // namespace sddp
