#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sddp/net.hpp"
#include "sddp/panel.hpp"

namespace sddp {

/// Panel of target-aware predictors: row i of xstar holds the trained
/// regressor's output on predictor i's lag window at every t.
struct TargetAwarePanel {
    Matrix xstar;                              // N x T
    std::vector<TemporalRegressor> regressors; // one per predictor
    int horizon = 1;                           // h
    int window = 1;                            // q0
    std::optional<Matrix> imputed;             // masked variant only
    std::vector<int> skipped;                  // predictors that could not be fit
};

/// Per-predictor least-squares coefficients of the linear (sdPCA) variant:
/// gamma(i, j) multiplies lag j of predictor i.
struct SdpcaCoefficients {
    Matrix gamma;      // N x q0
    Vector intercepts; // N
    std::vector<int> skipped;
};

struct WindowSet {
    std::vector<Matrix> windows; // one 1 x q0 window per t, newest entry last
    std::vector<int> observed;   // in-window observed counts (mask variant)
};

/// Lag windows for every t = 0..T-1: entries max(0, t-q0+1)..t, newest
/// last, left-zero-padded to length q0. With a mask row, masked positions
/// are zero-filled and counted out of `observed`.
WindowSet build_windows(const Vector& series, int q0, const Vector* mask_row = nullptr);

/// Multichannel variant used by the forecaster: one C x q0 window per t.
std::vector<Matrix> build_multichannel_windows(const Matrix& channels, int q0);

/// Algorithm Step 1: trains one temporal regressor per predictor against
/// y_{t+h} on that predictor's lag windows, then evaluates it at every t
/// (including the last h positions, which have no training target).
/// A predictor whose training diverges is retried once at a tenth of the
/// learning rate and zeroed out (with a skip flag) if it diverges again.
TargetAwarePanel fit_target_aware(const TimePanel& panel, int h, int q0,
                                  const NetConfig& net, const TrainConfig& tc);

/// Masked variant: training weights are the per-timestamp mask values, so
/// only observed current entries contribute to the loss; missing lags are
/// zero-filled on pass 0. Each refinement pass re-evaluates the fixed
/// regressors on windows rebuilt from the imputed panel. A predictor with
/// fewer than q0+2 observed training samples is skipped.
TargetAwarePanel fit_target_aware_masked(const MaskedPanel& mpanel, int h, int q0,
                                         const NetConfig& net, const TrainConfig& tc,
                                         int refinement_passes = 1);

/// Linear special case: per-predictor ordinary least squares of y_{t+h} on
/// the q0 lags (complete windows only), solved by normal equations with a
/// 1e-10 ridge jitter when singular. Fitted values are evaluated at all t.
std::pair<SdpcaCoefficients, TargetAwarePanel> fit_sdpca_linear(const TimePanel& panel,
                                                                int h, int q0);

/// Test-time evaluation of already-trained regressors on a new panel.
Matrix evaluate_target_aware(const std::vector<TemporalRegressor>& regressors,
                             const Matrix& values, int q0);

/// Masked test-time evaluation with the same zero-fill + refinement scheme
/// as the masked fit. Returns (xstar, imputed).
std::pair<Matrix, Matrix> evaluate_target_aware_masked(
    const std::vector<TemporalRegressor>& regressors, const MaskedPanel& mpanel, int q0,
    int refinement_passes);

/// Fitted values of the linear coefficients on a new panel (zero-padded
/// lags at the boundary).
Matrix sdpca_fitted(const SdpcaCoefficients& coef, const Matrix& values);

// Directory serialization: xstar.csv, manifest.json, regressors.json.
void save_target_aware(const TargetAwarePanel& panel, const std::string& dir,
                       std::uint64_t seed);
TargetAwarePanel load_target_aware(const std::string& dir);

} // namespace sddp
