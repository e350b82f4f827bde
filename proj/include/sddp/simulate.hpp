#pragma once

#include <string>
#include <vector>

#include "sddp/factors.hpp"
#include "sddp/net.hpp"
#include "sddp/panel.hpp"

namespace sddp {

enum class LoadingKind { Linear, Nonlinear };
enum class LinkKind { Linear, Quadratic, Sine };

std::string to_string(LoadingKind k);
std::string to_string(LinkKind k);
LoadingKind loading_kind_from_string(const std::string& s);
LinkKind link_kind_from_string(const std::string& s);

/// Generator config for the factor-model designs: K latent factors of which
/// the first K1 drive the target through q lags; factor strength nu scales
/// the loading Gram spectrum; zeta_scale inflates the irrelevant factors'
/// variance (the supervised-advantage design).
struct SyntheticConfig {
    int n = 50;
    int t = 400;
    int k = 2;
    int k1 = 2;
    int q = 2;
    double nu = 1.0;
    double sigma_u = 0.5;
    double sigma_eps = 0.5;
    double zeta_scale = 1.0;
    LoadingKind loading = LoadingKind::Linear;
    LinkKind link = LinkKind::Linear;
    Matrix beta; // q x k1 link coefficients; empty means draw at random
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticTruth {
    SyntheticConfig config;
    TimePanel panel;    // values = common + noise, target = y
    Matrix f;           // K x T latent factors
    Matrix g;           // K1 x T relevant block
    Matrix zeta;        // (K-K1) x T irrelevant block
    Matrix common;      // N x T noiseless common components
    Matrix loadings;    // N x K (linear case)
    Matrix loadings_b;  // nonlinear: tanh directions
    Matrix loadings_c;  // nonlinear: quadratic directions
    Matrix beta;        // q x K1 as used
    Matrix gstar_true;  // (qK) x T stacked factors, zero where undefined (t < q-1)
};

/// Draws a panel under the factor model: f iid standard normal (unit second
/// moment in expectation), linear loadings rescaled so the eigenvalues of
/// N^-nu * B^T B lie in [0.5, 2], nonlinear loadings tanh(b'f) + 0.3 (c'f)^2,
/// x = common + sigma_u * noise, y_{t+h} = link(sum_j beta_j' g_{t-j+1}) +
/// sigma_eps * noise. Deterministic in the seed.
SyntheticTruth simulate(const SyntheticConfig& cfg);

struct AlignmentReport {
    double residual = 0.0;            // per-time-point Procrustes error
    Vector canonical_correlations;    // estimate vs full stacked truth
};

/// Empirical check of the factor-consistency claim: compares the estimated
/// factors against the stacked truth on t >= q, after normalizing both
/// sides to the identification scale (row-centered, unit second moment) the
/// theory assumes. When fewer than qK factors were extracted, the truth
/// rows are chosen by greedy correlation pairing.
AlignmentReport alignment_error(const FactorModel& model, const SyntheticTruth& truth);

struct ConvergenceCell {
    int n = 0;
    std::uint64_t seed = 0;
    double residual = 0.0;
    Vector canonical_correlations;
    double min_canonical_correlation = 0.0;
    double runtime_sec = 0.0;
};

struct ConvergenceStudy {
    std::vector<ConvergenceCell> cells;
    std::vector<int> n_grid;
    Vector mean_residual; // aligned with n_grid
    Vector std_residual;
    double spearman = 0.0; // rank correlation of mean residual vs N
};

/// Runs the full pipeline (standardize, target-aware fit, extraction at
/// K = qK, alignment) for every (N, seed) cell and aggregates the
/// residual-vs-N trend. Requires an ascending grid of at least 3 sizes.
ConvergenceStudy convergence_study(const SyntheticConfig& base, const std::vector<int>& n_grid,
                                   const std::vector<std::uint64_t>& seeds,
                                   const NetConfig& net, const TrainConfig& tc, int horizon = 1);

/// Spearman rank correlation (average ranks on ties).
double spearman_correlation(const Vector& a, const Vector& b);

} // namespace sddp
