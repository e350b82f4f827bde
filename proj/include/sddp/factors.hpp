#pragma once

#include <string>

#include "sddp/panel.hpp"

namespace sddp {

enum class FactorSource { Sddp, Sdpca, Pca };

std::string to_string(FactorSource s);
FactorSource factor_source_from_string(const std::string& s);

/// Supervised (or plain) principal-component factor model: loadings are the
/// top-K eigenvectors of the uncentered second moment scaled by sqrt(N),
/// factors are gstar = loadings^T * panel / N.
struct FactorModel {
    Matrix loadings;    // N x K, loadings^T loadings / N = I
    Matrix factors;     // K x T
    int k = 0;
    Vector eigenvalues; // full spectrum of the second moment, descending
    FactorSource source = FactorSource::Sddp;

    /// Projects a panel (N x T') onto the factor space: loadings^T * x / N.
    Matrix project(const Matrix& panel) const;
};

FactorModel extract_factors(const Matrix& source_panel, int k,
                            FactorSource tag = FactorSource::Sddp);

struct FactorCountSelection {
    int kstar = 1;
    Vector ratios; // stabilized eigenvalue ratios, index k-1 holds ratio at k
};

/// Stabilized eigenvalue-ratio rule: argmax over 1..kmax of
/// (lambda_k + delta) / (lambda_{k+1} + delta) with delta = lambda_1 / N,
/// ties broken at the smallest k.
FactorCountSelection select_num_factors(const Vector& eigenvalues, int kmax);

/// Eigenvalues used for factor-count selection: the second moment of the
/// panel, optionally correlation-normalized (unit diagonal).
Vector selection_spectrum(const Matrix& source_panel, bool correlation = false);

/// Unsupervised baseline: same machinery applied to the raw standardized
/// predictor matrix.
FactorModel pca_baseline(const TimePanel& panel, int k);

} // namespace sddp
