#include "sddp/factors.hpp"

#include <cmath>

namespace sddp {

std::string to_string(FactorSource s) {
    switch (s) {
    case FactorSource::Sddp: return "sddp";
    case FactorSource::Sdpca: return "sdpca";
    case FactorSource::Pca: return "pca";
    }
    return "?";
}

FactorSource factor_source_from_string(const std::string& s) {
    if (s == "sddp") return FactorSource::Sddp;
    if (s == "sdpca") return FactorSource::Sdpca;
    if (s == "pca") return FactorSource::Pca;
    throw ConfigError("unknown factor source '" + s + "'");
}

Matrix FactorModel::project(const Matrix& panel) const {
    if (panel.rows() != loadings.rows()) {
        throw ShapeError("project: panel rows do not match loadings");
    }
    return loadings.transpose() * panel / static_cast<double>(loadings.rows());
}

FactorModel extract_factors(const Matrix& source_panel, int k, FactorSource tag) {
    const int n = static_cast<int>(source_panel.rows());
    const int t = static_cast<int>(source_panel.cols());
    if (k < 1 || k > n || k > t) {
        throw ConfigError("factor count K=" + std::to_string(k) +
                          " must lie in [1, min(N, T)] with N=" + std::to_string(n) +
                          ", T=" + std::to_string(t));
    }
    if (!source_panel.allFinite()) {
        throw DataError("extract_factors: panel has non-finite entries");
    }

    const Matrix sigma = second_moment(source_panel);
    const EigenDecomposition ed = symmetric_eig(sigma);

    FactorModel model;
    model.k = k;
    model.eigenvalues = ed.eigenvalues;
    model.loadings = std::sqrt(static_cast<double>(n)) * ed.eigenvectors.leftCols(k);
    model.factors = model.project(source_panel);
    model.source = tag;
    return model;
}

FactorCountSelection select_num_factors(const Vector& eigenvalues, int kmax) {
    const int n = static_cast<int>(eigenvalues.size());
    if (kmax < 1) {
        throw ConfigError("kmax must be positive");
    }
    if (n < kmax + 1) {
        throw ConfigError("need at least kmax+1 eigenvalues");
    }
    for (int i = 1; i < n; ++i) {
        if (eigenvalues(i) > eigenvalues(i - 1) + 1e-12 * std::abs(eigenvalues(i - 1))) {
            throw ConfigError("eigenvalues must be sorted descending");
        }
    }
    if (eigenvalues(0) < 1e-12) {
        throw NumericError("degenerate spectrum: all eigenvalues below 1e-12");
    }

    const double delta = eigenvalues(0) / static_cast<double>(n);
    FactorCountSelection sel;
    sel.ratios = Vector::Zero(kmax);
    double best = -1.0;
    for (int k = 1; k <= kmax; ++k) {
        const double ratio = (eigenvalues(k - 1) + delta) / (eigenvalues(k) + delta);
        sel.ratios(k - 1) = ratio;
        if (ratio > best) {
            best = ratio;
            sel.kstar = k;
        }
    }
    return sel;
}

Vector selection_spectrum(const Matrix& source_panel, bool correlation) {
    Matrix sigma = second_moment(source_panel);
    if (correlation) {
        Vector d = sigma.diagonal().cwiseMax(1e-30).cwiseSqrt();
        sigma = (sigma.array().colwise() / d.array()).rowwise() / d.transpose().array();
    }
    return symmetric_eig(sigma).eigenvalues;
}

FactorModel pca_baseline(const TimePanel& panel, int k) {
    panel.validate();
    return extract_factors(panel.values, k, FactorSource::Pca);
}

} // namespace sddp
