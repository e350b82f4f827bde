#include "sddp/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "parallel.hpp"
#include "sddp/target_aware.hpp"

namespace sddp {

namespace {

enum StreamIds : std::uint64_t {
    kFactorStream = 0,
    kLoadingStream = 1,
    kNoiseStream = 2,
    kEpsStream = 3,
    kBetaStream = 4,
};

Matrix draw_matrix(RngStream& stream, int rows, int cols) {
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            m(r, c) = stream.normal();
        }
    }
    return m;
}

// Rescales B so the eigenvalues of N^-nu B^T B land in [0.5, 2]. A scalar
// rescale centers the spectrum at geometric mean 1; if the spread exceeds
// the window (spectral ratio > 4), the columns are orthonormalized and
// given an explicit in-range spectrum instead.
Matrix rescale_loadings(Matrix b, double nu) {
    const int n = static_cast<int>(b.rows());
    const int k = static_cast<int>(b.cols());
    const double scale = std::pow(static_cast<double>(n), nu);

    const Matrix gram = b.transpose() * b / scale;
    const EigenDecomposition ed = symmetric_eig(gram);
    const double lmax = ed.eigenvalues(0);
    const double lmin = ed.eigenvalues(k - 1);
    if (lmin > 0.0 && lmax / lmin <= 4.0) {
        return b * std::sqrt(1.0 / std::sqrt(lmax * lmin));
    }

    // Deterministic fallback: orthonormal columns with a ramp of spectra
    // inside [0.5, 2].
    const Matrix q = Eigen::HouseholderQR<Matrix>(b).householderQ() * Matrix::Identity(n, k);
    Matrix out(n, k);
    for (int j = 0; j < k; ++j) {
        const double target = k == 1 ? 1.0 : 0.8 + 0.5 * static_cast<double>(j) / (k - 1);
        out.col(j) = q.col(j) * std::sqrt(target * scale);
    }
    return out;
}

double apply_link(LinkKind link, double a) {
    switch (link) {
    case LinkKind::Linear: return a;
    case LinkKind::Quadratic: return a + 0.5 * a * a;
    case LinkKind::Sine: return std::sin(a);
    }
    return a;
}

} // namespace

std::string to_string(LoadingKind k) {
    return k == LoadingKind::Linear ? "linear" : "nonlinear";
}

std::string to_string(LinkKind k) {
    switch (k) {
    case LinkKind::Linear: return "linear";
    case LinkKind::Quadratic: return "quadratic";
    case LinkKind::Sine: return "sine";
    }
    return "?";
}

LoadingKind loading_kind_from_string(const std::string& s) {
    if (s == "linear") return LoadingKind::Linear;
    if (s == "nonlinear") return LoadingKind::Nonlinear;
    throw ConfigError("unknown loading kind '" + s + "'");
}

LinkKind link_kind_from_string(const std::string& s) {
    if (s == "linear") return LinkKind::Linear;
    if (s == "quadratic") return LinkKind::Quadratic;
    if (s == "sine") return LinkKind::Sine;
    throw ConfigError("unknown link kind '" + s + "'");
}

void SyntheticConfig::validate() const {
    if (n < 1 || t < 2 || k < 1 || k1 < 1 || q < 1) {
        throw ConfigError("synthetic dimensions must be positive (and T >= 2)");
    }
    if (k1 > k) throw ConfigError("k1 must not exceed k");
    if (q > t / 4) throw ConfigError("q must not exceed T/4");
    if (!(nu > 0.0 && nu <= 1.0)) throw ConfigError("nu must lie in (0, 1]");
    if (sigma_u < 0.0 || sigma_eps < 0.0) throw ConfigError("noise scales must be nonnegative");
    if (zeta_scale <= 0.0) throw ConfigError("zeta_scale must be positive");
    if (beta.size() != 0 && (beta.rows() != q || beta.cols() != k1)) {
        throw ConfigError("beta must be q x k1");
    }
}

SyntheticTruth simulate(const SyntheticConfig& cfg) {
    cfg.validate();
    const int n = cfg.n, t_len = cfg.t, k = cfg.k, k1 = cfg.k1, q = cfg.q;
    const int h = 1; // generation horizon; forecasting code chooses its own h

    SyntheticTruth truth;
    truth.config = cfg;

    RngStream factor_stream = RngStream(cfg.seed, kFactorStream);
    truth.f = draw_matrix(factor_stream, k, t_len);
    if (cfg.zeta_scale != 1.0 && k > k1) {
        truth.f.bottomRows(k - k1) *= std::sqrt(cfg.zeta_scale);
    }
    truth.g = truth.f.topRows(k1);
    truth.zeta = truth.f.bottomRows(k - k1);

    RngStream loading_stream = RngStream(cfg.seed, kLoadingStream);
    if (cfg.loading == LoadingKind::Linear) {
        truth.loadings = rescale_loadings(draw_matrix(loading_stream, n, k), cfg.nu);
        truth.common = truth.loadings * truth.f;
    } else {
        // Directions scaled to unit-variance indices so tanh stays
        // responsive for any K.
        const double dir_scale = 1.0 / std::sqrt(static_cast<double>(k));
        truth.loadings_b = draw_matrix(loading_stream, n, k) * dir_scale;
        truth.loadings_c = draw_matrix(loading_stream, n, k) * dir_scale;
        truth.common.resize(n, t_len);
        for (int i = 0; i < n; ++i) {
            for (int tt = 0; tt < t_len; ++tt) {
                const double lin = truth.loadings_b.row(i).dot(truth.f.col(tt));
                const double quad = truth.loadings_c.row(i).dot(truth.f.col(tt));
                truth.common(i, tt) = std::tanh(lin) + 0.3 * quad * quad;
            }
        }
    }

    if (cfg.beta.size() != 0) {
        truth.beta = cfg.beta;
    } else {
        RngStream beta_stream = RngStream(cfg.seed, kBetaStream);
        truth.beta = draw_matrix(beta_stream, q, k1);
        truth.beta /= truth.beta.norm();
    }

    RngStream noise_stream = RngStream(cfg.seed, kNoiseStream);
    truth.panel.values = truth.common;
    if (cfg.sigma_u > 0.0) {
        truth.panel.values += cfg.sigma_u * draw_matrix(noise_stream, n, t_len);
    }

    RngStream eps_stream = RngStream(cfg.seed, kEpsStream);
    truth.panel.target = Vector::Zero(t_len);
    for (int s = 0; s < t_len; ++s) {
        const int tt = s - h;
        double a = 0.0;
        if (tt >= 0) {
            for (int j = 0; j < q; ++j) {
                if (tt - j >= 0) {
                    a += truth.beta.row(j).dot(truth.g.col(tt - j));
                }
            }
        }
        truth.panel.target(s) = apply_link(cfg.link, a) +
                                (cfg.sigma_eps > 0.0 ? cfg.sigma_eps * eps_stream.normal() : 0.0);
    }

    truth.gstar_true = Matrix::Zero(q * k, t_len);
    for (int lag = 0; lag < q; ++lag) {
        truth.gstar_true.block(lag * k, lag, k, t_len - lag) = truth.f.leftCols(t_len - lag);
    }

    truth.panel.validate();
    return truth;
}

namespace {

// Row-centering plus covariance whitening: the empirical counterpart of the
// identification condition T^-1 sum g g' = I the consistency claim assumes.
Matrix identification_normalize(const Matrix& rows) {
    Matrix centered = rows.colwise() - rows.rowwise().mean().eval();
    const Matrix cov = centered * centered.transpose() / static_cast<double>(centered.cols());
    const EigenDecomposition ed = symmetric_eig(cov);
    const double floor = std::max(ed.eigenvalues(0) * 1e-12, 1e-300);
    Matrix w = Matrix::Zero(cov.rows(), cov.cols());
    for (Eigen::Index j = 0; j < ed.eigenvalues.size(); ++j) {
        if (ed.eigenvalues(j) > floor) {
            w += ed.eigenvectors.col(j) * ed.eigenvectors.col(j).transpose() /
                 std::sqrt(ed.eigenvalues(j));
        }
    }
    return w * centered;
}

} // namespace

AlignmentReport alignment_error(const FactorModel& model, const SyntheticTruth& truth) {
    const int q = truth.config.q;
    const int qk = q * truth.config.k;
    const int t_len = truth.config.t;
    if (model.k > qk) {
        throw ShapeError("estimated factor count exceeds the stacked truth dimension");
    }
    if (model.factors.cols() != t_len) {
        throw ShapeError("factor series length does not match the simulation");
    }

    // Stacked truth is undefined before t = q (1-indexed); restrict both sides.
    const int first = q - 1;
    const Matrix estimate = model.factors.rightCols(t_len - first);
    const Matrix stacked = truth.gstar_true.rightCols(t_len - first);

    AlignmentReport report;
    report.canonical_correlations = canonical_correlations(estimate, stacked);

    Matrix truth_rows;
    if (model.k == qk) {
        truth_rows = stacked;
    } else {
        // Greedy |correlation| pairing to pick the best-matching truth rows.
        Matrix est_c = estimate.colwise() - estimate.rowwise().mean().eval();
        Matrix tru_c = stacked.colwise() - stacked.rowwise().mean().eval();
        Matrix corr(model.k, qk);
        for (int a = 0; a < model.k; ++a) {
            for (int b = 0; b < qk; ++b) {
                const double den = est_c.row(a).norm() * tru_c.row(b).norm();
                corr(a, b) = den > 0.0 ? std::abs(est_c.row(a).dot(tru_c.row(b))) / den : 0.0;
            }
        }
        std::vector<int> chosen;
        std::vector<char> row_used(model.k, 0), col_used(qk, 0);
        for (int pick = 0; pick < model.k; ++pick) {
            int best_a = -1, best_b = -1;
            double best = -1.0;
            for (int a = 0; a < model.k; ++a) {
                if (row_used[a]) continue;
                for (int b = 0; b < qk; ++b) {
                    if (col_used[b]) continue;
                    if (corr(a, b) > best) {
                        best = corr(a, b);
                        best_a = a;
                        best_b = b;
                    }
                }
            }
            row_used[best_a] = 1;
            col_used[best_b] = 1;
            chosen.push_back(best_b);
        }
        std::sort(chosen.begin(), chosen.end());
        truth_rows.resize(model.k, stacked.cols());
        for (int r = 0; r < model.k; ++r) {
            truth_rows.row(r) = stacked.row(chosen[r]);
        }
    }

    report.residual = procrustes_residual(identification_normalize(estimate),
                                          identification_normalize(truth_rows));
    return report;
}

double spearman_correlation(const Vector& a, const Vector& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw ShapeError("spearman needs two equal-length vectors of size >= 2");
    }
    auto ranks = [](const Vector& v) {
        const int n = static_cast<int>(v.size());
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int x, int y) { return v(x) < v(y); });
        Vector r(n);
        int i = 0;
        while (i < n) {
            int j = i;
            while (j + 1 < n && v(idx[j + 1]) == v(idx[i])) ++j;
            const double avg = 0.5 * (i + j) + 1.0;
            for (int m = i; m <= j; ++m) r(idx[m]) = avg;
            i = j + 1;
        }
        return r;
    };
    const Vector ra = ranks(a), rb = ranks(b);
    const double ma = ra.mean(), mb = rb.mean();
    const double cov = ((ra.array() - ma) * (rb.array() - mb)).sum();
    const double va = (ra.array() - ma).square().sum();
    const double vb = (rb.array() - mb).square().sum();
    if (va <= 0.0 || vb <= 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

ConvergenceStudy convergence_study(const SyntheticConfig& base, const std::vector<int>& n_grid,
                                   const std::vector<std::uint64_t>& seeds,
                                   const NetConfig& net, const TrainConfig& tc, int horizon) {
    if (n_grid.size() < 3) {
        throw ConfigError("convergence study needs at least 3 grid points");
    }
    if (!std::is_sorted(n_grid.begin(), n_grid.end()) ||
        std::adjacent_find(n_grid.begin(), n_grid.end()) != n_grid.end()) {
        throw ConfigError("N grid must be strictly ascending");
    }
    if (seeds.empty()) throw ConfigError("convergence study needs at least one seed");

    ConvergenceStudy study;
    study.n_grid = n_grid;
    const int cells = static_cast<int>(n_grid.size() * seeds.size());
    study.cells.resize(cells);

    parallel_for(cells, tc.threads, [&](int cell) {
        const int gi = cell / static_cast<int>(seeds.size());
        const int si = cell % static_cast<int>(seeds.size());
        const auto start = std::chrono::steady_clock::now();

        SyntheticConfig cfg = base;
        cfg.n = n_grid[gi];
        cfg.seed = seeds[si];
        const SyntheticTruth truth = simulate(cfg);

        auto [panel_std, stats] = standardize(truth.panel);
        (void)stats;

        TrainConfig cell_tc = tc;
        cell_tc.seed = mix64(tc.seed, cfg.seed);
        cell_tc.threads = 1; // cells already run concurrently
        const TargetAwarePanel ta = fit_target_aware(panel_std, horizon, cfg.q, net, cell_tc);

        const FactorModel model = extract_factors(ta.xstar, cfg.q * cfg.k);
        const AlignmentReport report = alignment_error(model, truth);

        ConvergenceCell& out = study.cells[cell];
        out.n = cfg.n;
        out.seed = cfg.seed;
        out.residual = report.residual;
        out.canonical_correlations = report.canonical_correlations;
        out.min_canonical_correlation = report.canonical_correlations.minCoeff();
        out.runtime_sec =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    });

    const int gn = static_cast<int>(n_grid.size());
    study.mean_residual = Vector::Zero(gn);
    study.std_residual = Vector::Zero(gn);
    for (int gi = 0; gi < gn; ++gi) {
        double sum = 0.0;
        for (size_t si = 0; si < seeds.size(); ++si) {
            sum += study.cells[gi * seeds.size() + si].residual;
        }
        const double mean = sum / static_cast<double>(seeds.size());
        double ss = 0.0;
        for (size_t si = 0; si < seeds.size(); ++si) {
            const double d = study.cells[gi * seeds.size() + si].residual - mean;
            ss += d * d;
        }
        study.mean_residual(gi) = mean;
        study.std_residual(gi) =
            seeds.size() > 1 ? std::sqrt(ss / static_cast<double>(seeds.size() - 1)) : 0.0;
    }

    Vector n_values(gn);
    for (int gi = 0; gi < gn; ++gi) n_values(gi) = static_cast<double>(n_grid[gi]);
    study.spearman = spearman_correlation(study.mean_residual, n_values);
    return study;
}

} // namespace sddp
