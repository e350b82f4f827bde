#include "sddp/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace sddp {

namespace {

// Fix eigenvector signs: largest-magnitude entry of each column positive,
// ties broken by the first such index.
void fix_signs(Matrix& vectors) {
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
        Eigen::Index arg = 0;
        double best = -1.0;
        for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
            const double a = std::abs(vectors(r, c));
            if (a > best + 1e-300 && a > best) {
                best = a;
                arg = r;
            }
        }
        if (vectors(arg, c) < 0.0) {
            vectors.col(c) = -vectors.col(c);
        }
    }
}

} // namespace

EigenDecomposition symmetric_eig(const Matrix& m) {
    if (m.rows() != m.cols()) {
        throw ShapeError("symmetric_eig: matrix is not square (" +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")");
    }
    const double scale = m.cwiseAbs().maxCoeff();
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (scale > 0.0 && asym > 1e-9 * scale) {
        throw ShapeError("symmetric_eig: input asymmetric beyond tolerance");
    }
    const Matrix sym = 0.5 * (m + m.transpose());

    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
    if (solver.info() != Eigen::Success) {
        const double residual = (sym * solver.eigenvectors() -
                                 solver.eigenvectors() * solver.eigenvalues().asDiagonal())
                                    .cwiseAbs()
                                    .maxCoeff();
        throw NumericError("symmetric_eig: solver failed to converge, residual " +
                           std::to_string(residual));
    }

    // Eigen returns ascending order; flip to descending.
    EigenDecomposition out;
    const Eigen::Index n = sym.rows();
    out.eigenvalues = solver.eigenvalues().reverse();
    out.eigenvectors.resize(n, n);
    for (Eigen::Index c = 0; c < n; ++c) {
        out.eigenvectors.col(c) = solver.eigenvectors().col(n - 1 - c);
    }
    fix_signs(out.eigenvectors);
    return out;
}

Matrix second_moment(const Matrix& column_samples, bool center) {
    const Eigen::Index t = column_samples.cols();
    if (t < 1) {
        throw ShapeError("second_moment: need at least one column sample");
    }
    Matrix x = column_samples;
    if (center) {
        const Vector mean = x.rowwise().mean();
        x.colwise() -= mean;
    }
    Matrix sigma = Matrix::Zero(x.rows(), x.rows());
    sigma.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0 / static_cast<double>(t));
    sigma.triangularView<Eigen::StrictlyUpper>() = sigma.transpose();
    return sigma;
}

ProcrustesFit procrustes_fit(const Matrix& estimate, const Matrix& truth) {
    if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols()) {
        throw ShapeError("procrustes: operands have different shapes");
    }
    const Eigen::Index d = truth.rows();
    const Eigen::Index t = truth.cols();

    Eigen::JacobiSVD<Matrix> rank_check(truth);
    const double smax = rank_check.singularValues()(0);
    if (smax <= 0.0 ||
        rank_check.singularValues()(d - 1) < 1e-12 * smax) {
        throw NumericError("procrustes: truth matrix is rank deficient");
    }

    Eigen::JacobiSVD<Matrix> svd(estimate * truth.transpose(),
                                 Eigen::ComputeFullU | Eigen::ComputeFullV);
    ProcrustesFit fit;
    fit.rotation = svd.matrixU() * svd.matrixV().transpose();
    fit.residual = (estimate - fit.rotation * truth).norm() / std::sqrt(static_cast<double>(t));
    return fit;
}

Vector canonical_correlations(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("canonical_correlations: column counts differ");
    }
    const double t = static_cast<double>(a.cols());

    Matrix ac = a.colwise() - a.rowwise().mean().eval();
    Matrix bc = b.colwise() - b.rowwise().mean().eval();

    auto inv_sqrt = [](const Matrix& cov) {
        const EigenDecomposition ed = symmetric_eig(cov);
        const double top = std::max(ed.eigenvalues(0), 0.0);
        const double floor = std::max(top * 1e-12, 1e-300);
        Matrix w = Matrix::Zero(cov.rows(), cov.cols());
        for (Eigen::Index k = 0; k < ed.eigenvalues.size(); ++k) {
            if (ed.eigenvalues(k) > floor) {
                w += ed.eigenvectors.col(k) * ed.eigenvectors.col(k).transpose() /
                     std::sqrt(ed.eigenvalues(k));
            }
        }
        return w;
    };

    const Matrix caa = (ac * ac.transpose()) / t;
    const Matrix cbb = (bc * bc.transpose()) / t;
    const Matrix cab = (ac * bc.transpose()) / t;

    const Matrix w = inv_sqrt(caa) * cab * inv_sqrt(cbb);
    Eigen::JacobiSVD<Matrix> svd(w);
    const Eigen::Index k = std::min(a.rows(), b.rows());
    Vector rho = svd.singularValues().head(k);
    for (Eigen::Index i = 0; i < rho.size(); ++i) {
        rho(i) = std::min(rho(i), 1.0);
    }
    return rho;
}

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), gen_(mix64(mix64(seed, 0x5ddc0de), stream_id)) {}

RngStream RngStream::substream(std::uint64_t id) const {
    return RngStream(seed_, mix64(stream_id_, id));
}

double RngStream::uniform() {
    // 53-bit mantissa from the raw generator word; value in [0, 1).
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller; u1 shifted into (0, 1] to keep the log finite.
    const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

bool RngStream::bernoulli(double p) {
    return uniform() < p;
}

std::uint64_t RngStream::integer(std::uint64_t bound) {
    if (bound == 0) {
        throw ConfigError("RngStream::integer: bound must be positive");
    }
    // Rejection sampling for an unbiased draw.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = gen_();
    } while (x >= limit);
    return x % bound;
}

} // namespace sddp
