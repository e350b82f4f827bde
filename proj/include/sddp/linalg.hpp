#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <utility>

#include "sddp/errors.hpp"

namespace sddp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Spectral decomposition of a symmetric matrix, eigenvalues sorted
/// descending, eigenvector signs fixed so the largest-magnitude entry of
/// each column is positive (first such index on ties).
struct EigenDecomposition {
    Vector eigenvalues;  // non-increasing
    Matrix eigenvectors; // orthonormal columns, column k pairs with eigenvalue k
};

EigenDecomposition symmetric_eig(const Matrix& m);

/// Uncentered second moment T^-1 * X * X^T of column samples.
/// With center=true the column mean is removed first.
Matrix second_moment(const Matrix& column_samples, bool center = false);

struct ProcrustesFit {
    Matrix rotation;  // orthogonal, minimizes ||estimate - R * truth||_F
    double residual;  // minimized Frobenius norm / sqrt(T)
};

ProcrustesFit procrustes_fit(const Matrix& estimate, const Matrix& truth);

inline double procrustes_residual(const Matrix& estimate, const Matrix& truth) {
    return procrustes_fit(estimate, truth).residual;
}

/// Canonical correlations between the row spaces of two matrices sharing a
/// time axis (rows are variables, columns are observations). Rows are
/// centered before whitening; directions below a relative eigenvalue floor
/// are dropped.
Vector canonical_correlations(const Matrix& a, const Matrix& b);

/// Deterministic random stream. (seed, stream_id) fully determines the
/// sequence; distinct stream ids give independent streams. Single-owner:
/// concurrent users must hold distinct streams.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    /// Independent stream derived from this stream's identity (does not
    /// consume state).
    RngStream substream(std::uint64_t id) const;

    double uniform();              // [0, 1)
    double normal();               // standard normal, Box-Muller
    bool bernoulli(double p);
    std::uint64_t integer(std::uint64_t bound); // uniform in [0, bound)

    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            std::swap(first[i - 1], first[integer(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// 64-bit mix used to derive seeds and stream ids (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

} // namespace sddp
