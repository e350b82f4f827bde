#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sddp/linalg.hpp"

namespace sddp {

// Substream tags: a fit seeded with (seed, stream_id) draws its weights from
// substream kInitStreamTag and its minibatch shuffles from kShuffleStreamTag,
// so per-predictor streams stay independent under any scheduling.
constexpr std::uint64_t kInitStreamTag = 0x1417;
constexpr std::uint64_t kShuffleStreamTag = 0x5487;

enum class Architecture { Linear, Mlp, CausalConv };

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

/// Shape of a temporal regressor mapping a D x q0 window (channels x time,
/// newest column last) to a scalar.
struct NetConfig {
    Architecture architecture = Architecture::CausalConv;
    int input_channels = 1; // D
    int window = 8;         // q0
    int blocks = 3;         // L; ignored by linear (treated as 0)
    int channel_width = 16; // c
    int kernel = 3;         // causal-conv tap count

    /// Widest causal span reachable at the readout position:
    /// (kernel-1)*(2^L - 1) + 1 for the dilated stack. May exceed the
    /// window; windows are left-zero-padded so coverage is capped at q0.
    int receptive_field() const;

    void validate() const;
};

struct ParamEntry {
    std::string name;
    int offset = 0;
    int rows = 0;
    int cols = 0;
    int size() const { return rows * cols; }
};

struct TemporalRegressor {
    NetConfig config;
    Vector params;                  // flat parameter vector
    std::vector<ParamEntry> layout; // layer -> offset/shape map
};

/// Layout for a config without drawing parameters.
std::vector<ParamEntry> param_layout(const NetConfig& config);
int param_count(const NetConfig& config);

/// Weights drawn zero-mean normal scaled by 1/sqrt(fan_in); biases zero.
/// Deterministic in the stream.
TemporalRegressor init_regressor(const NetConfig& config, RngStream& stream);

double forward(const TemporalRegressor& reg, const Matrix& window);
Vector forward_batch(const TemporalRegressor& reg, const std::vector<Matrix>& windows);

/// Weighted mean squared error over the sample set and its exact
/// reverse-mode gradient in the parameters. A null `weights` means all
/// ones; the all-ones path and the unweighted path are the same arithmetic.
std::pair<double, Vector> loss_and_grad(const TemporalRegressor& reg,
                                        const std::vector<Matrix>& windows,
                                        const Vector& targets,
                                        const Vector* weights = nullptr);

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;   // first-moment decay
    double beta2 = 0.999; // second-moment decay
    double epsilon = 1e-8;
    int batch_size = 32;
    int max_epochs = 200;
    int patience = 3;
    double validation_fraction = 0.1; // chronological tail of the training data
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0; // namespace for per-predictor streams
    int threads = 0;             // pipeline-level fan-out; 0 = hardware

    void validate() const;
};

struct TrainReport {
    int epochs_run = 0;
    double best_validation_loss = 0.0;
    std::vector<double> train_loss;
    std::vector<double> validation_loss;
    bool stopped_early = false;
};

/// Adaptive-moment training with bias correction, seeded per-epoch
/// minibatch shuffling, and early stopping on the chronological validation
/// tail. Returns the parameters from the best validation epoch.
std::pair<TemporalRegressor, TrainReport> train(const TemporalRegressor& reg,
                                                const std::vector<Matrix>& windows,
                                                const Vector& targets,
                                                const Vector* weights,
                                                const TrainConfig& tc);

/// Worst relative disagreement between the analytic gradient and central
/// finite differences (step h) over all coordinates, or a seeded subset of
/// at least 256 when the parameter vector is large.
double grad_check(const TemporalRegressor& reg, const std::vector<Matrix>& windows,
                  const Vector& targets, double step);

// Versioned single-regressor serialization. Loading a mismatched format
// version is an error.
void save_regressor(const TemporalRegressor& reg, const std::string& path);
TemporalRegressor load_regressor(const std::string& path);

} // namespace sddp
