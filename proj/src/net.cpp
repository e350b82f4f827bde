#include "sddp/net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "sddp/serialize.hpp"

namespace sddp {

namespace {

int conv_in_channels(const NetConfig& cfg, int block) {
    return block == 0 ? cfg.input_channels : cfg.channel_width;
}

// Scratch buffers for one forward/backward pass, reused across samples.
struct Workspace {
    std::vector<Matrix> pre;  // per block: c x q0 pre-activations
    std::vector<Matrix> act;  // per block: c x q0 activations
    std::vector<Matrix> dact; // per block: gradient wrt activations
    std::vector<Vector> mlp_pre, mlp_act, mlp_dact;

    void prepare(const NetConfig& cfg) {
        if (cfg.architecture == Architecture::CausalConv) {
            pre.assign(cfg.blocks, Matrix::Zero(cfg.channel_width, cfg.window));
            act = pre;
            dact = pre;
        } else if (cfg.architecture == Architecture::Mlp) {
            mlp_pre.assign(cfg.blocks, Vector::Zero(cfg.channel_width));
            mlp_act = mlp_pre;
            mlp_dact = mlp_pre;
        }
    }
};

struct ParamView {
    const double* base;
    const ParamEntry* entry;
    double operator()(int r, int c) const { return base[entry->offset + r * entry->cols + c]; }
    double operator()(int i) const { return base[entry->offset + i]; }
};

struct GradView {
    double* base;
    const ParamEntry* entry;
    double& operator()(int r, int c) { return base[entry->offset + r * entry->cols + c]; }
    double& operator()(int i) { return base[entry->offset + i]; }
};

const ParamEntry& find_entry(const TemporalRegressor& reg, const std::string& name) {
    for (const auto& e : reg.layout) {
        if (e.name == name) return e;
    }
    throw NumericError("internal: missing layout entry " + name);
}

double forward_impl(const TemporalRegressor& reg, const Matrix& window, Workspace& ws) {
    const NetConfig& cfg = reg.config;
    const double* p = reg.params.data();

    switch (cfg.architecture) {
    case Architecture::Linear: {
        ParamView w{p, &find_entry(reg, "w")};
        ParamView b{p, &find_entry(reg, "b")};
        double acc = b(0);
        int idx = 0;
        for (int ch = 0; ch < cfg.input_channels; ++ch) {
            for (int t = 0; t < cfg.window; ++t) {
                acc += w(idx++) * window(ch, t);
            }
        }
        return acc;
    }
    case Architecture::Mlp: {
        const int c = cfg.channel_width;
        // Flatten channel-major to match the linear layout.
        Vector flat(cfg.input_channels * cfg.window);
        for (int ch = 0; ch < cfg.input_channels; ++ch) {
            for (int t = 0; t < cfg.window; ++t) {
                flat(ch * cfg.window + t) = window(ch, t);
            }
        }
        const Vector* cur = &flat;
        for (int l = 0; l < cfg.blocks; ++l) {
            ParamView w{p, &find_entry(reg, "dense" + std::to_string(l) + "_w")};
            ParamView b{p, &find_entry(reg, "dense" + std::to_string(l) + "_b")};
            Vector& z = ws.mlp_pre[l];
            for (int o = 0; o < c; ++o) {
                double acc = b(o);
                for (int i = 0; i < w.entry->cols; ++i) {
                    acc += w(o, i) * (*cur)(i);
                }
                z(o) = acc;
            }
            ws.mlp_act[l] = z.cwiseMax(0.0);
            cur = &ws.mlp_act[l];
        }
        ParamView rw{p, &find_entry(reg, "read_w")};
        ParamView rb{p, &find_entry(reg, "read_b")};
        double acc = rb(0);
        for (int i = 0; i < rw.entry->cols; ++i) {
            acc += rw(i) * (*cur)(i);
        }
        return acc;
    }
    case Architecture::CausalConv: {
        const int c = cfg.channel_width;
        const int k = cfg.kernel;
        const Matrix* cur = &window;
        for (int l = 0; l < cfg.blocks; ++l) {
            ParamView w{p, &find_entry(reg, "conv" + std::to_string(l) + "_w")};
            ParamView b{p, &find_entry(reg, "conv" + std::to_string(l) + "_b")};
            const int cin = conv_in_channels(cfg, l);
            const int dil = 1 << l;
            Matrix& z = ws.pre[l];
            for (int o = 0; o < c; ++o) {
                for (int t = 0; t < cfg.window; ++t) {
                    double acc = b(o);
                    // Tap j is oldest-to-newest; j = k-1 reads the current position.
                    for (int j = 0; j < k; ++j) {
                        const int src = t - (k - 1 - j) * dil;
                        if (src >= 0) {
                            for (int i = 0; i < cin; ++i) {
                                acc += w(o, i * k + j) * (*cur)(i, src);
                            }
                        }
                    }
                    z(o, t) = acc;
                }
            }
            ws.act[l] = z.cwiseMax(0.0);
            cur = &ws.act[l];
        }
        ParamView rw{p, &find_entry(reg, "read_w")};
        ParamView rb{p, &find_entry(reg, "read_b")};
        double acc = rb(0);
        for (int i = 0; i < rw.entry->cols; ++i) {
            acc += rw(i) * (*cur)(i, cfg.window - 1);
        }
        return acc;
    }
    }
    throw ConfigError("unknown architecture");
}

// Accumulates d(out_grad * prediction)/d(theta) into grad. Requires the
// workspace from the matching forward_impl call.
void backward_impl(const TemporalRegressor& reg, const Matrix& window, double out_grad,
                   Workspace& ws, Vector& grad) {
    const NetConfig& cfg = reg.config;
    const double* p = reg.params.data();
    double* g = grad.data();

    switch (cfg.architecture) {
    case Architecture::Linear: {
        GradView gw{g, &find_entry(reg, "w")};
        GradView gb{g, &find_entry(reg, "b")};
        gb(0) += out_grad;
        int idx = 0;
        for (int ch = 0; ch < cfg.input_channels; ++ch) {
            for (int t = 0; t < cfg.window; ++t) {
                gw(idx++) += out_grad * window(ch, t);
            }
        }
        return;
    }
    case Architecture::Mlp: {
        const int c = cfg.channel_width;
        Vector flat(cfg.input_channels * cfg.window);
        for (int ch = 0; ch < cfg.input_channels; ++ch) {
            for (int t = 0; t < cfg.window; ++t) {
                flat(ch * cfg.window + t) = window(ch, t);
            }
        }
        ParamView rw{p, &find_entry(reg, "read_w")};
        GradView grw{g, &find_entry(reg, "read_w")};
        GradView grb{g, &find_entry(reg, "read_b")};
        const Vector& last = cfg.blocks > 0 ? ws.mlp_act[cfg.blocks - 1] : flat;
        grb(0) += out_grad;
        for (int i = 0; i < rw.entry->cols; ++i) {
            grw(i) += out_grad * last(i);
        }
        if (cfg.blocks == 0) return;
        ws.mlp_dact[cfg.blocks - 1].setZero();
        for (int i = 0; i < rw.entry->cols; ++i) {
            ws.mlp_dact[cfg.blocks - 1](i) = out_grad * rw(i);
        }
        for (int l = cfg.blocks - 1; l >= 0; --l) {
            ParamView w{p, &find_entry(reg, "dense" + std::to_string(l) + "_w")};
            GradView gw{g, &find_entry(reg, "dense" + std::to_string(l) + "_w")};
            GradView gb{g, &find_entry(reg, "dense" + std::to_string(l) + "_b")};
            const Vector& below = l == 0 ? flat : ws.mlp_act[l - 1];
            Vector dz = Vector::Zero(c);
            for (int o = 0; o < c; ++o) {
                dz(o) = ws.mlp_pre[l](o) > 0.0 ? ws.mlp_dact[l](o) : 0.0;
            }
            if (l > 0) ws.mlp_dact[l - 1].setZero();
            for (int o = 0; o < c; ++o) {
                if (dz(o) == 0.0) continue;
                gb(o) += dz(o);
                for (int i = 0; i < w.entry->cols; ++i) {
                    gw(o, i) += dz(o) * below(i);
                    if (l > 0) ws.mlp_dact[l - 1](i) += dz(o) * w(o, i);
                }
            }
        }
        return;
    }
    case Architecture::CausalConv: {
        const int c = cfg.channel_width;
        const int k = cfg.kernel;
        ParamView rw{p, &find_entry(reg, "read_w")};
        GradView grw{g, &find_entry(reg, "read_w")};
        GradView grb{g, &find_entry(reg, "read_b")};
        const int last_col = cfg.window - 1;
        grb(0) += out_grad;
        if (cfg.blocks == 0) {
            for (int i = 0; i < rw.entry->cols; ++i) {
                grw(i) += out_grad * window(i, last_col);
            }
            return;
        }
        for (auto& m : ws.dact) m.setZero();
        const Matrix& top = ws.act[cfg.blocks - 1];
        for (int i = 0; i < rw.entry->cols; ++i) {
            grw(i) += out_grad * top(i, last_col);
            ws.dact[cfg.blocks - 1](i, last_col) += out_grad * rw(i);
        }
        for (int l = cfg.blocks - 1; l >= 0; --l) {
            ParamView w{p, &find_entry(reg, "conv" + std::to_string(l) + "_w")};
            GradView gw{g, &find_entry(reg, "conv" + std::to_string(l) + "_w")};
            GradView gb{g, &find_entry(reg, "conv" + std::to_string(l) + "_b")};
            const int cin = conv_in_channels(cfg, l);
            const int dil = 1 << l;
            const Matrix& below = l == 0 ? window : ws.act[l - 1];
            for (int o = 0; o < c; ++o) {
                for (int t = 0; t < cfg.window; ++t) {
                    if (ws.pre[l](o, t) <= 0.0) continue;
                    const double dz = ws.dact[l](o, t);
                    if (dz == 0.0) continue;
                    gb(o) += dz;
                    for (int j = 0; j < k; ++j) {
                        const int src = t - (k - 1 - j) * dil;
                        if (src < 0) continue;
                        for (int i = 0; i < cin; ++i) {
                            gw(o, i * k + j) += dz * below(i, src);
                            if (l > 0) ws.dact[l - 1](i, src) += dz * w(o, i * k + j);
                        }
                    }
                }
            }
        }
        return;
    }
    }
    throw ConfigError("unknown architecture");
}

void check_window_shape(const NetConfig& cfg, const Matrix& window) {
    if (window.rows() != cfg.input_channels || window.cols() != cfg.window) {
        throw ShapeError("window shape " + std::to_string(window.rows()) + "x" +
                         std::to_string(window.cols()) + " does not match config " +
                         std::to_string(cfg.input_channels) + "x" + std::to_string(cfg.window));
    }
}

// Weighted MSE and gradient over the listed sample indices.
double loss_and_grad_indexed(const TemporalRegressor& reg, const std::vector<Matrix>& windows,
                             const Vector& targets, const Vector* weights,
                             const std::vector<int>& index, Workspace& ws, Vector* grad) {
    double wsum = 0.0;
    for (int s : index) {
        wsum += weights ? (*weights)(s) : 1.0;
    }
    if (wsum <= 0.0) {
        throw DataError("loss is degenerate: sample weights sum to zero");
    }
    if (grad) grad->setZero();
    double loss = 0.0;
    for (int s : index) {
        const double w = weights ? (*weights)(s) : 1.0;
        if (w == 0.0) continue;
        const double pred = forward_impl(reg, windows[s], ws);
        const double r = pred - targets(s);
        loss += w * r * r;
        if (grad) {
            backward_impl(reg, windows[s], 2.0 * w * r / wsum, ws, *grad);
        }
    }
    loss /= wsum;
    if (!std::isfinite(loss)) {
        throw NumericError("loss is not finite (training diverged)");
    }
    return loss;
}

std::vector<int> iota_index(int begin, int end) {
    std::vector<int> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    return idx;
}

} // namespace

std::string to_string(Architecture a) {
    switch (a) {
    case Architecture::Linear: return "linear";
    case Architecture::Mlp: return "mlp";
    case Architecture::CausalConv: return "causal-conv";
    }
    return "?";
}

Architecture architecture_from_string(const std::string& s) {
    if (s == "linear") return Architecture::Linear;
    if (s == "mlp") return Architecture::Mlp;
    if (s == "causal-conv") return Architecture::CausalConv;
    throw ConfigError("unknown architecture '" + s + "' (expected linear, mlp, causal-conv)");
}

int NetConfig::receptive_field() const {
    if (architecture != Architecture::CausalConv) return window;
    return (kernel - 1) * ((1 << blocks) - 1) + 1;
}

void NetConfig::validate() const {
    if (input_channels < 1) throw ConfigError("input_channels must be positive");
    if (window < 1) throw ConfigError("window must be positive");
    if (blocks < 0) throw ConfigError("blocks must be nonnegative");
    if (channel_width < 1) throw ConfigError("channel_width must be positive");
    if (kernel < 1) throw ConfigError("kernel must be positive");
}

std::vector<ParamEntry> param_layout(const NetConfig& cfg) {
    cfg.validate();
    std::vector<ParamEntry> layout;
    int offset = 0;
    auto push = [&](const std::string& name, int rows, int cols) {
        layout.push_back({name, offset, rows, cols});
        offset += rows * cols;
    };
    switch (cfg.architecture) {
    case Architecture::Linear:
        push("w", 1, cfg.input_channels * cfg.window);
        push("b", 1, 1);
        break;
    case Architecture::Mlp: {
        int in = cfg.input_channels * cfg.window;
        for (int l = 0; l < cfg.blocks; ++l) {
            push("dense" + std::to_string(l) + "_w", cfg.channel_width, in);
            push("dense" + std::to_string(l) + "_b", cfg.channel_width, 1);
            in = cfg.channel_width;
        }
        push("read_w", 1, in);
        push("read_b", 1, 1);
        break;
    }
    case Architecture::CausalConv: {
        for (int l = 0; l < cfg.blocks; ++l) {
            push("conv" + std::to_string(l) + "_w", cfg.channel_width,
                 conv_in_channels(cfg, l) * cfg.kernel);
            push("conv" + std::to_string(l) + "_b", cfg.channel_width, 1);
        }
        push("read_w", 1, cfg.blocks > 0 ? cfg.channel_width : cfg.input_channels);
        push("read_b", 1, 1);
        break;
    }
    }
    return layout;
}

int param_count(const NetConfig& cfg) {
    const auto layout = param_layout(cfg);
    return layout.back().offset + layout.back().size();
}

TemporalRegressor init_regressor(const NetConfig& cfg, RngStream& stream) {
    TemporalRegressor reg;
    reg.config = cfg;
    reg.layout = param_layout(cfg);
    reg.params = Vector::Zero(param_count(cfg));
    for (const auto& entry : reg.layout) {
        const bool is_bias = entry.name == "b" || entry.name.ends_with("_b");
        if (is_bias) continue; // biases stay zero
        const double scale = 1.0 / std::sqrt(static_cast<double>(entry.cols));
        for (int i = 0; i < entry.size(); ++i) {
            reg.params(entry.offset + i) = scale * stream.normal();
        }
    }
    return reg;
}

double forward(const TemporalRegressor& reg, const Matrix& window) {
    check_window_shape(reg.config, window);
    Workspace ws;
    ws.prepare(reg.config);
    return forward_impl(reg, window, ws);
}

Vector forward_batch(const TemporalRegressor& reg, const std::vector<Matrix>& windows) {
    Workspace ws;
    ws.prepare(reg.config);
    Vector out(static_cast<Eigen::Index>(windows.size()));
    for (size_t s = 0; s < windows.size(); ++s) {
        check_window_shape(reg.config, windows[s]);
        out(static_cast<Eigen::Index>(s)) = forward_impl(reg, windows[s], ws);
    }
    return out;
}

std::pair<double, Vector> loss_and_grad(const TemporalRegressor& reg,
                                        const std::vector<Matrix>& windows,
                                        const Vector& targets, const Vector* weights) {
    if (static_cast<Eigen::Index>(windows.size()) != targets.size() ||
        (weights && weights->size() != targets.size())) {
        throw ShapeError("loss_and_grad: windows, targets and weights must have equal length");
    }
    for (const auto& w : windows) check_window_shape(reg.config, w);
    Workspace ws;
    ws.prepare(reg.config);
    Vector grad = Vector::Zero(reg.params.size());
    const double loss = loss_and_grad_indexed(reg, windows, targets, weights,
                                              iota_index(0, static_cast<int>(windows.size())),
                                              ws, &grad);
    return {loss, std::move(grad)};
}

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 0.5)) {
        throw ConfigError("validation_fraction must lie in (0, 0.5)");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
}

std::pair<TemporalRegressor, TrainReport> train(const TemporalRegressor& reg,
                                                const std::vector<Matrix>& windows,
                                                const Vector& targets, const Vector* weights,
                                                const TrainConfig& tc) {
    tc.validate();
    const int n = static_cast<int>(windows.size());
    if (static_cast<Eigen::Index>(n) != targets.size() ||
        (weights && weights->size() != targets.size())) {
        throw ShapeError("train: windows, targets and weights must have equal length");
    }
    const int n_val = std::max(1, static_cast<int>(std::floor(tc.validation_fraction * n)));
    const int n_train = n - n_val;
    if (n_train < 2) {
        throw DataError("train: fewer than 2 samples after the validation split");
    }
    for (const auto& w : windows) check_window_shape(reg.config, w);

    Workspace ws;
    ws.prepare(reg.config);

    TemporalRegressor cur = reg;
    Vector grad = Vector::Zero(cur.params.size());
    Vector m = Vector::Zero(cur.params.size());
    Vector v = Vector::Zero(cur.params.size());

    const std::vector<int> train_index = iota_index(0, n_train);
    const std::vector<int> val_index = iota_index(n_train, n);

    double val_wsum = 0.0;
    for (int s : val_index) val_wsum += weights ? (*weights)(s) : 1.0;

    RngStream shuffle_stream = RngStream(tc.seed, tc.stream_id).substream(kShuffleStreamTag);
    std::vector<int> order = train_index;

    TrainReport report;
    Vector best_params = cur.params;
    double best_val = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;
    long step = 0;

    for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
        order = train_index;
        shuffle_stream.shuffle(order.begin(), order.end());

        for (int start = 0; start < n_train; start += tc.batch_size) {
            const int stop = std::min(start + tc.batch_size, n_train);
            std::vector<int> batch(order.begin() + start, order.begin() + stop);
            if (weights) {
                double bw = 0.0;
                for (int s : batch) bw += (*weights)(s);
                if (bw <= 0.0) continue; // fully masked batch carries no signal
            }
            double bloss;
            try {
                bloss = loss_and_grad_indexed(cur, windows, targets, weights, batch, ws, &grad);
            } catch (const NumericError&) {
                throw NumericError("training diverged (non-finite loss) at epoch " +
                                   std::to_string(epoch));
            }
            (void)bloss;
            ++step;
            const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
            m = tc.beta1 * m + (1.0 - tc.beta1) * grad;
            v = tc.beta2 * v + (1.0 - tc.beta2) * grad.cwiseProduct(grad);
            cur.params.array() -= tc.learning_rate * (m.array() / bc1) /
                                  ((v.array() / bc2).sqrt() + tc.epsilon);
        }

        double train_loss;
        try {
            train_loss = loss_and_grad_indexed(cur, windows, targets, weights, train_index,
                                               ws, nullptr);
        } catch (const NumericError&) {
            throw NumericError("training diverged (non-finite loss) at epoch " +
                               std::to_string(epoch));
        }
        // Fully masked validation tails fall back to the train loss signal.
        const double val_loss =
            val_wsum > 0.0
                ? loss_and_grad_indexed(cur, windows, targets, weights, val_index, ws, nullptr)
                : train_loss;
        report.train_loss.push_back(train_loss);
        report.validation_loss.push_back(val_loss);
        report.epochs_run = epoch + 1;

        if (val_loss < best_val) {
            best_val = val_loss;
            best_params = cur.params;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (bad_epochs >= tc.patience) {
                report.stopped_early = true;
                break;
            }
        }
    }

    report.best_validation_loss = best_val;
    cur.params = std::move(best_params);
    return {std::move(cur), std::move(report)};
}

double grad_check(const TemporalRegressor& reg, const std::vector<Matrix>& windows,
                  const Vector& targets, double step) {
    if (step <= 0.0) throw ConfigError("grad_check: step must be positive");
    auto [loss, grad] = loss_and_grad(reg, windows, targets, nullptr);
    (void)loss;

    const int total = static_cast<int>(reg.params.size());
    std::vector<int> coords;
    if (total <= 256) {
        coords = iota_index(0, total);
    } else {
        RngStream pick(0x67636865ULL, static_cast<std::uint64_t>(total));
        std::vector<int> all = iota_index(0, total);
        pick.shuffle(all.begin(), all.end());
        coords.assign(all.begin(), all.begin() + 256);
    }

    Workspace ws;
    ws.prepare(reg.config);
    TemporalRegressor probe = reg;
    const std::vector<int> index = iota_index(0, static_cast<int>(windows.size()));

    double worst = 0.0;
    for (int j : coords) {
        const double saved = probe.params(j);
        probe.params(j) = saved + step;
        const double lp = loss_and_grad_indexed(probe, windows, targets, nullptr, index, ws, nullptr);
        probe.params(j) = saved - step;
        const double lm = loss_and_grad_indexed(probe, windows, targets, nullptr, index, ws, nullptr);
        probe.params(j) = saved;
        const double numeric = (lp - lm) / (2.0 * step);
        const double denom = std::max({std::abs(grad(j)), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(grad(j) - numeric) / denom);
    }
    return worst;
}

void save_regressor(const TemporalRegressor& reg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out << regressor_to_json(reg).dump(2) << "\n";
}

TemporalRegressor load_regressor(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw DataError("cannot parse regressor file " + path + ": " + e.what());
    }
    return regressor_from_json(j);
}

} // namespace sddp
