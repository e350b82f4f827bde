#include "sddp/forecast.hpp"

#include "sddp/target_aware.hpp"

namespace sddp {

namespace {

Matrix stack_channels(const Matrix& factors, const Vector& targets) {
    if (factors.cols() != targets.size()) {
        throw ShapeError("factor columns do not match target length");
    }
    Matrix channels(factors.rows() + 1, factors.cols());
    channels.topRows(factors.rows()) = factors;
    channels.row(factors.rows()) = targets.transpose();
    return channels;
}

} // namespace

ForecastModel fit_forecaster(const Matrix& factors, const Vector& targets, int h, int q0,
                             const NetConfig& net_in, const TrainConfig& tc) {
    if (factors.rows() < 1) {
        throw ConfigError("fit_forecaster needs at least one factor channel");
    }
    if (h < 1) throw ConfigError("horizon must be positive");
    if (q0 < 1) throw ConfigError("window must be positive");
    const int t_len = static_cast<int>(factors.cols());
    if (t_len <= q0 + h) throw DataError("series too short: need T > q0 + h");

    NetConfig net = net_in;
    net.input_channels = static_cast<int>(factors.rows()) + 1;
    net.window = q0;
    net.validate();

    const Matrix channels = stack_channels(factors, targets);
    std::vector<Matrix> windows = build_multichannel_windows(channels, q0);
    windows.resize(t_len - h);
    const Vector train_targets = targets.segment(h, t_len - h);

    RngStream init_stream = RngStream(tc.seed, tc.stream_id).substream(kInitStreamTag);
    TemporalRegressor reg0 = init_regressor(net, init_stream);
    auto [trained, report] = train(reg0, windows, train_targets, nullptr, tc);
    (void)report;

    ForecastModel model;
    model.net = std::move(trained);
    model.horizon = h;
    model.window = q0;
    model.factor_channels = static_cast<int>(factors.rows());
    return model;
}

Vector predict(const ForecastModel& model, const Matrix& factors, const Vector& targets) {
    if (factors.rows() != model.factor_channels) {
        throw ShapeError("factor channel count does not match the model");
    }
    const Matrix channels = stack_channels(factors, targets);
    const std::vector<Matrix> windows = build_multichannel_windows(channels, model.window);
    Vector out = forward_batch(model.net, windows);
    if (model.target_stats) {
        out = out.array() * model.target_stats->target_scale + model.target_stats->target_mean;
    }
    return out;
}

ForecastModel fit_vanilla(const TimePanel& panel, int h, int q0, const NetConfig& net,
                          const TrainConfig& tc) {
    panel.validate();
    return fit_forecaster(panel.values, panel.target, h, q0, net, tc);
}

} // namespace sddp
