#include "sddp/target_aware.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "parallel.hpp"
#include "sddp/serialize.hpp"

namespace sddp {

namespace {

// Regressor that outputs exactly zero, standing in for skipped predictors
// so every xstar row stays recomputable.
TemporalRegressor zero_regressor(const NetConfig& cfg) {
    TemporalRegressor reg;
    reg.config = cfg;
    reg.layout = param_layout(cfg);
    reg.params = Vector::Zero(param_count(cfg));
    return reg;
}

struct FitOutcome {
    TemporalRegressor regressor;
    bool skipped = false;
};

FitOutcome fit_one_predictor(const Vector& series, const Vector& target,
                             const Vector* mask_row, int predictor, int h, int q0,
                             const NetConfig& net, const TrainConfig& tc) {
    const int t_len = static_cast<int>(series.size());
    const int n_samples = t_len - h;

    const WindowSet wins = build_windows(series, q0, mask_row);
    std::vector<Matrix> train_windows(wins.windows.begin(), wins.windows.begin() + n_samples);
    const Vector targets = target.segment(h, n_samples);

    std::optional<Vector> weights;
    if (mask_row) {
        weights = mask_row->head(n_samples);
        const double observed = weights->sum();
        if (observed < q0 + 2) {
            return {zero_regressor(net), true};
        }
    }

    TrainConfig tci = tc;
    tci.stream_id = static_cast<std::uint64_t>(predictor);
    RngStream init_stream = RngStream(tci.seed, tci.stream_id).substream(kInitStreamTag);
    const TemporalRegressor reg0 = init_regressor(net, init_stream);

    const Vector* wptr = weights ? &*weights : nullptr;
    try {
        return {train(reg0, train_windows, targets, wptr, tci).first, false};
    } catch (const NumericError&) {
        TrainConfig retry = tci;
        retry.learning_rate = tci.learning_rate / 10.0;
        try {
            return {train(reg0, train_windows, targets, wptr, retry).first, false};
        } catch (const NumericError&) {
            // Treated as an uninformative predictor: zero row, skip flag.
            return {zero_regressor(net), true};
        }
    }
}

TargetAwarePanel fit_impl(const Matrix& values, const Vector& target, const Matrix* mask,
                          int h, int q0, const NetConfig& net_in, const TrainConfig& tc,
                          int refinement_passes) {
    if (h < 1) throw ConfigError("horizon must be positive");
    if (q0 < 1) throw ConfigError("window must be positive");
    const int t_len = static_cast<int>(values.cols());
    if (t_len <= q0 + h) {
        throw DataError("panel too short: need T > q0 + h");
    }
    if (refinement_passes < 0) throw ConfigError("refinement_passes must be nonnegative");
    tc.validate();

    NetConfig net = net_in;
    net.input_channels = 1;
    net.window = q0;
    net.validate();

    const int n = static_cast<int>(values.rows());
    TargetAwarePanel out;
    out.horizon = h;
    out.window = q0;
    out.regressors.resize(n);
    std::vector<char> skipped_flags(n, 0);

    parallel_for(n, tc.threads, [&](int i) {
        const Vector series = values.row(i);
        std::optional<Vector> mask_row;
        if (mask) mask_row = mask->row(i);
        FitOutcome fit = fit_one_predictor(series, target, mask ? &*mask_row : nullptr, i, h,
                                           q0, net, tc);
        out.regressors[i] = std::move(fit.regressor);
        skipped_flags[i] = fit.skipped ? 1 : 0;
    });
    for (int i = 0; i < n; ++i) {
        if (skipped_flags[i]) out.skipped.push_back(i);
    }

    if (mask == nullptr) {
        out.xstar = evaluate_target_aware(out.regressors, values, q0);
        return out;
    }

    MaskedPanel view;
    view.panel.values = values;
    view.panel.target = target;
    view.mask = *mask;
    auto [xstar, imputed] =
        evaluate_target_aware_masked(out.regressors, view, q0, refinement_passes);
    out.xstar = std::move(xstar);
    out.imputed = std::move(imputed);
    return out;
}

} // namespace

WindowSet build_windows(const Vector& series, int q0, const Vector* mask_row) {
    if (q0 < 1) throw ConfigError("window must be positive");
    if (mask_row && mask_row->size() != series.size()) {
        throw ShapeError("mask row length does not match series");
    }
    const int t_len = static_cast<int>(series.size());
    WindowSet out;
    out.windows.reserve(t_len);
    out.observed.reserve(t_len);
    for (int t = 0; t < t_len; ++t) {
        Matrix w = Matrix::Zero(1, q0);
        int seen = 0;
        for (int j = 0; j < q0; ++j) {
            const int src = t - q0 + 1 + j;
            if (src < 0) continue;
            if (mask_row && (*mask_row)(src) == 0.0) continue; // missing lag stays zero
            w(0, j) = series(src);
            ++seen;
        }
        out.windows.push_back(std::move(w));
        out.observed.push_back(seen);
    }
    return out;
}

std::vector<Matrix> build_multichannel_windows(const Matrix& channels, int q0) {
    if (q0 < 1) throw ConfigError("window must be positive");
    const int c = static_cast<int>(channels.rows());
    const int t_len = static_cast<int>(channels.cols());
    std::vector<Matrix> out;
    out.reserve(t_len);
    for (int t = 0; t < t_len; ++t) {
        Matrix w = Matrix::Zero(c, q0);
        const int first = std::max(0, t - q0 + 1);
        w.rightCols(t - first + 1) = channels.middleCols(first, t - first + 1);
        out.push_back(std::move(w));
    }
    return out;
}

TargetAwarePanel fit_target_aware(const TimePanel& panel, int h, int q0,
                                  const NetConfig& net, const TrainConfig& tc) {
    panel.validate();
    return fit_impl(panel.values, panel.target, nullptr, h, q0, net, tc, 0);
}

TargetAwarePanel fit_target_aware_masked(const MaskedPanel& mpanel, int h, int q0,
                                         const NetConfig& net, const TrainConfig& tc,
                                         int refinement_passes) {
    mpanel.validate();
    return fit_impl(mpanel.panel.values, mpanel.panel.target, &mpanel.mask, h, q0, net, tc,
                    refinement_passes);
}

Matrix evaluate_target_aware(const std::vector<TemporalRegressor>& regressors,
                             const Matrix& values, int q0) {
    if (static_cast<int>(regressors.size()) != values.rows()) {
        throw ShapeError("regressor count does not match predictor count");
    }
    Matrix xstar(values.rows(), values.cols());
    for (int i = 0; i < values.rows(); ++i) {
        const Vector series = values.row(i);
        const WindowSet wins = build_windows(series, q0);
        xstar.row(i) = forward_batch(regressors[i], wins.windows);
    }
    return xstar;
}

std::pair<Matrix, Matrix> evaluate_target_aware_masked(
    const std::vector<TemporalRegressor>& regressors, const MaskedPanel& mpanel, int q0,
    int refinement_passes) {
    const Matrix& values = mpanel.panel.values;
    const Matrix& mask = mpanel.mask;
    if (static_cast<int>(regressors.size()) != values.rows()) {
        throw ShapeError("regressor count does not match predictor count");
    }

    // Pass 0: missing lags zero-filled.
    Matrix xstar(values.rows(), values.cols());
    for (int i = 0; i < values.rows(); ++i) {
        const Vector series = values.row(i);
        const Vector mask_row = mask.row(i);
        const WindowSet wins = build_windows(series, q0, &mask_row);
        xstar.row(i) = forward_batch(regressors[i], wins.windows);
    }
    Matrix imputed = mask.array() * values.array() + (1.0 - mask.array()) * xstar.array();

    // Refinements: re-evaluate the fixed regressors on imputed windows.
    for (int pass = 0; pass < refinement_passes; ++pass) {
        xstar = evaluate_target_aware(regressors, imputed, q0);
        imputed = mask.array() * values.array() + (1.0 - mask.array()) * xstar.array();
    }
    return {std::move(xstar), std::move(imputed)};
}

std::pair<SdpcaCoefficients, TargetAwarePanel> fit_sdpca_linear(const TimePanel& panel,
                                                                int h, int q0) {
    panel.validate();
    if (h < 1) throw ConfigError("horizon must be positive");
    if (q0 < 1) throw ConfigError("window must be positive");
    const int t_len = panel.t();
    const int n_samples = t_len - h - q0 + 1; // complete windows with valid targets
    if (n_samples < q0 + 1) {
        throw DataError("panel too short for sdPCA: need T - h - q0 + 1 >= q0 + 1");
    }

    const int n = panel.n();
    SdpcaCoefficients coef;
    coef.gamma = Matrix::Zero(n, q0);
    coef.intercepts = Vector::Zero(n);

    const int dim = q0 + 1;
    for (int i = 0; i < n; ++i) {
        Matrix design(n_samples, dim);
        Vector y(n_samples);
        for (int s = 0; s < n_samples; ++s) {
            const int t = q0 - 1 + s;
            design(s, 0) = 1.0;
            for (int j = 0; j < q0; ++j) {
                design(s, 1 + j) = panel.values(i, t - j); // column 1+j holds lag j
            }
            y(s) = panel.target(t + h);
        }
        const Matrix gram = design.transpose() * design;
        const Vector rhs = design.transpose() * y;

        Vector beta = gram.ldlt().solve(rhs);
        double residual = (gram * beta - rhs).cwiseAbs().maxCoeff();
        const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
        if (!beta.allFinite() || residual > 1e-8 * scale) {
            const Matrix jittered = gram + 1e-10 * Matrix::Identity(dim, dim);
            beta = jittered.ldlt().solve(rhs);
            residual = (jittered * beta - rhs).cwiseAbs().maxCoeff();
            if (!beta.allFinite() || residual > 1e-6 * scale) {
                coef.skipped.push_back(i);
                beta.setZero();
            }
        }
        coef.intercepts(i) = beta(0);
        coef.gamma.row(i) = beta.tail(q0);
    }

    TargetAwarePanel ta;
    ta.horizon = h;
    ta.window = q0;
    ta.skipped = coef.skipped;
    ta.xstar = sdpca_fitted(coef, panel.values);
    return {std::move(coef), std::move(ta)};
}

Matrix sdpca_fitted(const SdpcaCoefficients& coef, const Matrix& values) {
    if (coef.gamma.rows() != values.rows()) {
        throw ShapeError("coefficient rows do not match predictor count");
    }
    const int q0 = static_cast<int>(coef.gamma.cols());
    Matrix xstar(values.rows(), values.cols());
    for (int i = 0; i < values.rows(); ++i) {
        for (int t = 0; t < values.cols(); ++t) {
            double acc = coef.intercepts(i);
            for (int j = 0; j < q0 && j <= t; ++j) {
                acc += coef.gamma(i, j) * values(i, t - j);
            }
            xstar(i, t) = acc;
        }
    }
    return xstar;
}

void save_target_aware(const TargetAwarePanel& panel, const std::string& dir,
                       std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    TimePanel carrier;
    carrier.values = panel.xstar;
    carrier.target = Vector::Zero(panel.xstar.cols());
    write_panel(carrier, (fs::path(dir) / "xstar.csv").string());

    nlohmann::ordered_json manifest;
    manifest["format"] = "sddp.target-aware";
    manifest["version"] = 1;
    manifest["horizon"] = panel.horizon;
    manifest["window"] = panel.window;
    manifest["seed"] = seed;
    manifest["skipped"] = panel.skipped;
    if (!panel.regressors.empty()) {
        manifest["net_config_digest"] =
            digest_string(net_config_to_json(panel.regressors.front().config).dump());
    }
    std::ofstream mout(fs::path(dir) / "manifest.json");
    if (!mout) throw DataError("cannot write manifest in " + dir);
    mout << manifest.dump(2) << "\n";

    nlohmann::ordered_json regs = nlohmann::ordered_json::array();
    for (const auto& reg : panel.regressors) {
        regs.push_back(regressor_to_json(reg));
    }
    std::ofstream rout(fs::path(dir) / "regressors.json");
    if (!rout) throw DataError("cannot write regressors in " + dir);
    rout << regs.dump() << "\n";
}

TargetAwarePanel load_target_aware(const std::string& dir) {
    namespace fs = std::filesystem;

    std::ifstream min(fs::path(dir) / "manifest.json");
    if (!min) throw DataError("cannot open manifest in " + dir);
    nlohmann::ordered_json manifest;
    min >> manifest;
    if (manifest.value("format", "") != "sddp.target-aware" || manifest.value("version", -1) != 1) {
        throw DataError("unrecognized target-aware manifest in " + dir);
    }

    TargetAwarePanel panel;
    panel.horizon = manifest.at("horizon").get<int>();
    panel.window = manifest.at("window").get<int>();
    panel.skipped = manifest.at("skipped").get<std::vector<int>>();

    const TimePanel carrier = load_panel((fs::path(dir) / "xstar.csv").string(), "y");
    panel.xstar = carrier.values;

    std::ifstream rin(fs::path(dir) / "regressors.json");
    if (!rin) throw DataError("cannot open regressors in " + dir);
    nlohmann::ordered_json regs;
    rin >> regs;
    for (const auto& j : regs) {
        panel.regressors.push_back(regressor_from_json(j));
    }
    return panel;
}

} // namespace sddp
