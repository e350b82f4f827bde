#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "sddp/target_aware.hpp"
#include "test_util.hpp"

using namespace sddp;

namespace {

TrainConfig fast_linear_tc(std::uint64_t seed) {
    TrainConfig tc;
    tc.learning_rate = 0.05;
    tc.batch_size = 1024;
    tc.max_epochs = 2000;
    tc.patience = 50;
    tc.seed = seed;
    tc.threads = 1;
    return tc;
}

NetConfig linear_net() {
    NetConfig net;
    net.architecture = Architecture::Linear;
    net.blocks = 0;
    return net;
}

// Panel whose target is an exact affine function of each predictor's
// (zero-padded) lag window, so both the nets and the OLS oracle can recover
// it exactly.
TimePanel exact_window_panel(int n, int t, int q0, int h, std::uint64_t seed) {
    RngStream stream(seed, 0);
    TimePanel panel;
    panel.values = Matrix::Zero(n, t);
    for (int i = 0; i < n; ++i) {
        for (int tt = 0; tt < t; ++tt) panel.values(i, tt) = stream.normal();
    }
    Vector gamma(q0);
    for (int j = 0; j < q0; ++j) gamma(j) = stream.normal();
    panel.target = Vector::Zero(t);
    for (int s = 0; s < t; ++s) {
        const int tt = s - h;
        double acc = 0.4; // intercept
        if (tt >= 0) {
            for (int j = 0; j < q0; ++j) {
                if (tt - j >= 0) acc += gamma(j) * panel.values(0, tt - j);
            }
        }
        panel.target(s) = acc;
    }
    return panel;
}

} // namespace

TEST_CASE("build_windows pads and orders correctly") {
    Vector series(3);
    series << 10, 20, 30; // a, b, c

    const WindowSet w2 = build_windows(series, 2);
    REQUIRE(w2.windows.size() == 3);
    CHECK(w2.windows[0](0, 0) == 0.0);
    CHECK(w2.windows[0](0, 1) == 10.0);
    CHECK(w2.windows[1](0, 0) == 10.0);
    CHECK(w2.windows[1](0, 1) == 20.0);
    CHECK(w2.windows[2](0, 0) == 20.0);
    CHECK(w2.windows[2](0, 1) == 30.0);

    const WindowSet w1 = build_windows(series, 1);
    for (int t = 0; t < 3; ++t) CHECK(w1.windows[t](0, 0) == series(t));

    const WindowSet w5 = build_windows(series, 5);
    for (int t = 0; t < 3; ++t) {
        CHECK(w5.windows[t].cols() == 5);
        int zeros = 0;
        for (int j = 0; j < 5; ++j) zeros += w5.windows[t](0, j) == 0.0 ? 1 : 0;
        CHECK(zeros >= 2);
    }

    // Masked positions are zero-filled and counted out.
    Vector mask(3);
    mask << 1, 0, 1;
    const WindowSet wm = build_windows(series, 2, &mask);
    CHECK(wm.windows[1](0, 1) == 0.0);
    CHECK(wm.observed[1] == 1);
    CHECK(wm.observed[2] == 1);
}

TEST_CASE("multichannel windows are causal slices") {
    Matrix channels(2, 4);
    channels << 1, 2, 3, 4, 5, 6, 7, 8;
    const auto wins = build_multichannel_windows(channels, 3);
    REQUIRE(wins.size() == 4);
    CHECK(wins[0](0, 0) == 0.0);
    CHECK(wins[0](0, 2) == 1.0);
    CHECK(wins[3](0, 0) == 2.0);
    CHECK(wins[3](1, 2) == 8.0);
}

TEST_CASE("fit_sdpca_linear recovers an exact single-lag rule") {
    const int t = 60, h = 1;
    RngStream stream(3, 0);
    TimePanel panel;
    panel.values = Matrix::Zero(1, t);
    for (int tt = 0; tt < t; ++tt) panel.values(0, tt) = stream.normal();
    panel.target = Vector::Zero(t);
    for (int s = h; s < t; ++s) panel.target(s) = 2.0 * panel.values(0, s - h);

    auto [coef, ta] = fit_sdpca_linear(panel, h, 1);
    CHECK(coef.gamma(0, 0) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(coef.intercepts(0) == doctest::Approx(0.0).epsilon(1e-8));
    CHECK((ta.xstar.row(0) - 2.0 * panel.values.row(0)).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(coef.skipped.empty());
}

TEST_CASE("fit_sdpca_linear coefficients vanish on an uncorrelated predictor") {
    const int t = 500, h = 1, q0 = 2;
    const double bound = 3.0 / std::sqrt(static_cast<double>(t));
    int good = 0;
    const int trials = 50;
    for (int rep = 0; rep < trials; ++rep) {
        RngStream stream(1000 + rep, 0);
        TimePanel panel;
        panel.values = Matrix::Zero(1, t);
        panel.target = Vector::Zero(t);
        for (int tt = 0; tt < t; ++tt) {
            panel.values(0, tt) = stream.normal();
            panel.target(tt) = stream.normal();
        }
        auto [coef, ta] = fit_sdpca_linear(panel, h, q0);
        (void)ta;
        bool ok = true;
        for (int j = 0; j < q0; ++j) ok = ok && std::abs(coef.gamma(0, j)) < bound;
        good += ok ? 1 : 0;
    }
    CHECK(good >= 47); // each coefficient is ~N(0, 1/T); 3-sigma bound
}

TEST_CASE("sdPCA fitted values are invariant to predictor rescaling") {
    TimePanel panel = exact_window_panel(1, 80, 2, 1, 5);
    auto [c1, t1] = fit_sdpca_linear(panel, 1, 2);
    (void)c1;
    TimePanel scaled = panel;
    scaled.values *= 7.5;
    auto [c2, t2] = fit_sdpca_linear(scaled, 1, 2);
    (void)c2;
    CHECK((t1.xstar - t2.xstar).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("linear nets converge to the sdPCA normal-equations solution") {
    const int q0 = 2, h = 1;
    const TimePanel panel = exact_window_panel(1, 120, q0, h, 7);

    auto [coef, oracle] = fit_sdpca_linear(panel, h, q0);
    (void)coef;
    const TargetAwarePanel net_fit =
        fit_target_aware(panel, h, q0, linear_net(), fast_linear_tc(21));

    CHECK(net_fit.skipped.empty());
    const double worst = (net_fit.xstar - oracle.xstar).cwiseAbs().maxCoeff();
    CHECK(worst <= 1e-3);
}

TEST_CASE("fit_target_aware tracks a perfectly predictive predictor") {
    const int t = 150, h = 1, q0 = 1;
    RngStream stream(9, 0);
    TimePanel panel;
    panel.target = Vector::Zero(t);
    for (int s = 0; s < t; ++s) panel.target(s) = stream.normal();
    panel.values = Matrix::Zero(1, t);
    for (int s = 0; s + h < t; ++s) panel.values(0, s) = 0.5 * panel.target(s + h);
    panel.values(0, t - 1) = stream.normal();

    const TargetAwarePanel ta = fit_target_aware(panel, h, q0, linear_net(), fast_linear_tc(4));
    // Correlation between xstar and the future target on the training range.
    const int n_train = t - h;
    Vector a(n_train), b(n_train);
    for (int s = 0; s < n_train; ++s) {
        a(s) = ta.xstar(0, s);
        b(s) = panel.target(s + h);
    }
    const double ca = (a.array() - a.mean()).matrix().norm();
    const double cb = (b.array() - b.mean()).matrix().norm();
    const double corr = ((a.array() - a.mean()) * (b.array() - b.mean())).sum() / (ca * cb);
    CHECK(corr >= 0.999);
}

TEST_CASE("pure-noise predictors get shrinking weight") {
    const int t = 300, h = 1, q0 = 2;
    double ratio_sum = 0.0;
    const int seeds = 20;
    for (int rep = 0; rep < seeds; ++rep) {
        RngStream stream(500 + rep, 0);
        TimePanel panel;
        panel.values = Matrix::Zero(1, t);
        panel.target = Vector::Zero(t);
        for (int s = 0; s < t; ++s) {
            panel.values(0, s) = stream.normal();
            panel.target(s) = stream.normal();
        }
        const TargetAwarePanel ta =
            fit_target_aware(panel, h, q0, linear_net(), fast_linear_tc(600 + rep));
        const Vector row = ta.xstar.row(0);
        const double var_row = (row.array() - row.mean()).square().sum() / (t - 1);
        const double var_y =
            (panel.target.array() - panel.target.mean()).square().sum() / (t - 1);
        ratio_sum += var_row / var_y;
    }
    CHECK(ratio_sum / seeds < 0.1);
}

TEST_CASE("identical predictors converge to the shared solution") {
    const int q0 = 2, h = 1;
    TimePanel base = exact_window_panel(1, 150, q0, h, 31);
    TimePanel panel;
    panel.values = Matrix::Zero(3, base.t());
    for (int i = 0; i < 3; ++i) panel.values.row(i) = base.values.row(0);
    panel.target = base.target;

    const TargetAwarePanel ta = fit_target_aware(panel, h, q0, linear_net(), fast_linear_tc(77));
    CHECK((ta.xstar.row(0) - ta.xstar.row(1)).cwiseAbs().maxCoeff() <= 1e-3);
    CHECK((ta.xstar.row(0) - ta.xstar.row(2)).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("xstar rows are recomputable from the stored regressors") {
    const TimePanel panel = exact_window_panel(2, 90, 2, 1, 41);
    TrainConfig tc = fast_linear_tc(13);
    tc.max_epochs = 60;
    NetConfig net;
    net.architecture = Architecture::CausalConv;
    net.blocks = 2;
    net.channel_width = 4;
    const TargetAwarePanel ta = fit_target_aware(panel, 1, 2, net, tc);

    const Matrix recomputed = evaluate_target_aware(ta.regressors, panel.values, ta.window);
    CHECK(testutil::bit_equal(recomputed, ta.xstar));
}

TEST_CASE("parallel and serial schedules give bit-identical panels") {
    const TimePanel panel = exact_window_panel(6, 80, 2, 1, 51);
    TrainConfig serial = fast_linear_tc(3);
    serial.max_epochs = 40;
    serial.threads = 1;
    TrainConfig parallel = serial;
    parallel.threads = 4;

    const TargetAwarePanel a = fit_target_aware(panel, 1, 2, linear_net(), serial);
    const TargetAwarePanel b = fit_target_aware(panel, 1, 2, linear_net(), parallel);
    CHECK(testutil::bit_equal(a.xstar, b.xstar));
}

TEST_CASE("masked fit with an all-ones mask is bit-identical to the unmasked fit") {
    const TimePanel panel = exact_window_panel(3, 100, 2, 1, 61);
    MaskedPanel masked;
    masked.panel = panel;
    masked.mask = Matrix::Ones(panel.n(), panel.t());

    TrainConfig tc = fast_linear_tc(8);
    tc.max_epochs = 50;

    const TargetAwarePanel plain = fit_target_aware(panel, 1, 2, linear_net(), tc);
    const TargetAwarePanel via_mask = fit_target_aware_masked(masked, 1, 2, linear_net(), tc, 1);

    CHECK(testutil::bit_equal(plain.xstar, via_mask.xstar));
    REQUIRE(via_mask.imputed.has_value());
    CHECK(testutil::bit_equal(*via_mask.imputed, panel.values)); // observed cells pass through
}

TEST_CASE("refinement passes are a no-op on fully observed data") {
    const TimePanel panel = exact_window_panel(2, 90, 2, 1, 71);
    MaskedPanel masked;
    masked.panel = panel;
    masked.mask = Matrix::Ones(panel.n(), panel.t());
    TrainConfig tc = fast_linear_tc(5);
    tc.max_epochs = 40;

    const TargetAwarePanel r0 = fit_target_aware_masked(masked, 1, 2, linear_net(), tc, 0);
    const TargetAwarePanel r1 = fit_target_aware_masked(masked, 1, 2, linear_net(), tc, 1);
    CHECK(testutil::bit_equal(r0.xstar, r1.xstar));
}

TEST_CASE("all-missing predictors are skipped with a zero row") {
    TimePanel panel = exact_window_panel(2, 80, 2, 1, 81);
    MaskedPanel masked;
    masked.panel = panel;
    masked.mask = Matrix::Ones(2, panel.t());
    masked.mask.row(1).setZero();
    masked.panel.values.row(1).setZero();

    TrainConfig tc = fast_linear_tc(6);
    tc.max_epochs = 40;
    const TargetAwarePanel ta = fit_target_aware_masked(masked, 1, 2, linear_net(), tc, 1);
    CHECK(ta.skipped == std::vector<int>{1});
    CHECK(ta.xstar.row(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("masked imputation carries signal on persistent factors") {
    // AR(1) relevant factor with unit stationary variance; positive
    // loadings; moderate idiosyncratic noise. The per-predictor nets can
    // only impute from the predictor's own lags, so the achievable accuracy
    // is bounded by the factor persistence; the test requires the imputation
    // to clearly beat the zero-fill baseline.
    const int t = 800, n = 12, q0 = 6, h = 1;
    const double phi = 0.995, sigma_u = 0.3, rate = 0.25;
    RngStream stream(91, 0);
    Vector g(t);
    g(0) = stream.normal();
    const double innov = std::sqrt(1.0 - phi * phi);
    for (int s = 1; s < t; ++s) g(s) = phi * g(s - 1) + innov * stream.normal();

    TimePanel panel;
    panel.values = Matrix::Zero(n, t);
    Vector loadings(n);
    for (int i = 0; i < n; ++i) {
        loadings(i) = 0.5 + stream.uniform();
        for (int s = 0; s < t; ++s) {
            panel.values(i, s) = loadings(i) * g(s) + sigma_u * stream.normal();
        }
    }
    panel.target = Vector::Zero(t);
    for (int s = h; s < t; ++s) panel.target(s) = g(s - h);

    const MaskedPanel raw_masked = inject_missing(panel, rate, 17);
    auto [masked, stats] = standardize_masked(raw_masked);

    TrainConfig tc = fast_linear_tc(19);
    tc.max_epochs = 400;
    const TargetAwarePanel ta = fit_target_aware_masked(masked, h, q0, linear_net(), tc, 3);

    REQUIRE(ta.imputed.has_value());
    double err = 0.0, base = 0.0;
    int count = 0;
    for (int i = 0; i < n; ++i) {
        for (int s = 0; s < t; ++s) {
            if (raw_masked.mask(i, s) == 0.0) {
                const double common_std =
                    (loadings(i) * g(s) - stats.means(i)) / stats.scales(i);
                const double d = (*ta.imputed)(i, s) - common_std;
                err += d * d;
                base += common_std * common_std; // zero-fill baseline error
                ++count;
            }
        }
    }
    const double rmse = std::sqrt(err / count);
    const double baseline = std::sqrt(base / count);
    CHECK(rmse < 0.5);
    CHECK(rmse < 0.5 * baseline);
}

TEST_CASE("target-aware panels serialize through the directory format") {
    const TimePanel panel = exact_window_panel(3, 90, 2, 1, 101);
    TrainConfig tc = fast_linear_tc(23);
    tc.max_epochs = 50;
    const TargetAwarePanel ta = fit_target_aware(panel, 1, 2, linear_net(), tc);

    const auto dir = (std::filesystem::temp_directory_path() / "sddp_ta_dir").string();
    save_target_aware(ta, dir, tc.seed);
    const TargetAwarePanel back = load_target_aware(dir);

    CHECK(back.horizon == ta.horizon);
    CHECK(back.window == ta.window);
    CHECK(back.skipped == ta.skipped);
    CHECK(testutil::bit_equal(back.xstar, ta.xstar));
    REQUIRE(back.regressors.size() == ta.regressors.size());
    for (size_t i = 0; i < back.regressors.size(); ++i) {
        CHECK(testutil::bit_equal(back.regressors[i].params, ta.regressors[i].params));
    }
    // The reloaded regressors recompute the stored panel bit-exactly.
    CHECK(testutil::bit_equal(evaluate_target_aware(back.regressors, panel.values, 2),
                              ta.xstar));
}
