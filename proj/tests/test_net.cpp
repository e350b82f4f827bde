#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "sddp/net.hpp"
#include "test_util.hpp"

using namespace sddp;

namespace {

// Straight-line reimplementation of the dilated causal convolution stack.
double naive_conv_forward(const TemporalRegressor& reg, const Matrix& window) {
    const NetConfig& cfg = reg.config;
    auto param = [&](const std::string& name) {
        for (const auto& e : reg.layout) {
            if (e.name == name) return e;
        }
        throw std::runtime_error("missing " + name);
    };
    Matrix cur = window;
    for (int l = 0; l < cfg.blocks; ++l) {
        const ParamEntry w = param("conv" + std::to_string(l) + "_w");
        const ParamEntry b = param("conv" + std::to_string(l) + "_b");
        const int cin = static_cast<int>(cur.rows());
        const int dil = 1 << l;
        Matrix next(cfg.channel_width, cfg.window);
        for (int o = 0; o < cfg.channel_width; ++o) {
            for (int t = 0; t < cfg.window; ++t) {
                double acc = reg.params(b.offset + o);
                for (int j = 0; j < cfg.kernel; ++j) {
                    const int src = t - (cfg.kernel - 1 - j) * dil;
                    if (src < 0) continue;
                    for (int i = 0; i < cin; ++i) {
                        acc += reg.params(w.offset + o * w.cols + i * cfg.kernel + j) *
                               cur(i, src);
                    }
                }
                next(o, t) = acc > 0.0 ? acc : 0.0;
            }
        }
        cur = next;
    }
    const ParamEntry rw = param("read_w");
    const ParamEntry rb = param("read_b");
    double acc = reg.params(rb.offset);
    for (int i = 0; i < rw.cols; ++i) {
        acc += reg.params(rw.offset + i) * cur(i, cfg.window - 1);
    }
    return acc;
}

std::vector<Matrix> random_windows(int count, int channels, int q0, RngStream& stream) {
    std::vector<Matrix> windows;
    for (int s = 0; s < count; ++s) {
        Matrix w(channels, q0);
        for (int r = 0; r < channels; ++r) {
            for (int c = 0; c < q0; ++c) w(r, c) = stream.normal();
        }
        windows.push_back(std::move(w));
    }
    return windows;
}

NetConfig linear_config(int d, int q0) {
    NetConfig cfg;
    cfg.architecture = Architecture::Linear;
    cfg.input_channels = d;
    cfg.window = q0;
    cfg.blocks = 0;
    return cfg;
}

} // namespace

TEST_CASE("parameter counting and zero biases") {
    RngStream stream(1, 0);
    const TemporalRegressor lin = init_regressor(linear_config(1, 4), stream);
    CHECK(lin.params.size() == 5);
    CHECK(lin.params(4) == 0.0); // bias

    NetConfig conv;
    conv.architecture = Architecture::CausalConv;
    conv.input_channels = 1;
    conv.window = 8;
    conv.blocks = 3;
    conv.channel_width = 16;
    conv.kernel = 3;
    // Closed form: 16*(1*3)+16 + 2*(16*(16*3)+16) + 16+1.
    const int expected = (16 * 3 + 16) + 2 * (16 * 48 + 16) + 17;
    CHECK(param_count(conv) == expected);
    // Oracle: enumerate the layout entries.
    int enumerated = 0;
    for (const auto& e : param_layout(conv)) enumerated += e.size();
    CHECK(enumerated == expected);

    CHECK(conv.receptive_field() == (3 - 1) * ((1 << 3) - 1) + 1);
}

TEST_CASE("init determinism") {
    NetConfig cfg;
    cfg.architecture = Architecture::Mlp;
    cfg.input_channels = 2;
    cfg.window = 5;
    cfg.blocks = 2;
    cfg.channel_width = 7;
    RngStream s1(44, 3);
    RngStream s2(44, 3);
    const TemporalRegressor a = init_regressor(cfg, s1);
    const TemporalRegressor b = init_regressor(cfg, s2);
    CHECK(testutil::bit_equal(a.params, b.params));
}

TEST_CASE("linear forward hand case") {
    RngStream stream(2, 0);
    TemporalRegressor reg = init_regressor(linear_config(1, 4), stream);
    reg.params << 1, 0, 0, 0, 2; // w aligned oldest->newest, b = 2
    Matrix window(1, 4);
    window << 3, 9, 9, 9; // oldest->newest
    CHECK(forward(reg, window) == doctest::Approx(5.0));

    Matrix wrong(1, 3);
    CHECK_THROWS_AS(forward(reg, wrong), ShapeError);
}

TEST_CASE("zero window with zero biases gives zero for every architecture") {
    RngStream stream(3, 0);
    for (auto arch : {Architecture::Linear, Architecture::Mlp, Architecture::CausalConv}) {
        NetConfig cfg;
        cfg.architecture = arch;
        cfg.input_channels = 2;
        cfg.window = 6;
        cfg.blocks = 2;
        cfg.channel_width = 5;
        RngStream s = stream.substream(static_cast<int>(arch));
        const TemporalRegressor reg = init_regressor(cfg, s);
        CHECK(forward(reg, Matrix::Zero(2, 6)) == 0.0);
    }
}

TEST_CASE("causal-conv forward matches the naive reimplementation") {
    NetConfig cfg;
    cfg.architecture = Architecture::CausalConv;
    cfg.input_channels = 3;
    cfg.window = 10;
    cfg.blocks = 3;
    cfg.channel_width = 6;
    cfg.kernel = 3;
    RngStream stream(7, 1);
    const TemporalRegressor reg = init_regressor(cfg, stream);
    const auto windows = random_windows(5, 3, 10, stream);
    for (const auto& w : windows) {
        CHECK(forward(reg, w) == doctest::Approx(naive_conv_forward(reg, w)).epsilon(1e-12));
    }
}

TEST_CASE("loss is zero on self-generated targets and matches the hand derivative") {
    RngStream stream(11, 0);
    TemporalRegressor reg = init_regressor(linear_config(1, 3), stream);
    const auto windows = random_windows(6, 1, 3, stream);
    const Vector self_targets = forward_batch(reg, windows);

    auto [loss0, grad0] = loss_and_grad(reg, windows, self_targets);
    CHECK(loss0 <= 1e-24);
    CHECK(grad0.cwiseAbs().maxCoeff() <= 1e-12);

    // Single sample: loss = (w.x + b - y)^2, d/dw = 2 r x, d/db = 2 r.
    const std::vector<Matrix> one = {windows[0]};
    Vector y(1);
    y << 1.5;
    auto [loss1, grad1] = loss_and_grad(reg, one, y);
    const double r = forward(reg, windows[0]) - 1.5;
    CHECK(loss1 == doctest::Approx(r * r));
    for (int j = 0; j < 3; ++j) {
        CHECK(grad1(j) == doctest::Approx(2.0 * r * windows[0](0, j)));
    }
    CHECK(grad1(3) == doctest::Approx(2.0 * r));
}

TEST_CASE("all-ones weights equal the unweighted loss bit-exactly") {
    NetConfig cfg;
    cfg.architecture = Architecture::Mlp;
    cfg.input_channels = 2;
    cfg.window = 4;
    cfg.blocks = 1;
    cfg.channel_width = 5;
    RngStream stream(13, 0);
    const TemporalRegressor reg = init_regressor(cfg, stream);
    const auto windows = random_windows(9, 2, 4, stream);
    Vector targets(9);
    for (int i = 0; i < 9; ++i) targets(i) = stream.normal();

    auto [lu, gu] = loss_and_grad(reg, windows, targets);
    const Vector ones = Vector::Ones(9);
    auto [lw, gw] = loss_and_grad(reg, windows, targets, &ones);
    CHECK(lu == lw);
    CHECK(testutil::bit_equal(gu, gw));

    const Vector zeros = Vector::Zero(9);
    CHECK_THROWS_AS(loss_and_grad(reg, windows, targets, &zeros), DataError);
}

TEST_CASE("gradient check across the architecture matrix") {
    RngStream stream(17, 0);
    struct Case {
        Architecture arch;
        int d, q0, blocks, width;
    };
    const Case cases[] = {
        {Architecture::Linear, 1, 6, 0, 1},
        {Architecture::Linear, 3, 4, 0, 1},
        {Architecture::Mlp, 2, 5, 2, 8},
        {Architecture::CausalConv, 1, 8, 2, 8},
        {Architecture::CausalConv, 3, 12, 3, 16},
    };
    int idx = 0;
    for (const auto& c : cases) {
        NetConfig cfg;
        cfg.architecture = c.arch;
        cfg.input_channels = c.d;
        cfg.window = c.q0;
        cfg.blocks = c.blocks;
        cfg.channel_width = c.width;
        RngStream s = stream.substream(idx++);
        const TemporalRegressor reg = init_regressor(cfg, s);
        const auto windows = random_windows(8, c.d, c.q0, s);
        Vector targets(8);
        for (int i = 0; i < 8; ++i) targets(i) = s.normal();
        const double err = grad_check(reg, windows, targets, 1e-5);
        if (c.arch == Architecture::Linear) {
            CHECK(err < 1e-9);
        } else {
            CHECK(err < 1e-4);
        }
    }
}

TEST_CASE("finite-difference truncation grows with the step") {
    NetConfig cfg;
    cfg.architecture = Architecture::Mlp;
    cfg.input_channels = 1;
    cfg.window = 5;
    cfg.blocks = 2;
    cfg.channel_width = 6;
    RngStream stream(19, 0);
    const TemporalRegressor reg = init_regressor(cfg, stream);
    const auto windows = random_windows(8, 1, 5, stream);
    Vector targets(8);
    for (int i = 0; i < 8; ++i) targets(i) = stream.normal();
    const double fine = grad_check(reg, windows, targets, 1e-5);
    const double coarse = grad_check(reg, windows, targets, 1e-1);
    CHECK(coarse > fine);
}

TEST_CASE("train on noiseless linear data matches the normal equations") {
    RngStream stream(23, 0);
    const int q0 = 3;
    TemporalRegressor truth = init_regressor(linear_config(1, q0), stream);
    truth.params << 0.7, -1.2, 0.4, 0.25;

    const auto windows = random_windows(40, 1, q0, stream);
    const Vector targets = forward_batch(truth, windows);

    TrainConfig tc;
    tc.learning_rate = 0.02;
    tc.batch_size = 40;
    tc.max_epochs = 4000;
    tc.patience = 4000;
    tc.validation_fraction = 0.1;
    tc.seed = 5;

    RngStream init(29, 0);
    const TemporalRegressor reg0 = init_regressor(linear_config(1, q0), init);
    auto [trained, report] = train(reg0, windows, targets, nullptr, tc);

    CHECK(report.train_loss.back() < 1e-6);

    // The oracle solves the normal equations on the samples the trainer saw.
    const int n_train = 40 - 4; // 10% validation tail
    Matrix design(n_train, q0 + 1);
    Vector y(n_train);
    for (int s = 0; s < n_train; ++s) {
        for (int j = 0; j < q0; ++j) design(s, j) = windows[s](0, j);
        design(s, q0) = 1.0;
        y(s) = targets(s);
    }
    const Vector beta = (design.transpose() * design).ldlt().solve(design.transpose() * y);
    for (int j = 0; j <= q0; ++j) {
        CHECK(trained.params(j) == doctest::Approx(beta(j)).epsilon(1e-3));
    }
}

TEST_CASE("early stopping obeys the patience contract") {
    RngStream stream(31, 0);
    const int q0 = 2;
    TemporalRegressor truth = init_regressor(linear_config(1, q0), stream);
    truth.params << 1.0, -0.5, 0.1;
    const auto windows = random_windows(30, 1, q0, stream);
    const Vector targets = forward_batch(truth, windows);

    TrainConfig tc;
    tc.learning_rate = 0.05;
    tc.batch_size = 30;
    tc.max_epochs = 500;
    tc.patience = 3;
    tc.seed = 9;

    RngStream init(37, 0);
    auto [trained, report] = train(init_regressor(linear_config(1, q0), init), windows,
                                   targets, nullptr, tc);
    (void)trained;
    CHECK(report.stopped_early);
    CHECK(report.epochs_run < tc.max_epochs);

    // best_validation_loss is the running minimum, and exactly `patience`
    // trailing epochs failed to improve on it.
    double best = report.validation_loss[0];
    for (double v : report.validation_loss) best = std::min(best, v);
    CHECK(report.best_validation_loss == doctest::Approx(best));
    const int e = report.epochs_run;
    for (int k = e - tc.patience; k < e; ++k) {
        CHECK(report.validation_loss[k] >= report.best_validation_loss);
    }
}

TEST_CASE("training is deterministic in the seed") {
    NetConfig cfg;
    cfg.architecture = Architecture::CausalConv;
    cfg.input_channels = 1;
    cfg.window = 6;
    cfg.blocks = 2;
    cfg.channel_width = 4;
    RngStream stream(41, 0);
    const auto windows = random_windows(25, 1, 6, stream);
    Vector targets(25);
    for (int i = 0; i < 25; ++i) targets(i) = stream.normal();

    TrainConfig tc;
    tc.max_epochs = 20;
    tc.patience = 20;
    tc.seed = 77;

    auto run = [&]() {
        RngStream init = RngStream(tc.seed, tc.stream_id).substream(kInitStreamTag);
        return train(init_regressor(cfg, init), windows, targets, nullptr, tc);
    };
    auto [m1, r1] = run();
    auto [m2, r2] = run();
    CHECK(testutil::bit_equal(m1.params, m2.params));
    CHECK(r1.epochs_run == r2.epochs_run);
    CHECK(r1.train_loss == r2.train_loss);
}

TEST_CASE("regressor serialization round-trips bit-exactly and checks versions") {
    NetConfig cfg;
    cfg.architecture = Architecture::CausalConv;
    cfg.input_channels = 2;
    cfg.window = 7;
    cfg.blocks = 2;
    cfg.channel_width = 5;
    RngStream stream(43, 0);
    const TemporalRegressor reg = init_regressor(cfg, stream);

    const auto path =
        (std::filesystem::temp_directory_path() / "sddp_reg.json").string();
    save_regressor(reg, path);
    const TemporalRegressor back = load_regressor(path);
    CHECK(testutil::bit_equal(back.params, reg.params));
    CHECK(back.config.architecture == cfg.architecture);
    CHECK(back.config.window == cfg.window);

    // Tamper with the version field.
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto pos = text.find("\"version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 12, "\"version\": 2");
    std::ofstream out(path);
    out << text;
    out.close();
    CHECK_THROWS_AS(load_regressor(path), DataError);
}
