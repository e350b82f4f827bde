#include "sddp/serialize.hpp"

#include <cstdint>

namespace sddp {

using nlohmann::ordered_json;

ordered_json vector_to_json(const Vector& v) {
    ordered_json arr = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Vector vector_from_json(const ordered_json& j) {
    if (!j.is_array()) throw DataError("expected a JSON array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    Eigen::Index i = 0;
    for (const auto& x : j) v(i++) = x.get<double>();
    return v;
}

ordered_json matrix_to_json(const Matrix& m) {
    ordered_json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    ordered_json data = ordered_json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
    j["data"] = std::move(data);
    return j;
}

Matrix matrix_from_json(const ordered_json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw DataError("matrix data length does not match rows*cols");
    }
    Matrix m(rows, cols);
    Eigen::Index i = 0;
    for (const auto& x : data) {
        m(i / cols, i % cols) = x.get<double>();
        ++i;
    }
    return m;
}

ordered_json net_config_to_json(const NetConfig& cfg) {
    ordered_json j;
    j["architecture"] = to_string(cfg.architecture);
    j["input_channels"] = cfg.input_channels;
    j["window"] = cfg.window;
    j["blocks"] = cfg.blocks;
    j["channel_width"] = cfg.channel_width;
    j["kernel"] = cfg.kernel;
    return j;
}

NetConfig net_config_from_json(const ordered_json& j) {
    NetConfig cfg;
    cfg.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    cfg.input_channels = j.at("input_channels").get<int>();
    cfg.window = j.at("window").get<int>();
    cfg.blocks = j.at("blocks").get<int>();
    cfg.channel_width = j.at("channel_width").get<int>();
    cfg.kernel = j.at("kernel").get<int>();
    cfg.validate();
    return cfg;
}

ordered_json regressor_to_json(const TemporalRegressor& reg) {
    ordered_json j;
    j["format"] = "sddp.regressor";
    j["version"] = kRegressorFormatVersion;
    j["config"] = net_config_to_json(reg.config);
    j["params"] = vector_to_json(reg.params);
    return j;
}

TemporalRegressor regressor_from_json(const ordered_json& j) {
    if (j.value("format", "") != "sddp.regressor") {
        throw DataError("not a regressor record");
    }
    if (j.value("version", -1) != kRegressorFormatVersion) {
        throw DataError("regressor format version mismatch: expected " +
                        std::to_string(kRegressorFormatVersion) + ", got " +
                        j.value("version", ordered_json()).dump());
    }
    TemporalRegressor reg;
    reg.config = net_config_from_json(j.at("config"));
    reg.layout = param_layout(reg.config);
    reg.params = vector_from_json(j.at("params"));
    if (reg.params.size() != param_count(reg.config)) {
        throw DataError("parameter vector length does not match the config layout");
    }
    return reg;
}

ordered_json stats_to_json(const StandardizationStats& stats) {
    ordered_json j;
    j["means"] = vector_to_json(stats.means);
    j["scales"] = vector_to_json(stats.scales);
    j["target_mean"] = stats.target_mean;
    j["target_scale"] = stats.target_scale;
    j["degenerate_rows"] = stats.degenerate_rows;
    j["target_degenerate"] = stats.target_degenerate;
    return j;
}

StandardizationStats stats_from_json(const ordered_json& j) {
    StandardizationStats stats;
    stats.means = vector_from_json(j.at("means"));
    stats.scales = vector_from_json(j.at("scales"));
    stats.target_mean = j.at("target_mean").get<double>();
    stats.target_scale = j.at("target_scale").get<double>();
    stats.degenerate_rows = j.at("degenerate_rows").get<std::vector<int>>();
    stats.target_degenerate = j.at("target_degenerate").get<bool>();
    return stats;
}

std::string digest_string(const std::string& canonical) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace sddp
