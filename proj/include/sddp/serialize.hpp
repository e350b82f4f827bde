#pragma once

#include <json.hpp>

#include "sddp/net.hpp"
#include "sddp/panel.hpp"

namespace sddp {

// JSON building blocks shared by the regressor, bundle, and report writers.
// All numeric values serialize with round-trip precision, so save/load is
// bit-exact.

constexpr int kRegressorFormatVersion = 1;

nlohmann::ordered_json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json net_config_to_json(const NetConfig& cfg);
NetConfig net_config_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json regressor_to_json(const TemporalRegressor& reg);
TemporalRegressor regressor_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json stats_to_json(const StandardizationStats& stats);
StandardizationStats stats_from_json(const nlohmann::ordered_json& j);

/// FNV-1a hash of a canonical string, hex-encoded; used for config digests.
std::string digest_string(const std::string& canonical);

} // namespace sddp
