#pragma once

#include <string>

#include "rtcan/model.hpp"

#include <json.hpp>

namespace rtcan::net {

// Model checkpoints are JSON: a format tag, the embedded RtcanConfig and a
// name -> {shape, row-major float64 data} map covering parameters and
// batch-norm running buffers. Doubles round-trip exactly (shortest-repr
// serialization), so save/load is bit-stable.

nlohmann::json config_to_json(const RtcanConfig& cfg);
RtcanConfig config_from_json(const nlohmann::json& j);  // rejects unknown keys

void save_checkpoint(const std::string& path, RtcanModel& model);
RtcanModel load_checkpoint(const std::string& path);

}  // namespace rtcan::net
