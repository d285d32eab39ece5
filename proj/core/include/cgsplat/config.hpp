#pragma once

#include <map>
#include <string>
#include <vector>

#include "cgsplat/pipeline.hpp"

namespace cgsplat {

// Flat key=value configuration ('#' starts a comment). Keys are validated
// against the documented set; unknown keys are a usage error.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap load_config_file(const std::string& path);

// Applies "key=value" override strings on top of a map.
void apply_overrides(ConfigMap& map, const std::vector<std::string>& kvs);

// Builds the pipeline configuration, throwing std::invalid_argument on
// unknown keys or unparsable values.
PipelineConfig make_pipeline_config(const ConfigMap& map);

// Serializes the effective configuration (defaults + overrides) for the run
// snapshot; deterministic key order.
std::string config_snapshot(const PipelineConfig& cfg);

}  // namespace cgsplat
