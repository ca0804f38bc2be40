#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "apo/core.hpp"

namespace apo::configfile {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat `key = value` run-config format, schema-versioned, '#' comments.
// Unspecified keys keep their defaults; unknown keys are an error.
TrainConfig parse_text(const std::string& text);
TrainConfig parse_file(const std::filesystem::path& path);

// Environment overrides: APO_<KEY uppercased> replaces the value of <key>,
// applied on top of whatever the file set.
void apply_env_overrides(TrainConfig& config);

// Canonical serialization: every key in a fixed order, normalized values.
// Two configs hash equal iff every field is equal.
std::string canonical_text(const TrainConfig& config);
std::string config_hash(const TrainConfig& config);

// Commented, human-oriented config file covering every key.
void write_file(const std::filesystem::path& path, const TrainConfig& config);

}  // namespace apo::configfile
