#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "nlm/trainer.hpp"

namespace nlm {

/// Raised when a model file is malformed; names the offending field.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Plain-text model format: '#' comment lines, then "key values..." records.
/// Numbers are written with 17 significant digits so a round trip is exact.
void write_model(std::ostream& os, const TrainedModel& model, const std::string& comment = "");
TrainedModel read_model(std::istream& is);

void save_model(const std::filesystem::path& path, const TrainedModel& model,
                const std::string& comment = "");
TrainedModel load_model(const std::filesystem::path& path);

/// Applies one "key = value" setting to a TrainConfig. Throws
/// std::invalid_argument for unknown keys or unparsable values.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Inverse of describe(): parses whitespace-separated key=value pairs.
TrainConfig parse_description(const std::string& text);

}  // namespace nlm
