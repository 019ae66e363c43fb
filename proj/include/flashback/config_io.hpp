#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "flashback/domain.hpp"

namespace flashback {

class ConfigParseError : public std::runtime_error {
 public:
  ConfigParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Keys accepted in config files and as --key CLI overrides, in file order.
const std::vector<std::string>& config_field_names();

// Sets one field from its textual form. Throws ConfigError for unknown keys or
// values that do not parse.
void set_field(SimConfig& config, std::string_view key, std::string_view value);
std::string get_field(const SimConfig& config, std::string_view key);

// `key = value` per line; '#' starts a comment. Doubles are written in
// shortest round-trip form so parse(serialize(c)) == c exactly.
std::string serialize_config(const SimConfig& config);
SimConfig parse_config(std::string_view text, SimConfig base = {});
SimConfig load_config_file(const std::string& path, SimConfig base = {});

// Shortest decimal that parses back to the same double.
std::string format_double(double x);
double parse_double(std::string_view text);

}  // namespace flashback
