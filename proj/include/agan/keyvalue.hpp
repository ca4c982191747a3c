#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace agan {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` document. '#' starts a comment; blank lines are ignored; duplicate
/// keys are rejected.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string_view text, std::string_view origin = "<config>");
KeyValues read_key_values(const std::string& path);
std::string format_key_values(const KeyValues& values);

double to_double(const std::string& key, const std::string& value);
std::int64_t to_int(const std::string& key, const std::string& value);
std::uint64_t to_uint(const std::string& key, const std::string& value);
bool to_bool(const std::string& key, const std::string& value);
std::string format_double(double v);

}  // namespace agan
