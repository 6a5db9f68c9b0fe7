#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace protex {

using json = nlohmann::json;
namespace fs = std::filesystem;

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

/// FNV-1a over the bytes, starting from `seed` mixed into the offset basis.
std::uint64_t seeded_hash64(std::string_view bytes, std::uint64_t seed);

std::string base64_encode(std::string_view bytes);

std::string_view trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
/// Trim + ASCII case fold + collapse internal whitespace runs to one space.
std::string normalize_key(std::string_view s);
bool has_non_space(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
void replace_all(std::string& s, std::string_view from, std::string_view to);

std::string read_file(const fs::path& path);
/// Writes through a temporary sibling and renames, so readers never see a
/// partially written file.
void write_file_atomic(const fs::path& path, std::string_view contents);
void append_line(const fs::path& path, std::string_view line);
json read_json_file(const fs::path& path);
/// Pretty JSON with sorted keys and a trailing newline; stable bytes for
/// identical values.
std::string dump_pretty(const json& value);

/// Extracts the first JSON object or array embedded in model output,
/// tolerating markdown code fences and surrounding prose.
std::optional<json> parse_embedded_json(std::string_view text);

/// UTC timestamps. A fixed override (ISO-8601 string) makes runs reproducible.
class Clock {
 public:
  Clock() = default;
  explicit Clock(std::optional<std::string> fixed) : fixed_(std::move(fixed)) {}

  std::string now_iso8601() const;
  bool is_fixed() const { return fixed_.has_value(); }

  /// Fixed clock from SOURCE_DATE_EPOCH when set, otherwise wall clock.
  static Clock from_environment();

 private:
  std::optional<std::string> fixed_;
};

std::string format_iso8601(std::int64_t epoch_seconds);

/// Runs fn(0..n-1) on up to `parallelism` threads. The first exception
/// thrown by any call is rethrown after all threads finish.
void parallel_for(std::size_t n, int parallelism, const std::function<void(std::size_t)>& fn);

/// Uppercases and replaces non-alphanumerics with '_' ("openai-main" ->
/// "OPENAI_MAIN"); used for environment variable names.
std::string env_name(std::string_view id);
std::optional<std::string> get_env(const std::string& name);

}  // namespace protex
