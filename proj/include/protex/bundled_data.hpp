#pragma once

#include <map>
#include <string>
#include <string_view>

namespace protex {

/// Data files compiled into the library (registry, prompt templates), keyed
/// by their path relative to the data/ directory.
const std::map<std::string, std::string_view>& bundled_files();

/// Looks up one bundled file; throws Error(NotFound) when absent.
std::string_view bundled_file(const std::string& relative_path);

}  // namespace protex
