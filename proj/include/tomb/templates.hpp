#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace tomb::templates {

// Bumped whenever a template's wording changes; appears in manifest sources.
inline constexpr std::string_view kVersion = "v1";

// Template body without its trailing newline. Throws std::out_of_range for an
// unknown name.
std::string_view get(std::string_view name);

// Replaces every {{key}} with vars[key]. Unknown placeholders are an error
// (std::out_of_range) so a template/variable mismatch cannot go unnoticed.
std::string render(std::string_view name, const std::map<std::string, std::string>& vars);

// "template/v1/<name>"
std::string source_path(std::string_view name);

namespace detail {
struct Entry {
  std::string_view name;
  std::string_view text;
};
const std::vector<Entry>& entries();
}  // namespace detail

}  // namespace tomb::templates
