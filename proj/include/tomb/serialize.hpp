#pragma once

#include "tomb/types.hpp"

#include <json.hpp>

#include <string>
#include <string_view>

namespace tomb {

// Canonical project document: UTF-8 JSON, two-space indent, keys in the order
// documented in FORMAT.md, schema_version first, trailing newline.
// Throws InvariantViolation if the instrument is not valid.
std::string serialize(const StoryInstrument& instr);

// Throws SchemaVersionTooNew, MalformedDocument (with "offset" or "path" in
// the details) or InvariantViolation (with "findings").
StoryInstrument deserialize(std::string_view bytes);

// Structural decode only; skips the invariant check.
StoryInstrument deserialize_unchecked(std::string_view bytes);

// Building blocks shared with the HTTP API.
nlohmann::ordered_json to_json(const StoryInstrument& instr);
nlohmann::ordered_json to_json(const Character& c);
nlohmann::ordered_json to_json(const Scene& s);
nlohmann::ordered_json to_json(const Beat& b);
nlohmann::ordered_json to_json(const DraftBeat& d);
nlohmann::ordered_json to_json(const ProseDocument& doc);
nlohmann::ordered_json to_json(const ProseSegment& seg);
nlohmann::ordered_json to_json(const GenParams& p);
nlohmann::ordered_json to_json(const StyleParams& s);

// Throw MalformedDocument with the offending path.
GenParams gen_params_from_json(const nlohmann::json& j, const std::string& path = "");
StyleParams style_params_from_json(const nlohmann::json& j, const std::string& path = "");
TraitScale trait_from_json(const nlohmann::json& j, const std::string& path = "");

}  // namespace tomb
