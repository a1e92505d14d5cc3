#pragma once

#include "tomb/provider.hpp"
#include "tomb/types.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace tomb {

enum class ExportScope { Scene, WholeStory };
enum class ExportFormat { Plain, Markdown };

std::optional<ExportScope> parse_export_scope(std::string_view s);
std::optional<ExportFormat> parse_export_format(std::string_view s);

// Loose: regenerating a segment touches only that segment. Strict: later
// segments are marked stale because their continuity text changed.
enum class ContinuityMode { Loose, Strict };

// One segment per accepted beat, generated in order; segment i sees segment
// i-1. Replaces any earlier document. On provider failure nothing is stored.
const ProseDocument& render_scene(StoryInstrument& instr, const SceneId& scene_id, const StyleParams& style,
                                  Provider& provider, const GenParams& params = GenParams{});

void regenerate_segment(StoryInstrument& instr, const SceneId& scene_id, int beat_index, const StyleParams& style,
                        Provider& provider, ContinuityMode mode = ContinuityMode::Loose,
                        const GenParams& params = GenParams{});

void edit_segment(StoryInstrument& instr, const SceneId& scene_id, int beat_index, std::string_view new_text);

// Byte format in EXPORT.md. `scene_id` is required for ExportScope::Scene.
std::string export_document(const StoryInstrument& instr, ExportScope scope, ExportFormat format,
                            const std::optional<SceneId>& scene_id = std::nullopt);

}  // namespace tomb
