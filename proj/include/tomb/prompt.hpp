#pragma once

#include "tomb/types.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tomb {

enum class PromptKind { Simulate, Nudge, Polish, SituationUpdate, Prose, ProseSegment, MemoryCondense };

std::string_view to_string(PromptKind kind);
std::optional<PromptKind> parse_prompt_kind(std::string_view s);

// Which truncation tier a section belongs to. Never-tier sections survive any
// budget; the others are dropped tier by tier, lowest rank first.
enum class DropTier { Never, PriorBeat, Memory, CharacterDescription };

struct PromptSection {
  std::string name;
  std::string source;
  std::string content;  // unescaped
  DropTier tier = DropTier::Never;
  int rank = 0;  // order of dropping inside the tier

  bool operator==(const PromptSection&) const = default;
};

// A complete provider request. user_text is rendered from `sections`:
//
//   === BEGIN <name> <source> ===
//   <content, escaped>
//   === END <name> ===
//   <blank line>
//
// A content line that starts with "===" or "\" is prefixed with "\".
struct PromptBundle {
  PromptKind kind = PromptKind::Simulate;
  std::string system_text;
  std::string user_text;
  GenParams params;
  std::vector<ManifestEntry> debug_manifest;
  std::vector<std::string> dropped_sections;
  std::vector<PromptSection> sections;

  bool operator==(const PromptBundle&) const = default;
};

// Inverse of the user_text rendering; throws std::invalid_argument on text
// that was not produced by it.
std::vector<PromptSection> parse_sections(std::string_view user_text);

// Approximate token count: Unicode code points of system_text + user_text,
// divided by 4, rounded up.
int estimate_tokens(const PromptBundle& bundle);
int estimate_tokens(std::string_view system_text, std::string_view user_text);

// Word-count range requested for each target length.
std::pair<int, int> word_range(TargetLength length);

// Parameters used for the bookkeeping prompts (situation updates, memory
// condensation) when the caller does not pass any.
GenParams bookkeeping_params();

PromptBundle build_simulation_prompt(const StoryInstrument& instr, const SceneId& scene_id, const GenParams& params);

PromptBundle build_nudge_prompt(const StoryInstrument& instr, const SceneId& scene_id, std::string_view nudge_text,
                                const GenParams& params);

PromptBundle build_polish_prompt(std::string_view draft_text, const StyleParams& style_defaults,
                                 const GenParams& params = bookkeeping_params());

PromptBundle build_situation_update_prompt(std::string_view prev_situation, std::string_view beat_text,
                                           const GenParams& params = bookkeeping_params());

// Uses the stored document's previous segment for continuity.
PromptBundle build_prose_prompt(const StoryInstrument& instr, const SceneId& scene_id, int beat_index,
                                const StyleParams& style, const GenParams& params = GenParams{});

// Same, with the continuity text supplied by the caller (render_scene builds
// a new document segment by segment).
PromptBundle build_prose_prompt(const StoryInstrument& instr, const SceneId& scene_id, int beat_index,
                                const StyleParams& style, std::optional<std::string_view> previous_segment,
                                PromptKind kind, const GenParams& params = GenParams{});

PromptBundle build_memory_condense_prompt(const StoryInstrument& instr, const Character& character,
                                          std::span<const Memory> memories,
                                          const GenParams& params = bookkeeping_params());

// Drops prior beats (oldest first), then memories (oldest first), then
// character descriptions until the estimate fits. Throws BudgetUnsatisfiable
// when the protected sections alone exceed the budget.
PromptBundle truncate_context(const PromptBundle& bundle, int budget);

}  // namespace tomb
