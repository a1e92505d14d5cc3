#pragma once

#include "tomb/error.hpp"
#include "tomb/provider.hpp"
#include "tomb/types.hpp"

#include <optional>
#include <set>
#include <string_view>

namespace tomb {

inline constexpr std::size_t kDefaultMemoryLimit = 20;

// Scene participants whose name occurs in `text` as a whole word, compared
// case-insensitively. Falls back to every scene participant when none occurs.
std::set<CharacterId> detect_participants(const StoryInstrument& instr, const Scene& scene, std::string_view text);

// Draft generation. None of these bumps updated_at: a draft followed by
// reject_beat leaves the instrument exactly as it was.
DraftBeat simulate_next_beat(StoryInstrument& instr, const SceneId& scene_id, const GenParams& params,
                             Provider& provider);
DraftBeat nudge_next_beat(StoryInstrument& instr, const SceneId& scene_id, std::string_view nudge_text,
                          const GenParams& params, Provider& provider);
// `provider` may be null when polish is false; ProviderUnavailable otherwise.
DraftBeat author_beat(StoryInstrument& instr, const SceneId& scene_id, std::string_view text, bool polish,
                      const GenParams& params, Provider* provider);

// Writer correction of who takes part in the pending draft.
void set_draft_participants(StoryInstrument& instr, const SceneId& scene_id, const std::set<CharacterId>& participants);

// Commits the pending draft: appends the beat, derives the next situation
// through the provider and hands a memory to every participant. Nothing
// changes if the provider call fails. Returns the new beat index.
int accept_beat(StoryInstrument& instr, const SceneId& scene_id, Provider& provider);

void reject_beat(StoryInstrument& instr, const SceneId& scene_id);

// Replaces the beat text and invalidates everything derived from it.
void edit_beat(StoryInstrument& instr, const SceneId& scene_id, int beat_index, std::string_view new_text);

// Writer-authored replacement of situation `position` (>= 1). Later
// situations become stale.
void override_situation(StoryInstrument& instr, const SceneId& scene_id, int position, std::string_view text);

struct RecomputeOutcome {
  int recomputed = 0;
  // Set when the provider failed part-way; the remaining entries stay stale
  // and a later call resumes from the failure point.
  std::optional<Error> failure;
};

RecomputeOutcome recompute_chain(StoryInstrument& instr, const SceneId& scene_id, Provider& provider);

// Folds all but the `keep_recent` newest memories into one summary memory.
void condense_memories(StoryInstrument& instr, const CharacterId& character_id, Provider& provider,
                       std::size_t keep_recent = kDefaultMemoryLimit);

}  // namespace tomb
