#include "tomb/engine.hpp"

#include "tomb/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <tuple>

namespace tomb {
namespace {

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return out;
}

// Bytes >= 0x80 count as word characters so names never match inside a
// longer non-ASCII word.
bool is_word_byte(char ch) {
  const auto u = static_cast<unsigned char>(ch);
  return u >= 0x80 || std::isalnum(u) || u == '_';
}

bool contains_word(const std::string& haystack, const std::string& needle) {
  if (needle.empty()) return false;
  for (std::size_t pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) {
    const bool left_ok = pos == 0 || !is_word_byte(haystack[pos - 1]);
    const std::size_t end = pos + needle.size();
    const bool right_ok = end == haystack.size() || !is_word_byte(haystack[end]);
    if (left_ok && right_ok) return true;
  }
  return false;
}

Scene& scene_without_draft(StoryInstrument& instr, const SceneId& scene_id) {
  Scene& scene = scene_at(instr, scene_id);
  if (scene.draft) {
    throw Error(ErrorCode::DraftAlreadyPending, "scene '" + scene.id.value + "' already has a pending draft",
                {{"scene", scene.id.value}});
  }
  return scene;
}

void require_fresh_head(const Scene& scene) {
  if (scene.situations.back().stale) {
    throw Error(ErrorCode::StaleChain, "scene '" + scene.id.value + "' has stale situations; recompute the chain first",
                {{"scene", scene.id.value}});
  }
}

std::string generated_text(const CompletionResult& result) {
  std::string text = trim(result.text);
  if (text.empty()) throw Error(ErrorCode::EmptyGeneration, "the provider returned an empty completion");
  return text;
}

Beat& beat_at(Scene& scene, int beat_index) {
  if (beat_index < 0 || beat_index >= static_cast<int>(scene.beats.size())) {
    throw Error(ErrorCode::UnknownBeat, "scene '" + scene.id.value + "' has no beat " + std::to_string(beat_index),
                {{"scene", scene.id.value}, {"beat_index", beat_index}});
  }
  return scene.beats[static_cast<std::size_t>(beat_index)];
}

// Keeps memories ordered by (scene ordinal, beat index).
void insert_memory(const StoryInstrument& instr, Character& c, Memory memory) {
  auto key = [&](const Memory& m) {
    const Scene* s = find_scene(instr, m.source_scene);
    return std::tuple{s != nullptr ? s->ordinal : -1, m.source_beat_index};
  };
  const auto k = key(memory);
  auto pos = std::find_if(c.memories.begin(), c.memories.end(), [&](const Memory& m) { return k < key(m); });
  c.memories.insert(pos, std::move(memory));
}

void refresh_prose_flag(Scene& scene) {
  if (!scene.prose) return;
  ProseDocument& doc = *scene.prose;
  doc.stale = doc.segments.size() != scene.beats.size() ||
              std::any_of(doc.segments.begin(), doc.segments.end(), [](const ProseSegment& s) { return s.stale; });
}

DraftBeat generate_draft(StoryInstrument& instr, const SceneId& scene_id, const GenParams& params,
                         Provider& provider, const std::optional<std::string>& nudge) {
  check_params(params);
  Scene& scene = scene_without_draft(instr, scene_id);
  require_fresh_head(scene);
  PromptBundle bundle = nudge ? build_nudge_prompt(instr, scene_id, *nudge, params)
                              : build_simulation_prompt(instr, scene_id, params);
  bundle = truncate_context(bundle, params.context_budget);
  const std::string text = generated_text(provider.complete(bundle));

  DraftBeat draft;
  draft.text = text;
  draft.provenance = nudge ? Provenance::Nudged : Provenance::Simulated;
  draft.nudge_text = nudge;
  draft.proposed_participants = detect_participants(instr, scene, text);
  draft.params = params;
  draft.source_bundle_manifest = bundle.debug_manifest;
  scene.draft = std::move(draft);
  return *scene.draft;
}

}  // namespace

std::set<CharacterId> detect_participants(const StoryInstrument& instr, const Scene& scene, std::string_view text) {
  const std::string haystack = lower_ascii(text);
  std::set<CharacterId> found;
  for (const auto& id : scene.participants) {
    const Character* c = find_character(instr, id);
    if (c != nullptr && contains_word(haystack, lower_ascii(c->name))) found.insert(id);
  }
  return found.empty() ? scene.participants : found;
}

DraftBeat simulate_next_beat(StoryInstrument& instr, const SceneId& scene_id, const GenParams& params,
                             Provider& provider) {
  return generate_draft(instr, scene_id, params, provider, std::nullopt);
}

DraftBeat nudge_next_beat(StoryInstrument& instr, const SceneId& scene_id, std::string_view nudge_text,
                          const GenParams& params, Provider& provider) {
  if (trim(nudge_text).empty()) throw Error(ErrorCode::EmptyNudge, "nudge text is empty");
  return generate_draft(instr, scene_id, params, provider, std::string(nudge_text));
}

DraftBeat author_beat(StoryInstrument& instr, const SceneId& scene_id, std::string_view text, bool polish,
                      const GenParams& params, Provider* provider) {
  check_params(params);
  if (trim(text).empty()) throw Error(ErrorCode::EmptyDraft, "beat text is empty");
  Scene& scene = scene_without_draft(instr, scene_id);

  DraftBeat draft;
  draft.provenance = Provenance::Manual;
  draft.params = params;
  draft.text = trim(text);
  if (polish) {
    if (provider == nullptr) throw Error(ErrorCode::ProviderUnavailable, "polishing needs a configured provider");
    PromptBundle bundle = build_polish_prompt(text, instr.style_defaults, params);
    draft.authored_text = std::string(text);
    draft.text = generated_text(provider->complete(bundle));
    draft.source_bundle_manifest = bundle.debug_manifest;
  }
  draft.proposed_participants = detect_participants(instr, scene, draft.text);
  scene.draft = std::move(draft);
  return *scene.draft;
}

void set_draft_participants(StoryInstrument& instr, const SceneId& scene_id,
                            const std::set<CharacterId>& participants) {
  Scene& scene = scene_at(instr, scene_id);
  if (!scene.draft) throw Error(ErrorCode::NoPendingDraft, "scene '" + scene.id.value + "' has no pending draft");
  if (participants.empty()) throw Error(ErrorCode::EmptyParticipants, "a beat needs at least one participant");
  for (const auto& id : participants) {
    if (!scene.participants.contains(id)) {
      throw Error(ErrorCode::UnknownCharacter, "'" + id.value + "' is not a participant of this scene",
                  {{"character", id.value}});
    }
  }
  scene.draft->proposed_participants = participants;
}

int accept_beat(StoryInstrument& instr, const SceneId& scene_id, Provider& provider) {
  Scene& scene = scene_at(instr, scene_id);
  if (!scene.draft) throw Error(ErrorCode::NoPendingDraft, "scene '" + scene.id.value + "' has no pending draft");
  require_fresh_head(scene);
  const DraftBeat& draft = *scene.draft;

  // The only fallible step runs before any mutation.
  const PromptBundle bundle = build_situation_update_prompt(scene.situations.back().text, draft.text);
  const std::string next_situation = generated_text(provider.complete(bundle));

  const int index = static_cast<int>(scene.beats.size());
  Beat beat;
  beat.index = index;
  beat.text = draft.text;
  beat.provenance = draft.provenance;
  beat.nudge_text = draft.provenance == Provenance::Nudged ? draft.nudge_text : std::nullopt;
  beat.participants = draft.proposed_participants;
  beat.generation_params = draft.params;

  for (const auto& id : beat.participants) {
    if (Character* c = find_character(instr, id)) {
      insert_memory(instr, *c, Memory{scene.id, index, beat.text, false, false});
    }
  }
  scene.beats.push_back(std::move(beat));
  scene.situations.push_back(SituationState{next_situation, false, Derivation::ProviderUpdate});
  scene.draft.reset();
  refresh_prose_flag(scene);
  instr.updated_at = now_utc();
  return index;
}

void reject_beat(StoryInstrument& instr, const SceneId& scene_id) {
  Scene& scene = scene_at(instr, scene_id);
  if (!scene.draft) throw Error(ErrorCode::NoPendingDraft, "scene '" + scene.id.value + "' has no pending draft");
  scene.draft.reset();
}

void edit_beat(StoryInstrument& instr, const SceneId& scene_id, int beat_index, std::string_view new_text) {
  Scene& scene = scene_at(instr, scene_id);
  Beat& beat = beat_at(scene, beat_index);
  std::string text = trim(new_text);
  if (text.empty()) throw Error(ErrorCode::EmptyDraft, "beat text is empty");

  beat.edit_history.push_back(BeatRevision{beat.text, beat.provenance, beat.nudge_text});
  beat.text = text;
  beat.provenance = Provenance::Manual;
  beat.nudge_text.reset();

  for (std::size_t pos = static_cast<std::size_t>(beat_index) + 1; pos < scene.situations.size(); ++pos) {
    scene.situations[pos].stale = true;
  }
  for (std::size_t i = static_cast<std::size_t>(beat_index); i < scene.beats.size(); ++i) {
    scene.beats[i].stale_downstream = true;
  }
  for (auto& c : instr.characters) {
    for (auto& m : c.memories) {
      if (m.condensed || m.source_scene != scene.id || m.source_beat_index < beat_index) continue;
      m.stale = true;
      if (m.source_beat_index == beat_index) m.text = text;
    }
  }
  if (scene.prose) {
    for (auto& seg : scene.prose->segments) {
      if (seg.beat_index >= beat_index) seg.stale = true;
    }
    scene.prose->stale = true;
  }
  instr.updated_at = now_utc();
}

void override_situation(StoryInstrument& instr, const SceneId& scene_id, int position, std::string_view text) {
  Scene& scene = scene_at(instr, scene_id);
  if (position < 1 || position >= static_cast<int>(scene.situations.size())) {
    throw Error(ErrorCode::UnknownBeat, "no derived situation at position " + std::to_string(position),
                {{"scene", scene.id.value}, {"position", position}});
  }
  std::string clean = trim(text);
  if (clean.empty()) throw Error(ErrorCode::EmptySituation, "situation text is empty");
  const auto pos = static_cast<std::size_t>(position);
  for (std::size_t i = 1; i < pos; ++i) {
    if (scene.situations[i].stale) {
      throw Error(ErrorCode::StaleChain, "earlier situations are stale; recompute the chain first",
                  {{"scene", scene.id.value}});
    }
  }
  scene.situations[pos] = SituationState{clean, false, Derivation::ManualOverride};
  scene.beats[pos - 1].stale_downstream = false;
  for (std::size_t i = pos + 1; i < scene.situations.size(); ++i) {
    scene.situations[i].stale = true;
    scene.beats[i - 1].stale_downstream = true;
  }
  if (scene.prose && pos < scene.beats.size()) {
    for (auto& seg : scene.prose->segments) {
      if (seg.beat_index >= position) seg.stale = true;
    }
    scene.prose->stale = true;
  }
  instr.updated_at = now_utc();
}

RecomputeOutcome recompute_chain(StoryInstrument& instr, const SceneId& scene_id, Provider& provider) {
  Scene& scene = scene_at(instr, scene_id);
  auto first = std::find_if(scene.situations.begin(), scene.situations.end(),
                            [](const SituationState& s) { return s.stale; });
  if (first == scene.situations.end()) {
    throw Error(ErrorCode::NothingToRecompute, "scene '" + scene.id.value + "' has no stale situations",
                {{"scene", scene.id.value}});
  }

  RecomputeOutcome outcome;
  for (auto pos = static_cast<std::size_t>(first - scene.situations.begin()); pos < scene.situations.size(); ++pos) {
    if (!scene.situations[pos].stale) continue;
    const Beat& beat = scene.beats[pos - 1];
    std::string text;
    try {
      text = generated_text(provider.complete(build_situation_update_prompt(scene.situations[pos - 1].text, beat.text)));
    } catch (const Error& e) {
      outcome.failure = e;
      return outcome;
    }
    scene.situations[pos] = SituationState{std::move(text), false, Derivation::ProviderUpdate};
    scene.beats[pos - 1].stale_downstream = false;
    for (auto& c : instr.characters) {
      for (auto& m : c.memories) {
        if (m.stale && !m.condensed && m.source_scene == scene.id && m.source_beat_index == beat.index) {
          m.text = beat.text;
          m.stale = false;
        }
      }
    }
    ++outcome.recomputed;
    instr.updated_at = now_utc();
  }
  return outcome;
}

void condense_memories(StoryInstrument& instr, const CharacterId& character_id, Provider& provider,
                       std::size_t keep_recent) {
  Character& c = character_at(instr, character_id);
  if (c.memories.size() <= keep_recent) return;
  const std::size_t fold = c.memories.size() - keep_recent;
  const std::span<const Memory> older(c.memories.data(), fold);
  const std::string summary = generated_text(provider.complete(build_memory_condense_prompt(instr, c, older)));

  Memory condensed{older.front().source_scene, older.front().source_beat_index, summary, false, true};
  c.memories.erase(c.memories.begin(), c.memories.begin() + static_cast<std::ptrdiff_t>(fold));
  c.memories.insert(c.memories.begin(), std::move(condensed));
  instr.updated_at = now_utc();
}

}  // namespace tomb
