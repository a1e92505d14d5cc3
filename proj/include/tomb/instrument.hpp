#pragma once

#include "tomb/types.hpp"

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tomb {

// A fresh project id: 16 lowercase hex digits.
std::string generate_project_id();

// Throws EmptyPremise. An empty id asks for a generated one.
StoryInstrument create_instrument(std::string_view premise_text, const StyleParams& style_defaults,
                                  std::string id = {});

// Throws EmptyName, DuplicateName, TraitOutOfRange, DuplicateTraitName.
CharacterId add_character(StoryInstrument& instr, std::string_view name, std::string_view description,
                          std::vector<TraitScale> traits, std::vector<std::string> goals);

// Throws EmptySituation, EmptyParticipants, UnknownCharacter.
SceneId add_scene(StoryInstrument& instr, std::string_view title, std::string_view initial_situation,
                  const std::set<CharacterId>& participants);

struct CharacterPatch {
  std::optional<std::string> name;
  std::optional<std::string> description;
  std::optional<std::vector<TraitScale>> traits;
  std::optional<std::vector<std::string>> goals;
};

void update_character(StoryInstrument& instr, const CharacterId& id, const CharacterPatch& patch);

struct ScenePatch {
  std::optional<std::string> title;
  // Replaces S0 and invalidates every derived situation of the scene.
  std::optional<std::string> initial_situation;
  // Must keep every character that already appears in a beat or the draft.
  std::optional<std::set<CharacterId>> participants;
};

void update_scene(StoryInstrument& instr, const SceneId& id, const ScenePatch& patch);

struct Finding {
  std::string code;
  std::string path;  // JSON pointer into the canonical document
  std::string message;

  bool operator==(const Finding&) const = default;
};

struct ValidationReport {
  std::vector<Finding> findings;

  bool ok() const { return findings.empty(); }
  bool has(std::string_view code) const;
};

ValidationReport validate_instrument(const StoryInstrument& instr);

// Throws InvariantViolation carrying the report when the instrument is invalid.
void require_valid(const StoryInstrument& instr);

}  // namespace tomb
