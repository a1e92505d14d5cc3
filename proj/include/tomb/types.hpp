#pragma once

#include "tomb/clock.hpp"

#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tomb {

inline constexpr int kSchemaVersion = 1;

template <class Tag>
struct Id {
  std::string value;

  auto operator<=>(const Id&) const = default;
};

using CharacterId = Id<struct CharacterTag>;
using SceneId = Id<struct SceneTag>;

enum class Provenance { Simulated, Nudged, Manual };
enum class Derivation { Initial, ProviderUpdate, ManualOverride };
enum class Adherence { Loose, Moderate, Strict };
enum class Intensity { Restrained, Moderate, Vivid };
enum class TargetLength { Brief, Standard, Expansive };
enum class SegmentOrigin { Generated, ManuallyEdited };

std::string_view to_string(Provenance v);
std::string_view to_string(Derivation v);
std::string_view to_string(Adherence v);
std::string_view to_string(Intensity v);
std::string_view to_string(TargetLength v);
std::string_view to_string(SegmentOrigin v);

// Parsers return std::nullopt for names outside the enumeration.
std::optional<Provenance> parse_provenance(std::string_view s);
std::optional<Derivation> parse_derivation(std::string_view s);
std::optional<Adherence> parse_adherence(std::string_view s);
std::optional<Intensity> parse_intensity(std::string_view s);
std::optional<TargetLength> parse_target_length(std::string_view s);
std::optional<SegmentOrigin> parse_segment_origin(std::string_view s);

inline constexpr double kMinTemperature = 0.1;
inline constexpr double kMaxTemperature = 2.0;

struct GenParams {
  double temperature = 1.0;
  Adherence adherence = Adherence::Moderate;
  int context_budget = 8000;  // approximate tokens

  bool operator==(const GenParams&) const = default;
};

// Throws TemperatureOutOfRange or InvalidParams.
void check_params(const GenParams& params);

struct StyleParams {
  std::string genre;
  std::string style;
  Intensity intensity = Intensity::Moderate;
  TargetLength target_length = TargetLength::Standard;

  bool operator==(const StyleParams&) const = default;
};

struct Premise {
  std::string text;
  std::optional<std::string> logline;

  bool operator==(const Premise&) const = default;
};

struct TraitScale {
  std::string name;
  int value = 50;  // [0, 100]

  bool operator==(const TraitScale&) const = default;
};

struct Memory {
  SceneId source_scene;
  int source_beat_index = 0;
  std::string text;
  bool stale = false;
  bool condensed = false;

  bool operator==(const Memory&) const = default;
};

struct Character {
  CharacterId id;
  std::string name;
  std::string description;
  std::vector<TraitScale> traits;
  std::vector<std::string> goals;
  std::vector<Memory> memories;

  bool operator==(const Character&) const = default;
};

struct SituationState {
  std::string text;
  bool stale = false;
  Derivation derivation = Derivation::Initial;

  bool operator==(const SituationState&) const = default;
};

// One (section, source) pair of a prompt's debug manifest.
struct ManifestEntry {
  std::string section;
  std::string source;

  bool operator==(const ManifestEntry&) const = default;
};

struct BeatRevision {
  std::string text;
  Provenance provenance = Provenance::Simulated;
  std::optional<std::string> nudge_text;

  bool operator==(const BeatRevision&) const = default;
};

struct Beat {
  int index = 0;
  std::string text;
  Provenance provenance = Provenance::Simulated;
  std::optional<std::string> nudge_text;
  std::set<CharacterId> participants;
  std::optional<GenParams> generation_params;
  // Set while the situation this beat produced awaits recomputation.
  bool stale_downstream = false;
  std::vector<BeatRevision> edit_history;

  bool operator==(const Beat&) const = default;
};

struct DraftBeat {
  std::string text;
  Provenance provenance = Provenance::Simulated;
  std::optional<std::string> nudge_text;
  std::optional<std::string> authored_text;
  std::set<CharacterId> proposed_participants;
  GenParams params;
  std::vector<ManifestEntry> source_bundle_manifest;

  bool operator==(const DraftBeat&) const = default;
};

struct ProseSegment {
  int beat_index = 0;
  std::string text;
  SegmentOrigin origin = SegmentOrigin::Generated;
  bool stale = false;
  // Style used for this segment when it differs from the document style.
  std::optional<StyleParams> style;

  bool operator==(const ProseSegment&) const = default;
};

struct ProseDocument {
  SceneId scene_id;
  StyleParams style;
  std::vector<ProseSegment> segments;
  Timestamp rendered_at{};
  // Set when beats changed after rendering.
  bool stale = false;

  bool operator==(const ProseDocument&) const = default;
};

struct Scene {
  SceneId id;
  int ordinal = 0;
  std::string title;
  std::string initial_situation;
  std::set<CharacterId> participants;
  std::vector<Beat> beats;
  std::vector<SituationState> situations;
  std::optional<DraftBeat> draft;
  std::optional<ProseDocument> prose;

  bool operator==(const Scene&) const = default;
};

struct StoryInstrument {
  std::string id;
  int schema_version = kSchemaVersion;
  Premise premise;
  std::vector<Character> characters;
  std::vector<Scene> scenes;
  StyleParams style_defaults;
  Timestamp created_at{};
  Timestamp updated_at{};

  bool operator==(const StoryInstrument&) const = default;
};

// Lookups return nullptr when absent.
const Character* find_character(const StoryInstrument& instr, const CharacterId& id);
Character* find_character(StoryInstrument& instr, const CharacterId& id);
const Scene* find_scene(const StoryInstrument& instr, const SceneId& id);
Scene* find_scene(StoryInstrument& instr, const SceneId& id);

// Throwing variants: UnknownCharacter / UnknownScene.
const Character& character_at(const StoryInstrument& instr, const CharacterId& id);
Character& character_at(StoryInstrument& instr, const CharacterId& id);
const Scene& scene_at(const StoryInstrument& instr, const SceneId& id);
Scene& scene_at(StoryInstrument& instr, const SceneId& id);

std::string trim(std::string_view s);

}  // namespace tomb
