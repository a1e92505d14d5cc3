#include "tomb/instrument.hpp"

#include "tomb/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <random>

namespace tomb {
namespace {

template <class E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

constexpr NameTable<Provenance, 3> kProvenance{{
    {Provenance::Simulated, "simulated"}, {Provenance::Nudged, "nudged"}, {Provenance::Manual, "manual"}}};
constexpr NameTable<Derivation, 3> kDerivation{{{Derivation::Initial, "initial"},
                                                {Derivation::ProviderUpdate, "provider_update"},
                                                {Derivation::ManualOverride, "manual_override"}}};
constexpr NameTable<Adherence, 3> kAdherence{
    {{Adherence::Loose, "loose"}, {Adherence::Moderate, "moderate"}, {Adherence::Strict, "strict"}}};
constexpr NameTable<Intensity, 3> kIntensity{
    {{Intensity::Restrained, "restrained"}, {Intensity::Moderate, "moderate"}, {Intensity::Vivid, "vivid"}}};
constexpr NameTable<TargetLength, 3> kTargetLength{{{TargetLength::Brief, "brief"},
                                                    {TargetLength::Standard, "standard"},
                                                    {TargetLength::Expansive, "expansive"}}};
constexpr NameTable<SegmentOrigin, 2> kSegmentOrigin{
    {{SegmentOrigin::Generated, "generated"}, {SegmentOrigin::ManuallyEdited, "manually_edited"}}};

template <class E, std::size_t N>
std::string_view lookup_name(const NameTable<E, N>& table, E value) {
  for (const auto& [v, name] : table) {
    if (v == value) return name;
  }
  return "unknown";
}

template <class E, std::size_t N>
std::optional<E> lookup_value(const NameTable<E, N>& table, std::string_view name) {
  for (const auto& [v, n] : table) {
    if (n == name) return v;
  }
  return std::nullopt;
}

void check_traits(const std::vector<TraitScale>& traits) {
  std::set<std::string> seen;
  for (const auto& trait : traits) {
    if (trim(trait.name).empty()) throw Error(ErrorCode::EmptyName, "trait name is empty");
    if (trait.value < 0 || trait.value > 100) {
      throw Error(ErrorCode::TraitOutOfRange,
                  "trait '" + trait.name + "' = " + std::to_string(trait.value) + " is outside [0, 100]",
                  {{"trait", trait.name}, {"value", trait.value}});
    }
    if (!seen.insert(trait.name).second) {
      throw Error(ErrorCode::DuplicateTraitName, "trait '" + trait.name + "' given twice", {{"trait", trait.name}});
    }
  }
}

void check_unique_name(const StoryInstrument& instr, const std::string& name, const CharacterId* self) {
  if (name.empty()) throw Error(ErrorCode::EmptyName, "character name is empty");
  for (const auto& c : instr.characters) {
    if (c.name == name && (self == nullptr || c.id != *self)) {
      throw Error(ErrorCode::DuplicateName, "a character named '" + name + "' already exists", {{"name", name}});
    }
  }
}

void check_participants(const StoryInstrument& instr, const std::set<CharacterId>& participants) {
  if (participants.empty()) throw Error(ErrorCode::EmptyParticipants, "a scene needs at least one participant");
  for (const auto& id : participants) {
    if (find_character(instr, id) == nullptr) {
      throw Error(ErrorCode::UnknownCharacter, "unknown character '" + id.value + "'", {{"character", id.value}});
    }
  }
}

template <class T, class IdOf>
std::string next_id(const std::vector<T>& items, std::string_view prefix, IdOf id_of) {
  int highest = 0;
  for (const auto& item : items) {
    const std::string& id = id_of(item);
    if (id.size() > prefix.size() && id.compare(0, prefix.size(), prefix) == 0) {
      const std::string digits = id.substr(prefix.size());
      if (std::all_of(digits.begin(), digits.end(), [](unsigned char ch) { return std::isdigit(ch); }) &&
          digits.size() < 9) {
        highest = std::max(highest, std::stoi(digits));
      }
    }
  }
  return std::string(prefix) + std::to_string(highest + 1);
}

}  // namespace

std::string_view to_string(Provenance v) { return lookup_name(kProvenance, v); }
std::string_view to_string(Derivation v) { return lookup_name(kDerivation, v); }
std::string_view to_string(Adherence v) { return lookup_name(kAdherence, v); }
std::string_view to_string(Intensity v) { return lookup_name(kIntensity, v); }
std::string_view to_string(TargetLength v) { return lookup_name(kTargetLength, v); }
std::string_view to_string(SegmentOrigin v) { return lookup_name(kSegmentOrigin, v); }

std::optional<Provenance> parse_provenance(std::string_view s) { return lookup_value(kProvenance, s); }
std::optional<Derivation> parse_derivation(std::string_view s) { return lookup_value(kDerivation, s); }
std::optional<Adherence> parse_adherence(std::string_view s) { return lookup_value(kAdherence, s); }
std::optional<Intensity> parse_intensity(std::string_view s) { return lookup_value(kIntensity, s); }
std::optional<TargetLength> parse_target_length(std::string_view s) { return lookup_value(kTargetLength, s); }
std::optional<SegmentOrigin> parse_segment_origin(std::string_view s) { return lookup_value(kSegmentOrigin, s); }

void check_params(const GenParams& params) {
  // Negated comparisons so NaN is rejected too.
  if (!(params.temperature >= kMinTemperature && params.temperature <= kMaxTemperature)) {
    throw Error(ErrorCode::TemperatureOutOfRange,
                "temperature " + std::to_string(params.temperature) + " is outside [0.1, 2.0]",
                {{"temperature", params.temperature}});
  }
  if (params.context_budget <= 0) {
    throw Error(ErrorCode::InvalidParams, "context_budget must be positive", {{"context_budget", params.context_budget}});
  }
}

std::string trim(std::string_view s) {
  const auto is_space = [](unsigned char ch) { return std::isspace(ch) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return std::string(s);
}

const Character* find_character(const StoryInstrument& instr, const CharacterId& id) {
  for (const auto& c : instr.characters) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

Character* find_character(StoryInstrument& instr, const CharacterId& id) {
  return const_cast<Character*>(find_character(std::as_const(instr), id));
}

const Scene* find_scene(const StoryInstrument& instr, const SceneId& id) {
  for (const auto& s : instr.scenes) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

Scene* find_scene(StoryInstrument& instr, const SceneId& id) {
  return const_cast<Scene*>(find_scene(std::as_const(instr), id));
}

const Character& character_at(const StoryInstrument& instr, const CharacterId& id) {
  if (const auto* c = find_character(instr, id)) return *c;
  throw Error(ErrorCode::UnknownCharacter, "unknown character '" + id.value + "'", {{"character", id.value}});
}

Character& character_at(StoryInstrument& instr, const CharacterId& id) {
  return const_cast<Character&>(character_at(std::as_const(instr), id));
}

const Scene& scene_at(const StoryInstrument& instr, const SceneId& id) {
  if (const auto* s = find_scene(instr, id)) return *s;
  throw Error(ErrorCode::UnknownScene, "unknown scene '" + id.value + "'", {{"scene", id.value}});
}

Scene& scene_at(StoryInstrument& instr, const SceneId& id) {
  return const_cast<Scene&>(scene_at(std::as_const(instr), id));
}

std::string generate_project_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  static constexpr char kHex[] = "0123456789abcdef";
  std::uint64_t bits = rng();
  std::string id(16, '0');
  for (auto& ch : id) {
    ch = kHex[bits & 0xF];
    bits >>= 4;
  }
  return id;
}

StoryInstrument create_instrument(std::string_view premise_text, const StyleParams& style_defaults, std::string id) {
  std::string text = trim(premise_text);
  if (text.empty()) throw Error(ErrorCode::EmptyPremise, "premise text is empty");
  StoryInstrument instr;
  instr.id = id.empty() ? generate_project_id() : std::move(id);
  instr.premise.text = std::move(text);
  instr.style_defaults = style_defaults;
  instr.created_at = instr.updated_at = now_utc();
  return instr;
}

CharacterId add_character(StoryInstrument& instr, std::string_view name, std::string_view description,
                          std::vector<TraitScale> traits, std::vector<std::string> goals) {
  std::string clean_name = trim(name);
  check_unique_name(instr, clean_name, nullptr);
  check_traits(traits);

  Character c;
  c.id = CharacterId{next_id(instr.characters, "char-", [](const Character& ch) -> const std::string& {
    return ch.id.value;
  })};
  c.name = std::move(clean_name);
  c.description = std::string(description);
  c.traits = std::move(traits);
  c.goals = std::move(goals);
  instr.characters.push_back(std::move(c));
  instr.updated_at = now_utc();
  return instr.characters.back().id;
}

SceneId add_scene(StoryInstrument& instr, std::string_view title, std::string_view initial_situation,
                  const std::set<CharacterId>& participants) {
  std::string situation = trim(initial_situation);
  if (situation.empty()) throw Error(ErrorCode::EmptySituation, "initial situation is empty");
  check_participants(instr, participants);

  Scene s;
  s.id = SceneId{next_id(instr.scenes, "scene-", [](const Scene& sc) -> const std::string& { return sc.id.value; })};
  s.ordinal = 0;
  for (const auto& existing : instr.scenes) s.ordinal = std::max(s.ordinal, existing.ordinal + 1);
  s.title = std::string(title);
  s.initial_situation = situation;
  s.participants = participants;
  s.situations.push_back(SituationState{situation, false, Derivation::Initial});
  instr.scenes.push_back(std::move(s));
  instr.updated_at = now_utc();
  return instr.scenes.back().id;
}

void update_character(StoryInstrument& instr, const CharacterId& id, const CharacterPatch& patch) {
  Character& c = character_at(instr, id);
  std::optional<std::string> name;
  if (patch.name) {
    name = trim(*patch.name);
    check_unique_name(instr, *name, &id);
  }
  if (patch.traits) check_traits(*patch.traits);

  if (name) c.name = *name;
  if (patch.description) c.description = *patch.description;
  if (patch.traits) c.traits = *patch.traits;
  if (patch.goals) c.goals = *patch.goals;
  instr.updated_at = now_utc();
}

void update_scene(StoryInstrument& instr, const SceneId& id, const ScenePatch& patch) {
  Scene& s = scene_at(instr, id);
  std::optional<std::string> situation;
  if (patch.initial_situation) {
    situation = trim(*patch.initial_situation);
    if (situation->empty()) throw Error(ErrorCode::EmptySituation, "initial situation is empty");
  }
  if (patch.participants) {
    check_participants(instr, *patch.participants);
    auto require_kept = [&](const std::set<CharacterId>& used) {
      for (const auto& cid : used) {
        if (!patch.participants->contains(cid)) {
          throw Error(ErrorCode::ParticipantInUse,
                      "character '" + cid.value + "' takes part in existing beats of this scene",
                      {{"character", cid.value}});
        }
      }
    };
    for (const auto& beat : s.beats) require_kept(beat.participants);
    if (s.draft) require_kept(s.draft->proposed_participants);
  }

  if (patch.title) s.title = *patch.title;
  if (situation && *situation != s.initial_situation) {
    s.initial_situation = *situation;
    s.situations.front().text = *situation;
    for (std::size_t i = 1; i < s.situations.size(); ++i) s.situations[i].stale = true;
    for (auto& beat : s.beats) beat.stale_downstream = true;
    if (s.prose) s.prose->stale = true;
  }
  if (patch.participants) s.participants = *patch.participants;
  instr.updated_at = now_utc();
}

bool ValidationReport::has(std::string_view code) const {
  return std::any_of(findings.begin(), findings.end(), [&](const Finding& f) { return f.code == code; });
}

void require_valid(const StoryInstrument& instr) {
  ValidationReport report = validate_instrument(instr);
  if (report.ok()) return;
  nlohmann::json findings = nlohmann::json::array();
  for (const auto& f : report.findings) {
    findings.push_back({{"code", f.code}, {"path", f.path}, {"message", f.message}});
  }
  throw Error(ErrorCode::InvariantViolation,
              "instrument violates " + std::to_string(report.findings.size()) + " invariant(s), first: " +
                  report.findings.front().code + " at " + report.findings.front().path,
              {{"findings", std::move(findings)}});
}

}  // namespace tomb
