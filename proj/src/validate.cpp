#include "tomb/instrument.hpp"

#include <map>
#include <tuple>

namespace tomb {
namespace {

class Checker {
 public:
  explicit Checker(const StoryInstrument& instr) : instr_(instr) {}

  ValidationReport run() {
    if (instr_.schema_version != kSchemaVersion) {
      add("SCHEMA_VERSION", "/schema_version", "schema_version is " + std::to_string(instr_.schema_version));
    }
    if (instr_.id.empty()) add("EMPTY_PROJECT_ID", "/id", "project id is empty");
    if (trim(instr_.premise.text).empty()) add("EMPTY_PREMISE", "/premise/text", "premise text is empty");
    if (instr_.updated_at < instr_.created_at) {
      add("TIMESTAMP_ORDER", "/updated_at", "updated_at precedes created_at");
    }
    check_characters();
    check_scenes();
    return std::move(report_);
  }

 private:
  void add(std::string code, std::string path, std::string message) {
    report_.findings.push_back(Finding{std::move(code), std::move(path), std::move(message)});
  }

  void check_params(const GenParams& params, const std::string& path) {
    if (!(params.temperature >= kMinTemperature && params.temperature <= kMaxTemperature)) {
      add("TEMPERATURE_OUT_OF_RANGE", path + "/temperature", "temperature outside [0.1, 2.0]");
    }
    if (params.context_budget <= 0) add("CONTEXT_BUDGET", path + "/context_budget", "context_budget must be > 0");
  }

  void check_characters() {
    std::set<CharacterId> ids;
    std::set<std::string> names;
    for (std::size_t ci = 0; ci < instr_.characters.size(); ++ci) {
      const Character& c = instr_.characters[ci];
      const std::string path = "/characters/" + std::to_string(ci);
      if (c.id.value.empty()) add("EMPTY_CHARACTER_ID", path + "/id", "character id is empty");
      if (!ids.insert(c.id).second) add("DUPLICATE_CHARACTER_ID", path + "/id", "id '" + c.id.value + "' repeats");
      if (trim(c.name).empty()) add("EMPTY_CHARACTER_NAME", path + "/name", "character name is empty");
      if (!names.insert(c.name).second) add("DUPLICATE_CHARACTER_NAME", path + "/name", "name '" + c.name + "' repeats");

      std::set<std::string> trait_names;
      for (std::size_t ti = 0; ti < c.traits.size(); ++ti) {
        const TraitScale& t = c.traits[ti];
        const std::string tpath = path + "/traits/" + std::to_string(ti);
        if (trim(t.name).empty()) add("EMPTY_TRAIT_NAME", tpath + "/name", "trait name is empty");
        if (t.value < 0 || t.value > 100) add("TRAIT_OUT_OF_RANGE", tpath + "/value", "trait value outside [0, 100]");
        if (!trait_names.insert(t.name).second) add("DUPLICATE_TRAIT_NAME", tpath + "/name", "trait repeats");
      }
      check_memories(c, path);
    }
  }

  void check_memories(const Character& c, const std::string& path) {
    std::optional<std::tuple<int, int>> previous;
    for (std::size_t mi = 0; mi < c.memories.size(); ++mi) {
      const Memory& m = c.memories[mi];
      const std::string mpath = path + "/memories/" + std::to_string(mi);
      if (m.text.empty()) add("EMPTY_MEMORY_TEXT", mpath + "/text", "memory text is empty");
      const Scene* scene = find_scene(instr_, m.source_scene);
      if (scene == nullptr) {
        add("MEMORY_UNKNOWN_SCENE", mpath + "/source_scene", "scene '" + m.source_scene.value + "' does not exist");
        previous.reset();
        continue;
      }
      if (m.source_beat_index < 0 || m.source_beat_index >= static_cast<int>(scene->beats.size())) {
        add("MEMORY_UNKNOWN_BEAT", mpath + "/source_beat_index", "beat index does not resolve");
      }
      const std::tuple key{scene->ordinal, m.source_beat_index};
      if (previous) {
        if (key == *previous) {
          add("DUPLICATE_MEMORY", mpath, "two memories share one source beat");
        } else if (key < *previous) {
          add("MEMORY_ORDER", mpath, "memories are not in chronological order");
        }
      }
      previous = key;
    }
  }

  void check_scenes() {
    std::set<SceneId> ids;
    std::set<int> ordinals;
    for (std::size_t si = 0; si < instr_.scenes.size(); ++si) {
      const Scene& s = instr_.scenes[si];
      const std::string path = "/scenes/" + std::to_string(si);
      if (s.id.value.empty()) add("EMPTY_SCENE_ID", path + "/id", "scene id is empty");
      if (!ids.insert(s.id).second) add("DUPLICATE_SCENE_ID", path + "/id", "id '" + s.id.value + "' repeats");
      if (s.ordinal < 0) add("NEGATIVE_ORDINAL", path + "/ordinal", "ordinal is negative");
      if (!ordinals.insert(s.ordinal).second) add("DUPLICATE_SCENE_ORDINAL", path + "/ordinal", "ordinal repeats");
      if (si > 0 && s.ordinal <= instr_.scenes[si - 1].ordinal) {
        add("SCENE_ORDER", path + "/ordinal", "scenes are not listed in ascending ordinal order");
      }
      if (trim(s.initial_situation).empty()) add("EMPTY_SITUATION", path + "/initial_situation", "S0 is empty");
      if (s.participants.empty()) add("EMPTY_PARTICIPANTS", path + "/participants", "scene has no participants");
      for (const auto& cid : s.participants) {
        if (find_character(instr_, cid) == nullptr) {
          add("SCENE_PARTICIPANT_UNKNOWN", path + "/participants", "unknown character '" + cid.value + "'");
        }
      }
      check_beats(s, path);
      check_situations(s, path);
      check_draft(s, path);
      check_prose(s, path);
    }
  }

  void check_beat_participants(const Scene& s, const std::set<CharacterId>& participants, const std::string& path,
                               const std::string& empty_code, const std::string& outside_code) {
    if (participants.empty()) add(empty_code, path, "no participants");
    for (const auto& cid : participants) {
      if (!s.participants.contains(cid)) add(outside_code, path, "'" + cid.value + "' is not a scene participant");
    }
  }

  void check_beats(const Scene& s, const std::string& path) {
    for (std::size_t bi = 0; bi < s.beats.size(); ++bi) {
      const Beat& b = s.beats[bi];
      const std::string bpath = path + "/beats/" + std::to_string(bi);
      if (b.index != static_cast<int>(bi)) add("BEAT_INDEX_GAP", bpath + "/index", "beat index is not contiguous");
      if (trim(b.text).empty()) add("EMPTY_BEAT_TEXT", bpath + "/text", "beat text is empty");
      if (b.provenance == Provenance::Nudged && (!b.nudge_text || trim(*b.nudge_text).empty())) {
        add("NUDGE_TEXT_MISSING", bpath + "/nudge_text", "nudged beat has no nudge text");
      }
      if (b.provenance != Provenance::Nudged && b.nudge_text) {
        add("NUDGE_TEXT_UNEXPECTED", bpath + "/nudge_text", "only nudged beats carry nudge text");
      }
      check_beat_participants(s, b.participants, bpath + "/participants", "BEAT_EMPTY_PARTICIPANTS",
                              "BEAT_PARTICIPANT_NOT_IN_SCENE");
      if (b.generation_params) check_params(*b.generation_params, bpath + "/generation_params");
    }
  }

  void check_situations(const Scene& s, const std::string& path) {
    if (s.situations.size() != s.beats.size() + 1) {
      add("SITUATION_CHAIN_LENGTH", path + "/situations",
          "expected " + std::to_string(s.beats.size() + 1) + " situations, found " +
              std::to_string(s.situations.size()));
    }
    if (s.situations.empty()) return;
    const SituationState& head = s.situations.front();
    if (head.text != s.initial_situation) add("SITUATION_HEAD_MISMATCH", path + "/situations/0/text", "S0 differs");
    if (head.derivation != Derivation::Initial) {
      add("SITUATION_HEAD_DERIVATION", path + "/situations/0/derivation", "S0 must be 'initial'");
    }
    if (head.stale) add("SITUATION_HEAD_STALE", path + "/situations/0/stale", "S0 cannot be stale");
    for (std::size_t i = 1; i < s.situations.size(); ++i) {
      if (s.situations[i].derivation == Derivation::Initial) {
        add("SITUATION_DERIVATION", path + "/situations/" + std::to_string(i) + "/derivation",
            "only S0 may be 'initial'");
      }
    }
  }

  void check_draft(const Scene& s, const std::string& path) {
    if (!s.draft) return;
    const DraftBeat& d = *s.draft;
    const std::string dpath = path + "/draft";
    if (trim(d.text).empty()) add("EMPTY_DRAFT_TEXT", dpath + "/text", "draft text is empty");
    if (d.provenance == Provenance::Nudged && (!d.nudge_text || trim(*d.nudge_text).empty())) {
      add("NUDGE_TEXT_MISSING", dpath + "/nudge_text", "nudged draft has no nudge text");
    }
    check_beat_participants(s, d.proposed_participants, dpath + "/proposed_participants", "DRAFT_EMPTY_PARTICIPANTS",
                            "DRAFT_PARTICIPANT_NOT_IN_SCENE");
    check_params(d.params, dpath + "/params");
  }

  void check_prose(const Scene& s, const std::string& path) {
    if (!s.prose) return;
    const ProseDocument& doc = *s.prose;
    const std::string ppath = path + "/prose";
    if (doc.scene_id != s.id) add("PROSE_SCENE_MISMATCH", ppath + "/scene_id", "document belongs to another scene");
    if (!doc.stale && doc.segments.size() != s.beats.size()) {
      add("PROSE_SEGMENT_COUNT", ppath + "/segments", "segment count differs from beat count");
    }
    if (doc.segments.size() > s.beats.size()) {
      add("PROSE_SEGMENT_OVERFLOW", ppath + "/segments", "more segments than beats");
    }
    for (std::size_t i = 0; i < doc.segments.size(); ++i) {
      const ProseSegment& seg = doc.segments[i];
      const std::string spath = ppath + "/segments/" + std::to_string(i);
      if (seg.beat_index != static_cast<int>(i)) add("PROSE_SEGMENT_INDEX", spath + "/beat_index", "index mismatch");
      if (!seg.stale && seg.text.empty()) add("PROSE_SEGMENT_EMPTY", spath + "/text", "segment text is empty");
    }
  }

  const StoryInstrument& instr_;
  ValidationReport report_;
};

}  // namespace

ValidationReport validate_instrument(const StoryInstrument& instr) { return Checker(instr).run(); }

}  // namespace tomb
