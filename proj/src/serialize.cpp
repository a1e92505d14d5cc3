#include "tomb/serialize.hpp"

#include "tomb/error.hpp"
#include "tomb/instrument.hpp"

#include <functional>

namespace tomb {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

template <class T>
ordered_json optional_json(const std::optional<T>& value) {
  if (!value) return nullptr;
  if constexpr (std::is_same_v<T, std::string>) {
    return *value;
  } else {
    return to_json(*value);
  }
}

template <class Tag>
ordered_json id_set_json(const std::set<Id<Tag>>& ids) {
  ordered_json out = ordered_json::array();
  for (const auto& id : ids) out.push_back(id.value);
  return out;
}

ordered_json to_json(const Memory& m) {
  ordered_json j;
  j["source_scene"] = m.source_scene.value;
  j["source_beat_index"] = m.source_beat_index;
  j["text"] = m.text;
  j["stale"] = m.stale;
  j["condensed"] = m.condensed;
  return j;
}

ordered_json to_json(const SituationState& s) {
  ordered_json j;
  j["text"] = s.text;
  j["stale"] = s.stale;
  j["derivation"] = to_string(s.derivation);
  return j;
}

ordered_json to_json(const BeatRevision& r) {
  ordered_json j;
  j["text"] = r.text;
  j["provenance"] = to_string(r.provenance);
  j["nudge_text"] = optional_json(r.nudge_text);
  return j;
}

[[noreturn]] void malformed(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::MalformedDocument, "malformed document at " + (path.empty() ? "/" : path) + ": " + what,
              {{"path", path.empty() ? "/" : path}});
}

// Typed field access with JSON-pointer paths in every error.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) malformed(path_, "expected an object");
  }

  const json& field(const char* key) const {
    auto it = j_.find(key);
    if (it == j_.end()) malformed(child(key), "missing field");
    return *it;
  }

  std::string child(const std::string& key) const { return path_ + "/" + key; }

  std::string str(const char* key) const {
    const json& v = field(key);
    if (!v.is_string()) malformed(child(key), "expected a string");
    return v.get<std::string>();
  }

  std::optional<std::string> opt_str(const char* key) const {
    const json& v = field(key);
    if (v.is_null()) return std::nullopt;
    if (!v.is_string()) malformed(child(key), "expected a string or null");
    return v.get<std::string>();
  }

  int integer(const char* key) const {
    const json& v = field(key);
    if (!v.is_number_integer()) malformed(child(key), "expected an integer");
    const auto wide = v.get<std::int64_t>();
    if (wide < INT32_MIN || wide > INT32_MAX) malformed(child(key), "integer out of range");
    return static_cast<int>(wide);
  }

  double number(const char* key) const {
    const json& v = field(key);
    if (!v.is_number()) malformed(child(key), "expected a number");
    return v.get<double>();
  }

  bool boolean(const char* key) const {
    const json& v = field(key);
    if (!v.is_boolean()) malformed(child(key), "expected a boolean");
    return v.get<bool>();
  }

  Timestamp timestamp(const char* key) const {
    const std::string text = str(key);
    try {
      return parse_timestamp(text);
    } catch (const std::invalid_argument&) {
      malformed(child(key), "expected a UTC timestamp");
    }
  }

  template <class E>
  E enumeration(const char* key, std::optional<E> (*parse)(std::string_view)) const {
    const std::string text = str(key);
    auto value = parse(text);
    if (!value) malformed(child(key), "unknown value '" + text + "'");
    return *value;
  }

  template <class T>
  std::vector<T> list(const char* key, const std::function<T(const json&, const std::string&)>& item) const {
    const json& v = field(key);
    if (!v.is_array()) malformed(child(key), "expected an array");
    std::vector<T> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(item(v[i], child(key) + "/" + std::to_string(i)));
    return out;
  }

  template <class Tag>
  std::set<Id<Tag>> id_set(const char* key) const {
    std::set<Id<Tag>> out;
    for (auto& s : list<std::string>(key, string_item)) {
      if (!out.insert(Id<Tag>{s}).second) malformed(child(key), "duplicate id '" + s + "'");
    }
    return out;
  }

  static std::string string_item(const json& v, const std::string& path) {
    if (!v.is_string()) malformed(path, "expected a string");
    return v.get<std::string>();
  }

 private:
  const json& j_;
  std::string path_;
};

Memory memory_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  Memory m;
  m.source_scene = SceneId{r.str("source_scene")};
  m.source_beat_index = r.integer("source_beat_index");
  m.text = r.str("text");
  m.stale = r.boolean("stale");
  m.condensed = r.boolean("condensed");
  return m;
}

Character character_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  Character c;
  c.id = CharacterId{r.str("id")};
  c.name = r.str("name");
  c.description = r.str("description");
  c.traits = r.list<TraitScale>("traits", trait_from_json);
  c.goals = r.list<std::string>("goals", Reader::string_item);
  c.memories = r.list<Memory>("memories", memory_from_json);
  return c;
}

SituationState situation_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  return SituationState{r.str("text"), r.boolean("stale"), r.enumeration("derivation", parse_derivation)};
}

BeatRevision revision_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  return BeatRevision{r.str("text"), r.enumeration("provenance", parse_provenance), r.opt_str("nudge_text")};
}

Beat beat_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  Beat b;
  b.index = r.integer("index");
  b.text = r.str("text");
  b.provenance = r.enumeration("provenance", parse_provenance);
  b.nudge_text = r.opt_str("nudge_text");
  b.participants = r.id_set<CharacterTag>("participants");
  if (const json& p = r.field("generation_params"); !p.is_null()) {
    b.generation_params = gen_params_from_json(p, r.child("generation_params"));
  }
  b.stale_downstream = r.boolean("stale_downstream");
  b.edit_history = r.list<BeatRevision>("edit_history", revision_from_json);
  return b;
}

ManifestEntry manifest_entry_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  return ManifestEntry{r.str("section"), r.str("source")};
}

DraftBeat draft_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  DraftBeat d;
  d.text = r.str("text");
  d.provenance = r.enumeration("provenance", parse_provenance);
  d.nudge_text = r.opt_str("nudge_text");
  d.authored_text = r.opt_str("authored_text");
  d.proposed_participants = r.id_set<CharacterTag>("proposed_participants");
  d.params = gen_params_from_json(r.field("params"), r.child("params"));
  d.source_bundle_manifest = r.list<ManifestEntry>("source_bundle_manifest", manifest_entry_from_json);
  return d;
}

ProseSegment segment_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  ProseSegment seg;
  seg.beat_index = r.integer("beat_index");
  seg.text = r.str("text");
  seg.origin = r.enumeration("origin", parse_segment_origin);
  seg.stale = r.boolean("stale");
  if (const json& st = r.field("style"); !st.is_null()) seg.style = style_params_from_json(st, r.child("style"));
  return seg;
}

ProseDocument prose_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  ProseDocument doc;
  doc.scene_id = SceneId{r.str("scene_id")};
  doc.style = style_params_from_json(r.field("style"), r.child("style"));
  doc.rendered_at = r.timestamp("rendered_at");
  doc.stale = r.boolean("stale");
  doc.segments = r.list<ProseSegment>("segments", segment_from_json);
  return doc;
}

Scene scene_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  Scene s;
  s.id = SceneId{r.str("id")};
  s.ordinal = r.integer("ordinal");
  s.title = r.str("title");
  s.initial_situation = r.str("initial_situation");
  s.participants = r.id_set<CharacterTag>("participants");
  s.situations = r.list<SituationState>("situations", situation_from_json);
  s.beats = r.list<Beat>("beats", beat_from_json);
  if (const json& d = r.field("draft"); !d.is_null()) s.draft = draft_from_json(d, r.child("draft"));
  if (const json& p = r.field("prose"); !p.is_null()) s.prose = prose_from_json(p, r.child("prose"));
  return s;
}

}  // namespace

ordered_json to_json(const GenParams& p) {
  ordered_json j;
  j["temperature"] = p.temperature;
  j["adherence"] = to_string(p.adherence);
  j["context_budget"] = p.context_budget;
  return j;
}

ordered_json to_json(const StyleParams& s) {
  ordered_json j;
  j["genre"] = s.genre;
  j["style"] = s.style;
  j["intensity"] = to_string(s.intensity);
  j["target_length"] = to_string(s.target_length);
  return j;
}

ordered_json to_json(const Character& c) {
  ordered_json j;
  j["id"] = c.id.value;
  j["name"] = c.name;
  j["description"] = c.description;
  j["traits"] = ordered_json::array();
  for (const auto& t : c.traits) j["traits"].push_back(ordered_json{{"name", t.name}, {"value", t.value}});
  j["goals"] = c.goals;
  j["memories"] = ordered_json::array();
  for (const auto& m : c.memories) j["memories"].push_back(to_json(m));
  return j;
}

ordered_json to_json(const Beat& b) {
  ordered_json j;
  j["index"] = b.index;
  j["text"] = b.text;
  j["provenance"] = to_string(b.provenance);
  j["nudge_text"] = optional_json(b.nudge_text);
  j["participants"] = id_set_json(b.participants);
  j["generation_params"] = optional_json(b.generation_params);
  j["stale_downstream"] = b.stale_downstream;
  j["edit_history"] = ordered_json::array();
  for (const auto& r : b.edit_history) j["edit_history"].push_back(to_json(r));
  return j;
}

ordered_json to_json(const DraftBeat& d) {
  ordered_json j;
  j["text"] = d.text;
  j["provenance"] = to_string(d.provenance);
  j["nudge_text"] = optional_json(d.nudge_text);
  j["authored_text"] = optional_json(d.authored_text);
  j["proposed_participants"] = id_set_json(d.proposed_participants);
  j["params"] = to_json(d.params);
  j["source_bundle_manifest"] = ordered_json::array();
  for (const auto& e : d.source_bundle_manifest) {
    j["source_bundle_manifest"].push_back(ordered_json{{"section", e.section}, {"source", e.source}});
  }
  return j;
}

ordered_json to_json(const ProseSegment& seg) {
  ordered_json j;
  j["beat_index"] = seg.beat_index;
  j["text"] = seg.text;
  j["origin"] = to_string(seg.origin);
  j["stale"] = seg.stale;
  j["style"] = optional_json(seg.style);
  return j;
}

ordered_json to_json(const ProseDocument& doc) {
  ordered_json j;
  j["scene_id"] = doc.scene_id.value;
  j["style"] = to_json(doc.style);
  j["rendered_at"] = format_timestamp(doc.rendered_at);
  j["stale"] = doc.stale;
  j["segments"] = ordered_json::array();
  for (const auto& seg : doc.segments) j["segments"].push_back(to_json(seg));
  return j;
}

ordered_json to_json(const Scene& s) {
  ordered_json j;
  j["id"] = s.id.value;
  j["ordinal"] = s.ordinal;
  j["title"] = s.title;
  j["initial_situation"] = s.initial_situation;
  j["participants"] = id_set_json(s.participants);
  j["situations"] = ordered_json::array();
  for (const auto& st : s.situations) j["situations"].push_back(to_json(st));
  j["beats"] = ordered_json::array();
  for (const auto& b : s.beats) j["beats"].push_back(to_json(b));
  j["draft"] = optional_json(s.draft);
  j["prose"] = optional_json(s.prose);
  return j;
}

ordered_json to_json(const StoryInstrument& instr) {
  ordered_json j;
  j["schema_version"] = instr.schema_version;
  j["id"] = instr.id;
  j["created_at"] = format_timestamp(instr.created_at);
  j["updated_at"] = format_timestamp(instr.updated_at);
  j["premise"] = ordered_json{{"text", instr.premise.text}, {"logline", optional_json(instr.premise.logline)}};
  j["style_defaults"] = to_json(instr.style_defaults);
  j["characters"] = ordered_json::array();
  for (const auto& c : instr.characters) j["characters"].push_back(to_json(c));
  j["scenes"] = ordered_json::array();
  for (const auto& s : instr.scenes) j["scenes"].push_back(to_json(s));
  return j;
}

GenParams gen_params_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  GenParams p;
  p.temperature = r.number("temperature");
  p.adherence = r.enumeration("adherence", parse_adherence);
  p.context_budget = r.integer("context_budget");
  return p;
}

StyleParams style_params_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  StyleParams s;
  s.genre = r.str("genre");
  s.style = r.str("style");
  s.intensity = r.enumeration("intensity", parse_intensity);
  s.target_length = r.enumeration("target_length", parse_target_length);
  return s;
}

TraitScale trait_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  return TraitScale{r.str("name"), r.integer("value")};
}

std::string serialize(const StoryInstrument& instr) {
  require_valid(instr);
  std::string out = to_json(instr).dump(2, ' ', false, json::error_handler_t::replace);
  out.push_back('\n');
  return out;
}

StoryInstrument deserialize_unchecked(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedDocument, std::string("document does not parse: ") + e.what(),
                {{"offset", e.byte}});
  }
  Reader r(doc, "");
  const int version = r.integer("schema_version");
  if (version > kSchemaVersion) {
    throw Error(ErrorCode::SchemaVersionTooNew,
                "document schema_version " + std::to_string(version) + " is newer than supported " +
                    std::to_string(kSchemaVersion),
                {{"schema_version", version}, {"supported", kSchemaVersion}});
  }
  StoryInstrument instr;
  instr.schema_version = version;
  instr.id = r.str("id");
  instr.created_at = r.timestamp("created_at");
  instr.updated_at = r.timestamp("updated_at");
  {
    Reader p(r.field("premise"), "/premise");
    instr.premise.text = p.str("text");
    instr.premise.logline = p.opt_str("logline");
  }
  instr.style_defaults = style_params_from_json(r.field("style_defaults"), "/style_defaults");
  instr.characters = r.list<Character>("characters", character_from_json);
  instr.scenes = r.list<Scene>("scenes", scene_from_json);
  return instr;
}

StoryInstrument deserialize(std::string_view bytes) {
  StoryInstrument instr = deserialize_unchecked(bytes);
  require_valid(instr);
  return instr;
}

}  // namespace tomb
