#include "tomb/prompt.hpp"

#include "tomb/error.hpp"
#include "tomb/templates.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>
#include <tuple>

namespace tomb {
namespace {

constexpr std::string_view kBegin = "=== BEGIN ";
constexpr std::string_view kEnd = "=== END ";
constexpr std::string_view kMarkerTail = " ===";

constexpr std::array<std::pair<PromptKind, std::string_view>, 7> kKinds{{
    {PromptKind::Simulate, "simulate"},
    {PromptKind::Nudge, "nudge"},
    {PromptKind::Polish, "polish"},
    {PromptKind::SituationUpdate, "situation_update"},
    {PromptKind::Prose, "prose"},
    {PromptKind::ProseSegment, "prose_segment"},
    {PromptKind::MemoryCondense, "memory_condense"},
}};

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

std::string escape_content(std::string_view content) {
  std::string out;
  out.reserve(content.size());
  bool line_start = true;
  for (std::size_t i = 0; i < content.size(); ++i) {
    if (line_start && (content[i] == '\\' || starts_with(content.substr(i), "==="))) out.push_back('\\');
    out.push_back(content[i]);
    line_start = content[i] == '\n';
  }
  return out;
}

std::string render_section(const PromptSection& s) {
  std::string out;
  out.append(kBegin).append(s.name).append(" ").append(s.source).append(kMarkerTail).append("\n");
  out.append(escape_content(s.content)).append("\n");
  out.append(kEnd).append(s.name).append(kMarkerTail).append("\n\n");
  return out;
}

std::size_t code_points(std::string_view s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char ch) { return (static_cast<unsigned char>(ch) & 0xC0) != 0x80; }));
}

// Accumulates sections, then renders the bundle.
class Builder {
 public:
  Builder(PromptKind kind, const GenParams& params) {
    bundle_.kind = kind;
    bundle_.params = params;
  }

  void system(std::string_view template_name, std::string_view section = "system") {
    if (!bundle_.system_text.empty()) bundle_.system_text.append("\n\n");
    bundle_.system_text.append(templates::get(template_name));
    bundle_.debug_manifest.push_back(ManifestEntry{std::string(section), templates::source_path(template_name)});
  }

  void add(std::string name, std::string source, std::string content, DropTier tier = DropTier::Never,
           int rank = 0) {
    bundle_.sections.push_back(PromptSection{std::move(name), std::move(source), std::move(content), tier, rank});
  }

  void instruction(std::string_view template_name, const std::map<std::string, std::string>& vars = {}) {
    add("instruction", templates::source_path(template_name), templates::render(template_name, vars));
  }

  PromptBundle finish() && {
    for (const auto& s : bundle_.sections) {
      bundle_.user_text.append(render_section(s));
      bundle_.debug_manifest.push_back(ManifestEntry{s.name, s.source});
    }
    return std::move(bundle_);
  }

 private:
  PromptBundle bundle_;
};

std::string character_path(const Character& c) { return "characters/" + c.id.value; }

std::string scene_path(const Scene& s) { return "scenes/" + s.id.value; }

std::vector<const Character*> participants_in_order(const StoryInstrument& instr, const Scene& scene) {
  std::vector<const Character*> out;
  for (const auto& c : instr.characters) {
    if (scene.participants.contains(c.id)) out.push_back(&c);
  }
  return out;
}

void add_premise(Builder& b, const StoryInstrument& instr) {
  b.add("premise", "premise", instr.premise.text);
  if (instr.premise.logline && !instr.premise.logline->empty()) {
    b.add("logline", "premise/logline", *instr.premise.logline);
  }
}

void add_character_sheets(Builder& b, const std::vector<const Character*>& cast) {
  int description_rank = 0;
  for (const Character* c : cast) {
    const std::string path = character_path(*c);
    b.add("character", path, c->name);
    if (!c->description.empty()) {
      b.add("character.description", path + "/description", c->description, DropTier::CharacterDescription,
            description_rank++);
    }
    if (!c->traits.empty()) {
      std::string lines;
      for (const auto& t : c->traits) {
        if (!lines.empty()) lines.push_back('\n');
        lines.append(t.name).append(": ").append(std::to_string(t.value)).append("/100");
      }
      b.add("character.traits", path + "/traits", std::move(lines));
    }
    if (!c->goals.empty()) {
      std::string lines;
      for (const auto& g : c->goals) {
        if (!lines.empty()) lines.push_back('\n');
        lines.append("- ").append(g);
      }
      b.add("character.goals", path + "/goals", std::move(lines));
    }
  }
}

std::string memory_line(const StoryInstrument& instr, const Character& c, const Memory& m) {
  if (m.condensed) return c.name + " remembers (summary of earlier events): " + m.text;
  const Scene* scene = find_scene(instr, m.source_scene);
  const std::string where = scene != nullptr && !scene->title.empty() ? scene->title : m.source_scene.value;
  return c.name + " remembers (" + where + ", beat " + std::to_string(m.source_beat_index + 1) + "): " + m.text;
}

void add_memories(Builder& b, const StoryInstrument& instr, const std::vector<const Character*>& cast) {
  // Oldest-first rank across the whole cast decides truncation order.
  struct Item {
    std::tuple<int, int, int, std::size_t> key;
    const Character* character;
    std::size_t index;
  };
  std::vector<Item> items;
  for (std::size_t ci = 0; ci < cast.size(); ++ci) {
    const Character* c = cast[ci];
    for (std::size_t mi = 0; mi < c->memories.size(); ++mi) {
      const Memory& m = c->memories[mi];
      if (m.stale) continue;
      const Scene* scene = find_scene(instr, m.source_scene);
      const int ordinal = scene != nullptr ? scene->ordinal : -1;
      items.push_back(Item{{ordinal, m.source_beat_index, static_cast<int>(ci), mi}, c, mi});
    }
  }
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return items[a].key < items[b].key; });
  std::vector<int> rank(items.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<int>(r);

  // Rendered grouped by character, chronological within each character.
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Item& item = items[i];
    const Memory& m = item.character->memories[item.index];
    b.add("memory", character_path(*item.character) + "/memories/" + std::to_string(item.index),
          memory_line(instr, *item.character, m), DropTier::Memory, rank[i]);
  }
}

void add_prior_beats(Builder& b, const Scene& scene) {
  for (const auto& beat : scene.beats) {
    b.add("beat", scene_path(scene) + "/beats/" + std::to_string(beat.index),
          "Beat " + std::to_string(beat.index + 1) + ": " + beat.text, DropTier::PriorBeat, beat.index);
  }
}

const Scene& scene_for_extension(const StoryInstrument& instr, const SceneId& scene_id) {
  const Scene& scene = scene_at(instr, scene_id);
  if (scene.situations.empty() || scene.situations.back().stale) {
    throw Error(ErrorCode::StaleChain, "scene '" + scene.id.value + "' has stale situations; recompute the chain first",
                {{"scene", scene.id.value}});
  }
  return scene;
}

std::string_view adherence_template(Adherence a) {
  switch (a) {
    case Adherence::Loose:
      return "adherence_loose";
    case Adherence::Strict:
      return "adherence_strict";
    case Adherence::Moderate:
      break;
  }
  return "adherence_moderate";
}

Builder scene_context(PromptKind kind, const StoryInstrument& instr, const Scene& scene, const GenParams& params) {
  Builder b(kind, params);
  b.system("system_simulate");
  b.system(adherence_template(params.adherence), "adherence");
  const auto cast = participants_in_order(instr, scene);
  add_premise(b, instr);
  add_character_sheets(b, cast);
  add_memories(b, instr, cast);
  const std::size_t head = scene.situations.size() - 1;
  b.add("situation", scene_path(scene) + "/situations/" + std::to_string(head), scene.situations.back().text);
  add_prior_beats(b, scene);
  return b;
}

std::string style_block(const StyleParams& style) {
  const auto [lo, hi] = word_range(style.target_length);
  std::string out;
  out.append("Genre: ").append(style.genre.empty() ? "unspecified" : style.genre).append("\n");
  out.append("Style: ").append(style.style.empty() ? "unspecified" : style.style).append("\n");
  out.append("Intensity: ").append(to_string(style.intensity)).append("\n");
  out.append("Target length: ").append(to_string(style.target_length)).append(" (");
  out.append(std::to_string(lo)).append("-").append(std::to_string(hi)).append(" words)");
  return out;
}

}  // namespace

std::string_view to_string(PromptKind kind) {
  for (const auto& [k, name] : kKinds) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<PromptKind> parse_prompt_kind(std::string_view s) {
  for (const auto& [k, name] : kKinds) {
    if (name == s) return k;
  }
  return std::nullopt;
}

std::vector<PromptSection> parse_sections(std::string_view user_text) {
  std::vector<PromptSection> out;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string_view {
    const std::size_t nl = user_text.find('\n', pos);
    if (nl == std::string_view::npos) throw std::invalid_argument("prompt text ends without newline");
    std::string_view line = user_text.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  while (pos < user_text.size()) {
    std::string_view header = next_line();
    if (!starts_with(header, kBegin) || header.size() < kBegin.size() + kMarkerTail.size() ||
        header.substr(header.size() - kMarkerTail.size()) != kMarkerTail) {
      throw std::invalid_argument("expected a section header, got: " + std::string(header));
    }
    std::string_view inner = header.substr(kBegin.size(), header.size() - kBegin.size() - kMarkerTail.size());
    const std::size_t space = inner.find(' ');
    if (space == std::string_view::npos) throw std::invalid_argument("section header without source");
    PromptSection section;
    section.name = std::string(inner.substr(0, space));
    section.source = std::string(inner.substr(space + 1));
    const std::string end_marker = std::string(kEnd) + section.name + std::string(kMarkerTail);
    bool first = true;
    while (true) {
      std::string_view line = next_line();
      if (line == end_marker) break;
      if (starts_with(line, "===")) throw std::invalid_argument("unescaped marker inside section " + section.name);
      if (!first) section.content.push_back('\n');
      first = false;
      if (!line.empty() && line.front() == '\\') line.remove_prefix(1);
      section.content.append(line);
    }
    if (next_line() != "") throw std::invalid_argument("missing blank line after section " + section.name);
    out.push_back(std::move(section));
  }
  return out;
}

int estimate_tokens(std::string_view system_text, std::string_view user_text) {
  const std::size_t chars = code_points(system_text) + code_points(user_text);
  return static_cast<int>((chars + 3) / 4);
}

int estimate_tokens(const PromptBundle& bundle) { return estimate_tokens(bundle.system_text, bundle.user_text); }

std::pair<int, int> word_range(TargetLength length) {
  switch (length) {
    case TargetLength::Brief:
      return {50, 120};
    case TargetLength::Expansive:
      return {300, 600};
    case TargetLength::Standard:
      break;
  }
  return {120, 300};
}

GenParams bookkeeping_params() { return GenParams{0.3, Adherence::Strict, 8000}; }

PromptBundle build_simulation_prompt(const StoryInstrument& instr, const SceneId& scene_id, const GenParams& params) {
  const Scene& scene = scene_for_extension(instr, scene_id);
  Builder b = scene_context(PromptKind::Simulate, instr, scene, params);
  b.instruction("simulate_instruction");
  return std::move(b).finish();
}

PromptBundle build_nudge_prompt(const StoryInstrument& instr, const SceneId& scene_id, std::string_view nudge_text,
                                const GenParams& params) {
  if (trim(nudge_text).empty()) throw Error(ErrorCode::EmptyNudge, "nudge text is empty");
  const Scene& scene = scene_for_extension(instr, scene_id);
  Builder b = scene_context(PromptKind::Nudge, instr, scene, params);
  b.add("nudge", "input/nudge", std::string(nudge_text));
  b.instruction("nudge_instruction");
  return std::move(b).finish();
}

PromptBundle build_polish_prompt(std::string_view draft_text, const StyleParams& style_defaults,
                                 const GenParams& params) {
  if (trim(draft_text).empty()) throw Error(ErrorCode::EmptyDraft, "draft text is empty");
  Builder b(PromptKind::Polish, params);
  b.system("system_polish");
  b.add("style", "input/style", style_block(style_defaults));
  b.add("draft", "input/draft", std::string(draft_text));
  b.instruction("polish_instruction");
  return std::move(b).finish();
}

PromptBundle build_situation_update_prompt(std::string_view prev_situation, std::string_view beat_text,
                                           const GenParams& params) {
  if (trim(prev_situation).empty() || trim(beat_text).empty()) {
    throw Error(ErrorCode::EmptyInput, "situation update needs a previous situation and a beat");
  }
  Builder b(PromptKind::SituationUpdate, params);
  b.system("system_situation");
  b.add("situation", "input/previous_situation", std::string(prev_situation));
  b.add("beat", "input/beat", std::string(beat_text));
  b.instruction("situation_update_instruction");
  return std::move(b).finish();
}

PromptBundle build_prose_prompt(const StoryInstrument& instr, const SceneId& scene_id, int beat_index,
                                const StyleParams& style, const GenParams& params) {
  const Scene& scene = scene_at(instr, scene_id);
  std::optional<std::string_view> previous;
  if (beat_index > 0 && scene.prose && static_cast<int>(scene.prose->segments.size()) >= beat_index) {
    const ProseSegment& prev = scene.prose->segments[beat_index - 1];
    if (!prev.text.empty()) previous = prev.text;
  }
  return build_prose_prompt(instr, scene_id, beat_index, style, previous, PromptKind::Prose, params);
}

PromptBundle build_prose_prompt(const StoryInstrument& instr, const SceneId& scene_id, int beat_index,
                                const StyleParams& style, std::optional<std::string_view> previous_segment,
                                PromptKind kind, const GenParams& params) {
  const Scene& scene = scene_at(instr, scene_id);
  if (beat_index < 0 || beat_index >= static_cast<int>(scene.beats.size())) {
    throw Error(ErrorCode::UnknownBeat, "scene '" + scene.id.value + "' has no beat " + std::to_string(beat_index),
                {{"scene", scene.id.value}, {"beat_index", beat_index}});
  }
  const auto index = static_cast<std::size_t>(beat_index);
  if (scene.situations.size() <= index || scene.situations[index].stale) {
    throw Error(ErrorCode::UpstreamStale,
                "the situation before beat " + std::to_string(beat_index) + " is stale; recompute the chain first",
                {{"scene", scene.id.value}, {"beat_index", beat_index}});
  }
  Builder b(kind, params);
  b.system("system_prose");
  add_premise(b, instr);
  add_character_sheets(b, participants_in_order(instr, scene));
  b.add("situation", scene_path(scene) + "/situations/" + std::to_string(index), scene.situations[index].text);
  b.add("beat", scene_path(scene) + "/beats/" + std::to_string(index), scene.beats[index].text);
  if (previous_segment) {
    b.add("previous_prose", scene_path(scene) + "/prose/segments/" + std::to_string(index - 1),
          std::string(*previous_segment));
  }
  b.add("style", "input/style", style_block(style));
  const auto [lo, hi] = word_range(style.target_length);
  b.instruction("prose_instruction", {{"genre", style.genre.empty() ? "unspecified" : style.genre},
                                      {"style", style.style.empty() ? "unspecified" : style.style},
                                      {"intensity", std::string(to_string(style.intensity))},
                                      {"min_words", std::to_string(lo)},
                                      {"max_words", std::to_string(hi)}});
  return std::move(b).finish();
}

PromptBundle build_memory_condense_prompt(const StoryInstrument& instr, const Character& character,
                                          std::span<const Memory> memories, const GenParams& params) {
  if (memories.empty()) throw Error(ErrorCode::EmptyInput, "no memories to condense");
  Builder b(PromptKind::MemoryCondense, params);
  b.system("system_condense");
  b.add("character", character_path(character), character.name);
  for (std::size_t i = 0; i < memories.size(); ++i) {
    b.add("memory", character_path(character) + "/memories/" + std::to_string(i),
          memory_line(instr, character, memories[i]));
  }
  b.instruction("memory_condense_instruction", {{"name", character.name}});
  return std::move(b).finish();
}

PromptBundle truncate_context(const PromptBundle& bundle, int budget) {
  if (budget <= 0) throw Error(ErrorCode::InvalidParams, "budget must be positive", {{"budget", budget}});
  if (estimate_tokens(bundle) <= budget) return bundle;

  const std::size_t system_chars = code_points(bundle.system_text);
  std::vector<std::size_t> block_chars;
  std::size_t core_chars = system_chars;
  std::size_t total_chars = system_chars;
  for (const auto& s : bundle.sections) {
    block_chars.push_back(code_points(render_section(s)));
    total_chars += block_chars.back();
    if (s.tier == DropTier::Never) core_chars += block_chars.back();
  }
  const auto fits = [&](std::size_t chars) { return static_cast<int>((chars + 3) / 4) <= budget; };
  if (!fits(core_chars)) {
    throw Error(ErrorCode::BudgetUnsatisfiable,
                "protected prompt sections need " + std::to_string((core_chars + 3) / 4) + " tokens; budget is " +
                    std::to_string(budget),
                {{"required", (core_chars + 3) / 4}, {"budget", budget}});
  }

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < bundle.sections.size(); ++i) {
    if (bundle.sections[i].tier != DropTier::Never) candidates.push_back(i);
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    const auto& sa = bundle.sections[a];
    const auto& sb = bundle.sections[b];
    return std::tie(sa.tier, sa.rank) < std::tie(sb.tier, sb.rank);
  });

  std::vector<bool> dropped(bundle.sections.size(), false);
  PromptBundle out = bundle;
  for (std::size_t i : candidates) {
    if (fits(total_chars)) break;
    dropped[i] = true;
    total_chars -= block_chars[i];
    out.dropped_sections.push_back(bundle.sections[i].source);
  }

  out.sections.clear();
  out.user_text.clear();
  // System-text entries precede the section entries in the manifest.
  out.debug_manifest.resize(bundle.debug_manifest.size() - bundle.sections.size());
  for (std::size_t i = 0; i < bundle.sections.size(); ++i) {
    if (dropped[i]) continue;
    out.sections.push_back(bundle.sections[i]);
    out.user_text.append(render_section(bundle.sections[i]));
    out.debug_manifest.push_back(ManifestEntry{bundle.sections[i].name, bundle.sections[i].source});
  }
  return out;
}

}  // namespace tomb
