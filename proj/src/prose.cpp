#include "tomb/prose.hpp"

#include "tomb/error.hpp"
#include "tomb/prompt.hpp"

#include <algorithm>

namespace tomb {
namespace {

ProseDocument& document_of(Scene& scene) {
  if (!scene.prose) {
    throw Error(ErrorCode::NoDocument, "scene '" + scene.id.value + "' has not been rendered",
                {{"scene", scene.id.value}});
  }
  return *scene.prose;
}

ProseSegment& segment_at(Scene& scene, int beat_index) {
  ProseDocument& doc = document_of(scene);
  if (beat_index < 0 || beat_index >= static_cast<int>(doc.segments.size()) ||
      beat_index >= static_cast<int>(scene.beats.size())) {
    throw Error(ErrorCode::UnknownBeat, "scene '" + scene.id.value + "' has no prose segment " +
                                            std::to_string(beat_index),
                {{"scene", scene.id.value}, {"beat_index", beat_index}});
  }
  return doc.segments[static_cast<std::size_t>(beat_index)];
}

void refresh_document_flag(const Scene& scene, ProseDocument& doc) {
  doc.stale = doc.segments.size() != scene.beats.size() ||
              std::any_of(doc.segments.begin(), doc.segments.end(), [](const ProseSegment& s) { return s.stale; });
}

std::string prose_text(const CompletionResult& result) {
  std::string text = trim(result.text);
  if (text.empty()) throw Error(ErrorCode::EmptyGeneration, "the provider returned empty prose");
  return text;
}

std::string escape_markdown(std::string_view text) {
  std::string out;
  bool line_start = true;
  for (char ch : text) {
    if (line_start && ch == '#') out.push_back('\\');
    out.push_back(ch);
    line_start = ch == '\n';
  }
  return out;
}

std::string scene_body(const Scene& scene, ExportFormat format) {
  std::string out;
  for (const auto& seg : scene.prose->segments) {
    if (seg.text.empty()) continue;
    if (!out.empty()) out.append("\n\n");
    out.append(format == ExportFormat::Markdown ? escape_markdown(seg.text) : seg.text);
  }
  return out;
}

std::string scene_heading(const Scene& scene) {
  std::string title = trim(scene.title);
  if (title.empty()) title = "Scene " + std::to_string(scene.ordinal + 1);
  std::replace(title.begin(), title.end(), '\n', ' ');
  return "# " + title;
}

}  // namespace

std::optional<ExportScope> parse_export_scope(std::string_view s) {
  if (s == "scene") return ExportScope::Scene;
  if (s == "whole_story") return ExportScope::WholeStory;
  return std::nullopt;
}

std::optional<ExportFormat> parse_export_format(std::string_view s) {
  if (s == "plain") return ExportFormat::Plain;
  if (s == "markdown") return ExportFormat::Markdown;
  return std::nullopt;
}

const ProseDocument& render_scene(StoryInstrument& instr, const SceneId& scene_id, const StyleParams& style,
                                  Provider& provider, const GenParams& params) {
  check_params(params);
  Scene& scene = scene_at(instr, scene_id);
  if (scene.beats.empty()) {
    throw Error(ErrorCode::EmptyScene, "scene '" + scene.id.value + "' has no beats to render",
                {{"scene", scene.id.value}});
  }
  if (std::any_of(scene.situations.begin(), scene.situations.end(), [](const SituationState& s) { return s.stale; })) {
    throw Error(ErrorCode::StaleChain, "scene '" + scene.id.value + "' has stale situations; recompute first",
                {{"scene", scene.id.value}});
  }

  ProseDocument doc;
  doc.scene_id = scene.id;
  doc.style = style;
  for (int i = 0; i < static_cast<int>(scene.beats.size()); ++i) {
    std::optional<std::string_view> previous;
    if (i > 0) previous = doc.segments.back().text;
    PromptBundle bundle = build_prose_prompt(instr, scene_id, i, style, previous, PromptKind::Prose, params);
    bundle = truncate_context(bundle, params.context_budget);
    doc.segments.push_back(ProseSegment{i, prose_text(provider.complete(bundle)), SegmentOrigin::Generated, false,
                                        std::nullopt});
  }
  doc.rendered_at = now_utc();
  scene.prose = std::move(doc);
  instr.updated_at = now_utc();
  return *scene.prose;
}

void regenerate_segment(StoryInstrument& instr, const SceneId& scene_id, int beat_index, const StyleParams& style,
                        Provider& provider, ContinuityMode mode, const GenParams& params) {
  check_params(params);
  Scene& scene = scene_at(instr, scene_id);
  segment_at(scene, beat_index);

  std::optional<std::string_view> previous;
  if (beat_index > 0) {
    const auto& prev = scene.prose->segments[static_cast<std::size_t>(beat_index - 1)];
    if (!prev.text.empty()) previous = prev.text;
  }
  PromptBundle bundle =
      build_prose_prompt(instr, scene_id, beat_index, style, previous, PromptKind::ProseSegment, params);
  bundle = truncate_context(bundle, params.context_budget);
  std::string text = prose_text(provider.complete(bundle));

  ProseDocument& doc = *scene.prose;
  ProseSegment& seg = doc.segments[static_cast<std::size_t>(beat_index)];
  seg.text = std::move(text);
  seg.origin = SegmentOrigin::Generated;
  seg.stale = false;
  seg.style = style == doc.style ? std::nullopt : std::optional<StyleParams>(style);
  if (mode == ContinuityMode::Strict) {
    for (auto& later : doc.segments) {
      if (later.beat_index > beat_index) later.stale = true;
    }
  }
  refresh_document_flag(scene, doc);
  instr.updated_at = now_utc();
}

void edit_segment(StoryInstrument& instr, const SceneId& scene_id, int beat_index, std::string_view new_text) {
  Scene& scene = scene_at(instr, scene_id);
  ProseSegment& seg = segment_at(scene, beat_index);
  std::string text = trim(new_text);
  if (text.empty()) throw Error(ErrorCode::EmptyDraft, "segment text is empty");
  seg.text = std::move(text);
  seg.origin = SegmentOrigin::ManuallyEdited;
  seg.stale = false;
  refresh_document_flag(scene, *scene.prose);
  instr.updated_at = now_utc();
}

std::string export_document(const StoryInstrument& instr, ExportScope scope, ExportFormat format,
                            const std::optional<SceneId>& scene_id) {
  std::vector<const Scene*> scenes;
  if (scope == ExportScope::Scene) {
    if (!scene_id) throw Error(ErrorCode::BadRequest, "scene export needs a scene id");
    scenes.push_back(&scene_at(instr, *scene_id));
  } else {
    for (const auto& s : instr.scenes) scenes.push_back(&s);
    std::stable_sort(scenes.begin(), scenes.end(), [](const Scene* a, const Scene* b) { return a->ordinal < b->ordinal; });
  }
  for (const Scene* s : scenes) {
    if (!s->prose) {
      throw Error(ErrorCode::MissingProse, "scene '" + s->title + "' (" + s->id.value + ") has no rendered prose",
                  {{"scene", s->id.value}, {"title", s->title}});
    }
  }

  std::string out;
  for (const Scene* s : scenes) {
    if (!out.empty()) out.append("\n\n");
    if (format == ExportFormat::Markdown) out.append(scene_heading(*s)).append("\n\n");
    out.append(scene_body(*s, format));
  }
  out.push_back('\n');
  return out;
}

}  // namespace tomb
