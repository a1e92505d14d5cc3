#include "tomb/service.hpp"

#include "tomb/instrument.hpp"
#include "tomb/serialize.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <semaphore>

namespace tomb {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void bad_request(const std::string& what) { throw Error(ErrorCode::BadRequest, what); }

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= path.size()) {
    const std::size_t slash = path.find('/', pos);
    const std::string_view part = path.substr(pos, slash == std::string_view::npos ? std::string_view::npos : slash - pos);
    if (!part.empty()) out.emplace_back(part);
    if (slash == std::string_view::npos) break;
    pos = slash + 1;
  }
  return out;
}

// "name:action" -> {name, action}
std::pair<std::string, std::string> split_action(const std::string& segment) {
  const std::size_t colon = segment.find(':');
  if (colon == std::string::npos) return {segment, ""};
  return {segment.substr(0, colon), segment.substr(colon + 1)};
}

int parse_index(const std::string& text) {
  if (text.empty() || text.size() > 9 ||
      !std::all_of(text.begin(), text.end(), [](unsigned char ch) { return std::isdigit(ch); })) {
    throw Error(ErrorCode::UnknownBeat, "'" + text + "' is not a beat index", {{"beat_index", text}});
  }
  return std::stoi(text);
}

// Field access for request bodies; type errors are BAD_REQUEST.
class Body {
 public:
  explicit Body(const std::string& text) {
    if (trim(text).empty()) {
      j_ = json::object();
      return;
    }
    j_ = json::parse(text, nullptr, false);
    if (j_.is_discarded() || !j_.is_object()) bad_request("request body must be a JSON object");
  }

  explicit Body(json j) : j_(std::move(j)) {
    if (!j_.is_object()) bad_request("expected a JSON object");
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json& raw(const char* key) const { return j_.at(key); }

  std::string str(const char* key) const {
    if (!has(key)) bad_request(std::string("missing field '") + key + "'");
    return opt_str(key).value();
  }

  std::optional<std::string> opt_str(const char* key) const {
    if (!has(key)) return std::nullopt;
    if (!j_.at(key).is_string()) bad_request(std::string("field '") + key + "' must be a string");
    return j_.at(key).get<std::string>();
  }

  std::optional<bool> opt_bool(const char* key) const {
    if (!has(key)) return std::nullopt;
    if (!j_.at(key).is_boolean()) bad_request(std::string("field '") + key + "' must be a boolean");
    return j_.at(key).get<bool>();
  }

  std::optional<int> opt_int(const char* key) const {
    if (!has(key)) return std::nullopt;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) bad_request(std::string("field '") + key + "' must be an integer");
    const auto wide = v.get<std::int64_t>();
    if (wide < INT32_MIN || wide > INT32_MAX) bad_request(std::string("field '") + key + "' is out of range");
    return static_cast<int>(wide);
  }

  std::optional<std::vector<std::string>> opt_strings(const char* key) const {
    if (!has(key)) return std::nullopt;
    const json& v = j_.at(key);
    if (!v.is_array()) bad_request(std::string("field '") + key + "' must be an array of strings");
    std::vector<std::string> out;
    for (const auto& item : v) {
      if (!item.is_string()) bad_request(std::string("field '") + key + "' must be an array of strings");
      out.push_back(item.get<std::string>());
    }
    return out;
  }

  std::optional<std::set<CharacterId>> opt_ids(const char* key) const {
    auto names = opt_strings(key);
    if (!names) return std::nullopt;
    std::set<CharacterId> out;
    for (auto& n : *names) out.insert(CharacterId{std::move(n)});
    return out;
  }

  std::optional<Body> opt_object(const char* key) const {
    if (!has(key)) return std::nullopt;
    if (!j_.at(key).is_object()) bad_request(std::string("field '") + key + "' must be an object");
    return Body(j_.at(key));
  }

 private:
  json j_;
};

template <class E>
E enum_field(const Body& body, const char* key, E fallback, std::optional<E> (*parse)(std::string_view)) {
  const auto text = body.opt_str(key);
  if (!text) return fallback;
  const auto value = parse(*text);
  if (!value) bad_request(std::string("field '") + key + "' has unknown value '" + *text + "'");
  return *value;
}

GenParams params_from(const Body& body) {
  GenParams params;
  if (const auto p = body.opt_object("params")) {
    if (p->has("temperature")) {
      if (!p->raw("temperature").is_number()) bad_request("params.temperature must be a number");
      params.temperature = p->raw("temperature").get<double>();
    }
    params.adherence = enum_field(*p, "adherence", params.adherence, parse_adherence);
    if (const auto budget = p->opt_int("context_budget")) params.context_budget = *budget;
  }
  check_params(params);
  return params;
}

StyleParams style_from(const Body& body, const char* key, const StyleParams& fallback) {
  const auto s = body.opt_object(key);
  if (!s) return fallback;
  StyleParams style = fallback;
  if (auto genre = s->opt_str("genre")) style.genre = *genre;
  if (auto text = s->opt_str("style")) style.style = *text;
  style.intensity = enum_field(*s, "intensity", style.intensity, parse_intensity);
  style.target_length = enum_field(*s, "target_length", style.target_length, parse_target_length);
  return style;
}

std::optional<std::vector<TraitScale>> traits_from(const Body& body) {
  if (!body.has("traits")) return std::nullopt;
  const json& v = body.raw("traits");
  if (!v.is_array()) bad_request("field 'traits' must be an array");
  std::vector<TraitScale> out;
  for (const auto& item : v) {
    Body t(item);
    const auto value = t.opt_int("value");
    if (!value) bad_request("every trait needs an integer 'value'");
    out.push_back(TraitScale{t.str("name"), *value});
  }
  return out;
}

ordered_json error_json(const Error& e) {
  ordered_json j;
  j["code"] = e.name();
  j["message"] = e.what();
  j["details"] = e.details().is_null() ? json::object() : e.details();
  return j;
}

ApiResponse json_response(int status, const ordered_json& body) {
  return ApiResponse{status, "application/json", body.dump()};
}

std::string sse_frame(const GenerationEvent& e) {
  return "id: " + std::to_string(e.sequence) + "\nevent: " + std::string(to_string(e.phase)) +
         "\ndata: " + e.to_json().dump() + "\n\n";
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadRequest:
      return 400;
    case ErrorCode::NotFound:
    case ErrorCode::UnknownScene:
    case ErrorCode::UnknownCharacter:
    case ErrorCode::UnknownBeat:
    case ErrorCode::UnknownRequest:
      return 404;
    case ErrorCode::DuplicateName:
    case ErrorCode::ParticipantInUse:
    case ErrorCode::DraftAlreadyPending:
    case ErrorCode::NoPendingDraft:
    case ErrorCode::StaleChain:
    case ErrorCode::UpstreamStale:
    case ErrorCode::NothingToRecompute:
    case ErrorCode::EmptyScene:
    case ErrorCode::NoDocument:
    case ErrorCode::MissingProse:
      return 409;
    case ErrorCode::AuthFailed:
    case ErrorCode::MalformedResponse:
    case ErrorCode::ContentFiltered:
    case ErrorCode::ProviderError:
    case ErrorCode::ScriptExhausted:
    case ErrorCode::EmptyGeneration:
      return 502;
    case ErrorCode::RateLimited:
    case ErrorCode::ProviderUnavailable:
    case ErrorCode::Cancelled:
      return 503;
    case ErrorCode::Timeout:
      return 504;
    case ErrorCode::StorageFailure:
    case ErrorCode::MalformedDocument:
    case ErrorCode::SchemaVersionTooNew:
    case ErrorCode::InvariantViolation:
      return 500;
    default:
      return 422;
  }
}

std::string error_body(const Error& error) { return ordered_json{{"error", error_json(error)}}.dump(); }

class ProjectService::Impl {
 public:
  Impl(ProjectService& owner, std::shared_ptr<Provider> provider)
      : owner_(owner), provider_(std::move(provider)), provider_slots_(std::max(1, owner.config_.provider_concurrency)) {}

  ~Impl() {
    std::lock_guard lock(jobs_mutex_);
    jobs_.clear();  // joins
  }

  ApiResponse dispatch(const ApiRequest& req);

 private:
  // Provider decorator: enforces the service-wide concurrency cap and reports
  // provider phases to the generation log.
  class ObservedProvider final : public Provider {
   public:
    ObservedProvider(Impl& impl, std::string request_id) : impl_(impl), request_id_(std::move(request_id)) {}

    CompletionResult complete(const PromptBundle& bundle, std::stop_token stop) override {
      if (!impl_.provider_) throw Error(ErrorCode::ProviderUnavailable, "no completion provider is configured");
      ++calls_;
      impl_.owner_.generations_.emit(request_id_, GenerationPhase::AwaitingProvider,
                                     {{"kind", to_string(bundle.kind)}, {"call", calls_}});
      impl_.provider_slots_.acquire();
      struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
      } release{impl_.provider_slots_};
      CompletionResult result = impl_.provider_->complete(bundle, stop);
      impl_.owner_.generations_.emit(request_id_, GenerationPhase::Parsing,
                                     {{"kind", to_string(bundle.kind)}, {"call", calls_}});
      return result;
    }

   private:
    Impl& impl_;
    std::string request_id_;
    int calls_ = 0;
  };

  struct Outcome {
    ordered_json body;
    std::optional<Error> failure;  // reported after the state was saved
  };

  using Mutation = std::function<Outcome(StoryInstrument&)>;
  using Generation = std::function<Outcome(StoryInstrument&, Provider&)>;

  std::shared_ptr<std::mutex> project_lock(const std::string& id) {
    std::lock_guard lock(locks_mutex_);
    auto& slot = locks_[id];
    if (!slot) slot = std::make_shared<std::mutex>();
    return slot;
  }

  Outcome mutate(const std::string& id, const Mutation& fn) {
    auto lock_ptr = project_lock(id);
    std::lock_guard lock(*lock_ptr);
    StoryInstrument instr = owner_.store_.load(id);
    Outcome outcome = fn(instr);
    owner_.store_.save(instr);
    outcome.body["project"] = to_json(instr);
    return outcome;
  }

  ApiResponse simple_mutation(const std::string& id, int status, const Mutation& fn) {
    Outcome outcome = mutate(id, fn);
    if (outcome.failure) throw *outcome.failure;
    return json_response(status, outcome.body);
  }

  ApiResponse generation(const ApiRequest& req, const std::string& id, std::string operation, Generation fn) {
    if (!owner_.store_.exists(id)) throw Error(ErrorCode::NotFound, "no project '" + id + "'", {{"project", id}});
    const std::string rid = owner_.generations_.start({{"operation", operation}, {"project", id}});
    auto job = [this, rid, id, fn = std::move(fn)]() -> ApiResponse {
      try {
        Outcome outcome = mutate(id, [&](StoryInstrument& instr) {
          owner_.generations_.emit(rid, GenerationPhase::Prompting);
          ObservedProvider observed(*this, rid);
          return fn(instr, observed);
        });
        outcome.body["request_id"] = rid;
        if (outcome.failure) {
          const Error& e = *outcome.failure;
          ordered_json payload{{"error", error_json(e)}};
          for (auto& [k, v] : outcome.body.items()) {
            if (k != "project") payload[k] = v;
          }
          owner_.generations_.emit(rid, GenerationPhase::Failed, payload);
          payload["project"] = outcome.body["project"];
          return json_response(http_status(e.code()), payload);
        }
        ordered_json done = outcome.body;
        done.erase("project");
        owner_.generations_.emit(rid, GenerationPhase::Done, done);
        return json_response(200, outcome.body);
      } catch (const Error& e) {
        ordered_json payload{{"error", error_json(e)}, {"request_id", rid}};
        owner_.generations_.emit(rid, GenerationPhase::Failed, payload);
        return json_response(http_status(e.code()), payload);
      }
    };

    auto async = req.query.find("async");
    if (async != req.query.end() && (async->second == "1" || async->second == "true")) {
      std::lock_guard lock(jobs_mutex_);
      std::erase_if(jobs_, [](const Job& j) { return j.done->load(); });
      auto done = std::make_shared<std::atomic<bool>>(false);
      jobs_.push_back(Job{done, std::jthread([job, done] {
                            job();
                            done->store(true);
                          })});
      return json_response(202, ordered_json{{"request_id", rid}});
    }
    return job();
  }

  ApiResponse projects(const ApiRequest& req, const std::vector<std::string>& segs);
  ApiResponse scenes(const ApiRequest& req, const std::string& id, const std::vector<std::string>& segs);
  ApiResponse events(const std::string& rid);

  struct Job {
    std::shared_ptr<std::atomic<bool>> done;
    std::jthread thread;
  };

  ProjectService& owner_;
  std::shared_ptr<Provider> provider_;
  std::counting_semaphore<1024> provider_slots_;
  std::mutex locks_mutex_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
  std::mutex jobs_mutex_;
  std::vector<Job> jobs_;
};

ApiResponse ProjectService::Impl::dispatch(const ApiRequest& req) {
  const auto segs = split_path(req.path);
  if (!segs.empty() && segs[0] == "projects") return projects(req, segs);
  if (segs.size() == 3 && segs[0] == "generations" && segs[2] == "events" && req.method == "GET") {
    return events(segs[1]);
  }
  throw Error(ErrorCode::NotFound, "no endpoint " + req.method + " " + req.path);
}

ApiResponse ProjectService::Impl::events(const std::string& rid) {
  std::string body;
  for (const auto& e : owner_.generations_.wait_finished(rid)) body += sse_frame(e);
  return ApiResponse{200, "text/event-stream", body};
}

ApiResponse ProjectService::Impl::projects(const ApiRequest& req, const std::vector<std::string>& segs) {
  const std::string& m = req.method;
  if (segs.size() == 1) {
    if (m == "GET") {
      ordered_json list = ordered_json::array();
      for (const auto& p : owner_.store_.list()) {
        list.push_back({{"id", p.id}, {"title", p.title}, {"updated_at", format_timestamp(p.updated_at)}});
      }
      return json_response(200, ordered_json{{"projects", list}});
    }
    if (m == "POST") {
      Body body(req.body);
      const StyleParams style = style_from(body, "style_defaults", StyleParams{});
      std::string id = body.opt_str("id").value_or("");
      const bool chosen = !id.empty();
      while (!chosen) {
        id = owner_.config_.project_id_factory ? owner_.config_.project_id_factory() : generate_project_id();
        if (!owner_.store_.exists(id) || owner_.config_.project_id_factory) break;
      }
      if (!ProjectStore::valid_id(id)) bad_request("invalid project id '" + id + "'");
      auto lock_ptr = project_lock(id);
      std::lock_guard lock(*lock_ptr);
      if (owner_.store_.exists(id)) bad_request("project '" + id + "' already exists");
      StoryInstrument instr = create_instrument(body.opt_str("premise").value_or(""), style, id);
      if (auto logline = body.opt_str("logline"); logline && !trim(*logline).empty()) {
        instr.premise.logline = trim(*logline);
      }
      owner_.store_.save(instr);
      return json_response(201, ordered_json{{"project", to_json(instr)}});
    }
    bad_request("method not allowed");
  }

  const std::string& id = segs[1];
  if (!ProjectStore::valid_id(id)) throw Error(ErrorCode::NotFound, "no project '" + id + "'", {{"project", id}});

  if (segs.size() == 2) {
    if (m == "GET") return json_response(200, ordered_json{{"project", to_json(owner_.store_.load(id))}});
    if (m == "DELETE") {
      auto lock_ptr = project_lock(id);
      std::lock_guard lock(*lock_ptr);
      owner_.store_.remove(id);
      return json_response(200, ordered_json{{"deleted", id}});
    }
    bad_request("method not allowed");
  }

  if (segs.size() == 3 && segs[2] == "export" && m == "GET") {
    auto get = [&](const char* key, const char* fallback) {
      auto it = req.query.find(key);
      return it == req.query.end() ? std::string(fallback) : it->second;
    };
    const auto scope = parse_export_scope(get("scope", "whole_story"));
    const auto format = parse_export_format(get("format", "plain"));
    if (!scope || !format) bad_request("scope must be scene|whole_story and format plain|markdown");
    std::optional<SceneId> scene;
    if (auto it = req.query.find("scene"); it != req.query.end()) scene = SceneId{it->second};
    const StoryInstrument instr = owner_.store_.load(id);
    return ApiResponse{200,
                       *format == ExportFormat::Markdown ? "text/markdown; charset=utf-8" : "text/plain; charset=utf-8",
                       export_document(instr, *scope, *format, scene)};
  }

  if (segs[2] == "characters") {
    if (segs.size() == 3 && m == "POST") {
      Body body(req.body);
      return simple_mutation(id, 201, [&](StoryInstrument& instr) {
        const CharacterId cid = add_character(instr, body.opt_str("name").value_or(""),
                                              body.opt_str("description").value_or(""),
                                              traits_from(body).value_or(std::vector<TraitScale>{}),
                                              body.opt_strings("goals").value_or(std::vector<std::string>{}));
        return Outcome{ordered_json{{"character_id", cid.value}}, std::nullopt};
      });
    }
    if (segs.size() == 4 && m == "POST" && split_action(segs[3]).second == "condense") {
      const CharacterId cid{split_action(segs[3]).first};
      const std::size_t keep = owner_.config_.memory_limit;
      return generation(req, id, "condense", [cid, keep](StoryInstrument& instr, Provider& provider) {
        condense_memories(instr, cid, provider, keep);
        return Outcome{ordered_json{{"character_id", cid.value}}, std::nullopt};
      });
    }
    if (segs.size() == 4 && m == "PATCH") {
      Body body(req.body);
      CharacterPatch patch{body.opt_str("name"), body.opt_str("description"), traits_from(body),
                           body.opt_strings("goals")};
      return simple_mutation(id, 200, [&](StoryInstrument& instr) {
        update_character(instr, CharacterId{segs[3]}, patch);
        return Outcome{ordered_json{{"character_id", segs[3]}}, std::nullopt};
      });
    }
  }

  if (segs[2] == "scenes") return scenes(req, id, segs);
  throw Error(ErrorCode::NotFound, "no endpoint " + m + " " + req.path);
}

ApiResponse ProjectService::Impl::scenes(const ApiRequest& req, const std::string& id,
                                         const std::vector<std::string>& segs) {
  const std::string& m = req.method;
  Body body(req.body);

  if (segs.size() == 3 && m == "POST") {
    return simple_mutation(id, 201, [&](StoryInstrument& instr) {
      const SceneId sid = add_scene(instr, body.opt_str("title").value_or(""),
                                    body.opt_str("initial_situation").value_or(""),
                                    body.opt_ids("participants").value_or(std::set<CharacterId>{}));
      return Outcome{ordered_json{{"scene_id", sid.value}}, std::nullopt};
    });
  }
  if (segs.size() < 4) throw Error(ErrorCode::NotFound, "no endpoint " + m + " " + req.path);

  const auto [scene_name, scene_action] = split_action(segs[3]);
  const SceneId sid{scene_name};

  if (segs.size() == 4 && scene_action.empty() && m == "PATCH") {
    ScenePatch patch{body.opt_str("title"), body.opt_str("initial_situation"), body.opt_ids("participants")};
    const auto draft_participants = body.opt_ids("draft_participants");
    const auto override_obj = body.opt_object("situation_override");
    return simple_mutation(id, 200, [&](StoryInstrument& instr) {
      update_scene(instr, sid, patch);
      if (draft_participants) set_draft_participants(instr, sid, *draft_participants);
      if (override_obj) {
        const auto position = override_obj->opt_int("position");
        if (!position) bad_request("situation_override needs an integer 'position'");
        override_situation(instr, sid, *position, override_obj->str("text"));
      }
      return Outcome{ordered_json{{"scene_id", sid.value}}, std::nullopt};
    });
  }

  if (segs.size() == 4 && m == "POST" && scene_action == "recompute") {
    return generation(req, id, "recompute", [sid](StoryInstrument& instr, Provider& provider) {
      RecomputeOutcome r = recompute_chain(instr, sid, provider);
      Outcome out{ordered_json{{"recomputed", r.recomputed}}, std::nullopt};
      if (r.failure) {
        nlohmann::json details = r.failure->details().is_null() ? json::object() : r.failure->details();
        details["recomputed"] = r.recomputed;
        out.failure = Error(r.failure->code(), r.failure->what(), details);
      }
      return out;
    });
  }

  if (segs.size() == 4 && m == "POST" && scene_action == "render") {
    const GenParams params = params_from(body);
    return generation(req, id, "render", [sid, params, body](StoryInstrument& instr, Provider& provider) {
      const StyleParams style = style_from(body, "style", instr.style_defaults);
      const ProseDocument& doc = render_scene(instr, sid, style, provider, params);
      return Outcome{ordered_json{{"prose", to_json(doc)}}, std::nullopt};
    });
  }

  if (segs.size() == 5 && m == "POST") {
    const auto [collection, action] = split_action(segs[4]);
    if (collection == "beats") {
      if (action == "simulate" || action == "nudge" || action == "author") {
        const GenParams params = params_from(body);
        const auto nudge = body.opt_str("nudge");
        const auto text = body.opt_str("text");
        const bool polish = body.opt_bool("polish").value_or(false);
        return generation(req, id, action, [=](StoryInstrument& instr, Provider& provider) {
          DraftBeat draft;
          if (action == "simulate") {
            draft = simulate_next_beat(instr, sid, params, provider);
          } else if (action == "nudge") {
            draft = nudge_next_beat(instr, sid, nudge.value_or(""), params, provider);
          } else {
            draft = author_beat(instr, sid, text.value_or(""), polish, params, &provider);
          }
          return Outcome{ordered_json{{"draft", to_json(draft)}}, std::nullopt};
        });
      }
      if (action == "accept") {
        return generation(req, id, "accept", [sid](StoryInstrument& instr, Provider& provider) {
          const int index = accept_beat(instr, sid, provider);
          return Outcome{ordered_json{{"beat_index", index}}, std::nullopt};
        });
      }
      if (action == "reject") {
        return simple_mutation(id, 200, [&](StoryInstrument& instr) {
          reject_beat(instr, sid);
          return Outcome{ordered_json{{"scene_id", sid.value}}, std::nullopt};
        });
      }
    }
  }

  if (segs.size() == 6 && segs[4] == "beats" && m == "PATCH") {
    const int index = parse_index(segs[5]);
    const std::string text = body.opt_str("text").value_or("");
    return simple_mutation(id, 200, [&](StoryInstrument& instr) {
      edit_beat(instr, sid, index, text);
      return Outcome{ordered_json{{"beat_index", index}}, std::nullopt};
    });
  }

  if (segs.size() == 6 && segs[4] == "segments") {
    const auto [index_text, action] = split_action(segs[5]);
    const int index = parse_index(index_text);
    if (m == "PATCH" && action.empty()) {
      const std::string text = body.opt_str("text").value_or("");
      return simple_mutation(id, 200, [&](StoryInstrument& instr) {
        edit_segment(instr, sid, index, text);
        return Outcome{ordered_json{{"beat_index", index}}, std::nullopt};
      });
    }
    if (m == "POST" && action == "regenerate") {
      const GenParams params = params_from(body);
      ContinuityMode mode = owner_.config_.continuity;
      if (auto c = body.opt_str("continuity")) {
        if (*c == "strict") {
          mode = ContinuityMode::Strict;
        } else if (*c == "loose") {
          mode = ContinuityMode::Loose;
        } else {
          bad_request("continuity must be loose or strict");
        }
      }
      return generation(req, id, "regenerate", [=](StoryInstrument& instr, Provider& provider) {
        const Scene& scene = scene_at(instr, sid);
        const StyleParams fallback = scene.prose ? scene.prose->style : instr.style_defaults;
        regenerate_segment(instr, sid, index, style_from(body, "style", fallback), provider, mode, params);
        return Outcome{ordered_json{{"segment", to_json(scene_at(instr, sid).prose->segments[index])}}, std::nullopt};
      });
    }
  }

  throw Error(ErrorCode::NotFound, "no endpoint " + m + " " + req.path);
}

ProjectService::ProjectService(ServiceConfig config, std::shared_ptr<Provider> provider)
    : config_(std::move(config)),
      store_(config_.data_dir),
      impl_(std::make_unique<Impl>(*this, std::move(provider))) {}

ProjectService::~ProjectService() = default;

ApiResponse ProjectService::handle(const ApiRequest& request) {
  try {
    return impl_->dispatch(request);
  } catch (const Error& e) {
    return ApiResponse{http_status(e.code()), "application/json", error_body(e)};
  }
}

}  // namespace tomb
