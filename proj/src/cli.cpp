#include "tomb/cli.hpp"

#include "tomb/instrument.hpp"
#include "tomb/serialize.hpp"
#include "tomb/server.hpp"
#include "tomb/service.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace tomb::cli {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr const char* kCurrentFile = ".tomb-current.json";
constexpr const char* kCursorFile = ".tomb-script-cursor.json";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string data_dir;
  std::string server;
  bool json = false;
  std::string scripted;
  std::optional<double> temperature;
  std::optional<std::string> adherence;
  std::optional<int> context_budget;
  std::string dump_prompts;
  std::string project;
  std::string scene;
};

struct StyleOptions {
  std::optional<std::string> genre;
  std::optional<std::string> style;
  std::optional<std::string> intensity;
  std::optional<std::string> length;

  void attach(CLI::App* cmd) {
    cmd->add_option("--genre", genre, "Prose genre");
    cmd->add_option("--style", style, "Free-text style description");
    cmd->add_option("--intensity", intensity, "Prose intensity")->check(CLI::IsMember({"restrained", "moderate", "vivid"}));
    cmd->add_option("--length", length, "Target length per segment")
        ->check(CLI::IsMember({"brief", "standard", "expansive"}));
  }

  bool any() const { return genre || style || intensity || length; }

  ordered_json to_json() const {
    ordered_json j = ordered_json::object();
    if (genre) j["genre"] = *genre;
    if (style) j["style"] = *style;
    if (intensity) j["intensity"] = *intensity;
    if (length) j["target_length"] = *length;
    return j;
  }
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot read " + path.string(), {{"path", path.string()}});
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
  if (!out) throw Error(ErrorCode::StorageFailure, "cannot write " + path.string(), {{"path", path.string()}});
}

ordered_json bundle_json(const PromptBundle& b) {
  ordered_json manifest = ordered_json::array();
  for (const auto& m : b.debug_manifest) manifest.push_back({{"section", m.section}, {"source", m.source}});
  return ordered_json{{"kind", to_string(b.kind)},
                      {"params", to_json(b.params)},
                      {"system_text", b.system_text},
                      {"user_text", b.user_text},
                      {"manifest", manifest},
                      {"dropped_sections", b.dropped_sections}};
}

// Appends every bundle sent to the wrapped provider to a JSON-lines file.
class DumpingProvider final : public Provider {
 public:
  DumpingProvider(std::shared_ptr<Provider> inner, fs::path file) : inner_(std::move(inner)), file_(std::move(file)) {}

  CompletionResult complete(const PromptBundle& bundle, std::stop_token stop) override {
    {
      std::ofstream out(file_, std::ios::app);
      out << bundle_json(bundle).dump() << "\n";
    }
    return inner_->complete(bundle, stop);
  }

 private:
  std::shared_ptr<Provider> inner_;
  fs::path file_;
};

// Talks to a ProjectService, either in-process or over HTTP, and keeps the
// per-data-dir state (current project/scene, scripted-provider cursor).
class Session {
 public:
  Session(const Options& opts, std::ostream& out) : opts_(opts), out_(out) {
    data_dir_ = opts_.data_dir.empty() ? fs::path("tomb-data") : fs::path(opts_.data_dir);
    std::error_code ec;
    if (fs::exists(data_dir_ / kCurrentFile, ec)) {
      const json j = json::parse(read_file(data_dir_ / kCurrentFile), nullptr, false);
      if (j.is_object()) {
        current_project_ = j.value("project", "");
        current_scene_ = j.value("scene", "");
      }
    }
  }

  ~Session() {
    try {
      save_cursor();
    } catch (...) {
    }
  }

  bool remote() const { return !opts_.server.empty(); }
  const Options& options() const { return opts_; }
  const fs::path& data_dir() const { return data_dir_; }
  std::ostream& out() { return out_; }

  std::string project() const {
    const std::string& id = opts_.project.empty() ? current_project_ : opts_.project;
    if (id.empty()) throw UsageError("no project selected; pass --project or run 'new' first");
    return id;
  }

  std::string scene() const {
    const std::string& id = opts_.scene.empty() ? current_scene_ : opts_.scene;
    if (id.empty()) throw UsageError("no scene selected; pass --scene or run 'scene add' first");
    return id;
  }

  void remember(const std::string& project, const std::string& scene) {
    current_project_ = project;
    current_scene_ = scene;
    std::error_code ec;
    fs::create_directories(data_dir_, ec);
    write_file(data_dir_ / kCurrentFile, ordered_json{{"project", project}, {"scene", scene}}.dump(2) + "\n");
  }

  std::string project_path() const { return "/projects/" + project(); }
  std::string scene_path() const { return project_path() + "/scenes/" + scene(); }

  ApiResponse send(const std::string& method, const std::string& path, const ordered_json& body = nullptr,
                   const std::map<std::string, std::string>& query = {}) {
    ApiRequest req{method, path, query, body.is_null() ? std::string() : body.dump()};
    return remote() ? send_remote(req) : local().handle(req);
  }

  // Sends and throws the service's error on a non-2xx status.
  ordered_json call(const std::string& method, const std::string& path, const ordered_json& body = nullptr,
            const std::map<std::string, std::string>& query = {}) {
    const ApiResponse res = send(method, path, body, query);
    raise_for_status(res);
    if (res.content_type.rfind("application/json", 0) != 0) return res.body;
    const ordered_json j = ordered_json::parse(res.body, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::MalformedResponse, "service returned invalid JSON");
    return j;
  }

  std::string call_text(const std::string& path, const std::map<std::string, std::string>& query) {
    const ApiResponse res = send("GET", path, nullptr, query);
    raise_for_status(res);
    return res.body;
  }

  std::shared_ptr<Provider> make_provider() {
    std::shared_ptr<Provider> provider;
    if (!opts_.scripted.empty()) {
      const fs::path script = fs::absolute(opts_.scripted);
      ScriptedResponses responses = ScriptedResponses::load(script);
      load_cursor(script);
      for (const auto& [kind, n] : cursor_) responses.skip(kind, n);
      script_path_ = script;
      scripted_ = std::make_shared<ScriptedProvider>(std::move(responses));
      provider = scripted_;
    } else {
      provider = std::make_shared<HttpProvider>(ProviderConfig::from_env());
    }
    if (!opts_.dump_prompts.empty()) provider = std::make_shared<DumpingProvider>(provider, opts_.dump_prompts);
    return provider;
  }

 private:
  static void raise_for_status(const ApiResponse& res) {
    if (res.status >= 200 && res.status < 300) return;
    const json j = json::parse(res.body, nullptr, false);
    if (j.is_object() && j.contains("error") && j["error"].is_object()) {
      const json& e = j["error"];
      ErrorCode code = ErrorCode::ProviderError;
      try {
        code = code_from_name(e.value("code", ""));
      } catch (const std::invalid_argument&) {
      }
      throw Error(code, e.value("message", ""), e.contains("details") ? e["details"] : json(nullptr));
    }
    throw Error(ErrorCode::ProviderError, "service answered HTTP " + std::to_string(res.status));
  }

  ProjectService& local() {
    if (!service_) {
      ServiceConfig config;
      config.data_dir = data_dir_;
      service_ = std::make_unique<ProjectService>(std::move(config), make_provider());
    }
    return *service_;
  }

  ApiResponse send_remote(const ApiRequest& req) {
    httplib::Client client(opts_.server);
    client.set_read_timeout(std::chrono::seconds(600));
    std::string target = req.path;
    if (!req.query.empty()) {
      httplib::Params params(req.query.begin(), req.query.end());
      target += "?" + httplib::detail::params_to_query_str(params);
    }
    httplib::Result res;
    const char* type = "application/json";
    if (req.method == "GET") {
      res = client.Get(target);
    } else if (req.method == "POST") {
      res = client.Post(target, req.body, type);
    } else if (req.method == "PATCH") {
      res = client.Patch(target, req.body, type);
    } else if (req.method == "DELETE") {
      res = client.Delete(target);
    }
    if (!res) {
      throw Error(ErrorCode::ProviderUnavailable, "cannot reach " + opts_.server + ": " + httplib::to_string(res.error()),
                  {{"server", opts_.server}});
    }
    return ApiResponse{res->status, res->get_header_value("Content-Type"), res->body};
  }

  void load_cursor(const fs::path& script) {
    cursor_.clear();
    std::error_code ec;
    if (!fs::exists(data_dir_ / kCursorFile, ec)) return;
    const json j = json::parse(read_file(data_dir_ / kCursorFile), nullptr, false);
    if (!j.is_object() || j.value("script", "") != script.string() || !j.contains("consumed")) return;
    for (const auto& [name, n] : j["consumed"].items()) {
      if (auto kind = parse_prompt_kind(name); kind && n.is_number_unsigned()) cursor_[*kind] = n.get<std::size_t>();
    }
  }

  void save_cursor() {
    if (!scripted_) return;
    auto counts = cursor_;
    for (const auto& [kind, n] : scripted_->consumed_counts()) counts[kind] += n;
    ordered_json consumed = ordered_json::object();
    for (const auto& [kind, n] : counts) consumed[std::string(to_string(kind))] = n;
    write_file(data_dir_ / kCursorFile,
               ordered_json{{"script", script_path_.string()}, {"consumed", consumed}}.dump(2) + "\n");
  }

  const Options& opts_;
  std::ostream& out_;
  fs::path data_dir_;
  std::string current_project_;
  std::string current_scene_;
  std::unique_ptr<ProjectService> service_;
  std::shared_ptr<ScriptedProvider> scripted_;
  fs::path script_path_;
  std::map<PromptKind, std::size_t> cursor_;
};

ordered_json params_json(const Options& o) {
  GenParams p;
  ordered_json j = ordered_json::object();
  if (o.temperature) {
    p.temperature = *o.temperature;
    j["temperature"] = *o.temperature;
  }
  if (o.adherence) {
    p.adherence = parse_adherence(*o.adherence).value();
    j["adherence"] = *o.adherence;
  }
  if (o.context_budget) {
    p.context_budget = *o.context_budget;
    j["context_budget"] = *o.context_budget;
  }
  check_params(p);  // same error the engine raises, before anything is sent
  return j;
}

std::vector<ordered_json> parse_traits(const std::vector<std::string>& specs) {
  std::vector<ordered_json> out;
  for (const auto& spec : specs) {
    const auto eq = spec.rfind('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--trait expects NAME=VALUE, got '" + spec + "'");
    const std::string value = spec.substr(eq + 1);
    int v = 0;
    try {
      std::size_t used = 0;
      v = std::stoi(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw UsageError("--trait value must be an integer, got '" + value + "'");
    }
    out.push_back({{"name", spec.substr(0, eq)}, {"value", v}});
  }
  return out;
}

// Accepts character ids or exact character names.
std::vector<std::string> resolve_characters(Session& s, const std::vector<std::string>& refs) {
  if (refs.empty()) return {};
  const ordered_json project = s.call("GET", s.project_path())["project"];
  std::vector<std::string> out;
  for (const auto& ref : refs) {
    std::string id = ref;
    for (const auto& c : project["characters"]) {
      if (c["id"] == ref) {
        id = ref;
        break;
      }
      if (c["name"] == ref) id = c["id"].get<std::string>();
    }
    out.push_back(id);
  }
  return out;
}

void print_result(Session& s, const ordered_json& body, const std::string& text) {
  if (s.options().json) {
    s.out() << body.dump(2) << "\n";
  } else if (!text.empty()) {
    s.out() << text << "\n";
  }
}

void print_findings(Session& s, const std::vector<Finding>& findings) {
  if (s.options().json) {
    ordered_json list = ordered_json::array();
    for (const auto& f : findings) list.push_back({{"code", f.code}, {"path", f.path}, {"message", f.message}});
    s.out() << ordered_json{{"ok", findings.empty()}, {"findings", list}}.dump(2) << "\n";
    return;
  }
  if (findings.empty()) s.out() << "ok\n";
  for (const auto& f : findings) s.out() << f.code << " " << f.path << ": " << f.message << "\n";
}

std::string draft_text(const ordered_json& body) { return body["draft"]["text"].get<std::string>(); }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options opts;
  if (const char* env = std::getenv("TOMB_DATA_DIR")) opts.data_dir = env;

  CLI::App app{"Story instrument: characters, scenes, beats and prose", "tomb"};
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--data-dir", opts.data_dir, "Project directory for local mode (env TOMB_DATA_DIR)");
  app.add_option("--server", opts.server, "Use a running service, e.g. http://127.0.0.1:8080");
  app.add_flag("--json", opts.json, "Machine-readable output");
  app.add_option("--scripted", opts.scripted, "Replay canned responses from FILE instead of a live provider")
      ->check(CLI::ExistingFile);
  app.add_option("--temperature", opts.temperature, "Sampling temperature, 0.1 to 2.0");
  app.add_option("--adherence", opts.adherence, "How closely generation follows the context")
      ->check(CLI::IsMember({"loose", "moderate", "strict"}));
  app.add_option("--context-budget", opts.context_budget, "Prompt budget in estimated tokens");
  app.add_option("--dump-prompts", opts.dump_prompts, "Append every prompt bundle to FILE as JSON lines");
  app.add_option("--project", opts.project, "Project id (default: the current project)");
  app.add_option("--scene", opts.scene, "Scene id (default: the current scene)");

  std::function<int(Session&)> action;

  // new
  auto* cmd_new = app.add_subcommand("new", "Create a project");
  std::string premise;
  std::optional<std::string> logline;
  std::optional<std::string> new_id;
  StyleOptions new_style;
  cmd_new->add_option("--premise", premise, "Story premise")->required();
  cmd_new->add_option("--logline", logline, "One-line summary");
  cmd_new->add_option("--id", new_id, "Project id (default: random)");
  new_style.attach(cmd_new);
  cmd_new->callback([&] {
    action = [&](Session& s) {
      ordered_json body{{"premise", premise}};
      if (logline) body["logline"] = *logline;
      if (new_id) body["id"] = *new_id;
      if (new_style.any()) body["style_defaults"] = new_style.to_json();
      const ordered_json res = s.call("POST", "/projects", body);
      const std::string id = res["project"]["id"];
      s.remember(id, "");
      print_result(s, res, id);
      return 0;
    };
  });

  // use / show / list
  auto* cmd_use = app.add_subcommand("use", "Select the current project and scene");
  std::string use_project;
  std::string use_scene;
  cmd_use->add_option("project", use_project, "Project id")->required();
  cmd_use->add_option("scene", use_scene, "Scene id");
  cmd_use->callback([&] {
    action = [&](Session& s) {
      s.remember(use_project, use_scene);
      return 0;
    };
  });

  auto* cmd_show = app.add_subcommand("show", "Print the current project document");
  cmd_show->callback([&] {
    action = [&](Session& s) {
      const ordered_json res = s.call("GET", s.project_path());
      s.out() << res["project"].dump(2) << "\n";
      return 0;
    };
  });

  auto* cmd_list = app.add_subcommand("list", "List projects");
  cmd_list->callback([&] {
    action = [&](Session& s) {
      const ordered_json res = s.call("GET", "/projects");
      std::string text;
      for (const auto& p : res["projects"]) {
        text += p["id"].get<std::string>() + "  " + p["title"].get<std::string>() + "\n";
      }
      if (!text.empty()) text.pop_back();
      print_result(s, res, text);
      return 0;
    };
  });

  // character
  auto* cmd_char = app.add_subcommand("character", "Add or edit characters");
  cmd_char->require_subcommand(1);
  std::string char_id;
  std::string char_name;
  std::string char_desc;
  std::vector<std::string> char_traits;
  std::vector<std::string> char_goals;
  auto* char_add = cmd_char->add_subcommand("add", "Add a character");
  char_add->add_option("--name", char_name, "Name")->required();
  char_add->add_option("--description", char_desc, "Description");
  char_add->add_option("--trait", char_traits, "Trait as NAME=VALUE (0-100); repeatable");
  char_add->add_option("--goal", char_goals, "Goal; repeatable");
  char_add->callback([&] {
    action = [&](Session& s) {
      ordered_json body{{"name", char_name}, {"description", char_desc}, {"traits", parse_traits(char_traits)},
                        {"goals", char_goals}};
      const ordered_json res = s.call("POST", s.project_path() + "/characters", body);
      print_result(s, res, res["character_id"].get<std::string>());
      return 0;
    };
  });
  auto* char_edit = cmd_char->add_subcommand("edit", "Edit a character");
  char_edit->add_option("id", char_id, "Character id or name")->required();
  auto* opt_ename = char_edit->add_option("--name", char_name, "New name");
  auto* opt_edesc = char_edit->add_option("--description", char_desc, "New description");
  auto* opt_etraits = char_edit->add_option("--trait", char_traits, "Replace traits; repeatable NAME=VALUE");
  auto* opt_egoals = char_edit->add_option("--goal", char_goals, "Replace goals; repeatable");
  char_edit->callback([&] {
    action = [&](Session& s) {
      ordered_json body = ordered_json::object();
      if (opt_ename->count() > 0) body["name"] = char_name;
      if (opt_edesc->count() > 0) body["description"] = char_desc;
      if (opt_etraits->count() > 0) body["traits"] = parse_traits(char_traits);
      if (opt_egoals->count() > 0) body["goals"] = char_goals;
      const std::string id = resolve_characters(s, {char_id}).front();
      const ordered_json res = s.call("PATCH", s.project_path() + "/characters/" + id, body);
      print_result(s, res, id);
      return 0;
    };
  });
  auto* char_condense = cmd_char->add_subcommand("condense", "Condense a character's oldest memories");
  char_condense->add_option("id", char_id, "Character id or name")->required();
  char_condense->callback([&] {
    action = [&](Session& s) {
      const std::string id = resolve_characters(s, {char_id}).front();
      const ordered_json res = s.call("POST", s.project_path() + "/characters/" + id + ":condense");
      print_result(s, res, id);
      return 0;
    };
  });

  // scene
  auto* cmd_scene = app.add_subcommand("scene", "Add or edit scenes");
  cmd_scene->require_subcommand(1);
  std::string scene_title;
  std::string scene_situation;
  std::vector<std::string> scene_participants;
  std::vector<std::string> draft_participants;
  std::optional<int> override_position;
  std::string override_text;
  auto* scene_add = cmd_scene->add_subcommand("add", "Add a scene and make it current");
  scene_add->add_option("--title", scene_title, "Title");
  scene_add->add_option("--situation", scene_situation, "Initial situation")->required();
  scene_add->add_option("--participant", scene_participants, "Character id or name; repeatable")->required();
  scene_add->callback([&] {
    action = [&](Session& s) {
      ordered_json body{{"title", scene_title},
                        {"initial_situation", scene_situation},
                        {"participants", resolve_characters(s, scene_participants)}};
      const ordered_json res = s.call("POST", s.project_path() + "/scenes", body);
      const std::string sid = res["scene_id"];
      s.remember(s.project(), sid);
      print_result(s, res, sid);
      return 0;
    };
  });
  auto* scene_edit = cmd_scene->add_subcommand("edit", "Edit the current scene");
  auto* opt_stitle = scene_edit->add_option("--title", scene_title, "New title");
  auto* opt_ssit = scene_edit->add_option("--situation", scene_situation, "New initial situation");
  auto* opt_spart = scene_edit->add_option("--participant", scene_participants, "Replace participants; repeatable");
  auto* opt_dpart =
      scene_edit->add_option("--draft-participant", draft_participants, "Replace the draft's participants; repeatable");
  auto* opt_opos = scene_edit->add_option("--override-position", override_position, "Situation to override (>= 1)");
  scene_edit->add_option("--override-text", override_text, "Replacement situation text")->needs(opt_opos);
  opt_opos->needs("--override-text");
  scene_edit->callback([&] {
    action = [&](Session& s) {
      ordered_json body = ordered_json::object();
      if (opt_stitle->count() > 0) body["title"] = scene_title;
      if (opt_ssit->count() > 0) body["initial_situation"] = scene_situation;
      if (opt_spart->count() > 0) body["participants"] = resolve_characters(s, scene_participants);
      if (opt_dpart->count() > 0) body["draft_participants"] = resolve_characters(s, draft_participants);
      if (override_position) body["situation_override"] = {{"position", *override_position}, {"text", override_text}};
      const ordered_json res = s.call("PATCH", s.scene_path(), body);
      print_result(s, res, s.scene());
      return 0;
    };
  });

  // beat
  auto* cmd_beat = app.add_subcommand("beat", "Generate, author, accept, reject or edit beats");
  cmd_beat->require_subcommand(1);
  std::string beat_text;
  bool polish = false;
  int beat_index = 0;
  auto draft_action = [&](const std::string& verb, ordered_json body) {
    return [&, verb, body](Session& s) mutable {
      body["params"] = params_json(s.options());
      const ordered_json res = s.call("POST", s.scene_path() + "/beats:" + verb, body);
      print_result(s, res, draft_text(res));
      return 0;
    };
  };
  cmd_beat->add_subcommand("simulate", "Simulate the next beat into a draft")->callback([&] {
    action = draft_action("simulate", ordered_json::object());
  });
  auto* beat_nudge = cmd_beat->add_subcommand("nudge", "Steer the next beat toward an outcome");
  beat_nudge->add_option("text", beat_text, "Desired outcome")->required();
  beat_nudge->callback([&] { action = draft_action("nudge", ordered_json{{"nudge", beat_text}}); });
  auto* beat_author = cmd_beat->add_subcommand("author", "Write the next beat yourself");
  beat_author->add_option("text", beat_text, "Beat text")->required();
  beat_author->add_flag("--polish", polish, "Let the provider tidy the wording");
  beat_author->callback(
      [&] { action = draft_action("author", ordered_json{{"text", beat_text}, {"polish", polish}}); });
  cmd_beat->add_subcommand("accept", "Accept the pending draft")->callback([&] {
    action = [&](Session& s) {
      const ordered_json res = s.call("POST", s.scene_path() + "/beats:accept", ordered_json::object());
      print_result(s, res, "accepted beat " + std::to_string(res["beat_index"].get<int>()));
      return 0;
    };
  });
  cmd_beat->add_subcommand("reject", "Discard the pending draft")->callback([&] {
    action = [&](Session& s) {
      const ordered_json res = s.call("POST", s.scene_path() + "/beats:reject", ordered_json::object());
      print_result(s, res, "draft rejected");
      return 0;
    };
  });
  auto* beat_edit = cmd_beat->add_subcommand("edit", "Replace an accepted beat's text");
  beat_edit->add_option("index", beat_index, "Beat index")->required()->check(CLI::NonNegativeNumber);
  beat_edit->add_option("text", beat_text, "New text")->required();
  beat_edit->callback([&] {
    action = [&](Session& s) {
      const ordered_json res = s.call("PATCH", s.scene_path() + "/beats/" + std::to_string(beat_index),
                              ordered_json{{"text", beat_text}});
      print_result(s, res, "edited beat " + std::to_string(beat_index));
      return 0;
    };
  });

  // recompute / render
  app.add_subcommand("recompute", "Regenerate stale situations of the current scene")->callback([&] {
    action = [&](Session& s) {
      const ordered_json res = s.call("POST", s.scene_path() + ":recompute", ordered_json::object());
      print_result(s, res, "recomputed " + std::to_string(res["recomputed"].get<int>()) + " situation(s)");
      return 0;
    };
  });
  auto* cmd_render = app.add_subcommand("render", "Render the current scene to prose");
  StyleOptions render_style;
  render_style.attach(cmd_render);
  cmd_render->callback([&] {
    action = [&](Session& s) {
      ordered_json body{{"params", params_json(s.options())}};
      if (render_style.any()) body["style"] = render_style.to_json();
      const ordered_json res = s.call("POST", s.scene_path() + ":render", body);
      std::string text;
      for (const auto& seg : res["prose"]["segments"]) text += (text.empty() ? "" : "\n\n") + seg["text"].get<std::string>();
      print_result(s, res, text);
      return 0;
    };
  });

  // segment
  auto* cmd_seg = app.add_subcommand("segment", "Regenerate or edit one prose segment");
  cmd_seg->require_subcommand(1);
  int seg_index = 0;
  std::string seg_text;
  std::optional<std::string> continuity;
  StyleOptions seg_style;
  auto* seg_regen = cmd_seg->add_subcommand("regenerate", "Regenerate one segment");
  seg_regen->add_option("index", seg_index, "Beat index")->required()->check(CLI::NonNegativeNumber);
  seg_regen->add_option("--continuity", continuity, "loose keeps later segments; strict marks them stale")
      ->check(CLI::IsMember({"loose", "strict"}));
  seg_style.attach(seg_regen);
  seg_regen->callback([&] {
    action = [&](Session& s) {
      ordered_json body{{"params", params_json(s.options())}};
      if (continuity) body["continuity"] = *continuity;
      if (seg_style.any()) body["style"] = seg_style.to_json();
      const ordered_json res =
          s.call("POST", s.scene_path() + "/segments/" + std::to_string(seg_index) + ":regenerate", body);
      print_result(s, res, res["segment"]["text"].get<std::string>());
      return 0;
    };
  });
  auto* seg_edit = cmd_seg->add_subcommand("edit", "Replace one segment's text");
  seg_edit->add_option("index", seg_index, "Beat index")->required()->check(CLI::NonNegativeNumber);
  seg_edit->add_option("text", seg_text, "New text")->required();
  seg_edit->callback([&] {
    action = [&](Session& s) {
      const ordered_json res = s.call("PATCH", s.scene_path() + "/segments/" + std::to_string(seg_index),
                              ordered_json{{"text", seg_text}});
      print_result(s, res, "edited segment " + std::to_string(seg_index));
      return 0;
    };
  });

  // export
  auto* cmd_export = app.add_subcommand("export", "Export prose as plain text or markdown");
  std::string scope = "whole_story";
  std::string format = "plain";
  std::string export_out;
  cmd_export->add_option("--scope", scope, "scene or whole_story")->check(CLI::IsMember({"scene", "whole_story"}));
  cmd_export->add_option("--format", format, "plain or markdown")->check(CLI::IsMember({"plain", "markdown"}));
  cmd_export->add_option("-o,--out", export_out, "Write to FILE instead of stdout");
  cmd_export->callback([&] {
    action = [&](Session& s) {
      std::map<std::string, std::string> query{{"scope", scope}, {"format", format}};
      if (scope == "scene") query["scene"] = s.scene();
      const std::string text = s.call_text(s.project_path() + "/export", query);
      if (!export_out.empty()) {
        write_file(export_out, text);
        print_result(s, ordered_json{{"path", export_out}, {"bytes", text.size()}}, export_out);
      } else if (s.options().json) {
        s.out() << json{{"text", text}}.dump(2) << "\n";
      } else {
        s.out() << text;
      }
      return 0;
    };
  });

  // validate
  auto* cmd_validate = app.add_subcommand("validate", "Check a project file against the document invariants");
  std::string validate_file;
  cmd_validate->add_option("file", validate_file, "Project file (default: the current project)");
  cmd_validate->callback([&] {
    action = [&](Session& s) {
      fs::path file = validate_file;
      if (file.empty()) {
        if (s.remote()) {
          s.call("GET", s.project_path());
          print_findings(s, {});
          return 0;
        }
        file = ProjectStore(s.data_dir()).path_for(s.project());
      }
      const StoryInstrument instr = deserialize_unchecked(read_file(file));
      const ValidationReport report = validate_instrument(instr);
      print_findings(s, report.findings);
      return report.ok() ? 0 : 1;
    };
  });

  // serve
  auto* cmd_serve = app.add_subcommand("serve", "Serve the HTTP API over the data directory");
  ServeOptions serve_opts;
  cmd_serve->add_option("--host", serve_opts.host, "Interface to bind");
  cmd_serve->add_option("--port", serve_opts.port, "Port (0 picks a free one)");
  cmd_serve->callback([&] {
    action = [&](Session& s) {
      if (s.remote()) throw UsageError("serve runs locally; drop --server");
      serve_opts.service.data_dir = s.data_dir();
      return serve(serve_opts, s.make_provider());
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage: " << e.what() << "\n";
    return 2;
  }

  try {
    Session session(opts, out);
    return action(session);
  } catch (const UsageError& e) {
    err << "usage: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    if (opts.json) out << ordered_json::parse(error_body(e)).dump(2) << "\n";
    err << "error: " << e.name() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace tomb::cli
