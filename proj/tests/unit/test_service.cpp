#include "support.hpp"

#include "tomb/serialize.hpp"
#include "tomb/server.hpp"
#include "tomb/service.hpp"

#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <future>
#include <thread>

using namespace tomb;
using namespace tomb::testing;
using nlohmann::json;

namespace {

struct Reply {
  int status = 0;
  json body;
  std::string raw;
  std::string content_type;
};

Reply call(ProjectService& svc, const std::string& method, const std::string& path, const json& body = nullptr,
           std::map<std::string, std::string> query = {}) {
  ApiResponse r = svc.handle(ApiRequest{method, path, std::move(query), body.is_null() ? "" : body.dump()});
  Reply out{r.status, nullptr, r.body, r.content_type};
  if (r.content_type == "application/json") out.body = json::parse(r.body);
  return out;
}

std::string code_of(const Reply& r) { return r.body["error"]["code"].get<std::string>(); }

// Delays each completion and records the peak number of calls in flight.
class SlowProvider final : public Provider {
 public:
  explicit SlowProvider(std::chrono::milliseconds delay) : delay_(delay) {}

  CompletionResult complete(const PromptBundle& bundle, std::stop_token stop) override {
    const int now = ++in_flight_;
    int peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    std::this_thread::sleep_for(delay_);
    --in_flight_;
    return inner_.complete(bundle, stop);
  }

  int peak() const { return peak_; }

 private:
  std::chrono::milliseconds delay_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
  OracleProvider inner_;
};

struct Fixture {
  TempDir dir;
  std::shared_ptr<OracleProvider> provider = std::make_shared<OracleProvider>();
  ProjectService svc{ServiceConfig{dir.path()}, provider};

  // Creates a project with Alice, Bob and one scene; returns the scene path.
  std::string setup(const std::string& id = "shop") {
    REQUIRE(call(svc, "POST", "/projects", {{"id", id}, {"premise", "A corner shop feud"}}).status == 201);
    const std::string base = "/projects/" + id;
    const auto a = call(svc, "POST", base + "/characters",
                        {{"name", "Alice"}, {"traits", {{{"name", "stubbornness"}, {"value", 85}}}}});
    const auto b = call(svc, "POST", base + "/characters", {{"name", "Bob"}});
    REQUIRE(a.status == 201);
    REQUIRE(b.status == 201);
    const auto s = call(svc, "POST", base + "/scenes",
                        {{"title", "The last carton"},
                         {"initial_situation", "Two shoppers fighting over the last milk carton"},
                         {"participants", {a.body["character_id"], b.body["character_id"]}}});
    REQUIRE(s.status == 201);
    return base + "/scenes/" + s.body["scene_id"].get<std::string>();
  }
};

}  // namespace

TEST_CASE("project lifecycle") {
  Fixture f;
  auto r = call(f.svc, "POST", "/projects", {{"premise", "A corner shop feud"}, {"logline", "Milk wars"}});
  REQUIRE(r.status == 201);
  const std::string id = r.body["project"]["id"];
  CHECK(id.size() == 16);
  CHECK(r.body["project"]["premise"]["logline"] == "Milk wars");

  r = call(f.svc, "GET", "/projects");
  REQUIRE(r.body["projects"].size() == 1);
  CHECK(r.body["projects"][0]["title"] == "Milk wars");

  CHECK(call(f.svc, "GET", "/projects/" + id).body["project"]["id"] == id);
  CHECK(call(f.svc, "DELETE", "/projects/" + id).status == 200);
  r = call(f.svc, "GET", "/projects/" + id);
  CHECK(r.status == 404);
  CHECK(code_of(r) == "NOT_FOUND");
}

TEST_CASE("request errors map to documented statuses") {
  Fixture f;
  auto r = call(f.svc, "POST", "/projects", {{"premise", "   "}});
  CHECK(r.status == 422);
  CHECK(code_of(r) == "EMPTY_PREMISE");

  ApiResponse bad = f.svc.handle(ApiRequest{"POST", "/projects", {}, "{not json"});
  CHECK(bad.status == 400);
  CHECK(json::parse(bad.body)["error"]["code"] == "BAD_REQUEST");

  const std::string scene = f.setup();
  CHECK(code_of(call(f.svc, "POST", "/projects", {{"id", "shop"}, {"premise", "x"}})) == "BAD_REQUEST");
  CHECK(call(f.svc, "GET", "/nowhere").status == 404);
  CHECK(call(f.svc, "GET", "/projects/shop/scenes/scene-9/what").status == 404);

  r = call(f.svc, "POST", "/projects/shop/characters", {{"name", "Alice"}});
  CHECK(r.status == 409);
  CHECK(code_of(r) == "DUPLICATE_NAME");
  r = call(f.svc, "POST", "/projects/shop/characters",
           {{"name", "Carol"}, {"traits", {{{"name", "grit"}, {"value", 140}}}}});
  CHECK(r.status == 422);
  CHECK(code_of(r) == "TRAIT_OUT_OF_RANGE");
  CHECK(r.body["error"]["details"].is_object());

  r = call(f.svc, "POST", "/projects/shop/scenes/scene-9/beats:simulate");
  CHECK(r.status == 404);
  CHECK(code_of(r) == "UNKNOWN_SCENE");

  CHECK(call(f.svc, "POST", scene + "/beats:simulate").status == 200);
  r = call(f.svc, "POST", scene + "/beats:simulate");
  CHECK(r.status == 409);
  CHECK(code_of(r) == "DRAFT_ALREADY_PENDING");
  r = call(f.svc, "GET", "/projects/shop/export", nullptr, {{"scope", "everything"}});
  CHECK(r.status == 400);
}

TEST_CASE("the writing loop over the API") {
  Fixture f;
  const std::string scene = f.setup();
  auto r = call(f.svc, "POST", scene + "/beats:simulate", {{"params", {{"temperature", 0.8}}}});
  REQUIRE(r.status == 200);
  CHECK(r.body.contains("request_id"));
  CHECK(r.body["draft"]["params"]["temperature"] == 0.8);
  CHECK(!r.body["project"]["scenes"][0]["draft"].is_null());

  r = call(f.svc, "POST", scene + "/beats:accept");
  REQUIRE(r.status == 200);
  CHECK(r.body["beat_index"] == 0);

  r = call(f.svc, "POST", scene + "/beats:nudge", {{"nudge", "Bob fights back"}});
  REQUIRE(r.status == 200);
  CHECK(r.body["draft"]["nudge_text"] == "Bob fights back");
  CHECK(call(f.svc, "POST", scene + "/beats:reject").status == 200);

  r = call(f.svc, "POST", scene + "/beats:author", {{"text", "Alice pays."}, {"polish", true}});
  CHECK(r.body["draft"]["text"] == "Polished: Alice pays.");
  CHECK(r.body["draft"]["authored_text"] == "Alice pays.");
  REQUIRE(call(f.svc, "POST", scene + "/beats:accept").status == 200);

  r = call(f.svc, "PATCH", scene + "/beats/0", {{"text", "Bob grabs the carton."}});
  REQUIRE(r.status == 200);
  CHECK(r.body["project"]["scenes"][0]["situations"][2]["stale"] == true);
  CHECK(code_of(call(f.svc, "POST", scene + ":render")) == "STALE_CHAIN");
  r = call(f.svc, "POST", scene + ":recompute");
  CHECK(r.body["recomputed"] == 2);
  CHECK(code_of(call(f.svc, "POST", scene + ":recompute")) == "NOTHING_TO_RECOMPUTE");

  r = call(f.svc, "POST", scene + ":render", {{"style", {{"intensity", "vivid"}}}});
  REQUIRE(r.status == 200);
  CHECK(r.body["prose"]["segments"].size() == 2);
  CHECK(r.body["prose"]["style"]["intensity"] == "vivid");

  r = call(f.svc, "POST", scene + "/segments/1:regenerate", {{"continuity", "strict"}});
  REQUIRE(r.status == 200);
  CHECK(r.body["segment"]["beat_index"] == 1);
  r = call(f.svc, "PATCH", scene + "/segments/0", {{"text", "It began with milk."}});
  CHECK(r.status == 200);
  call(f.svc, "PATCH", scene + "/segments/1", {{"text", "It ended with milk."}});

  r = call(f.svc, "GET", "/projects/shop/export", nullptr, {{"format", "markdown"}});
  CHECK(r.status == 200);
  CHECK(r.content_type.rfind("text/markdown", 0) == 0);
  CHECK(r.raw == "# The last carton\n\nIt began with milk.\n\nIt ended with milk.\n");

  const StoryInstrument stored = f.svc.store().load("shop");
  CHECK(validate_instrument(stored).ok());
  CHECK(chain_law_violations(stored).empty());
  CHECK(memory_law_violations(stored).empty());
}

TEST_CASE("scene and character patches") {
  Fixture f;
  const std::string scene = f.setup();
  auto r = call(f.svc, "PATCH", "/projects/shop/characters/char-2", {{"description", "Shy"}});
  REQUIRE(r.status == 200);
  CHECK(r.body["project"]["characters"][1]["description"] == "Shy");
  CHECK(call(f.svc, "PATCH", "/projects/shop/characters/char-9", {{"name", "X"}}).status == 404);

  call(f.svc, "POST", scene + "/beats:author", {{"text", "Bob waits."}});
  r = call(f.svc, "PATCH", scene, {{"draft_participants", {"char-1", "char-2"}}});
  REQUIRE(r.status == 200);
  call(f.svc, "POST", scene + "/beats:accept");
  r = call(f.svc, "PATCH", scene, {{"situation_override", {{"position", 1}, {"text", "The shop goes dark."}}}});
  REQUIRE(r.status == 200);
  CHECK(r.body["project"]["scenes"][0]["situations"][1]["derivation"] == "manual_override");
  r = call(f.svc, "PATCH", scene, {{"participants", {"char-1"}}});
  CHECK(r.status == 409);
  CHECK(code_of(r) == "PARTICIPANT_IN_USE");
}

TEST_CASE("temperature is validated before any provider call") {
  Fixture f;
  const std::string scene = f.setup();
  for (double t : {2.5, 0.0, 2.0001}) {
    const auto r = call(f.svc, "POST", scene + "/beats:simulate", {{"params", {{"temperature", t}}}});
    CHECK(r.status == 422);
    CHECK(code_of(r) == "TEMPERATURE_OUT_OF_RANGE");
  }
  CHECK(code_of(call(f.svc, "POST", scene + "/beats:simulate", {{"params", {{"temperature", "hot"}}}})) ==
        "BAD_REQUEST");
  CHECK(f.provider->calls() == 0);
  CHECK(call(f.svc, "POST", scene + "/beats:simulate", {{"params", {{"temperature", 2.0}}}}).status == 200);
  CHECK(f.provider->calls() == 1);
}

TEST_CASE("provider failures leave the stored project untouched") {
  Fixture f;
  const std::string scene = f.setup();
  call(f.svc, "POST", scene + "/beats:simulate");
  const std::string before = read_text(f.svc.store().path_for("shop"));
  f.provider->set_fault([](const PromptBundle& b, int) -> std::optional<ErrorCode> {
    if (b.kind == PromptKind::SituationUpdate) return ErrorCode::Timeout;
    return std::nullopt;
  });
  auto r = call(f.svc, "POST", scene + "/beats:accept");
  CHECK(r.status == 504);
  CHECK(code_of(r) == "TIMEOUT");
  CHECK(r.body.contains("request_id"));
  CHECK(read_text(f.svc.store().path_for("shop")) == before);

  f.provider->set_fault([](const PromptBundle&, int) -> std::optional<ErrorCode> { return ErrorCode::RateLimited; });
  CHECK(call(f.svc, "POST", scene + "/beats:accept").status == 503);
  f.provider->set_fault([](const PromptBundle&, int) -> std::optional<ErrorCode> { return ErrorCode::AuthFailed; });
  CHECK(call(f.svc, "POST", scene + "/beats:accept").status == 502);
  CHECK(read_text(f.svc.store().path_for("shop")) == before);
}

TEST_CASE("partial recompute saves progress and reports the failure") {
  Fixture f;
  const std::string scene = f.setup();
  for (int i = 0; i < 4; ++i) {
    call(f.svc, "POST", scene + "/beats:simulate");
    call(f.svc, "POST", scene + "/beats:accept");
  }
  call(f.svc, "PATCH", scene + "/beats/0", {{"text", "A new start."}});
  int n = 0;
  f.provider->set_fault([&](const PromptBundle& b, int) -> std::optional<ErrorCode> {
    if (b.kind == PromptKind::SituationUpdate && ++n == 3) return ErrorCode::ProviderError;
    return std::nullopt;
  });
  auto r = call(f.svc, "POST", scene + ":recompute");
  CHECK(r.status == 502);
  CHECK(r.body["error"]["details"]["recomputed"] == 2);
  CHECK(r.body["recomputed"] == 2);
  const auto stored = f.svc.store().load("shop");
  CHECK(!stored.scenes[0].situations[2].stale);
  CHECK(stored.scenes[0].situations[3].stale);
  f.provider->set_fault({});
  CHECK(call(f.svc, "POST", scene + ":recompute").body["recomputed"] == 2);
}

TEST_CASE("no provider means PROVIDER_UNAVAILABLE") {
  TempDir dir;
  ProjectService svc(ServiceConfig{dir.path()}, nullptr);
  call(svc, "POST", "/projects", {{"id", "p"}, {"premise", "x"}});
  const auto c = call(svc, "POST", "/projects/p/characters", {{"name", "Ann"}});
  call(svc, "POST", "/projects/p/scenes", {{"initial_situation", "s"}, {"participants", {c.body["character_id"]}}});
  const auto r = call(svc, "POST", "/projects/p/scenes/scene-1/beats:simulate");
  CHECK(r.status == 503);
  CHECK(code_of(r) == "PROVIDER_UNAVAILABLE");
  CHECK(call(svc, "POST", "/projects/p/scenes/scene-1/beats:author", {{"text", "Ann sits."}}).status == 200);
}

TEST_CASE("async generations report their phases") {
  Fixture f;
  const std::string scene = f.setup();
  auto r = call(f.svc, "POST", scene + "/beats:simulate", nullptr, {{"async", "1"}});
  REQUIRE(r.status == 202);
  const std::string rid = r.body["request_id"];
  const auto events = f.svc.generations().wait_finished(rid);
  std::vector<std::string> phases;
  for (const auto& e : events) phases.emplace_back(to_string(e.phase));
  CHECK(phases == std::vector<std::string>{"queued", "prompting", "awaiting_provider", "parsing", "done"});
  CHECK(events.back().payload.contains("draft"));
  CHECK(!events.back().payload.contains("project"));
  for (std::size_t i = 0; i < events.size(); ++i) CHECK(events[i].sequence == static_cast<int>(i));

  r = call(f.svc, "GET", "/generations/" + rid + "/events");
  CHECK(r.status == 200);
  CHECK(r.content_type == "text/event-stream");
  CHECK(r.raw.rfind("id: 0\nevent: queued\ndata: ", 0) == 0);
  CHECK(r.raw.find("event: done") != std::string::npos);

  r = call(f.svc, "GET", "/generations/nope/events");
  CHECK(r.status == 404);
  CHECK(code_of(r) == "UNKNOWN_REQUEST");

  r = call(f.svc, "POST", scene + "/beats:simulate", nullptr, {{"async", "true"}});
  const auto failed = f.svc.generations().wait_finished(r.body["request_id"]);
  CHECK(failed.back().phase == GenerationPhase::Failed);
  CHECK(failed.back().payload["error"]["code"] == "DRAFT_ALREADY_PENDING");
}

TEST_CASE("different projects generate in parallel") {
  TempDir dir;
  auto slow = std::make_shared<SlowProvider>(std::chrono::milliseconds(300));
  ProjectService svc(ServiceConfig{dir.path()}, slow);
  std::vector<std::string> scenes;
  for (const char* id : {"a", "b", "c"}) {
    call(svc, "POST", "/projects", {{"id", id}, {"premise", "x"}});
    const auto c = call(svc, "POST", std::string("/projects/") + id + "/characters", {{"name", "Ann"}});
    call(svc, "POST", std::string("/projects/") + id + "/scenes",
         {{"initial_situation", "s"}, {"participants", {c.body["character_id"]}}});
    scenes.push_back(std::string("/projects/") + id + "/scenes/scene-1");
  }
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::future<int>> runs;
  for (const auto& s : scenes) {
    runs.push_back(std::async(std::launch::async, [&svc, s] { return call(svc, "POST", s + "/beats:simulate").status; }));
  }
  for (auto& r : runs) CHECK(r.get() == 200);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(elapsed < std::chrono::milliseconds(800));
  CHECK(slow->peak() >= 2);
}

TEST_CASE("one project's mutations are serialized") {
  TempDir dir;
  auto slow = std::make_shared<SlowProvider>(std::chrono::milliseconds(100));
  ProjectService svc(ServiceConfig{dir.path()}, slow);
  call(svc, "POST", "/projects", {{"id", "p"}, {"premise", "x"}});
  const auto c = call(svc, "POST", "/projects/p/characters", {{"name", "Ann"}});
  call(svc, "POST", "/projects/p/scenes", {{"initial_situation", "s"}, {"participants", {c.body["character_id"]}}});

  std::vector<std::future<Reply>> runs;
  for (int i = 0; i < 4; ++i) {
    runs.push_back(std::async(std::launch::async,
                              [&svc] { return call(svc, "POST", "/projects/p/scenes/scene-1/beats:simulate"); }));
  }
  int ok = 0;
  int pending = 0;
  for (auto& r : runs) {
    const Reply reply = r.get();
    if (reply.status == 200) ++ok;
    if (reply.status == 409 && code_of(reply) == "DRAFT_ALREADY_PENDING") ++pending;
  }
  CHECK(ok == 1);
  CHECK(pending == 3);
  CHECK(slow->peak() == 1);

  std::vector<std::future<int>> names;
  for (int i = 0; i < 8; ++i) {
    names.push_back(std::async(std::launch::async, [&svc, i] {
      return call(svc, "POST", "/projects/p/characters", {{"name", "Extra " + std::to_string(i)}}).status;
    }));
  }
  for (auto& n : names) CHECK(n.get() == 201);
  CHECK(svc.store().load("p").characters.size() == 9);
}

TEST_CASE("provider calls respect the concurrency cap") {
  TempDir dir;
  auto slow = std::make_shared<SlowProvider>(std::chrono::milliseconds(100));
  ServiceConfig config{dir.path()};
  config.provider_concurrency = 2;
  ProjectService svc(config, slow);
  std::vector<std::future<int>> runs;
  for (int i = 0; i < 6; ++i) {
    const std::string id = "p" + std::to_string(i);
    call(svc, "POST", "/projects", {{"id", id}, {"premise", "x"}});
    const auto c = call(svc, "POST", "/projects/" + id + "/characters", {{"name", "Ann"}});
    call(svc, "POST", "/projects/" + id + "/scenes",
         {{"initial_situation", "s"}, {"participants", {c.body["character_id"]}}});
    runs.push_back(std::async(std::launch::async, [&svc, id] {
      return call(svc, "POST", "/projects/" + id + "/scenes/scene-1/beats:simulate").status;
    }));
  }
  for (auto& r : runs) CHECK(r.get() == 200);
  CHECK(slow->peak() <= 2);
}

TEST_CASE("condense endpoint") {
  Fixture f;
  TempDir dir;
  ServiceConfig config{dir.path()};
  config.memory_limit = 1;
  ProjectService svc(config, f.provider);
  call(svc, "POST", "/projects", {{"id", "p"}, {"premise", "x"}});
  const auto c = call(svc, "POST", "/projects/p/characters", {{"name", "Ann"}});
  call(svc, "POST", "/projects/p/scenes", {{"initial_situation", "s"}, {"participants", {c.body["character_id"]}}});
  for (int i = 0; i < 3; ++i) {
    call(svc, "POST", "/projects/p/scenes/scene-1/beats:author", {{"text", "Ann moves."}});
    call(svc, "POST", "/projects/p/scenes/scene-1/beats:accept");
  }
  const auto r = call(svc, "POST", "/projects/p/characters/char-1:condense");
  REQUIRE(r.status == 200);
  const auto& mems = r.body["project"]["characters"][0]["memories"];
  CHECK(mems.size() == 2);
  CHECK(mems[0]["condensed"] == true);
}

TEST_CASE("HTTP transport round trip with live events") {
  Fixture f;
  HttpServer server(f.svc);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread loop([&] { server.listen(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto res = client.Post("/projects", json{{"id", "web"}, {"premise", "Over the wire"}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  res = client.Post("/projects/web/characters", R"({"name":"Ann"})", "application/json");
  CHECK(res->status == 201);
  res = client.Post("/projects/web/scenes", R"({"initial_situation":"A quiet shop","participants":["char-1"]})",
                    "application/json");
  CHECK(res->status == 201);

  res = client.Post("/projects/web/scenes/scene-1/beats:simulate?async=1", "{}", "application/json");
  REQUIRE(res);
  CHECK(res->status == 202);
  const std::string rid = json::parse(res->body)["request_id"];
  res = client.Get("/generations/" + rid + "/events");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type").rfind("text/event-stream", 0) == 0);
  CHECK(res->body.find("event: queued") != std::string::npos);
  CHECK(res->body.find("event: done") != std::string::npos);

  res = client.Post("/projects/web/scenes/scene-1/beats:simulate", R"({"params":{"temperature":2.5}})",
                    "application/json");
  CHECK(res->status == 422);
  CHECK(json::parse(res->body)["error"]["code"] == "TEMPERATURE_OUT_OF_RANGE");

  res = client.Get("/projects/web/export?scope=whole_story");
  CHECK(res->status == 409);
  CHECK(json::parse(res->body)["error"]["code"] == "MISSING_PROSE");
  res = client.Get("/generations/missing/events");
  CHECK(res->status == 404);

  server.stop();
  loop.join();
}
