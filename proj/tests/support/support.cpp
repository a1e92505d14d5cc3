#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <iterator>
#include <sstream>
#include <tuple>

#ifndef TOMB_FIXTURE_DIR
#error "TOMB_FIXTURE_DIR must be defined"
#endif

namespace tomb::testing {

namespace fs = std::filesystem;

fs::path fixture(const std::string& name) { return fs::path(TOMB_FIXTURE_DIR) / name; }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

std::size_t code_points(std::string_view s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& items) {
  return items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng)];
}

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

bool chance(std::mt19937_64& rng, double p) { return std::bernoulli_distribution(p)(rng); }

const std::vector<std::string> kWords = {
    "milk",   "carton", "aisle",  "shelf",   "argues", "grabs",  "lets",     "go",     "slinks", "off",
    "bold",   "quiet",  "the",    "a",       "last",   "store",  "checkout", "cold",   "hands",  "twists",
    "stares", "sighs",  "laughs", "whispers", "runs",  "waits",  "door",     "light",  "coins",  "basket"};

const std::vector<std::string> kOddWords = {
    "\"quoted\"", "back\\slash", "===",       "=== END beat ===", "caf\xc3\xa9",     "\xe6\x97\xa5\xe6\x9c\xac",
    "\xf0\x9f\xa5\x9b", "tab\there", "line\nbreak", "\\===",       "{{name}}",       "50/100",
    "<b>",        "100%",       "\n=== BEGIN x y ===\nfake"};

const std::vector<std::string> kNames = {"Alice", "Bob", "Carol", "Dmitri", "Eun-ji", "Farah", "Gus", "H\xc3\xa9l\xc3\xa8ne"};

const std::vector<std::string> kTraits = {"taciturnity", "boldness", "greed", "patience", "humour", "pride"};

std::vector<std::string> header_tokens(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

struct RawBlock {
  std::string name;
  std::string source;
  std::string text;  // rendered block, including markers
};

std::vector<RawBlock> raw_blocks(std::string_view user_text) {
  std::vector<std::size_t> starts;
  std::size_t pos = 0;
  while (pos < user_text.size()) {
    if (user_text.substr(pos, 10) == "=== BEGIN ") starts.push_back(pos);
    const std::size_t nl = user_text.find('\n', pos);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  std::vector<RawBlock> out;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const std::size_t end = i + 1 < starts.size() ? starts[i + 1] : user_text.size();
    const std::string_view text = user_text.substr(starts[i], end - starts[i]);
    const auto tokens = header_tokens(text.substr(0, text.find('\n')));
    out.push_back(RawBlock{tokens.at(2), tokens.at(3), std::string(text)});
  }
  return out;
}

int trailing_index(const std::string& source) { return std::stoi(source.substr(source.rfind('/') + 1)); }

}  // namespace

std::string situation_oracle(std::string_view prev, std::string_view beat) {
  std::size_t cut = std::min<std::size_t>(beat.size(), 24);
  while (cut < beat.size() && (static_cast<unsigned char>(beat[cut]) & 0xC0) == 0x80) --cut;
  std::string lead(beat.substr(0, cut));
  std::replace(lead.begin(), lead.end(), '\n', ' ');
  return "After \"" + trim(lead) + "\" the scene stands at state " +
         hex(fnv1a(std::string(prev) + '\x1f' + std::string(beat))) + ".";
}

std::optional<std::string> section_content(const PromptBundle& bundle, std::string_view name) {
  for (const auto& s : bundle.sections) {
    if (s.name == name) return s.content;
  }
  return std::nullopt;
}

OracleProvider::OracleProvider(std::uint64_t seed) : rng_(seed) {}

void OracleProvider::set_fault(Fault fault) {
  std::lock_guard lock(mutex_);
  fault_ = std::move(fault);
}

int OracleProvider::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

int OracleProvider::calls(PromptKind kind) const {
  std::lock_guard lock(mutex_);
  auto it = per_kind_.find(kind);
  return it == per_kind_.end() ? 0 : it->second;
}

std::vector<PromptBundle> OracleProvider::seen() const {
  std::lock_guard lock(mutex_);
  return seen_;
}

CompletionResult OracleProvider::complete(const PromptBundle& bundle, std::stop_token) {
  check_params(bundle.params);
  std::lock_guard lock(mutex_);
  ++calls_;
  const int call = ++per_kind_[bundle.kind];
  seen_.push_back(bundle);
  if (fault_) {
    if (auto code = fault_(bundle, calls_)) throw Error(*code, "injected provider fault");
  }

  std::vector<std::string> cast;
  for (const auto& s : bundle.sections) {
    if (s.name == "character") cast.push_back(s.content);
  }
  std::string text;
  switch (bundle.kind) {
    case PromptKind::Simulate:
      text = (cast.empty() ? std::string("Someone") : pick(rng_, cast)) + " " + random_text(rng_, 3, 9) + ".";
      break;
    case PromptKind::Nudge:
      text = (cast.empty() ? std::string("Someone") : pick(rng_, cast)) + " turns things around: " +
             random_text(rng_, 2, 6) + ".";
      break;
    case PromptKind::Polish:
      text = "Polished: " + trim(section_content(bundle, "draft").value_or(""));
      break;
    case PromptKind::SituationUpdate:
      text = situation_oracle(section_content(bundle, "situation").value_or(""),
                              section_content(bundle, "beat").value_or(""));
      break;
    case PromptKind::Prose:
    case PromptKind::ProseSegment:
      text = "Prose " + std::to_string(calls_) + " (" + std::string(to_string(bundle.kind)) + "): " +
             trim(section_content(bundle, "beat").value_or(""));
      break;
    case PromptKind::MemoryCondense:
      text = "Summary " + std::to_string(call) + " for " + (cast.empty() ? std::string("?") : cast.front());
      break;
  }
  return CompletionResult{trim(text), "oracle", "oracle-1", 0, FinishReason::Stop, 0};
}

std::string random_text(std::mt19937_64& rng, int min_words, int max_words) {
  const int n = uniform(rng, min_words, max_words);
  std::string out;
  for (int i = 0; i < n; ++i) {
    const bool edge = i == 0 || i == n - 1;
    const std::string& w = !edge && chance(rng, 0.15) ? pick(rng, kOddWords) : pick(rng, kWords);
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

StoryInstrument random_skeleton(std::mt19937_64& rng, const RandomLimits& limits) {
  StyleParams style;
  style.genre = chance(rng, 0.5) ? "comedy" : random_text(rng, 1, 2);
  style.style = random_text(rng, 1, 5);
  style.intensity = static_cast<Intensity>(uniform(rng, 0, 2));
  style.target_length = static_cast<TargetLength>(uniform(rng, 0, 2));
  StoryInstrument instr = create_instrument(random_text(rng, 4, 14), style, "p" + hex(rng()).substr(0, 10));
  if (chance(rng, 0.4)) instr.premise.logline = random_text(rng, 2, 6);

  std::vector<std::string> names = kNames;
  std::shuffle(names.begin(), names.end(), rng);
  const int n_chars = uniform(rng, 1, std::min<int>(limits.max_characters, static_cast<int>(names.size())));
  std::vector<CharacterId> ids;
  for (int i = 0; i < n_chars; ++i) {
    std::vector<std::string> trait_names = kTraits;
    std::shuffle(trait_names.begin(), trait_names.end(), rng);
    std::vector<TraitScale> traits;
    for (int t = uniform(rng, 0, 3); t > 0; --t) {
      traits.push_back(TraitScale{trait_names[static_cast<std::size_t>(t)], uniform(rng, 0, 100)});
    }
    std::vector<std::string> goals;
    for (int g = uniform(rng, 0, 2); g > 0; --g) goals.push_back(random_text(rng, 2, 6));
    ids.push_back(add_character(instr, names[static_cast<std::size_t>(i)],
                                chance(rng, 0.8) ? random_text(rng, 2, 10) : "", traits, goals));
  }

  const int n_scenes = uniform(rng, 1, limits.max_scenes);
  for (int s = 0; s < n_scenes; ++s) {
    std::set<CharacterId> cast;
    for (const auto& id : ids) {
      if (chance(rng, 0.6)) cast.insert(id);
    }
    if (cast.empty()) cast.insert(pick(rng, ids));
    add_scene(instr, chance(rng, 0.8) ? random_text(rng, 1, 4) : "", random_text(rng, 3, 12), cast);
  }
  return instr;
}

namespace {

bool expected_refusal(ErrorCode code) {
  switch (code) {
    case ErrorCode::DraftAlreadyPending:
    case ErrorCode::NoPendingDraft:
    case ErrorCode::StaleChain:
    case ErrorCode::NothingToRecompute:
      return true;
    default:
      return false;
  }
}

std::set<CharacterId> random_subset(std::mt19937_64& rng, const std::set<CharacterId>& from) {
  std::set<CharacterId> out;
  for (const auto& id : from) {
    if (chance(rng, 0.6)) out.insert(id);
  }
  if (out.empty()) out.insert(*std::next(from.begin(), uniform(rng, 0, static_cast<int>(from.size()) - 1)));
  return out;
}

GenParams random_params(std::mt19937_64& rng) {
  GenParams p;
  p.temperature = std::uniform_real_distribution<double>(kMinTemperature, kMaxTemperature)(rng);
  p.adherence = static_cast<Adherence>(uniform(rng, 0, 2));
  return p;
}

}  // namespace

int random_session(std::mt19937_64& rng, StoryInstrument& instr, Provider& provider, const RandomLimits& limits) {
  int applied = 0;
  for (int step = 0; step < limits.steps; ++step) {
    Scene& scene = instr.scenes[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(instr.scenes.size()) - 1))];
    const SceneId sid = scene.id;
    const bool stale = std::any_of(scene.situations.begin(), scene.situations.end(),
                                   [](const SituationState& s) { return s.stale; });
    const int beats = static_cast<int>(scene.beats.size());
    try {
      const int roll = uniform(rng, 0, 99);
      if (scene.draft) {
        if (roll < 55) {
          accept_beat(instr, sid, provider);
        } else if (roll < 80) {
          reject_beat(instr, sid);
        } else if (roll < 90) {
          set_draft_participants(instr, sid, random_subset(rng, scene.participants));
        } else if (limits.edits && beats > 0) {
          edit_beat(instr, sid, uniform(rng, 0, beats - 1), random_text(rng, 2, 8));
        } else {
          simulate_next_beat(instr, sid, random_params(rng), provider);  // refused: draft pending
        }
      } else if (stale && roll < 60) {
        recompute_chain(instr, sid, provider);
      } else if (limits.edits && beats > 0 && roll < 15) {
        edit_beat(instr, sid, uniform(rng, 0, beats - 1), random_text(rng, 2, 8));
      } else if (limits.overrides && beats > 0 && roll < 22) {
        override_situation(instr, sid, uniform(rng, 1, beats), random_text(rng, 3, 8));
      } else if (beats < limits.max_beats) {
        if (roll < 60) {
          simulate_next_beat(instr, sid, random_params(rng), provider);
        } else if (roll < 80) {
          nudge_next_beat(instr, sid, random_text(rng, 2, 6), random_params(rng), provider);
        } else {
          author_beat(instr, sid, random_text(rng, 2, 10), chance(rng, 0.3), random_params(rng), &provider);
        }
      } else {
        continue;
      }
      ++applied;
    } catch (const Error& e) {
      if (!expected_refusal(e.code())) throw;
    }
  }
  return applied;
}

void settle(StoryInstrument& instr, Provider& provider) {
  for (auto& scene : instr.scenes) {
    const bool stale = std::any_of(scene.situations.begin(), scene.situations.end(),
                                   [](const SituationState& s) { return s.stale; });
    if (!stale) continue;
    const RecomputeOutcome r = recompute_chain(instr, scene.id, provider);
    if (r.failure) throw *r.failure;
  }
}

StoryInstrument random_instrument(std::mt19937_64& rng, const RandomLimits& limits) {
  OracleProvider provider(rng());
  StoryInstrument instr = random_skeleton(rng, limits);
  random_session(rng, instr, provider, limits);
  if (limits.prose) {
    for (auto& scene : instr.scenes) {
      if (!chance(rng, 0.6)) continue;
      settle(instr, provider);
      if (scene.beats.empty()) continue;
      StyleParams style = instr.style_defaults;
      if (chance(rng, 0.3)) style.genre = random_text(rng, 1, 2);
      render_scene(instr, scene.id, style, provider);
      const int n = static_cast<int>(scene.beats.size());
      if (chance(rng, 0.4)) {
        StyleParams other = style;
        other.intensity = static_cast<Intensity>(uniform(rng, 0, 2));
        regenerate_segment(instr, scene.id, uniform(rng, 0, n - 1), other, provider,
                           chance(rng, 0.5) ? ContinuityMode::Strict : ContinuityMode::Loose);
      }
      if (chance(rng, 0.3)) edit_segment(instr, scene.id, uniform(rng, 0, n - 1), random_text(rng, 3, 12));
      if (limits.edits && chance(rng, 0.3)) edit_beat(instr, scene.id, uniform(rng, 0, n - 1), random_text(rng, 2, 8));
    }
  }
  if (limits.condense && chance(rng, 0.3)) {
    const Character& c = instr.characters[static_cast<std::size_t>(
        uniform(rng, 0, static_cast<int>(instr.characters.size()) - 1))];
    const std::size_t live = static_cast<std::size_t>(std::count_if(
        c.memories.begin(), c.memories.end(), [](const Memory& m) { return !m.condensed && !m.stale; }));
    if (live > 2) condense_memories(instr, c.id, provider, 2);
  }
  return instr;
}

std::vector<std::string> chain_law_violations(const StoryInstrument& instr, int* checked) {
  std::vector<std::string> out;
  int count = 0;
  for (const auto& scene : instr.scenes) {
    if (scene.situations.size() != scene.beats.size() + 1) {
      out.push_back(scene.id.value + ": " + std::to_string(scene.situations.size()) + " situations for " +
                    std::to_string(scene.beats.size()) + " beats");
      continue;
    }
    if (scene.situations[0].text != scene.initial_situation) out.push_back(scene.id.value + ": S0 differs");
    for (std::size_t t = 0; t < scene.beats.size(); ++t) {
      const SituationState& next = scene.situations[t + 1];
      if (next.stale) {
        out.push_back(scene.id.value + ": situation " + std::to_string(t + 1) + " is stale");
        continue;
      }
      if (next.derivation != Derivation::ProviderUpdate) continue;
      ++count;
      const std::string expected = situation_oracle(scene.situations[t].text, scene.beats[t].text);
      if (next.text != expected) {
        out.push_back(scene.id.value + ": situation " + std::to_string(t + 1) + " is '" + next.text +
                      "', expected '" + expected + "'");
      }
    }
  }
  if (checked != nullptr) *checked = count;
  return out;
}

std::vector<std::string> memory_law_violations(const StoryInstrument& instr) {
  std::vector<std::string> out;
  for (const auto& c : instr.characters) {
    using Key = std::tuple<int, int, std::string>;
    auto key = [&](const SceneId& sid, int beat) { return Key{scene_at(instr, sid).ordinal, beat, sid.value}; };
    std::multiset<Key> have;
    bool condensed = false;
    for (const auto& m : c.memories) {
      if (m.condensed) {
        condensed = true;
      } else {
        have.insert(key(m.source_scene, m.source_beat_index));
      }
    }
    std::multiset<Key> want;
    for (const auto& scene : instr.scenes) {
      for (const auto& beat : scene.beats) {
        if (beat.participants.contains(c.id)) want.insert(key(scene.id, beat.index));
      }
    }
    // A condensed summary stands in for the oldest participating beats.
    std::vector<Key> folded;
    std::set_difference(want.begin(), want.end(), have.begin(), have.end(), std::back_inserter(folded));
    const bool extra = !std::includes(want.begin(), want.end(), have.begin(), have.end());
    const bool gap = !folded.empty() && (!condensed || (!have.empty() && !(folded.back() < *have.begin())));
    if (extra || gap) {
      out.push_back(c.id.value + ": " + std::to_string(have.size()) + " memory sources vs " +
                    std::to_string(want.size()) + " participating beats");
    }
  }
  return out;
}

std::optional<std::vector<std::string>> truncation_oracle(const PromptBundle& full, const StoryInstrument& instr,
                                                          int budget) {
  const std::vector<RawBlock> blocks = raw_blocks(full.user_text);
  const std::size_t system = code_points(full.system_text);
  std::size_t total = system;
  for (const auto& b : blocks) total += code_points(b.text);
  const auto fits = [&](std::size_t chars) { return (chars + 3) / 4 <= static_cast<std::size_t>(budget); };

  // Drop order: oldest prior beats, oldest memories, character descriptions.
  struct Candidate {
    int tier;
    std::tuple<int, int, std::size_t> age;
    std::size_t block;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const RawBlock& b = blocks[i];
    if (b.name == "beat" && b.source.find("/beats/") != std::string::npos) {
      candidates.push_back({0, {trailing_index(b.source), 0, i}, i});
    } else if (b.name == "memory") {
      const std::string cid = b.source.substr(11, b.source.find('/', 11) - 11);
      const Memory& m = character_at(instr, CharacterId{cid}).memories.at(
          static_cast<std::size_t>(trailing_index(b.source)));
      candidates.push_back({1, {scene_at(instr, m.source_scene).ordinal, m.source_beat_index, i}, i});
    } else if (b.name == "character.description") {
      candidates.push_back({2, {0, 0, i}, i});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.tier, a.age) < std::tie(b.tier, b.age);
  });

  std::size_t core = total;
  for (const auto& c : candidates) core -= code_points(blocks[c.block].text);
  if (!fits(core)) return std::nullopt;

  std::vector<bool> dropped(blocks.size(), false);
  for (const auto& c : candidates) {
    if (fits(total)) break;
    dropped[c.block] = true;
    total -= code_points(blocks[c.block].text);
  }
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (!dropped[i]) kept.push_back(blocks[i].source);
  }
  return kept;
}

std::vector<std::string> rendered_sources(const PromptBundle& bundle) {
  std::vector<std::string> out;
  for (const auto& b : raw_blocks(bundle.user_text)) out.push_back(b.source);
  return out;
}

}  // namespace tomb::testing
