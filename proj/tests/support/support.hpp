#pragma once

#include "tomb/engine.hpp"
#include "tomb/instrument.hpp"
#include "tomb/prompt.hpp"
#include "tomb/prose.hpp"
#include "tomb/provider.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace tomb::testing {

std::filesystem::path fixture(const std::string& name);
std::string read_text(const std::filesystem::path& path);

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "tomb");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// The expected situation after applying `beat` to `prev`. OracleProvider
// answers situation-update prompts with exactly this.
std::string situation_oracle(std::string_view prev, std::string_view beat);

// Content of the first section called `name`, if any.
std::optional<std::string> section_content(const PromptBundle& bundle, std::string_view name);

// Answers every prompt kind deterministically from the prompt itself plus a
// seeded generator; failures can be injected per call.
class OracleProvider final : public Provider {
 public:
  explicit OracleProvider(std::uint64_t seed = 1);

  CompletionResult complete(const PromptBundle& bundle, std::stop_token stop = {}) override;

  // Called before answering; returning a code makes the call throw it.
  using Fault = std::function<std::optional<ErrorCode>(const PromptBundle&, int call)>;
  void set_fault(Fault fault);

  int calls() const;
  int calls(PromptKind kind) const;
  std::vector<PromptBundle> seen() const;

 private:
  mutable std::mutex mutex_;
  std::mt19937_64 rng_;
  Fault fault_;
  int calls_ = 0;
  std::map<PromptKind, int> per_kind_;
  std::vector<PromptBundle> seen_;
};

// Non-empty, trimmed text drawn from a vocabulary that includes quotes,
// backslashes, delimiter-like tokens and multi-byte characters.
std::string random_text(std::mt19937_64& rng, int min_words, int max_words);

struct RandomLimits {
  int max_characters = 5;
  int max_scenes = 3;
  int max_beats = 10;
  int steps = 40;
  bool edits = true;
  bool overrides = true;
  bool prose = true;
  bool condense = true;
};

// Random instrument skeleton: premise, characters and scenes, no beats.
StoryInstrument random_skeleton(std::mt19937_64& rng, const RandomLimits& limits);

// Applies `steps` random engine operations (simulate, nudge, author,
// accept, reject, edit, override, recompute, draft participant changes).
// Returns the number of operations that took effect.
int random_session(std::mt19937_64& rng, StoryInstrument& instr, Provider& provider, const RandomLimits& limits);

// Recomputes every scene that has stale situations.
void settle(StoryInstrument& instr, Provider& provider);

// A valid instrument exercising every part of the document model.
StoryInstrument random_instrument(std::mt19937_64& rng, const RandomLimits& limits = {});

// Law checkers; each returns one message per violation.
std::vector<std::string> chain_law_violations(const StoryInstrument& instr, int* checked = nullptr);
std::vector<std::string> memory_law_violations(const StoryInstrument& instr);

// Greedy-drop oracle for truncate_context, derived from the rendered user
// text rather than the section metadata. Returns the sources expected to
// survive, or nullopt when even the protected core exceeds the budget.
std::optional<std::vector<std::string>> truncation_oracle(const PromptBundle& full, const StoryInstrument& instr,
                                                          int budget);

// Sources of the sections present in a bundle's user text, in order.
std::vector<std::string> rendered_sources(const PromptBundle& bundle);

}  // namespace tomb::testing
