#pragma once

#include <json.hpp>

#include <stdexcept>
#include <string>
#include <string_view>

namespace tomb {

// Every failure surfaced by the engine, the service and the CLI carries one of
// these codes. The wire name (code_name) is stable and documented in API.md.
enum class ErrorCode {
  // story model
  EmptyPremise,
  EmptyName,
  DuplicateName,
  TraitOutOfRange,
  DuplicateTraitName,
  UnknownCharacter,
  EmptyParticipants,
  EmptySituation,
  UnknownScene,
  ParticipantInUse,
  SchemaVersionTooNew,
  MalformedDocument,
  InvariantViolation,
  // prompts
  StaleChain,
  EmptyNudge,
  EmptyDraft,
  EmptyInput,
  UnknownBeat,
  UpstreamStale,
  BudgetUnsatisfiable,
  TemperatureOutOfRange,
  InvalidParams,
  // provider
  AuthFailed,
  RateLimited,
  Timeout,
  MalformedResponse,
  ContentFiltered,
  ProviderError,
  ProviderUnavailable,
  ScriptExhausted,
  Cancelled,
  // beat engine
  DraftAlreadyPending,
  NoPendingDraft,
  EmptyGeneration,
  NothingToRecompute,
  // prose
  EmptyScene,
  NoDocument,
  MissingProse,
  // service
  NotFound,
  StorageFailure,
  UnknownRequest,
  BadRequest,
};

std::string_view code_name(ErrorCode code);

// Inverse of code_name; throws std::invalid_argument for unknown names.
ErrorCode code_from_name(std::string_view name);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, nlohmann::json details = nullptr);

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return code_name(code_); }
  const nlohmann::json& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  nlohmann::json details_;
};

}  // namespace tomb
