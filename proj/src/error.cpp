#include "tomb/error.hpp"

#include <array>
#include <utility>

namespace tomb {
namespace {

struct CodeEntry {
  ErrorCode code;
  std::string_view name;
};

constexpr std::array kCodes = {
    CodeEntry{ErrorCode::EmptyPremise, "EMPTY_PREMISE"},
    CodeEntry{ErrorCode::EmptyName, "EMPTY_NAME"},
    CodeEntry{ErrorCode::DuplicateName, "DUPLICATE_NAME"},
    CodeEntry{ErrorCode::TraitOutOfRange, "TRAIT_OUT_OF_RANGE"},
    CodeEntry{ErrorCode::DuplicateTraitName, "DUPLICATE_TRAIT_NAME"},
    CodeEntry{ErrorCode::UnknownCharacter, "UNKNOWN_CHARACTER"},
    CodeEntry{ErrorCode::EmptyParticipants, "EMPTY_PARTICIPANTS"},
    CodeEntry{ErrorCode::EmptySituation, "EMPTY_SITUATION"},
    CodeEntry{ErrorCode::UnknownScene, "UNKNOWN_SCENE"},
    CodeEntry{ErrorCode::ParticipantInUse, "PARTICIPANT_IN_USE"},
    CodeEntry{ErrorCode::SchemaVersionTooNew, "SCHEMA_VERSION_TOO_NEW"},
    CodeEntry{ErrorCode::MalformedDocument, "MALFORMED_DOCUMENT"},
    CodeEntry{ErrorCode::InvariantViolation, "INVARIANT_VIOLATION"},
    CodeEntry{ErrorCode::StaleChain, "STALE_CHAIN"},
    CodeEntry{ErrorCode::EmptyNudge, "EMPTY_NUDGE"},
    CodeEntry{ErrorCode::EmptyDraft, "EMPTY_DRAFT"},
    CodeEntry{ErrorCode::EmptyInput, "EMPTY_INPUT"},
    CodeEntry{ErrorCode::UnknownBeat, "UNKNOWN_BEAT"},
    CodeEntry{ErrorCode::UpstreamStale, "UPSTREAM_STALE"},
    CodeEntry{ErrorCode::BudgetUnsatisfiable, "BUDGET_UNSATISFIABLE"},
    CodeEntry{ErrorCode::TemperatureOutOfRange, "TEMPERATURE_OUT_OF_RANGE"},
    CodeEntry{ErrorCode::InvalidParams, "INVALID_PARAMS"},
    CodeEntry{ErrorCode::AuthFailed, "AUTH_FAILED"},
    CodeEntry{ErrorCode::RateLimited, "RATE_LIMITED"},
    CodeEntry{ErrorCode::Timeout, "TIMEOUT"},
    CodeEntry{ErrorCode::MalformedResponse, "MALFORMED_RESPONSE"},
    CodeEntry{ErrorCode::ContentFiltered, "CONTENT_FILTERED"},
    CodeEntry{ErrorCode::ProviderError, "PROVIDER_ERROR"},
    CodeEntry{ErrorCode::ProviderUnavailable, "PROVIDER_UNAVAILABLE"},
    CodeEntry{ErrorCode::ScriptExhausted, "SCRIPT_EXHAUSTED"},
    CodeEntry{ErrorCode::Cancelled, "CANCELLED"},
    CodeEntry{ErrorCode::DraftAlreadyPending, "DRAFT_ALREADY_PENDING"},
    CodeEntry{ErrorCode::NoPendingDraft, "NO_PENDING_DRAFT"},
    CodeEntry{ErrorCode::EmptyGeneration, "EMPTY_GENERATION"},
    CodeEntry{ErrorCode::NothingToRecompute, "NOTHING_TO_RECOMPUTE"},
    CodeEntry{ErrorCode::EmptyScene, "EMPTY_SCENE"},
    CodeEntry{ErrorCode::NoDocument, "NO_DOCUMENT"},
    CodeEntry{ErrorCode::MissingProse, "MISSING_PROSE"},
    CodeEntry{ErrorCode::NotFound, "NOT_FOUND"},
    CodeEntry{ErrorCode::StorageFailure, "STORAGE_FAILURE"},
    CodeEntry{ErrorCode::UnknownRequest, "UNKNOWN_REQUEST"},
    CodeEntry{ErrorCode::BadRequest, "BAD_REQUEST"},
};

}  // namespace

std::string_view code_name(ErrorCode code) {
  for (const auto& entry : kCodes) {
    if (entry.code == code) return entry.name;
  }
  return "UNKNOWN";
}

ErrorCode code_from_name(std::string_view name) {
  for (const auto& entry : kCodes) {
    if (entry.name == name) return entry.code;
  }
  throw std::invalid_argument("unknown error code: " + std::string(name));
}

Error::Error(ErrorCode code, std::string message, nlohmann::json details)
    : std::runtime_error(std::move(message)), code_(code), details_(std::move(details)) {}

}  // namespace tomb
