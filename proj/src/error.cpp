#include "gateflow/error.hpp"

namespace gateflow {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateSubject: return "DuplicateSubject";
    case ErrorCode::RegistrySealed: return "RegistrySealed";
    case ErrorCode::RegistryNotSealed: return "RegistryNotSealed";
    case ErrorCode::IncompleteGraph: return "IncompleteGraph";
    case ErrorCode::ChannelTimeout: return "ChannelTimeout";
    case ErrorCode::ChannelPoisoned: return "ChannelPoisoned";
    case ErrorCode::AlreadyInitialised: return "AlreadyInitialised";
    case ErrorCode::UnknownInternalName: return "UnknownInternalName";
    case ErrorCode::BadOverride: return "BadOverride";
    case ErrorCode::DuplicateComponent: return "DuplicateComponent";
    case ErrorCode::InvalidIOMap: return "InvalidIOMap";
    case ErrorCode::InvalidState: return "InvalidState";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UseBeforeAssign: return "UseBeforeAssign";
    case ErrorCode::DoubleWrite: return "DoubleWrite";
    case ErrorCode::WriteBeforeReadSelfLoop: return "WriteBeforeReadSelfLoop";
    case ErrorCode::InitReadsInput: return "InitReadsInput";
    case ErrorCode::UnknownCallee: return "UnknownCallee";
    case ErrorCode::DivisionByZero: return "DivisionByZero";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::IntegerOverflow: return "IntegerOverflow";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::DuplicateRegistration: return "DuplicateRegistration";
    case ErrorCode::InvalidDescriptor: return "InvalidDescriptor";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::AmbiguousArgument: return "AmbiguousArgument";
    case ErrorCode::UnusedArgument: return "UnusedArgument";
    case ErrorCode::UnknownExperiment: return "UnknownExperiment";
    case ErrorCode::UnknownType: return "UnknownType";
    case ErrorCode::StudyAborted: return "StudyAborted";
    case ErrorCode::NoCompleteTrials: return "NoCompleteTrials";
    case ErrorCode::RunClosed: return "RunClosed";
    case ErrorCode::PrimaryUnavailable: return "PrimaryUnavailable";
    case ErrorCode::StoreIO: return "StoreIO";
    case ErrorCode::NonNumericValue: return "NonNumericValue";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::OracleStuck: return "OracleStuck";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::vector<std::string> details)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      details_(std::move(details)) {}

}  // namespace gateflow
