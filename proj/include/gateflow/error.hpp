#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gateflow {

enum class ErrorCode {
  // channels
  DuplicateSubject,
  RegistrySealed,
  RegistryNotSealed,
  IncompleteGraph,
  ChannelTimeout,
  ChannelPoisoned,
  AlreadyInitialised,
  // components
  UnknownInternalName,
  BadOverride,
  DuplicateComponent,
  InvalidIOMap,
  InvalidState,
  // step language
  SyntaxError,
  UseBeforeAssign,
  DoubleWrite,
  WriteBeforeReadSelfLoop,
  InitReadsInput,
  UnknownCallee,
  DivisionByZero,
  TypeMismatch,
  IntegerOverflow,
  MissingInput,
  ArityMismatch,
  // registry
  DuplicateRegistration,
  InvalidDescriptor,
  InvalidArgument,
  AmbiguousArgument,
  UnusedArgument,
  UnknownExperiment,
  UnknownType,
  // studies
  StudyAborted,
  NoCompleteTrials,
  // store
  RunClosed,
  PrimaryUnavailable,
  StoreIO,
  // export
  NonNumericValue,
  EmptyInput,
  // oracle
  OracleStuck,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library. `details` carries structured
// payload such as unmatched namespaces or blocked-on triples.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::vector<std::string> details = {});

  ErrorCode code() const noexcept { return code_; }
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  std::vector<std::string> details_;
};

}  // namespace gateflow
