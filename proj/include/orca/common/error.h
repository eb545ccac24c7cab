#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace orca {

enum class ErrorCode {
  // llm
  ProviderUnavailable,
  ScriptExhausted,
  MockUnmatched,
  ParseFailure,
  // generic
  Precondition,
  IoError,
  InvalidConfig,
  // database / catalog
  ConnectionFailed,
  DatabaseError,
  EmptyDatabase,
  StateDirUnwritable,
  UnknownDatabaseId,
  // router
  EmptyQuery,
  NoPendingClarification,
  // explorer / recommender
  UnknownTable,
  EmbeddingsMissing,
  NoTablesSelected,
  // text2sql
  GenerationParseFailure,
  ForbiddenStatement,
  AttemptsExhausted,
  // causal engine
  GraphParse,
  CyclicGraph,
  DuplicateNode,
  DanglingEdge,
  UnknownVariable,
  NotIdentifiable,
  SingularDesign,
  InsufficientRows,
  NonBinaryTreatment,
  Nonconvergence,
  EmptyArm,
  // causal analyzer
  RetrievalFailed,
  EmptyDataset,
  TreatmentNotBinaryOrNumeric,
  HighCardinalityCovariate,
  UnboundVariable,
  // reef
  TreatmentNotInDgp,
  TargetNotEmpty,
  // eval
  EmptyExampleSet,
  GoldSqlFails,
  JudgeUnavailable,
  FixtureMissing,
  // service
  UnknownSession,
  SessionBusy,
  NothingToRefine,
  UnknownArtifact,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::Precondition, message);
}

}  // namespace orca
