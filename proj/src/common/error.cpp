#include "orca/common/error.h"

namespace orca {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::ScriptExhausted: return "ScriptExhausted";
    case ErrorCode::MockUnmatched: return "MockUnmatched";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::Precondition: return "Precondition";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ConnectionFailed: return "ConnectionFailed";
    case ErrorCode::DatabaseError: return "DatabaseError";
    case ErrorCode::EmptyDatabase: return "EmptyDatabase";
    case ErrorCode::StateDirUnwritable: return "StateDirUnwritable";
    case ErrorCode::UnknownDatabaseId: return "UnknownDatabaseId";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::NoPendingClarification: return "NoPendingClarification";
    case ErrorCode::UnknownTable: return "UnknownTable";
    case ErrorCode::EmbeddingsMissing: return "EmbeddingsMissing";
    case ErrorCode::NoTablesSelected: return "NoTablesSelected";
    case ErrorCode::GenerationParseFailure: return "GenerationParseFailure";
    case ErrorCode::ForbiddenStatement: return "ForbiddenStatement";
    case ErrorCode::AttemptsExhausted: return "AttemptsExhausted";
    case ErrorCode::GraphParse: return "GraphParse";
    case ErrorCode::CyclicGraph: return "CyclicGraph";
    case ErrorCode::DuplicateNode: return "DuplicateNode";
    case ErrorCode::DanglingEdge: return "DanglingEdge";
    case ErrorCode::UnknownVariable: return "UnknownVariable";
    case ErrorCode::NotIdentifiable: return "NotIdentifiable";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::InsufficientRows: return "InsufficientRows";
    case ErrorCode::NonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorCode::Nonconvergence: return "Nonconvergence";
    case ErrorCode::EmptyArm: return "EmptyArm";
    case ErrorCode::RetrievalFailed: return "RetrievalFailed";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::TreatmentNotBinaryOrNumeric: return "TreatmentNotBinaryOrNumeric";
    case ErrorCode::HighCardinalityCovariate: return "HighCardinalityCovariate";
    case ErrorCode::UnboundVariable: return "UnboundVariable";
    case ErrorCode::TreatmentNotInDgp: return "TreatmentNotInDgp";
    case ErrorCode::TargetNotEmpty: return "TargetNotEmpty";
    case ErrorCode::EmptyExampleSet: return "EmptyExampleSet";
    case ErrorCode::GoldSqlFails: return "GoldSqlFails";
    case ErrorCode::JudgeUnavailable: return "JudgeUnavailable";
    case ErrorCode::FixtureMissing: return "FixtureMissing";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::SessionBusy: return "SessionBusy";
    case ErrorCode::NothingToRefine: return "NothingToRefine";
    case ErrorCode::UnknownArtifact: return "UnknownArtifact";
  }
  return "Unknown";
}

}  // namespace orca
