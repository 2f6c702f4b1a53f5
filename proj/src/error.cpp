#include "can/error.hpp"

namespace can {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::IndexOutOfVocabulary: return "IndexOutOfVocabulary";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::DanglingFeedback: return "DanglingFeedback";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidFeedback: return "InvalidFeedback";
    case ErrorCode::EmptyQuestion: return "EmptyQuestion";
    case ErrorCode::EmptySentence: return "EmptySentence";
    case ErrorCode::EmptyStory: return "EmptyStory";
    case ErrorCode::EmptyFeedback: return "EmptyFeedback";
    case ErrorCode::FeedbackRefused: return "FeedbackRefused";
    case ErrorCode::NoEosEmitted: return "NoEosEmitted";
    case ErrorCode::NoEosToken: return "NoEosToken";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::NoValidReferent: return "NoValidReferent";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::WrongStage: return "WrongStage";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace can
