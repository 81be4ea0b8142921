#include "agentdel/error.hpp"

namespace agentdel {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::BadSignature: return "BadSignature";
    case Errc::Expired: return "Expired";
    case Errc::NotYetValid: return "NotYetValid";
    case Errc::MalformedEnvelope: return "MalformedEnvelope";
    case Errc::KindMismatch: return "KindMismatch";
    case Errc::KeyMismatch: return "KeyMismatch";
    case Errc::DanglingRef: return "DanglingRef";
    case Errc::ChainCycle: return "ChainCycle";
    case Errc::DepthExceeded: return "DepthExceeded";
    case Errc::EncodingError: return "EncodingError";
    case Errc::ValidationError: return "ValidationError";
    case Errc::BudgetExceeded: return "BudgetExceeded";
    case Errc::RateExceeded: return "RateExceeded";
    case Errc::OutsideTimeWindow: return "OutsideTimeWindow";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::CurrencyMismatch: return "CurrencyMismatch";
    case Errc::EmptyChain: return "EmptyChain";
    case Errc::ParseError: return "ParseError";
    case Errc::UnknownKeyword: return "UnknownKeyword";
    case Errc::DanglingConstraint: return "DanglingConstraint";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::UnresolvedLabels: return "UnresolvedLabels";
    case Errc::InvalidOwnerToken: return "InvalidOwnerToken";
    case Errc::DuplicateLocalId: return "DuplicateLocalId";
    case Errc::AuthnFailed: return "AuthnFailed";
    case Errc::BadClientSecret: return "BadClientSecret";
    case Errc::UnknownReferencedToken: return "UnknownReferencedToken";
    case Errc::CallerUnauthenticated: return "CallerUnauthenticated";
    case Errc::UnknownToken: return "UnknownToken";
    case Errc::NotOwner: return "NotOwner";
    case Errc::UnknownPeer: return "UnknownPeer";
    case Errc::PeerKeyFetchFailed: return "PeerKeyFetchFailed";
    case Errc::Revoked: return "Revoked";
    case Errc::RobotsDisallowed: return "RobotsDisallowed";
    case Errc::ApprovalTimeout: return "ApprovalTimeout";
    case Errc::StorageFailure: return "StorageFailure";
  }
  return "UnknownError";
}

}  // namespace agentdel
