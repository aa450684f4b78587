#pragma once

#include <stdexcept>
#include <string>

namespace dopf {

enum class Err {
  ParseError,
  DuplicateBusId,
  NonTreeTopology,
  PhaseMismatch,
  MissingSlack,
  NonPositiveResistance,
  ConflictingRoles,
  UnknownBus,
  NonUniformTimestep,
  NegativeLoad,
  InvalidFraction,
  BadFractions,
  DimensionMismatch,
  InfeasibleCapacity,
  MissingPhaseData,
  EmptyInput,
  TooManyCombinations,
  MissingBaseVariable,
  SplitMismatch,
  MissingStageInput,
  ConfigValidation,
  NoConvergence,
  NonRadial,
};

inline const char* err_name(Err e) {
  switch (e) {
    case Err::ParseError: return "ParseError";
    case Err::DuplicateBusId: return "DuplicateBusId";
    case Err::NonTreeTopology: return "NonTreeTopology";
    case Err::PhaseMismatch: return "PhaseMismatch";
    case Err::MissingSlack: return "MissingSlack";
    case Err::NonPositiveResistance: return "NonPositiveResistance";
    case Err::ConflictingRoles: return "ConflictingRoles";
    case Err::UnknownBus: return "UnknownBus";
    case Err::NonUniformTimestep: return "NonUniformTimestep";
    case Err::NegativeLoad: return "NegativeLoad";
    case Err::InvalidFraction: return "InvalidFraction";
    case Err::BadFractions: return "BadFractions";
    case Err::DimensionMismatch: return "DimensionMismatch";
    case Err::InfeasibleCapacity: return "InfeasibleCapacity";
    case Err::MissingPhaseData: return "MissingPhaseData";
    case Err::EmptyInput: return "EmptyInput";
    case Err::TooManyCombinations: return "TooManyCombinations";
    case Err::MissingBaseVariable: return "MissingBaseVariable";
    case Err::SplitMismatch: return "SplitMismatch";
    case Err::MissingStageInput: return "MissingStageInput";
    case Err::ConfigValidation: return "ConfigValidation";
    case Err::NoConvergence: return "NoConvergence";
    case Err::NonRadial: return "NonRadial";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& msg)
      : std::runtime_error(std::string(err_name(code)) + ": " + msg), code_(code) {}
  Err code() const { return code_; }
  const char* code_name() const { return err_name(code_); }

 private:
  Err code_;
};

}  // namespace dopf
