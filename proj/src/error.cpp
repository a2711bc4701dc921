#include "resloss/error.hpp"

namespace resloss {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Domain: return "Domain";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::NoDipFound: return "NoDipFound";
    case ErrorCode::FitDiverged: return "FitDiverged";
    case ErrorCode::InsufficientGrid: return "InsufficientGrid";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::MissingCalibration: return "MissingCalibration";
    case ErrorCode::Parse: return "Parse";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

}  // namespace resloss
