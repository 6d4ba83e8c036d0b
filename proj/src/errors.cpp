#include "scenediff/errors.hpp"

namespace scenediff {

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ContractError*>(&e) ||
      dynamic_cast<const CapacityError*>(&e) || dynamic_cast<const PairingError*>(&e) ||
      dynamic_cast<const DecodeError*>(&e) || dynamic_cast<const DegenerateInputError*>(&e)) {
    return 2;
  }
  if (dynamic_cast<const IoError*>(&e)) return 3;
  if (dynamic_cast<const GenerationError*>(&e) || dynamic_cast<const CalibrationError*>(&e) ||
      dynamic_cast<const GuidanceError*>(&e)) return 4;
  return 1;
}

}  // namespace scenediff
