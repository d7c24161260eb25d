#pragma once

#include <string>

namespace diva {

/// Real-valued outcomes (volatility) are fit with squared error, binary
/// outcomes (movement) with cross-entropy.
enum class OutcomeKind { real, binary };

OutcomeKind parse_outcome_kind(const std::string& name);  // vol|volatility|real, mov|movement|binary
std::string to_string(OutcomeKind kind);                  // "vol" or "mov"

}  // namespace diva
