#include "diva/types.hpp"

#include "diva/error.hpp"

namespace diva {

OutcomeKind parse_outcome_kind(const std::string& name) {
  if (name == "vol" || name == "volatility" || name == "real") return OutcomeKind::real;
  if (name == "mov" || name == "movement" || name == "binary") return OutcomeKind::binary;
  throw ConfigError("unknown outcome kind '" + name + "' (expected vol or mov)");
}

std::string to_string(OutcomeKind kind) { return kind == OutcomeKind::real ? "vol" : "mov"; }

}  // namespace diva
