#include "hmd/param_audit.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "hmd/lstm_baseline.hpp"

namespace hmd {

const char* to_string(ParamRole role) {
  switch (role) {
    case ParamRole::core:
      return "core";
    case ParamRole::embedding:
      return "embedding";
    case ParamRole::output_head:
      return "output_head";
    case ParamRole::aux_head:
      return "aux_head";
    case ParamRole::feature_projection:
      return "feature_projection";
  }
  return "?";
}

std::string_view to_string(AuditScope scope) { return scope == AuditScope::decoder_core ? "decoder-core" : "full"; }

AuditScope parse_audit_scope(std::string_view name) {
  if (name == "decoder-core" || name == "core") return AuditScope::decoder_core;
  if (name == "full") return AuditScope::full;
  throw std::invalid_argument("unknown audit scope '" + std::string(name) + "' (expected decoder-core or full)");
}

ParamAudit count_params(const ParamInventory& inventory, AuditScope scope, std::string model) {
  ParamAudit audit;
  audit.model = std::move(model);
  audit.scope = scope;
  for (const auto& e : inventory) {
    if (scope == AuditScope::full || e.role == ParamRole::core) {
      audit.included.push_back(e);
      audit.total += e.count;
    } else {
      audit.excluded.push_back(e);
    }
  }
  return audit;
}

ParamInventory memory_decoder_inventory(const DecoderConfig& config, std::size_t vocab_size,
                                        std::size_t feature_width) {
  return inventory_of(decoder_specs(config, vocab_size, feature_width));
}

ParamInventory lstm_baseline_inventory(const DecoderConfig& config, std::size_t vocab_size,
                                       std::size_t feature_width) {
  return inventory_of(lstm_specs(config, vocab_size, feature_width));
}

std::string format_audit(const ParamAudit& audit) {
  std::ostringstream os;
  os << audit.model << " (" << to_string(audit.scope) << ")\n";
  const auto line = [&](const ParamEntry& e) {
    os << "  " << std::left << std::setw(40) << e.name << std::setw(14) << shape_to_string(e.shape) << std::setw(20)
       << to_string(e.role) << std::right << std::setw(12) << e.count << "\n";
  };
  for (const auto& e : audit.included) line(e);
  if (!audit.excluded.empty()) {
    os << "  excluded from this scope:\n";
    for (const auto& e : audit.excluded) line(e);
  }
  os << "  total " << audit.total << "\n";
  return os.str();
}

}  // namespace hmd
