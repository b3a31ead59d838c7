#pragma once

// Itemized parameter counting over shape inventories (nothing is allocated).

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "hmd/decoder.hpp"
#include "hmd/params.hpp"

namespace hmd {

enum class AuditScope { decoder_core, full };

std::string_view to_string(AuditScope scope);
AuditScope parse_audit_scope(std::string_view name);

struct ParamEntry {
  std::string name;
  Shape shape;
  ParamRole role = ParamRole::core;
  std::size_t count = 0;
};

struct ParamAudit {
  std::string model;
  AuditScope scope = AuditScope::decoder_core;
  std::vector<ParamEntry> included;
  std::vector<ParamEntry> excluded;
  std::size_t total = 0;
};

/// Every named parameter of a model with its role.
using ParamInventory = std::vector<ParamEntry>;

template <class S>
ParamInventory inventory_of(const S& specs) {
  ParamInventory out;
  visit_params(specs, [&](const std::string& name, const ParamSpec& s) {
    out.push_back({name, s.shape, s.role, shape_size(s.shape)});
  });
  return out;
}

/// Core scope keeps only ParamRole::core; full keeps everything.
ParamAudit count_params(const ParamInventory& inventory, AuditScope scope, std::string model);

ParamInventory memory_decoder_inventory(const DecoderConfig& config, std::size_t vocab_size, std::size_t feature_width);
ParamInventory lstm_baseline_inventory(const DecoderConfig& config, std::size_t vocab_size, std::size_t feature_width);

/// Human-readable table: one line per included parameter, then the excluded
/// ones, then the total.
std::string format_audit(const ParamAudit& audit);

}  // namespace hmd
