#pragma once

// Trainable caption models behind one interface: the memory decoder and the
// LSTM baseline.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hmd/data.hpp"
#include "hmd/decoder.hpp"
#include "hmd/generation.hpp"
#include "hmd/param_audit.hpp"
#include "hmd/params.hpp"

namespace hmd {

struct ModelShape {
  std::size_t vocab_size = 0;
  std::size_t feature_width = 0;
};

/// Batch loss recorded on a tape. Auxiliary terms are absent for models
/// without intermediate supervision.
struct TapeLoss {
  ad::Var total;
  std::optional<ad::Var> layer1;
  std::optional<ad::Var> layer3;
  ad::Var output;
  /// Parameter leaves in parameters() order.
  std::vector<ad::Var> leaves;
};

class Captioner {
 public:
  virtual ~Captioner() = default;

  virtual const DecoderConfig& config() const = 0;
  virtual const ModelShape& shape() const = 0;
  virtual std::vector<NamedTensor> parameters() = 0;
  virtual std::vector<ConstNamedTensor> parameters() const = 0;
  virtual ParamInventory inventory() const = 0;

  /// Mean over the batch of each item's summed per-step cross entropy,
  /// taken over the item's real (unmasked) tokens.
  virtual TapeLoss loss(ad::Tape& tape, const PaddedBatch& batch) const = 0;

  virtual GenerationResult generate(const Tensor& frames, std::string_view video_id) const = 0;
  virtual std::unique_ptr<Captioner> clone() const = 0;
};

/// Validates the config and initializes parameters from config.seed.
std::unique_ptr<Captioner> make_captioner(const DecoderConfig& config, const ModelShape& shape);

nlohmann::ordered_json config_to_json(const DecoderConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
DecoderConfig config_from_json(const nlohmann::json& j, DecoderConfig base = {});

}  // namespace hmd
