#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmd/data.hpp"
#include "hmd/model.hpp"
#include "hmd/params.hpp"

namespace hmd {

/// Raised when training cannot continue, e.g. on a non-finite gradient.
class training_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

/// Zero moments shaped like `params`.
AdamState make_adam_state(std::span<const ConstNamedTensor> params, const AdamHyper& hyper);

/// Bias-corrected Adam update, in place. Throws training_error naming the
/// parameter when a gradient is not finite.
void adam_step(std::span<const NamedTensor> params, std::span<const std::vector<double>> grads, AdamState& state);

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(std::span<std::vector<double>> grads, double max_norm);

struct TrainOptions {
  AdamHyper adam;
  std::size_t batch_size = 16;
  std::size_t epochs = 300;
  double clip_norm = 5.0;
  std::size_t patience = 10;
  /// Stop once the epoch's mean training loss falls below this value.
  std::optional<double> target_loss;
  std::uint64_t seed = 0;
};

struct LossBreakdown {
  double total = 0.0;
  std::optional<double> layer1;
  std::optional<double> layer3;
  double output = 0.0;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown train;
  std::optional<double> validation;
  /// Largest pre-clip global gradient norm seen in the epoch.
  double max_grad_norm = 0.0;
};

/// Loss, gradients and their parameter names for one batch.
struct BatchGradients {
  LossBreakdown loss;
  std::vector<std::string> names;
  std::vector<std::vector<double>> grads;
};

BatchGradients compute_gradients(const Captioner& model, const PaddedBatch& batch);

/// One optimizer step on one batch; returns the pre-step loss.
LossBreakdown train_step(Captioner& model, const PaddedBatch& batch, AdamState& state, double clip_norm,
                         double* grad_norm = nullptr);

/// One pass over `items` in the seeded order for `epoch`. Reported losses are
/// the item-weighted mean over batches.
EpochStats train_epoch(Captioner& model, const std::vector<TrainItem>& items, AdamState& state,
                       const TrainOptions& options, std::size_t epoch);

/// Item-weighted mean loss over `items` with no parameter update.
LossBreakdown evaluate_loss(const Captioner& model, const std::vector<TrainItem>& items, std::size_t batch_size);

enum class StopReason { epochs_exhausted, target_reached, early_stopped };

std::string_view to_string(StopReason reason);

struct TrainProgress {
  std::size_t epoch = 0;  // epochs completed
  double best_validation = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_best = 0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  StopReason reason = StopReason::epochs_exhausted;
  TrainProgress progress;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Runs epochs progress.epoch+1 … options.epochs. Early stopping on the
/// validation total applies only when `validation` is nonempty.
TrainResult train(Captioner& model, const std::vector<TrainItem>& items, const std::vector<TrainItem>& validation,
                  AdamState& state, const TrainOptions& options, TrainProgress progress = {},
                  const EpochCallback& on_epoch = {});

/// One JSON line per epoch, fixed key order.
std::string epoch_log_line(const EpochStats& stats);

}  // namespace hmd
