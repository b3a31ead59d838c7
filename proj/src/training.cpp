#include "hmd/training.hpp"

#include <cmath>

#include "json.hpp"

namespace hmd {

AdamState make_adam_state(std::span<const ConstNamedTensor> params, const AdamHyper& hyper) {
  AdamState s;
  s.hyper = hyper;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.tensor->shape(), 0.0);
    s.second_moment.emplace_back(p.tensor->shape(), 0.0);
  }
  return s;
}

namespace {

void check_finite(std::span<const std::string> names, std::span<const std::vector<double>> grads) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (double g : grads[i]) {
      if (!std::isfinite(g)) {
        throw training_error("non-finite gradient in parameter " + (i < names.size() ? names[i] : std::to_string(i)) +
                             "; aborting");
      }
    }
  }
}

}  // namespace

void adam_step(std::span<const NamedTensor> params, std::span<const std::vector<double>> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].tensor->size() || state.first_moment[i].size() != params[i].tensor->size()) {
      throw std::invalid_argument("adam_step: shape mismatch for " + params[i].name);
    }
    for (double g : grads[i]) {
      if (!std::isfinite(g)) throw training_error("non-finite gradient in parameter " + params[i].name + "; aborting");
    }
  }
  const auto& h = state.hyper;
  ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor->values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    const auto& g = grads[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
      w[k] -= h.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + h.epsilon);
    }
  }
}

double clip_global_norm(std::span<std::vector<double>> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& g : grads) {
      for (double& x : g) x *= factor;
    }
  }
  return norm;
}

BatchGradients compute_gradients(const Captioner& model, const PaddedBatch& batch) {
  ad::Tape tape;
  const TapeLoss l = model.loss(tape, batch);
  tape.backward(l.total);
  BatchGradients out;
  out.loss.total = l.total.item();
  out.loss.output = l.output.item();
  if (l.layer1) out.loss.layer1 = l.layer1->item();
  if (l.layer3) out.loss.layer3 = l.layer3->item();
  const auto params = model.parameters();
  for (std::size_t i = 0; i < l.leaves.size(); ++i) {
    out.names.push_back(params[i].name);
    const auto g = tape.grad(l.leaves[i]);
    out.grads.emplace_back(g.begin(), g.end());
  }
  return out;
}

LossBreakdown train_step(Captioner& model, const PaddedBatch& batch, AdamState& state, double clip_norm,
                         double* grad_norm) {
  BatchGradients bg = compute_gradients(model, batch);
  check_finite(bg.names, bg.grads);
  const double norm = clip_global_norm(bg.grads, clip_norm);
  if (grad_norm) *grad_norm = norm;
  adam_step(model.parameters(), bg.grads, state);
  return bg.loss;
}

namespace {

struct Accumulator {
  double total = 0, layer1 = 0, layer3 = 0, output = 0;
  bool has1 = false, has3 = false;
  std::size_t items = 0;

  void add(const LossBreakdown& l, std::size_t count) {
    const double w = static_cast<double>(count);
    total += w * l.total;
    output += w * l.output;
    if (l.layer1) layer1 += w * *l.layer1, has1 = true;
    if (l.layer3) layer3 += w * *l.layer3, has3 = true;
    items += count;
  }
  LossBreakdown mean() const {
    const double d = static_cast<double>(items);
    LossBreakdown out{total / d, std::nullopt, std::nullopt, output / d};
    if (has1) out.layer1 = layer1 / d;
    if (has3) out.layer3 = layer3 / d;
    return out;
  }
};

}  // namespace

EpochStats train_epoch(Captioner& model, const std::vector<TrainItem>& items, AdamState& state,
                       const TrainOptions& options, std::size_t epoch) {
  if (items.empty()) throw std::invalid_argument("train_epoch: empty training stream");
  EpochStats stats;
  stats.epoch = epoch;
  Accumulator acc;
  for (const auto& indices : batch_order(items.size(), options.batch_size, options.seed, epoch)) {
    const PaddedBatch batch = make_batch(items, indices);
    double norm = 0.0;
    acc.add(train_step(model, batch, state, options.clip_norm, &norm), batch.size());
    stats.max_grad_norm = std::max(stats.max_grad_norm, norm);
  }
  stats.train = acc.mean();
  return stats;
}

LossBreakdown evaluate_loss(const Captioner& model, const std::vector<TrainItem>& items, std::size_t batch_size) {
  if (items.empty()) throw std::invalid_argument("evaluate_loss: no items");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  Accumulator acc;
  for (std::size_t start = 0; start < items.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(items.size(), start + batch_size); ++i) idx.push_back(i);
    const PaddedBatch batch = make_batch(items, idx);
    ad::Tape tape;
    const TapeLoss l = model.loss(tape, batch);
    LossBreakdown b{l.total.item(), std::nullopt, std::nullopt, l.output.item()};
    if (l.layer1) b.layer1 = l.layer1->item();
    if (l.layer3) b.layer3 = l.layer3->item();
    acc.add(b, batch.size());
  }
  return acc.mean();
}

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::epochs_exhausted:
      return "epochs_exhausted";
    case StopReason::target_reached:
      return "target_reached";
    case StopReason::early_stopped:
      return "early_stopped";
  }
  return "?";
}

TrainResult train(Captioner& model, const std::vector<TrainItem>& items, const std::vector<TrainItem>& validation,
                  AdamState& state, const TrainOptions& options, TrainProgress progress,
                  const EpochCallback& on_epoch) {
  TrainResult result;
  for (std::size_t epoch = progress.epoch + 1; epoch <= options.epochs; ++epoch) {
    EpochStats stats = train_epoch(model, items, state, options, epoch);
    progress.epoch = epoch;
    bool stop_early = false;
    if (!validation.empty()) {
      stats.validation = evaluate_loss(model, validation, options.batch_size).total;
      if (*stats.validation < progress.best_validation) {
        progress.best_validation = *stats.validation;
        progress.epochs_since_best = 0;
      } else if (++progress.epochs_since_best >= options.patience) {
        stop_early = true;
      }
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (options.target_loss && stats.train.total < *options.target_loss) {
      result.reason = StopReason::target_reached;
      break;
    }
    if (stop_early) {
      result.reason = StopReason::early_stopped;
      break;
    }
  }
  result.progress = progress;
  return result;
}

std::string epoch_log_line(const EpochStats& s) {
  nlohmann::ordered_json j;
  j["epoch"] = s.epoch;
  j["loss"] = s.train.total;
  j["layer1"] = s.train.layer1 ? nlohmann::ordered_json(*s.train.layer1) : nlohmann::ordered_json(nullptr);
  j["layer3"] = s.train.layer3 ? nlohmann::ordered_json(*s.train.layer3) : nlohmann::ordered_json(nullptr);
  j["layer5"] = s.train.output;
  j["val_loss"] = s.validation ? nlohmann::ordered_json(*s.validation) : nlohmann::ordered_json(nullptr);
  j["grad_norm"] = s.max_grad_norm;
  return j.dump();
}

}  // namespace hmd
