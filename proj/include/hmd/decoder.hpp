#pragma once

// Five-layer hierarchical memory decoder.
//
// At step t the decoder fuses the visual mean V with the embedding of the
// previous word (CCMF), then runs five gated memory layers. Each layer l
// keeps a bank of its past inputs and reads it with memory attention:
//
//   A_t^l = attention(x_t^l, bank_l)
//   h_t^l = tanh(x_t^l·Wf + bf) ⊙ σ(A_t^l·Wg + bg)
//
// Layer inputs: x^1 = M_t (fusion result); x^2 = [h^1, φ^1(Z)]·W2 + b2;
// x^3 = h^2; x^4 = h^3; x^5 = h^4 + φ^4(Z), where φ^l is visual attention
// over the projected frames Z queried by h^l. The word distribution is
// softmax((h^5 + φ^4)·Wp + bp); layers 1 and 3 carry auxiliary heads for
// intermediate supervision.
//
// Step 1 has no history. Each layer instead receives a seeded standard-normal
// vector added to its input (H^1 + V for layer 1, H^l + h^{l−1} above), and
// the memory-attention result is replaced by the layer input itself.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hmd/attention.hpp"
#include "hmd/autodiff.hpp"
#include "hmd/fusion.hpp"
#include "hmd/generation.hpp"
#include "hmd/params.hpp"

namespace hmd {

inline constexpr std::size_t kNumLayers = 5;

enum class DecoderKind { memory, lstm };

std::string_view to_string(DecoderKind kind);
DecoderKind parse_decoder_kind(std::string_view name);

/// Raised for configuration that violates a model invariant.
class config_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DecoderConfig {
  std::size_t n = 512;
  std::size_t attention_width = 100;
  std::size_t num_layers = kNumLayers;
  double lambda1 = 0.2;
  double lambda3 = 0.2;
  double lambda5 = 0.6;
  std::size_t max_caption_len = 30;
  std::uint64_t seed = 0;
  AttentionKind attention = AttentionKind::soft;
  DecoderKind decoder = DecoderKind::memory;

  /// Throws config_error. The λ weights must sum to 1 and λ5 must exceed
  /// both λ1 and λ3.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Parameters

template <class T>
struct MemoryLayerT {
  T filter_w;  // n×n
  T filter_b;  // n
  T gate_w;    // n×n
  T gate_b;    // n
  AttentionT<T> memory_attention;

  template <class Self, class F>
  static void visit(Self& self, F&& f, const std::string& prefix) {
    f(prefix + "filter_w", self.filter_w);
    f(prefix + "filter_b", self.filter_b);
    f(prefix + "gate_w", self.gate_w);
    f(prefix + "gate_b", self.gate_b);
    AttentionT<T>::visit(self.memory_attention, f, prefix + "memory_attention.");
  }
};

template <class T>
struct DecoderT {
  T feature_proj;  // W_c, q×n
  T embedding;     // |Vocab|×n
  FusionT<T> fusion;
  std::array<MemoryLayerT<T>, kNumLayers> layers;
  T concat_w;  // 2n×n
  T concat_b;  // n
  AttentionT<T> visual_attention_1;
  AttentionT<T> visual_attention_4;
  T output_w;  // n×|Vocab|
  T output_b;
  T aux1_w;
  T aux1_b;
  T aux3_w;
  T aux3_b;

  template <class Self, class F>
  static void visit(Self& self, F&& f, const std::string& prefix) {
    f(prefix + "feature_proj", self.feature_proj);
    f(prefix + "embedding", self.embedding);
    FusionT<T>::visit(self.fusion, f, prefix + "fusion.");
    for (std::size_t l = 0; l < kNumLayers; ++l) {
      MemoryLayerT<T>::visit(self.layers[l], f, prefix + "layer" + std::to_string(l + 1) + ".");
    }
    f(prefix + "concat_w", self.concat_w);
    f(prefix + "concat_b", self.concat_b);
    AttentionT<T>::visit(self.visual_attention_1, f, prefix + "visual_attention_1.");
    AttentionT<T>::visit(self.visual_attention_4, f, prefix + "visual_attention_4.");
    f(prefix + "output_w", self.output_w);
    f(prefix + "output_b", self.output_b);
    f(prefix + "aux1_w", self.aux1_w);
    f(prefix + "aux1_b", self.aux1_b);
    f(prefix + "aux3_w", self.aux3_w);
    f(prefix + "aux3_b", self.aux3_b);
  }
};

using DecoderParams = DecoderT<Tensor>;
using DecoderVars = DecoderT<ad::Var>;
using MemoryLayerVars = MemoryLayerT<ad::Var>;

DecoderT<ParamSpec> decoder_specs(const DecoderConfig& config, std::size_t vocab_size, std::size_t feature_width);
DecoderParams init_decoder_params(const DecoderConfig& config, std::size_t vocab_size, std::size_t feature_width);

// ---------------------------------------------------------------------------
// Forward building blocks

struct VisualContext {
  ad::Var frames;  // Z, m×n
  ad::Var mean;    // V, n
};

/// Z = X·W_c row-wise, V = mean of the rows of Z.
VisualContext project_and_pool(ad::Var raw_frames, ad::Var feature_proj);

/// Per-layer append-only store of past layer inputs.
class MemoryBank {
 public:
  std::size_t size(std::size_t layer) const { return slots_.at(layer - 1).size(); }
  std::span<const ad::Var> entries(std::size_t layer) const { return slots_.at(layer - 1); }
  void append(std::size_t layer, ad::Var v) { slots_.at(layer - 1).push_back(v); }
  bool empty() const;

 private:
  std::array<std::vector<ad::Var>, kNumLayers> slots_;
};

struct ColdStartState {
  std::array<Tensor, kNumLayers> noise;  // H^1..H^5
};

/// Standard-normal H vectors drawn from a generator keyed by (seed, video id).
ColdStartState make_cold_start(std::uint64_t seed, std::string_view video_id, std::size_t n);

/// tanh(input·Wf + bf) ⊙ σ(attended·Wg + bg).
ad::Var gated_activation(const MemoryLayerVars& layer, ad::Var input, ad::Var attended);

/// Builds layer l's input from the incoming vector: identity for layers
/// 1, 3, 4; the concat projection of [incoming, visual] for layer 2; the sum
/// incoming + visual for layer 5.
ad::Var layer_input(const DecoderVars& params, std::size_t layer, ad::Var incoming, std::optional<ad::Var> visual);

struct LayerStep {
  ad::Var hidden;
  ad::Var input;
  ad::Var memory_weights;  // unset on the cold-start step
};

/// One memory layer at step t ≥ 2 (layer is 1-based). Attends over the
/// layer's bank, applies the gated unit, then appends the layer input.
LayerStep layer_step(const DecoderVars& params, AttentionKind kind, std::size_t layer, ad::Var incoming,
                     std::optional<ad::Var> visual, MemoryBank& bank);

struct StepTrace {
  std::array<ad::Var, kNumLayers> hidden;
  std::array<ad::Var, kNumLayers> memory_weights;  // unset at step 1
  ad::Var visual_weights_1;
  ad::Var visual_weights_4;
  ad::Var phi1;
  ad::Var phi4;
  ad::Var logits1;
  ad::Var logits3;
  ad::Var logits5;
};

/// Step 1: seeds every bank with the layer's step-1 input. `bank` must be empty.
StepTrace cold_start_step(const DecoderVars& params, AttentionKind kind, const VisualContext& visual,
                          const ColdStartState& state, MemoryBank& bank);

/// Step t ≥ 2 with lexical feature C_t.
StepTrace decoder_step(const DecoderVars& params, AttentionKind kind, const VisualContext& visual,
                       ad::Var lexical, MemoryBank& bank);

/// (h5 + φ4)·Wp + bp.
ad::Var output_logits(ad::Var h5, ad::Var phi4, ad::Var weight, ad::Var bias);
/// softmax((h5 + φ4)·Wp + bp).
ad::Var predict_word(ad::Var h5, ad::Var phi4, ad::Var weight, ad::Var bias);

/// Drives the decoder one step at a time over a fixed tape.
class MemoryDecoderRun {
 public:
  MemoryDecoderRun(const DecoderVars& params, AttentionKind kind, VisualContext visual, ColdStartState cold);

  /// The first call must pass no token (cold start); later calls pass the
  /// previous word.
  const StepTrace& step(std::optional<std::size_t> previous_token);

  std::size_t steps_taken() const { return trace_.size(); }
  const MemoryBank& bank() const { return bank_; }
  const std::vector<StepTrace>& trace() const { return trace_; }

 private:
  DecoderVars params_;
  AttentionKind kind_;
  VisualContext visual_;
  ColdStartState cold_;
  MemoryBank bank_;
  std::vector<StepTrace> trace_;
};

struct ForwardResult {
  std::vector<StepTrace> steps;
  MemoryBank bank;
};

/// Teacher-forced pass over a caption [BOS, y1, …, yT]; T = tokens.size() − 1
/// steps, step t conditioned on tokens[t − 1].
ForwardResult decoder_forward(const DecoderVars& params, AttentionKind kind, const VisualContext& visual,
                              const ColdStartState& cold, std::span<const std::size_t> tokens);

// ---------------------------------------------------------------------------
// Loss

struct SequenceLogits {
  std::vector<ad::Var> layer1;
  std::vector<ad::Var> layer3;
  std::vector<ad::Var> layer5;
  std::vector<std::size_t> targets;
};

struct LossWeights {
  double lambda1 = 0.2;
  double lambda3 = 0.2;
  double lambda5 = 0.6;
};

struct LossTerms {
  ad::Var total;
  ad::Var layer1;
  ad::Var layer3;
  ad::Var layer5;
};

/// Σ_t cross_entropy(softmax(logits_t), target_t).
ad::Var sequence_cross_entropy(std::span<const ad::Var> logits, std::span<const std::size_t> targets);

/// L^j is the batch mean of each item's summed per-step cross entropy from
/// head j; total = λ1·L^1 + λ3·L^3 + λ5·L^5.
LossTerms multilayer_loss(std::span<const SequenceLogits> items, const LossWeights& weights);

SequenceLogits collect_logits(const ForwardResult& forward, std::span<const std::size_t> tokens);

// ---------------------------------------------------------------------------
// Inference

/// Greedy decoding: argmax of the output head at each step (ties to the lowest
/// index) until EOS or max_caption_len tokens.
GenerationResult greedy_decode(const DecoderParams& params, const DecoderConfig& config, const Tensor& raw_frames,
                               std::string_view video_id);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> values);

}  // namespace hmd
