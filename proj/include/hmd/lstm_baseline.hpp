#pragma once

// One-layer LSTM caption decoder with soft temporal attention over the raw
// frame descriptors, used as the comparison baseline.
//
// Step t: ctx = attention(h_{t−1}, X); x = [embed(y_{t−1}), ctx]
//   [i f g o] = x·Wx + h_{t−1}·Wh + b
//   c_t = σ(f)⊙c_{t−1} + σ(i)⊙tanh(g),  h_t = σ(o)⊙tanh(c_t)
//   logits = h_t·Wout + bout
// The initial state is tanh(mean(X)·W + b) for h and c separately.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hmd/attention.hpp"
#include "hmd/autodiff.hpp"
#include "hmd/decoder.hpp"
#include "hmd/generation.hpp"
#include "hmd/params.hpp"

namespace hmd {

template <class T>
struct LstmT {
  T embedding;  // |Vocab|×n
  AttentionT<T> visual_attention;  // query width n, slot width q
  T input_w;   // (n+q)×4n, gate order i, f, g, o
  T hidden_w;  // n×4n
  T gate_b;    // 4n
  T init_h_w;  // q×n
  T init_h_b;
  T init_c_w;
  T init_c_b;
  T output_w;  // n×|Vocab|
  T output_b;

  template <class Self, class F>
  static void visit(Self& self, F&& f, const std::string& prefix) {
    f(prefix + "embedding", self.embedding);
    AttentionT<T>::visit(self.visual_attention, f, prefix + "visual_attention.");
    f(prefix + "input_w", self.input_w);
    f(prefix + "hidden_w", self.hidden_w);
    f(prefix + "gate_b", self.gate_b);
    f(prefix + "init_h_w", self.init_h_w);
    f(prefix + "init_h_b", self.init_h_b);
    f(prefix + "init_c_w", self.init_c_w);
    f(prefix + "init_c_b", self.init_c_b);
    f(prefix + "output_w", self.output_w);
    f(prefix + "output_b", self.output_b);
  }
};

using LstmParams = LstmT<Tensor>;
using LstmVars = LstmT<ad::Var>;

LstmT<ParamSpec> lstm_specs(const DecoderConfig& config, std::size_t vocab_size, std::size_t feature_width);
LstmParams init_lstm_params(const DecoderConfig& config, std::size_t vocab_size, std::size_t feature_width);

struct LstmState {
  ad::Var hidden;
  ad::Var cell;
};

/// One cell update with fused gate maps: input_w is (e+c)×4n, hidden_w n×4n.
LstmState lstm_baseline_step(const LstmState& previous, ad::Var word_embedding, ad::Var visual_context,
                             ad::Var input_w, ad::Var hidden_w, ad::Var gate_b);

LstmState lstm_initial_state(const LstmVars& params, ad::Var raw_frames);

struct LstmForward {
  std::vector<ad::Var> logits;          // one per step
  std::vector<ad::Var> visual_weights;  // one per step
  std::vector<LstmState> states;
};

/// Teacher-forced pass over [BOS, y1, …, yT]; step t consumes tokens[t − 1].
LstmForward lstm_forward(const LstmVars& params, ad::Var raw_frames, std::span<const std::size_t> tokens);

GenerationResult lstm_greedy_decode(const LstmParams& params, const DecoderConfig& config, const Tensor& raw_frames,
                                    std::string_view video_id);

}  // namespace hmd
