#include "hmd/lstm_baseline.hpp"

#include <stdexcept>
#include <string>

#include "hmd/hashing.hpp"
#include "hmd/tokens.hpp"

namespace hmd {

LstmT<ParamSpec> lstm_specs(const DecoderConfig& config, std::size_t vocab_size, std::size_t feature_width) {
  const std::size_t n = config.n;
  const std::size_t q = feature_width;
  const std::size_t da = config.attention_width;
  const auto s = attention_shapes(da, n, q);

  LstmT<ParamSpec> p;
  p.embedding = {{vocab_size, n}, n, ParamRole::embedding};
  p.visual_attention.score = {s.score, da, ParamRole::core};
  p.visual_attention.query_map = {s.query_map, n, ParamRole::core};
  p.visual_attention.slot_map = {s.slot_map, q, ParamRole::core};
  p.visual_attention.bias = {s.bias, q, ParamRole::core};
  p.input_w = {{n + q, 4 * n}, n + q, ParamRole::core};
  p.hidden_w = {{n, 4 * n}, n, ParamRole::core};
  p.gate_b = {{4 * n}, n, ParamRole::core};
  p.init_h_w = {{q, n}, q, ParamRole::core};
  p.init_h_b = {{n}, q, ParamRole::core};
  p.init_c_w = {{q, n}, q, ParamRole::core};
  p.init_c_b = {{n}, q, ParamRole::core};
  p.output_w = {{n, vocab_size}, n, ParamRole::output_head};
  p.output_b = {{vocab_size}, n, ParamRole::output_head};
  return p;
}

LstmParams init_lstm_params(const DecoderConfig& config, std::size_t vocab_size, std::size_t feature_width) {
  return materialize<LstmT>(lstm_specs(config, vocab_size, feature_width), derive_seed(config.seed, 2));
}

LstmState lstm_baseline_step(const LstmState& previous, ad::Var word_embedding, ad::Var visual_context,
                             ad::Var input_w, ad::Var hidden_w, ad::Var gate_b) {
  const std::size_t n = previous.hidden.size();
  if (gate_b.size() != 4 * n) throw std::invalid_argument("lstm_baseline_step: gate bias must have 4n entries");
  const ad::Var x = ad::concat(word_embedding, visual_context);
  const ad::Var z = ad::add(ad::channel_projection(x, input_w, gate_b), ad::channel_projection(previous.hidden, hidden_w));
  const ad::Var i = ad::sigmoid(ad::slice(z, 0, n));
  const ad::Var f = ad::sigmoid(ad::slice(z, n, n));
  const ad::Var g = ad::tanh(ad::slice(z, 2 * n, n));
  const ad::Var o = ad::sigmoid(ad::slice(z, 3 * n, n));
  const ad::Var c = ad::add(ad::mul(f, previous.cell), ad::mul(i, g));
  return {ad::mul(o, ad::tanh(c)), c};
}

LstmState lstm_initial_state(const LstmVars& params, ad::Var raw_frames) {
  const ad::Var mean = ad::mean_rows(raw_frames);
  return {ad::tanh(ad::channel_projection(mean, params.init_h_w, params.init_h_b)),
          ad::tanh(ad::channel_projection(mean, params.init_c_w, params.init_c_b))};
}

namespace {

struct StepOut {
  LstmState state;
  ad::Var logits;
  ad::Var weights;
};

StepOut advance(const LstmVars& p, ad::Var frames, const LstmState& prev, std::size_t token) {
  const AttentionResult ctx = soft_attention(prev.hidden, frames, p.visual_attention);
  const LstmState next = lstm_baseline_step(prev, ad::row(p.embedding, token), ctx.pooled, p.input_w, p.hidden_w,
                                            p.gate_b);
  return {next, ad::channel_projection(next.hidden, p.output_w, p.output_b), ctx.weights};
}

}  // namespace

LstmForward lstm_forward(const LstmVars& params, ad::Var raw_frames, std::span<const std::size_t> tokens) {
  if (tokens.size() < 2) throw std::invalid_argument("lstm_forward: caption needs at least BOS and one target");
  const std::size_t vocab = params.embedding.shape()[0];
  for (auto t : tokens) {
    if (t >= vocab) throw std::out_of_range("lstm_forward: token " + std::to_string(t) + " outside vocabulary");
  }
  LstmForward out;
  LstmState state = lstm_initial_state(params, raw_frames);
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    StepOut s = advance(params, raw_frames, state, tokens[t - 1]);
    state = s.state;
    out.logits.push_back(s.logits);
    out.visual_weights.push_back(s.weights);
    out.states.push_back(s.state);
  }
  return out;
}

GenerationResult lstm_greedy_decode(const LstmParams& params, const DecoderConfig& config, const Tensor& raw_frames,
                                    std::string_view video_id) {
  ad::Tape tape;
  const LstmVars vars = bind<LstmT>(tape, params, false, nullptr);
  const ad::Var frames = tape.constant(raw_frames);
  GenerationResult result;
  result.video_id = std::string(video_id);
  result.attention.push_back({"visual", {}});

  LstmState state = lstm_initial_state(vars, frames);
  std::size_t previous = kBos;
  for (std::size_t t = 0; t < config.max_caption_len; ++t) {
    StepOut s = advance(vars, frames, state, previous);
    state = s.state;
    const auto& w = s.weights.value().data();
    result.attention[0].steps.emplace_back(w.begin(), w.end());
    const std::size_t token = argmax(s.logits.value().values());
    if (token == kEos) break;
    result.tokens.push_back(token);
    previous = token;
  }
  return result;
}

}  // namespace hmd
