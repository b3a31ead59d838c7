#include "hmd/decoder.hpp"

#include <cmath>
#include <random>
#include <string>

#include "hmd/hashing.hpp"
#include "hmd/tokens.hpp"

namespace hmd {

std::string_view to_string(DecoderKind kind) { return kind == DecoderKind::memory ? "memory" : "lstm"; }

DecoderKind parse_decoder_kind(std::string_view name) {
  if (name == "memory") return DecoderKind::memory;
  if (name == "lstm") return DecoderKind::lstm;
  throw std::invalid_argument("unknown decoder kind '" + std::string(name) + "' (expected memory or lstm)");
}

void DecoderConfig::validate() const {
  if (n == 0) throw config_error("n must be positive");
  if (attention_width == 0) throw config_error("attention width d_a must be positive");
  if (num_layers != kNumLayers) {
    throw config_error("the memory decoder has exactly " + std::to_string(kNumLayers) + " layers, got " +
                       std::to_string(num_layers));
  }
  if (max_caption_len == 0) throw config_error("max caption length must be positive");
  for (double l : {lambda1, lambda3, lambda5}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw config_error("lambda weights must be finite and nonnegative");
  }
  const double s = lambda1 + lambda3 + lambda5;
  if (std::abs(s - 1.0) > 1e-9) {
    throw config_error("lambda1 + lambda3 + lambda5 must sum to 1 (got " + std::to_string(s) + ")");
  }
  if (!(lambda5 > lambda1 && lambda5 > lambda3)) {
    throw config_error("lambda5 must be larger than lambda1 and lambda3 (the output layer dominates the loss)");
  }
  if (decoder == DecoderKind::lstm && attention == AttentionKind::dot) {
    throw config_error("the LSTM baseline attends raw frame features and supports soft attention only");
  }
}

// ---------------------------------------------------------------------------
// Parameters

DecoderT<ParamSpec> decoder_specs(const DecoderConfig& config, std::size_t vocab_size, std::size_t feature_width) {
  const std::size_t n = config.n;
  const std::size_t da = config.attention_width;
  const auto attention = [&](ParamRole role) {
    AttentionT<ParamSpec> a;
    const auto s = attention_shapes(da, n, n);
    a.score = {s.score, da, role};
    a.query_map = {s.query_map, n, role};
    a.slot_map = {s.slot_map, n, role};
    a.bias = {s.bias, n, role};
    return a;
  };

  DecoderT<ParamSpec> d;
  d.feature_proj = {{feature_width, n}, feature_width, ParamRole::feature_projection};
  d.embedding = {{vocab_size, n}, n, ParamRole::embedding};
  d.fusion.visual_map = {{n, n}, n, ParamRole::core};
  d.fusion.lexical_map = {{n, n}, n, ParamRole::core};
  for (auto& layer : d.layers) {
    layer.filter_w = {{n, n}, n, ParamRole::core};
    layer.filter_b = {{n}, n, ParamRole::core};
    layer.gate_w = {{n, n}, n, ParamRole::core};
    layer.gate_b = {{n}, n, ParamRole::core};
    layer.memory_attention = attention(ParamRole::core);
  }
  d.concat_w = {{2 * n, n}, 2 * n, ParamRole::core};
  d.concat_b = {{n}, 2 * n, ParamRole::core};
  d.visual_attention_1 = attention(ParamRole::core);
  d.visual_attention_4 = attention(ParamRole::core);
  d.output_w = {{n, vocab_size}, n, ParamRole::output_head};
  d.output_b = {{vocab_size}, n, ParamRole::output_head};
  d.aux1_w = {{n, vocab_size}, n, ParamRole::aux_head};
  d.aux1_b = {{vocab_size}, n, ParamRole::aux_head};
  d.aux3_w = {{n, vocab_size}, n, ParamRole::aux_head};
  d.aux3_b = {{vocab_size}, n, ParamRole::aux_head};
  return d;
}

DecoderParams init_decoder_params(const DecoderConfig& config, std::size_t vocab_size, std::size_t feature_width) {
  return materialize<DecoderT>(decoder_specs(config, vocab_size, feature_width), derive_seed(config.seed, 1));
}

// ---------------------------------------------------------------------------
// Building blocks

VisualContext project_and_pool(ad::Var raw_frames, ad::Var feature_proj) {
  if (raw_frames.shape().size() != 2 || raw_frames.shape()[0] == 0) {
    throw std::invalid_argument("project_and_pool: frames must be an m×q matrix with m ≥ 1, got " +
                                shape_to_string(raw_frames.shape()));
  }
  const ad::Var z = ad::channel_projection(raw_frames, feature_proj);
  return {z, ad::mean_rows(z)};
}

bool MemoryBank::empty() const {
  for (const auto& s : slots_) {
    if (!s.empty()) return false;
  }
  return true;
}

ColdStartState make_cold_start(std::uint64_t seed, std::string_view video_id, std::size_t n) {
  std::mt19937_64 rng(derive_seed(seed, fnv1a64(video_id)));
  std::normal_distribution<double> normal(0.0, 1.0);
  ColdStartState state;
  for (auto& h : state.noise) {
    h = Tensor(Shape{n}, 0.0);
    for (auto& v : h.values()) v = normal(rng);
  }
  return state;
}

ad::Var gated_activation(const MemoryLayerVars& layer, ad::Var input, ad::Var attended) {
  const ad::Var filter = ad::tanh(ad::channel_projection(input, layer.filter_w, layer.filter_b));
  const ad::Var gate = ad::sigmoid(ad::channel_projection(attended, layer.gate_w, layer.gate_b));
  return ad::mul(filter, gate);
}

namespace {

void check_layer(std::size_t layer) {
  if (layer < 1 || layer > kNumLayers) throw std::out_of_range("layer index must be in 1..5");
}

ad::Var require_visual(std::size_t layer, std::optional<ad::Var> visual) {
  if (!visual) throw std::invalid_argument("layer " + std::to_string(layer) + " needs a visual attention input");
  return *visual;
}

const AttentionVars& visual_site(const DecoderVars& p, std::size_t layer) {
  return layer == 1 ? p.visual_attention_1 : p.visual_attention_4;
}

}  // namespace

ad::Var layer_input(const DecoderVars& params, std::size_t layer, ad::Var incoming, std::optional<ad::Var> visual) {
  check_layer(layer);
  switch (layer) {
    case 2:
      return ad::channel_projection(ad::concat(incoming, require_visual(layer, visual)), params.concat_w,
                                    params.concat_b);
    case 5:
      return ad::add(incoming, require_visual(layer, visual));
    default:
      return incoming;
  }
}

LayerStep layer_step(const DecoderVars& params, AttentionKind kind, std::size_t layer, ad::Var incoming,
                     std::optional<ad::Var> visual, MemoryBank& bank) {
  check_layer(layer);
  if (bank.size(layer) == 0) {
    throw std::logic_error("layer_step: memory bank of layer " + std::to_string(layer) +
                           " is empty after step 1 (bank bookkeeping bug)");
  }
  const auto& lp = params.layers[layer - 1];
  const ad::Var input = layer_input(params, layer, incoming, visual);
  const ad::Var slots = ad::stack(bank.entries(layer));
  const AttentionResult attended = attend(kind, input, slots, lp.memory_attention);
  const ad::Var hidden = gated_activation(lp, input, attended.pooled);
  bank.append(layer, input);
  return {hidden, input, attended.weights};
}

ad::Var output_logits(ad::Var h5, ad::Var phi4, ad::Var weight, ad::Var bias) {
  return ad::channel_projection(ad::add(h5, phi4), weight, bias);
}

ad::Var predict_word(ad::Var h5, ad::Var phi4, ad::Var weight, ad::Var bias) {
  return ad::softmax(output_logits(h5, phi4, weight, bias));
}

namespace {

void emit_heads(const DecoderVars& p, StepTrace& s) {
  s.logits1 = ad::channel_projection(s.hidden[0], p.aux1_w, p.aux1_b);
  s.logits3 = ad::channel_projection(s.hidden[2], p.aux3_w, p.aux3_b);
  s.logits5 = output_logits(s.hidden[4], s.phi4, p.output_w, p.output_b);
}

}  // namespace

StepTrace cold_start_step(const DecoderVars& params, AttentionKind kind, const VisualContext& visual,
                          const ColdStartState& state, MemoryBank& bank) {
  if (!bank.empty()) throw std::logic_error("cold_start_step: banks must be empty at step 1");
  ad::Tape& tape = visual.mean.tape();
  StepTrace s;
  ad::Var previous;
  for (std::size_t l = 1; l <= kNumLayers; ++l) {
    const ad::Var noise = tape.constant(state.noise[l - 1]);
    const ad::Var incoming = ad::add(noise, l == 1 ? visual.mean : previous);
    std::optional<ad::Var> phi;
    if (l == 2 || l == 5) {
      const auto site = attend(kind, incoming, visual.frames, visual_site(params, l == 2 ? 1 : 4));
      phi = site.pooled;
      if (l == 2) {
        s.phi1 = site.pooled;
        s.visual_weights_1 = site.weights;
      } else {
        s.phi4 = site.pooled;
        s.visual_weights_4 = site.weights;
      }
    }
    const ad::Var input = layer_input(params, l, incoming, phi);
    s.hidden[l - 1] = gated_activation(params.layers[l - 1], input, input);
    bank.append(l, input);
    previous = s.hidden[l - 1];
  }
  emit_heads(params, s);
  return s;
}

StepTrace decoder_step(const DecoderVars& params, AttentionKind kind, const VisualContext& visual,
                       ad::Var lexical, MemoryBank& bank) {
  StepTrace s;
  const ad::Var fused = ccmf_fuse(visual.mean, lexical, params.fusion);
  ad::Var previous = fused;
  for (std::size_t l = 1; l <= kNumLayers; ++l) {
    std::optional<ad::Var> phi;
    if (l == 2 || l == 5) {
      const auto site = attend(kind, previous, visual.frames, visual_site(params, l == 2 ? 1 : 4));
      phi = site.pooled;
      if (l == 2) {
        s.phi1 = site.pooled;
        s.visual_weights_1 = site.weights;
      } else {
        s.phi4 = site.pooled;
        s.visual_weights_4 = site.weights;
      }
    }
    const LayerStep out = layer_step(params, kind, l, previous, phi, bank);
    s.hidden[l - 1] = out.hidden;
    s.memory_weights[l - 1] = out.memory_weights;
    previous = out.hidden;
  }
  emit_heads(params, s);
  return s;
}

// ---------------------------------------------------------------------------
// Runs

MemoryDecoderRun::MemoryDecoderRun(const DecoderVars& params, AttentionKind kind, VisualContext visual,
                                   ColdStartState cold)
    : params_(params), kind_(kind), visual_(visual), cold_(std::move(cold)) {}

const StepTrace& MemoryDecoderRun::step(std::optional<std::size_t> previous_token) {
  if (trace_.empty()) {
    if (previous_token) throw std::logic_error("MemoryDecoderRun: step 1 takes no previous token");
    trace_.push_back(cold_start_step(params_, kind_, visual_, cold_, bank_));
  } else {
    if (!previous_token) throw std::logic_error("MemoryDecoderRun: steps after the first need a previous token");
    const ad::Var lexical = ad::row(params_.embedding, *previous_token);
    trace_.push_back(decoder_step(params_, kind_, visual_, lexical, bank_));
  }
  return trace_.back();
}

ForwardResult decoder_forward(const DecoderVars& params, AttentionKind kind, const VisualContext& visual,
                              const ColdStartState& cold, std::span<const std::size_t> tokens) {
  if (tokens.size() < 2) throw std::invalid_argument("decoder_forward: caption needs at least BOS and one target");
  const std::size_t vocab = params.embedding.shape()[0];
  for (auto t : tokens) {
    if (t >= vocab) {
      throw std::out_of_range("decoder_forward: token " + std::to_string(t) + " outside vocabulary of size " +
                              std::to_string(vocab));
    }
  }
  MemoryDecoderRun run(params, kind, visual, cold);
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    run.step(t == 1 ? std::nullopt : std::optional<std::size_t>(tokens[t - 1]));
  }
  return {run.trace(), run.bank()};
}

// ---------------------------------------------------------------------------
// Loss

ad::Var sequence_cross_entropy(std::span<const ad::Var> logits, std::span<const std::size_t> targets) {
  if (logits.empty() || logits.size() != targets.size()) {
    throw std::invalid_argument("sequence_cross_entropy: need one target per step");
  }
  ad::Var total;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    const ad::Var ce = ad::cross_entropy(ad::softmax(logits[t]), targets[t]);
    total = total.valid() ? ad::add(total, ce) : ce;
  }
  return total;
}

LossTerms multilayer_loss(std::span<const SequenceLogits> items, const LossWeights& weights) {
  if (items.empty()) throw std::invalid_argument("multilayer_loss: empty batch");
  ad::Var l1, l3, l5;
  const auto accumulate = [](ad::Var& acc, ad::Var v) { acc = acc.valid() ? ad::add(acc, v) : v; };
  for (const auto& item : items) {
    accumulate(l1, sequence_cross_entropy(item.layer1, item.targets));
    accumulate(l3, sequence_cross_entropy(item.layer3, item.targets));
    accumulate(l5, sequence_cross_entropy(item.layer5, item.targets));
  }
  const double inv = 1.0 / static_cast<double>(items.size());
  LossTerms out;
  out.layer1 = ad::scale(l1, inv);
  out.layer3 = ad::scale(l3, inv);
  out.layer5 = ad::scale(l5, inv);
  out.total = ad::add(ad::add(ad::scale(out.layer1, weights.lambda1), ad::scale(out.layer3, weights.lambda3)),
                      ad::scale(out.layer5, weights.lambda5));
  return out;
}

SequenceLogits collect_logits(const ForwardResult& forward, std::span<const std::size_t> tokens) {
  SequenceLogits out;
  for (std::size_t t = 0; t < forward.steps.size(); ++t) {
    out.layer1.push_back(forward.steps[t].logits1);
    out.layer3.push_back(forward.steps[t].logits3);
    out.layer5.push_back(forward.steps[t].logits5);
    out.targets.push_back(tokens[t + 1]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inference

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

namespace {

void record(std::vector<AttentionSite>& sites, std::size_t index, ad::Var weights) {
  if (!weights.valid()) return;
  const auto& w = weights.value().data();
  sites[index].steps.emplace_back(w.begin(), w.end());
}

}  // namespace

GenerationResult greedy_decode(const DecoderParams& params, const DecoderConfig& config, const Tensor& raw_frames,
                               std::string_view video_id) {
  ad::Tape tape;
  const DecoderVars vars = bind<DecoderT>(tape, params, false, nullptr);
  const VisualContext visual = project_and_pool(tape.constant(raw_frames), vars.feature_proj);
  MemoryDecoderRun run(vars, config.attention, visual, make_cold_start(config.seed, video_id, config.n));

  GenerationResult result;
  result.video_id = std::string(video_id);
  for (std::size_t l = 1; l <= kNumLayers; ++l) result.attention.push_back({"memory_" + std::to_string(l), {}});
  result.attention.push_back({"visual_1", {}});
  result.attention.push_back({"visual_4", {}});

  std::optional<std::size_t> previous;
  for (std::size_t t = 0; t < config.max_caption_len; ++t) {
    const StepTrace& s = run.step(previous);
    for (std::size_t l = 0; l < kNumLayers; ++l) record(result.attention, l, s.memory_weights[l]);
    record(result.attention, kNumLayers, s.visual_weights_1);
    record(result.attention, kNumLayers + 1, s.visual_weights_4);
    const std::size_t token = argmax(s.logits5.value().values());
    if (token == kEos) break;
    result.tokens.push_back(token);
    previous = token;
  }
  return result;
}

}  // namespace hmd
