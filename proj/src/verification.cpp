#include "hmd/verification.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "hmd/attention.hpp"
#include "hmd/decoder.hpp"
#include "hmd/fusion.hpp"
#include "hmd/grad_check.hpp"
#include "hmd/hashing.hpp"
#include "hmd/lstm_baseline.hpp"
#include "hmd/tokens.hpp"

namespace hmd {

namespace {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Tensor t(shape, 0.0);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

/// Reduces any output to a scalar with fixed pseudo-random weights, so every
/// output component contributes to the checked gradient.
ad::Var project_to_scalar(ad::Var out) {
  if (out.size() == 1) return ad::reshape(out, Shape{});
  std::mt19937_64 rng(fnv1a64(shape_to_string(out.shape())));
  const ad::Var w = out.tape().constant(random_tensor(out.shape(), rng));
  return ad::sum(ad::mul(out, w));
}

struct Case {
  std::string name;
  std::vector<Shape> inputs;
  std::function<ad::Var(std::span<const ad::Var>)> body;
};

std::vector<Case> primitive_cases() {
  using V = std::span<const ad::Var>;
  return {
      {"channel_projection", {{2, 3}, {3, 2}, {2}}, [](V x) { return ad::channel_projection(x[0], x[1], x[2]); }},
      {"channel_projection_vector", {{3}, {3, 4}}, [](V x) { return ad::channel_projection(x[0], x[1]); }},
      {"linear", {{2, 3}, {4, 3}, {4}}, [](V x) { return ad::linear(x[0], x[1], x[2]); }},
      {"circular_conv", {{5}, {5}}, [](V x) { return ad::circular_conv(x[0], x[1]); }},
      {"softmax", {{6}}, [](V x) { return ad::softmax(x[0]); }},
      {"tanh", {{2, 3}}, [](V x) { return ad::tanh(x[0]); }},
      {"sigmoid", {{2, 3}}, [](V x) { return ad::sigmoid(x[0]); }},
      {"relu", {{2, 3}}, [](V x) { return ad::relu(x[0]); }},
      {"add", {{2, 3}, {2, 3}}, [](V x) { return ad::add(x[0], x[1]); }},
      {"sub", {{2, 3}, {2, 3}}, [](V x) { return ad::sub(x[0], x[1]); }},
      {"mul", {{2, 3}, {2, 3}}, [](V x) { return ad::mul(x[0], x[1]); }},
      {"scale", {{4}}, [](V x) { return ad::scale(x[0], -1.7); }},
      {"concat", {{2, 3}, {2, 2}}, [](V x) { return ad::concat(x[0], x[1]); }},
      {"sum", {{2, 3}}, [](V x) { return ad::sum(x[0]); }},
      {"mean", {{2, 3}}, [](V x) { return ad::mean(x[0]); }},
      {"mean_rows", {{3, 4}}, [](V x) { return ad::mean_rows(x[0]); }},
      {"add_rows", {{3, 4}, {4}}, [](V x) { return ad::add_rows(x[0], x[1]); }},
      {"stack", {{4}, {4}, {4}}, [](V x) { return ad::stack(x); }},
      {"row", {{3, 4}}, [](V x) { return ad::row(x[0], 1); }},
      {"reshape", {{2, 3}}, [](V x) { return ad::reshape(x[0], Shape{3, 2}); }},
      {"slice", {{6}}, [](V x) { return ad::slice(x[0], 2, 3); }},
      {"softmax_cross_entropy", {{7}}, [](V x) { return ad::cross_entropy(ad::softmax(x[0]), 3); }},
  };
}

std::vector<Case> composite_cases() {
  using V = std::span<const ad::Var>;
  return {
      {"ccmf_fuse", {{6}, {6}, {6, 6}, {6, 6}}, [](V x) { return ccmf_fuse(x[0], x[1], CcmfVars{x[2], x[3]}); }},
      {"soft_attention",
       {{5}, {4, 5}, {3}, {3, 5}, {3, 5}, {3}},
       [](V x) {
         const auto r = soft_attention(x[0], x[1], AttentionVars{x[2], x[3], x[4], x[5]});
         return ad::concat(r.weights, r.pooled);
       }},
      {"dot_attention",
       {{5}, {4, 5}},
       [](V x) {
         const auto r = dot_attention(x[0], x[1]);
         return ad::concat(r.weights, r.pooled);
       }},
      {"gated_activation",
       {{5}, {5}, {5, 5}, {5}, {5, 5}, {5}},
       [](V x) {
         MemoryLayerVars layer;
         layer.filter_w = x[2];
         layer.filter_b = x[3];
         layer.gate_w = x[4];
         layer.gate_b = x[5];
         return gated_activation(layer, x[0], x[1]);
       }},
      {"lstm_step",
       {{4}, {4}, {3}, {5}, {8, 16}, {4, 16}, {16}},
       [](V x) {
         const LstmState s = lstm_baseline_step({x[0], x[1]}, x[2], x[3], x[4], x[5], x[6]);
         return ad::concat(s.hidden, s.cell);
       }},
  };
}

GradSuiteEntry run_case(const Case& c, std::size_t points, std::uint64_t seed, double epsilon) {
  GradSuiteEntry e{c.name, points, 0, 0.0};
  std::mt19937_64 rng(derive_seed(seed, fnv1a64(c.name)));
  const ScalarFn fn = [&c](ad::Tape&, std::span<const ad::Var> in) { return project_to_scalar(c.body(in)); };
  for (std::size_t p = 0; p < points; ++p) {
    std::vector<Tensor> inputs;
    for (const auto& s : c.inputs) inputs.push_back(random_tensor(s, rng));
    const GradCheckResult r = grad_check(fn, inputs, epsilon);
    e.components += r.components;
    e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
  }
  return e;
}

// Tiny end-to-end configuration.
constexpr std::size_t kTinyN = 8;
constexpr std::size_t kTinyAttention = 4;
constexpr std::size_t kTinyVocab = 11;
constexpr std::size_t kTinyFrames = 3;
constexpr std::size_t kTinyWidth = 5;

struct TinyItem {
  std::string video_id;
  Tensor frames;
  std::vector<std::size_t> tokens;  // T = 4 steps
};

std::vector<TinyItem> tiny_items(std::mt19937_64& rng) {
  return {{"tiny-a", random_tensor({kTinyFrames, kTinyWidth}, rng), {kBos, 4, 7, 9, kEos}},
          {"tiny-b", random_tensor({kTinyFrames, kTinyWidth}, rng), {kBos, 5, 10, 3, kEos}}};
}

DecoderConfig tiny_config(std::uint64_t seed, AttentionKind kind, DecoderKind decoder) {
  DecoderConfig c;
  c.n = kTinyN;
  c.attention_width = kTinyAttention;
  c.seed = seed;
  c.attention = kind;
  c.decoder = decoder;
  return c;
}

template <template <class> class S>
std::vector<Tensor> flatten(const S<Tensor>& params) {
  std::vector<Tensor> out;
  visit_params(params, [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

GradSuiteEntry run_end_to_end(const std::string& name, AttentionKind kind, DecoderKind decoder,
                              const GradSuiteOptions& options) {
  GradSuiteEntry e{name, options.end_to_end_points, 0, 0.0};
  for (std::size_t p = 0; p < options.end_to_end_points; ++p) {
    const std::uint64_t seed = derive_seed(options.seed, fnv1a64(name) + p);
    std::mt19937_64 rng(seed);
    const auto items = tiny_items(rng);
    const DecoderConfig config = tiny_config(seed, kind, decoder);

    ScalarFn fn;
    std::vector<Tensor> points;
    if (decoder == DecoderKind::memory) {
      points = flatten<DecoderT>(init_decoder_params(config, kTinyVocab, kTinyWidth));
      fn = [&items, config](ad::Tape& tape, std::span<const ad::Var> leaves) {
        const DecoderVars vars = vars_from<DecoderT>(leaves);
        std::vector<SequenceLogits> logits;
        for (const auto& it : items) {
          const VisualContext visual = project_and_pool(tape.constant(it.frames), vars.feature_proj);
          const ColdStartState cold = make_cold_start(config.seed, it.video_id, config.n);
          logits.push_back(collect_logits(decoder_forward(vars, config.attention, visual, cold, it.tokens), it.tokens));
        }
        return multilayer_loss(logits, {config.lambda1, config.lambda3, config.lambda5}).total;
      };
    } else {
      points = flatten<LstmT>(init_lstm_params(config, kTinyVocab, kTinyWidth));
      fn = [&items](ad::Tape& tape, std::span<const ad::Var> leaves) {
        const LstmVars vars = vars_from<LstmT>(leaves);
        ad::Var total;
        for (const auto& it : items) {
          const LstmForward f = lstm_forward(vars, tape.constant(it.frames), it.tokens);
          const std::vector<std::size_t> targets(it.tokens.begin() + 1, it.tokens.end());
          const ad::Var ce = sequence_cross_entropy(f.logits, targets);
          total = total.valid() ? ad::add(total, ce) : ce;
        }
        return ad::scale(total, 0.5);
      };
    }
    const GradCheckResult r = grad_check(fn, points, options.epsilon);
    e.components += r.components;
    e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
  }
  return e;
}

}  // namespace

GradSuiteReport run_gradient_suite(const GradSuiteOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  GradSuiteReport report;
  for (const auto& c : primitive_cases()) {
    report.entries.push_back(run_case(c, options.primitive_points, options.seed, options.epsilon));
  }
  for (const auto& c : composite_cases()) {
    report.entries.push_back(run_case(c, options.primitive_points, options.seed, options.epsilon));
  }
  report.entries.push_back(run_end_to_end("end_to_end_memory_soft", AttentionKind::soft, DecoderKind::memory, options));
  report.entries.push_back(run_end_to_end("end_to_end_memory_dot", AttentionKind::dot, DecoderKind::memory, options));
  report.entries.push_back(run_end_to_end("end_to_end_lstm", AttentionKind::soft, DecoderKind::lstm, options));
  for (const auto& e : report.entries) report.max_rel_error = std::max(report.max_rel_error, e.max_rel_error);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string format_grad_suite(const GradSuiteReport& report) {
  std::ostringstream os;
  char line[160];
  for (const auto& e : report.entries) {
    std::snprintf(line, sizeof line, "%-28s points=%-3zu components=%-7zu max_rel_error=%.3e\n", e.name.c_str(),
                  e.points, e.components, e.max_rel_error);
    os << line;
  }
  std::snprintf(line, sizeof line, "overall max_rel_error=%.3e in %.2f s\n", report.max_rel_error, report.seconds);
  os << line;
  return os.str();
}

}  // namespace hmd
