#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "hmd/decoder.hpp"
#include "hmd/lstm_baseline.hpp"
#include "hmd/param_audit.hpp"
#include "hmd/tokens.hpp"
#include "test_support.hpp"

using namespace hmd;
using hmd::test::random_tensor;

namespace {

DecoderConfig tiny_config(AttentionKind kind = AttentionKind::soft) {
  DecoderConfig c;
  c.n = 6;
  c.attention_width = 4;
  c.seed = 5;
  c.attention = kind;
  return c;
}

constexpr std::size_t kVocab = 9;
constexpr std::size_t kWidth = 5;

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Tiny {
  ad::Tape tape;
  DecoderConfig config;
  DecoderParams params;
  DecoderVars vars;
  VisualContext visual;
  ColdStartState cold;

  explicit Tiny(AttentionKind kind = AttentionKind::soft, std::uint64_t frame_seed = 3)
      : config(tiny_config(kind)), params(init_decoder_params(config, kVocab, kWidth)) {
    std::mt19937_64 rng(frame_seed);
    vars = bind<DecoderT>(tape, params, false, nullptr);
    visual = project_and_pool(tape.constant(random_tensor({3, kWidth}, rng)), vars.feature_proj);
    cold = make_cold_start(config.seed, "clip", config.n);
  }
};

}  // namespace

TEST_CASE("project_and_pool") {
  std::mt19937_64 rng(41);
  ad::Tape t;
  SUBCASE("one frame: the mean is the projected frame") {
    const auto r = project_and_pool(t.constant(random_tensor({1, 4}, rng)), t.constant(random_tensor({4, 3}, rng)));
    CHECK(r.mean.value().data() == r.frames.value().data());
  }
  SUBCASE("zero projection") {
    const auto r = project_and_pool(t.constant(random_tensor({3, 4}, rng)), t.constant(Tensor(Shape{4, 3}, 0.0)));
    for (double v : r.mean.value().values()) CHECK(v == 0.0);
    for (double v : r.frames.value().values()) CHECK(v == 0.0);
  }
  SUBCASE("scalar-loop oracle") {
    const Tensor x = random_tensor({3, 4}, rng);
    const Tensor w = random_tensor({4, 5}, rng);
    const auto r = project_and_pool(t.constant(x), t.constant(w));
    for (std::size_t c = 0; c < 5; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 3; ++i) {
        double z = 0.0;
        for (std::size_t k = 0; k < 4; ++k) z += x.at(i, k) * w.at(k, c);
        CHECK(r.frames.value().at(i, c) == doctest::Approx(z).epsilon(1e-14));
        acc += z;
      }
      CHECK(r.mean.value()[c] == doctest::Approx(acc / 3.0).epsilon(1e-14));
    }
  }
  SUBCASE("non-matrix input is rejected") {
    CHECK_THROWS_AS(project_and_pool(t.constant(Tensor(Shape{4})), t.constant(Tensor(Shape{4, 3}))),
                    std::invalid_argument);
  }
}

TEST_CASE("layer_step") {
  ad::Tape t;
  SUBCASE("zero parameters give a zero output") {
    DecoderT<ParamSpec> specs = decoder_specs(tiny_config(), kVocab, kWidth);
    const DecoderParams zero = zeros_like<DecoderT>(specs);
    const DecoderVars v = bind<DecoderT>(t, zero, false, nullptr);
    MemoryBank bank;
    std::mt19937_64 rng(42);
    bank.append(1, t.constant(random_tensor({6}, rng)));
    const auto out = layer_step(v, AttentionKind::soft, 1, t.constant(random_tensor({6}, rng)), std::nullopt, bank);
    for (double h : out.hidden.value().values()) CHECK(h == 0.0);
    CHECK(bank.size(1) == 2);
  }
  SUBCASE("empty bank is an internal error") {
    Tiny m;
    MemoryBank bank;
    CHECK_THROWS_AS(layer_step(m.vars, AttentionKind::soft, 3, m.visual.mean, std::nullopt, bank), std::logic_error);
    CHECK_THROWS_AS(layer_step(m.vars, AttentionKind::soft, 6, m.visual.mean, std::nullopt, bank), std::out_of_range);
  }
  SUBCASE("n = 2 hand evaluation") {
    MemoryLayerVars layer;
    layer.filter_w = t.constant(Tensor::matrix(2, 2, {0.5, -0.3, 0.2, 0.8}));
    layer.filter_b = t.constant(Tensor::vector({0.1, -0.2}));
    layer.gate_w = t.constant(Tensor::matrix(2, 2, {-0.4, 0.6, 0.9, 0.1}));
    layer.gate_b = t.constant(Tensor::vector({0.05, 0.3}));
    layer.memory_attention = {t.constant(Tensor::vector({1.0})), t.constant(Tensor::matrix(1, 2, {0.2, 0.1})),
                              t.constant(Tensor::matrix(1, 2, {-0.3, 0.4})), t.constant(Tensor::vector({0.0}))};
    DecoderVars params;
    params.layers[0] = layer;
    MemoryBank bank;
    const double s0 = 0.7, s1 = -1.1;  // single stored entry: attention pools it exactly
    const double x0 = 0.3, x1 = 0.9;
    bank.append(1, t.constant(Tensor::vector({s0, s1})));
    const auto out = layer_step(params, AttentionKind::soft, 1, t.constant(Tensor::vector({x0, x1})), std::nullopt, bank);
    // x·W with W in×out: out_j = Σ_i x_i W[i][j].
    const double f0 = std::tanh(x0 * 0.5 + x1 * 0.2 + 0.1);
    const double f1 = std::tanh(x0 * -0.3 + x1 * 0.8 - 0.2);
    const double g0 = sigmoid(s0 * -0.4 + s1 * 0.9 + 0.05);
    const double g1 = sigmoid(s0 * 0.6 + s1 * 0.1 + 0.3);
    CHECK(out.hidden.value()[0] == doctest::Approx(f0 * g0).epsilon(1e-14));
    CHECK(out.hidden.value()[1] == doctest::Approx(f1 * g1).epsilon(1e-14));
    CHECK(out.memory_weights.item() == 1.0);
  }
}

TEST_CASE("cold start") {
  const auto a = make_cold_start(7, "vid", 8);
  const auto b = make_cold_start(7, "vid", 8);
  const auto c = make_cold_start(8, "vid", 8);
  const auto d = make_cold_start(7, "other", 8);
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    CHECK(bit_equal(a.noise[l], b.noise[l]));
    CHECK_FALSE(a.noise[l] == c.noise[l]);
    CHECK_FALSE(a.noise[l] == d.noise[l]);
  }
  CHECK_FALSE(a.noise[0] == a.noise[1]);

  SUBCASE("zero V and zero parameters give zero outputs whatever H is") {
    ad::Tape t;
    const DecoderParams zero = zeros_like<DecoderT>(decoder_specs(tiny_config(), kVocab, kWidth));
    const DecoderVars v = bind<DecoderT>(t, zero, false, nullptr);
    const VisualContext visual{t.constant(Tensor(Shape{3, 6}, 0.0)), t.constant(Tensor(Shape{6}, 0.0))};
    MemoryBank bank;
    const auto s = cold_start_step(v, AttentionKind::soft, visual, make_cold_start(1, "x", 6), bank);
    for (const auto& h : s.hidden)
      for (double x : h.value().values()) CHECK(x == 0.0);
    for (std::size_t l = 1; l <= kNumLayers; ++l) CHECK(bank.size(l) == 1);
  }
  SUBCASE("step-1 outputs are reproducible and seed-dependent") {
    Tiny m1, m2;
    MemoryBank b1, b2, b3;
    const auto s1 = cold_start_step(m1.vars, AttentionKind::soft, m1.visual, m1.cold, b1);
    const auto s2 = cold_start_step(m2.vars, AttentionKind::soft, m2.visual, m2.cold, b2);
    const auto s3 = cold_start_step(m1.vars, AttentionKind::soft, m1.visual, make_cold_start(99, "clip", 6), b3);
    for (std::size_t l = 0; l < kNumLayers; ++l) {
      CHECK(bit_equal(s1.hidden[l].value(), s2.hidden[l].value()));
      CHECK_FALSE(s1.hidden[l].value() == s3.hidden[l].value());
    }
    CHECK_THROWS_AS(cold_start_step(m1.vars, AttentionKind::soft, m1.visual, m1.cold, b1), std::logic_error);
  }
}

TEST_CASE("decoder_forward") {
  const std::vector<std::size_t> tokens = {kBos, 5, 6, 7, kEos};
  for (AttentionKind kind : {AttentionKind::soft, AttentionKind::dot}) {
    CAPTURE(to_string(kind));
    Tiny m(kind);
    const auto f = decoder_forward(m.vars, kind, m.visual, m.cold, tokens);
    REQUIRE(f.steps.size() == 4);

    SUBCASE("banks hold T entries") {
      for (std::size_t l = 1; l <= kNumLayers; ++l) CHECK(f.bank.size(l) == 4);
    }
    SUBCASE("gated outputs and attention weights") {
      for (std::size_t t = 0; t < f.steps.size(); ++t) {
        const auto& s = f.steps[t];
        for (const auto& h : s.hidden)
          for (double x : h.value().values()) CHECK((x > -1.0 && x < 1.0));
        std::vector<ad::Var> ws = {s.visual_weights_1, s.visual_weights_4};
        if (t > 0) ws.insert(ws.end(), s.memory_weights.begin(), s.memory_weights.end());
        for (const auto& w : ws) {
          double sum = 0.0;
          for (double x : w.value().values()) sum += x;
          CHECK(std::abs(sum - 1.0) <= 1e-6);
        }
        if (t > 0) CHECK(s.memory_weights[0].size() == t);
      }
    }
    SUBCASE("causality: later tokens do not change earlier logits") {
      for (std::size_t cut = 1; cut < tokens.size(); ++cut) {
        auto perturbed = tokens;
        for (std::size_t i = cut; i < perturbed.size(); ++i) perturbed[i] = (perturbed[i] + 3) % kVocab;
        const auto g = decoder_forward(m.vars, kind, m.visual, m.cold, perturbed);
        // Step t (0-based) consumes tokens[0..t]; steps below `cut` see only unchanged tokens.
        for (std::size_t t = 0; t < cut; ++t) {
          CHECK(bit_equal(f.steps[t].logits5.value(), g.steps[t].logits5.value()));
          CHECK(bit_equal(f.steps[t].logits1.value(), g.steps[t].logits1.value()));
          CHECK(bit_equal(f.steps[t].logits3.value(), g.steps[t].logits3.value()));
        }
      }
    }
    SUBCASE("matches manual composition of layer steps") {
      MemoryBank bank;
      const auto first = cold_start_step(m.vars, kind, m.visual, m.cold, bank);
      CHECK(bit_equal(first.logits5.value(), f.steps[0].logits5.value()));
      for (std::size_t t = 1; t < 4; ++t) {
        const ad::Var fused = ccmf_fuse(m.visual.mean, ad::row(m.vars.embedding, tokens[t]), m.vars.fusion);
        const auto h1 = layer_step(m.vars, kind, 1, fused, std::nullopt, bank).hidden;
        const auto phi1 = attend(kind, h1, m.visual.frames, m.vars.visual_attention_1).pooled;
        const auto h2 = layer_step(m.vars, kind, 2, h1, phi1, bank).hidden;
        const auto h3 = layer_step(m.vars, kind, 3, h2, std::nullopt, bank).hidden;
        const auto h4 = layer_step(m.vars, kind, 4, h3, std::nullopt, bank).hidden;
        const auto phi4 = attend(kind, h4, m.visual.frames, m.vars.visual_attention_4).pooled;
        const auto h5 = layer_step(m.vars, kind, 5, h4, phi4, bank).hidden;
        const auto logits = output_logits(h5, phi4, m.vars.output_w, m.vars.output_b);
        CHECK(bit_equal(logits.value(), f.steps[t].logits5.value()));
        CHECK(bit_equal(h3.value(), f.steps[t].hidden[2].value()));
      }
    }
  }
  SUBCASE("out-of-vocabulary tokens are rejected") {
    Tiny m;
    const std::vector<std::size_t> bad = {kBos, kVocab, kEos};
    CHECK_THROWS_AS(decoder_forward(m.vars, AttentionKind::soft, m.visual, m.cold, bad), std::out_of_range);
  }
}

TEST_CASE("predict_word") {
  ad::Tape t;
  std::mt19937_64 rng(43);
  const auto h = t.constant(random_tensor({4}, rng));
  const auto phi = t.constant(random_tensor({4}, rng));
  const auto uniform = predict_word(h, phi, t.constant(Tensor(Shape{4, 7}, 0.0)), t.constant(Tensor(Shape{7}, 0.0)));
  for (double p : uniform.value().values()) CHECK(p == doctest::Approx(1.0 / 7.0).epsilon(1e-15));

  const auto w = t.constant(random_tensor({4, 7}, rng));
  const auto b = t.constant(random_tensor({7}, rng));
  const auto p = predict_word(h, phi, w, b);
  const auto logits = output_logits(h, phi, w, b);
  CHECK(argmax(p.value().values()) == argmax(logits.value().values()));
  double sum = 0.0;
  for (double x : p.value().values()) {
    CHECK(x > 0.0);
    sum += x;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));

  // |Vocab| = 3, n = 1: logits = (h + φ)·w + b with h + φ = 1.
  const auto p3 = predict_word(t.constant(Tensor::vector({0.25})), t.constant(Tensor::vector({0.75})),
                               t.constant(Tensor::matrix(1, 3, {1.0, 2.0, 3.0})), t.constant(Tensor::vector({0, 0, -1})));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(2.0);
  CHECK(p3.value()[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
  CHECK(p3.value()[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-14));
  CHECK(p3.value()[2] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-14));
  CHECK(argmax(std::vector<double>{1.0, 3.0, 3.0}) == 1);
}

TEST_CASE("multilayer_loss") {
  ad::Tape t;
  std::mt19937_64 rng(44);
  const auto make_item = [&](std::size_t steps, std::size_t k, bool random) {
    SequenceLogits s;
    for (std::size_t i = 0; i < steps; ++i) {
      const auto logits = [&] { return t.constant(random ? random_tensor({k}, rng, 3.0) : Tensor(Shape{k}, 0.0)); };
      s.layer1.push_back(logits());
      s.layer3.push_back(logits());
      s.layer5.push_back(logits());
      s.targets.push_back(i % k);
    }
    return s;
  };

  SUBCASE("uniform predictions give T·ln k for every head") {
    const std::vector<SequenceLogits> items = {make_item(4, 6, false), make_item(4, 6, false)};
    const auto loss = multilayer_loss(items, {0.2, 0.2, 0.6});
    const double expect = 4.0 * std::log(6.0);
    for (const auto& v : {loss.layer1, loss.layer3, loss.layer5, loss.total})
      CHECK(v.item() == doctest::Approx(expect).epsilon(1e-14));
  }
  SUBCASE("λ = (0, 0, 1) gives exactly the output-layer loss") {
    const std::vector<SequenceLogits> items = {make_item(3, 5, true)};
    const auto loss = multilayer_loss(items, {0.0, 0.0, 1.0});
    CHECK(loss.total.item() == loss.layer5.item());
  }
  SUBCASE("perfect one-hot predictions give zero loss") {
    SequenceLogits s;
    for (std::size_t i = 0; i < 3; ++i) {
      Tensor l(Shape{5}, 0.0);
      l[i + 1] = 1000.0;
      s.layer1.push_back(t.constant(l));
      s.layer3.push_back(t.constant(l));
      s.layer5.push_back(t.constant(l));
      s.targets.push_back(i + 1);
    }
    const std::vector<SequenceLogits> items = {s};
    CHECK(multilayer_loss(items, {0.2, 0.2, 0.6}).total.item() == 0.0);
  }
  SUBCASE("total decomposes into the weighted per-layer losses") {
    for (int trial = 0; trial < 10; ++trial) {
      const std::vector<SequenceLogits> items = {make_item(3, 5, true), make_item(5, 5, true), make_item(2, 5, true)};
      const LossWeights w{0.15, 0.25, 0.6};
      const auto loss = multilayer_loss(items, w);
      const double recomposed =
          w.lambda1 * loss.layer1.item() + w.lambda3 * loss.layer3.item() + w.lambda5 * loss.layer5.item();
      CHECK(std::abs(loss.total.item() - recomposed) <= 1e-12);
    }
  }
  SUBCASE("batch mean of per-item sums") {
    const auto a = make_item(3, 5, true);
    const auto b = make_item(2, 5, true);
    const std::vector<SequenceLogits> both = {a, b};
    const double la = sequence_cross_entropy(a.layer5, a.targets).item();
    const double lb = sequence_cross_entropy(b.layer5, b.targets).item();
    CHECK(multilayer_loss(both, {0.2, 0.2, 0.6}).layer5.item() == doctest::Approx((la + lb) / 2.0).epsilon(1e-14));
  }
}

TEST_CASE("config validation") {
  DecoderConfig c;
  CHECK_NOTHROW(c.validate());
  c.lambda1 = 0.1;  // sum 0.9
  CHECK_THROWS_AS(c.validate(), config_error);
  c = {};
  c.lambda1 = 0.4;
  c.lambda3 = 0.2;
  c.lambda5 = 0.4;  // λ5 not larger than λ1
  CHECK_THROWS_AS(c.validate(), config_error);
  c = {};
  c.lambda1 = -0.1;
  c.lambda3 = 0.3;
  CHECK_THROWS_AS(c.validate(), config_error);
  c = {};
  c.num_layers = 4;
  CHECK_THROWS_AS(c.validate(), config_error);
  c = {};
  c.decoder = DecoderKind::lstm;
  c.attention = AttentionKind::dot;
  CHECK_THROWS_AS(c.validate(), config_error);
  c.attention = AttentionKind::soft;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("every parameter receives gradient") {
  ad::Tape t;
  const DecoderConfig config = tiny_config();
  const DecoderParams params = init_decoder_params(config, kVocab, kWidth);
  std::vector<ad::Var> leaves;
  const DecoderVars v = bind<DecoderT>(t, params, true, &leaves);
  std::mt19937_64 rng(45);
  const VisualContext visual = project_and_pool(t.constant(random_tensor({3, kWidth}, rng)), v.feature_proj);
  const std::vector<std::size_t> tokens = {kBos, 4, 5, 6, 7, 8, kEos};
  const auto f = decoder_forward(v, config.attention, visual, make_cold_start(config.seed, "g", config.n), tokens);
  const std::vector<SequenceLogits> items = {collect_logits(f, tokens)};
  const auto loss = multilayer_loss(items, {config.lambda1, config.lambda3, config.lambda5});
  t.backward(loss.total);
  const auto names = named_tensors(params);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    CAPTURE(names[i].name);
    double norm = 0.0;
    for (double g : t.grad(leaves[i])) norm += g * g;
    CHECK(norm > 0.0);
  }
}

TEST_CASE("lstm_baseline_step") {
  ad::Tape t;
  std::mt19937_64 rng(46);
  SUBCASE("zero weights") {
    const LstmState prev{t.constant(Tensor(Shape{3}, 0.0)), t.constant(Tensor(Shape{3}, 0.0))};
    const auto s = lstm_baseline_step(prev, t.constant(random_tensor({2}, rng)), t.constant(random_tensor({4}, rng)),
                                      t.constant(Tensor(Shape{6, 12}, 0.0)), t.constant(Tensor(Shape{3, 12}, 0.0)),
                                      t.constant(Tensor(Shape{12}, 0.0)));
    for (double x : s.hidden.value().values()) CHECK(x == 0.0);
    for (double x : s.cell.value().values()) CHECK(x == 0.0);
  }
  SUBCASE("saturated forget gate with closed input gate keeps the cell") {
    const Tensor cell = random_tensor({3}, rng);
    const LstmState prev{t.constant(random_tensor({3}, rng)), t.constant(cell)};
    Tensor bias(Shape{12}, 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
      bias[i] = -60.0;     // input gate
      bias[3 + i] = 60.0;  // forget gate
    }
    const auto s = lstm_baseline_step(prev, t.constant(random_tensor({2}, rng)), t.constant(random_tensor({4}, rng)),
                                      t.constant(Tensor(Shape{6, 12}, 0.0)), t.constant(Tensor(Shape{3, 12}, 0.0)),
                                      t.constant(bias));
    for (std::size_t i = 0; i < 3; ++i) CHECK(s.cell.value()[i] == doctest::Approx(cell[i]).epsilon(1e-15));
  }
  SUBCASE("n = 2 scalar gate oracle") {
    const Tensor e = Tensor::vector({0.4}), ctx = Tensor::vector({-0.7});
    const Tensor h0 = Tensor::vector({0.2, -0.5}), c0 = Tensor::vector({0.9, -0.3});
    const Tensor wx = random_tensor({2, 8}, rng), wh = random_tensor({2, 8}, rng), b = random_tensor({8}, rng);
    const auto s = lstm_baseline_step({t.constant(h0), t.constant(c0)}, t.constant(e), t.constant(ctx),
                                      t.constant(wx), t.constant(wh), t.constant(b));
    const double x[2] = {e[0], ctx[0]};
    const auto pre = [&](std::size_t col) {
      return x[0] * wx.at(0, col) + x[1] * wx.at(1, col) + b[col] + h0[0] * wh.at(0, col) + h0[1] * wh.at(1, col);
    };
    for (std::size_t j = 0; j < 2; ++j) {
      const double i = sigmoid(pre(j)), f = sigmoid(pre(2 + j)), g = std::tanh(pre(4 + j)), o = sigmoid(pre(6 + j));
      const double c = f * c0[j] + i * g;
      CHECK(s.cell.value()[j] == doctest::Approx(c).epsilon(1e-14));
      CHECK(s.hidden.value()[j] == doctest::Approx(o * std::tanh(c)).epsilon(1e-14));
    }
  }
}

TEST_CASE("lstm_forward") {
  ad::Tape t;
  DecoderConfig c = tiny_config();
  c.decoder = DecoderKind::lstm;
  const LstmParams p = init_lstm_params(c, kVocab, kWidth);
  const LstmVars v = bind<LstmT>(t, p, false, nullptr);
  std::mt19937_64 rng(47);
  const auto frames = t.constant(random_tensor({3, kWidth}, rng));
  const std::vector<std::size_t> tokens = {kBos, 4, 5, kEos};
  const auto f = lstm_forward(v, frames, tokens);
  CHECK(f.logits.size() == 3);
  for (const auto& w : f.visual_weights) {
    double s = 0.0;
    for (double x : w.value().values()) s += x;
    CHECK(std::abs(s - 1.0) <= 1e-6);
  }
  auto perturbed = tokens;
  perturbed[2] = 7;
  const auto g = lstm_forward(v, frames, perturbed);
  CHECK(bit_equal(f.logits[0].value(), g.logits[0].value()));
  CHECK(bit_equal(f.logits[1].value(), g.logits[1].value()));
  CHECK_FALSE(f.logits[2].value() == g.logits[2].value());
}

TEST_CASE("parameter audit") {
  const DecoderConfig paper;  // n = 512, d_a = 100
  const auto inv = memory_decoder_inventory(paper, 12596, 1024);
  const auto find = [&](const std::string& name) {
    for (const auto& e : inv)
      if (e.name == name) return e.count;
    FAIL("missing " << name);
    return std::size_t{0};
  };
  CHECK(find("layer1.filter_w") + find("layer1.filter_b") == 262656);
  CHECK(find("layer1.memory_attention.score") == 100);
  CHECK(find("layer1.memory_attention.query_map") == 51200);
  CHECK(find("layer1.memory_attention.slot_map") == 51200);
  CHECK(find("layer1.memory_attention.bias") == 100);
  CHECK(find("layer1.memory_attention.score") + find("layer1.memory_attention.query_map") +
            find("layer1.memory_attention.slot_map") + find("layer1.memory_attention.bias") ==
        102600);

  const auto core = count_params(inv, AuditScope::decoder_core, "memory");
  const auto lstm = count_params(lstm_baseline_inventory(paper, 12596, 1024), AuditScope::decoder_core, "lstm");
  CHECK(core.total >= 3800000);
  CHECK(core.total <= 4500000);
  CHECK(core.total < lstm.total);
  for (const auto& e : core.included) CHECK(e.role == ParamRole::core);
  for (const auto& e : core.excluded) CHECK(e.role != ParamRole::core);
  CHECK(core.included.size() + core.excluded.size() == inv.size());

  const auto full = count_params(inv, AuditScope::full, "memory");
  std::size_t sum = 0;
  for (const auto& e : inv) sum += e.count;
  CHECK(full.total == sum);
  CHECK(full.excluded.empty());

  const std::string table = format_audit(core);
  CHECK(table.find("layer5.gate_w") != std::string::npos);
  CHECK(table.find("aux1_w") != std::string::npos);
  CHECK(parse_audit_scope("decoder-core") == AuditScope::decoder_core);
  CHECK_THROWS_AS(parse_audit_scope("lstm-ish"), std::invalid_argument);
}
