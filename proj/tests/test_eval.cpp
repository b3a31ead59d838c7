#include <algorithm>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "hmd/evaluation.hpp"
#include "hmd/metrics.hpp"
#include "hmd/tokens.hpp"
#include "hmd/toy_data.hpp"
#include "test_support.hpp"

using namespace hmd;
namespace fs = std::filesystem;

using Refs = std::vector<std::vector<std::string>>;

TEST_CASE("bleu4 oracles") {
  SUBCASE("short candidate: no 4-gram, brevity penalty") {
    const auto r = bleu4({"the cat sat"}, {{"the cat sat down"}});
    CHECK(r.score == 0.0);
    CHECK(r.matched == std::array<std::size_t, 4>{3, 2, 1, 0});
    CHECK(r.totals == std::array<std::size_t, 4>{3, 2, 1, 0});
    CHECK(r.brevity_penalty == doctest::Approx(std::exp(1.0 - 4.0 / 3.0)).epsilon(1e-12));
    CHECK(std::abs(r.brevity_penalty - 0.71653131057378927) <= 1e-9);
  }
  SUBCASE("two-video corpus") {
    const auto r = bleu4({"a man is playing a guitar", "the dog runs in the park"},
                         {{"a man is playing the guitar", "a man plays a guitar"},
                          {"a dog runs in a park", "the dog is running in the park"}});
    CHECK(std::abs(r.score - 52.33175696960528) <= 1e-9);
    CHECK(r.matched == std::array<std::size_t, 4>{12, 9, 4, 1});
    CHECK(r.totals == std::array<std::size_t, 4>{12, 10, 8, 6});
  }
  SUBCASE("identity and disjoint") {
    for (const std::string x : {"a b c d", "one two three four five six", "x y z w x y z w"}) {
      CHECK(bleu4({x}, {{x}}).score == 100.0);
    }
    CHECK(bleu4({"a b c d e"}, {{"v w x y z"}}).score == 0.0);
    CHECK(bleu4({"a b c d", "e f g h i"}, {{"a b c d"}, {"e f g h i"}}).score == 100.0);
  }
  SUBCASE("order invariance") {
    const std::vector<std::string> c = {"a man is playing a guitar", "the dog runs in the park", "a cat sleeps"};
    const Refs refs = {{"a man plays a guitar"}, {"the dog is running in the park"}, {"a cat is sleeping"}};
    const std::vector<std::string> c2 = {c[2], c[0], c[1]};
    const Refs r2 = {refs[2], refs[0], refs[1]};
    CHECK(bleu4(c, refs).score == bleu4(c2, r2).score);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(bleu4({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(bleu4({"a"}, {{}}), std::invalid_argument);
    CHECK_THROWS_AS(bleu4({"a"}, {{"a"}, {"b"}}), std::invalid_argument);
  }
  SUBCASE("smoothed sentence score is only for display") {
    const double s = sentence_bleu_smoothed("the cat sat", {"the cat sat down"});
    CHECK(s > 0.0);
    CHECK(s < 100.0);
  }
}

TEST_CASE("cider oracles") {
  SUBCASE("two-video corpus") {
    const auto r = cider({"a man is playing a guitar", "a dog runs"},
                         {{"a man plays a guitar", "a man is playing guitar"}, {"a dog is running", "the dog runs fast"}});
    CHECK(std::abs(r.score - 3.6211891107402026) <= 1e-9);
    REQUIRE(r.per_video.size() == 2);
    CHECK(std::abs(r.per_video[0] - 4.712874018837563) <= 1e-9);
    CHECK(std::abs(r.per_video[1] - 2.5295042026428423) <= 1e-9);
  }
  SUBCASE("corpus-unique n-grams reach the maximum of 10") {
    const auto r = cider({"red fox jumps high", "a cat"}, {{"red fox jumps high"}, {"a dog"}});
    CHECK(std::abs(r.per_video[0] - 10.0) <= 1e-9);
    CHECK(std::abs(r.per_video[1] - 1.25) <= 1e-9);
    CHECK(std::abs(r.score - 5.625) <= 1e-9);
  }
  SUBCASE("disjoint n-grams score 0") {
    CHECK(cider({"p q r", "s t"}, {{"a b c"}, {"d e"}}).score == 0.0);
  }
  SUBCASE("no candidate beats the reference itself") {
    const Refs refs = {{"red fox jumps high"}, {"a dog"}};
    const double self = cider({"red fox jumps high", "a dog"}, refs).per_video[0];
    for (const std::string other : {"red fox", "red fox jumps", "fox jumps high red", "red fox jumps high high"}) {
      CHECK(cider({other, "a dog"}, refs).per_video[0] <= self + 1e-12);
    }
  }
}

namespace {

struct ToyEval {
  Vocabulary vocab;
  std::vector<EvalVideo> videos;
};

ToyEval toy_eval() {
  const ToyCorpus corpus = make_toy_corpus();
  std::vector<std::string> captions;
  ToyEval e;
  for (std::size_t i = 0; i < corpus.features.size(); ++i) {
    captions.push_back(corpus.manifest[i].captions[0]);
    e.videos.push_back({corpus.manifest[i].video_id, corpus.features[i].to_tensor(),
                        {normalize_text(corpus.manifest[i].captions[0])}});
  }
  e.vocab = build_vocab(captions, 1);
  return e;
}

Tensor& param(Captioner& model, const std::string& name) {
  for (auto& p : model.parameters())
    if (p.name == name) return *p.tensor;
  throw std::out_of_range(name);
}

DecoderConfig eval_config(DecoderKind kind) {
  DecoderConfig c;
  c.n = 8;
  c.attention_width = 4;
  c.max_caption_len = 6;
  c.decoder = kind;
  return c;
}

}  // namespace

TEST_CASE("greedy decoding") {
  const ToyEval toy = toy_eval();
  for (DecoderKind kind : {DecoderKind::memory, DecoderKind::lstm}) {
    CAPTURE(to_string(kind));
    auto model = make_captioner(eval_config(kind), {toy.vocab.size(), 16});

    SUBCASE("attention records sum to one and length is bounded") {
      for (const auto& v : toy.videos) {
        const auto g = model->generate(v.frames, v.video_id);
        CHECK(g.tokens.size() <= 6);
        for (const auto& site : g.attention) {
          for (const auto& step : site.steps) {
            double s = 0.0;
            for (double w : step) s += w;
            CHECK(std::abs(s - 1.0) <= 1e-6);
          }
        }
      }
    }
    SUBCASE("a head that always prefers EOS yields an empty caption") {
      param(*model, "output_b")[kEos] = 1e6;
      const auto g = model->generate(toy.videos[0].frames, toy.videos[0].video_id);
      CHECK(g.tokens.empty());
      CHECK(generate_split(*model, toy.vocab, {toy.videos[0]})[0].text.empty());
    }
    SUBCASE("a head that never prefers EOS stops at the length cap") {
      param(*model, "output_b")[toy.vocab.size() - 1] = 1e6;
      const auto g = model->generate(toy.videos[0].frames, toy.videos[0].video_id);
      CHECK(g.tokens.size() == 6);
      CHECK(std::all_of(g.tokens.begin(), g.tokens.end(), [&](std::size_t t) { return t == toy.vocab.size() - 1; }));
    }
  }
}

TEST_CASE("memory decoder attention sites") {
  const ToyEval toy = toy_eval();
  auto model = make_captioner(eval_config(DecoderKind::memory), {toy.vocab.size(), 16});
  param(*model, "output_b")[toy.vocab.size() - 1] = 1e6;
  const auto g = model->generate(toy.videos[1].frames, toy.videos[1].video_id);
  REQUIRE(g.attention.size() == 7);
  CHECK(g.attention[0].name == "memory_1");
  CHECK(g.attention[5].name == "visual_1");
  // Memory attention starts at step 2 and covers t − 1 slots; visual sites cover every step.
  CHECK(g.attention[0].steps.size() == 5);
  CHECK(g.attention[0].steps[3].size() == 4);
  CHECK(g.attention[6].steps.size() == 6);
  CHECK(g.attention[6].steps[0].size() == 5);
}

TEST_CASE("evaluate_split") {
  const ToyEval toy = toy_eval();
  auto model = make_captioner(eval_config(DecoderKind::memory), {toy.vocab.size(), 16});
  const auto a = evaluate_split(*model, toy.vocab, toy.videos);
  const auto b = evaluate_split(*model, toy.vocab, toy.videos);
  CHECK(a.report.bleu4 == b.report.bleu4);
  CHECK(a.report.cider == b.report.cider);
  CHECK(a.report.config_hash == config_hash(model->config()));
  CHECK(a.report.config_hash.size() == 16);
  for (std::size_t i = 0; i < a.generations.size(); ++i) {
    CHECK(generation_to_json(a.generations[i]).dump() == generation_to_json(b.generations[i]).dump());
  }

  SUBCASE("metrics recomputed from the dump reproduce the report") {
    const fs::path dir = test::scratch_dir("eval");
    write_generation_dump(a.generations, dir / "dump.jsonl");
    const auto back = read_generation_dump(dir / "dump.jsonl");
    REQUIRE(back.size() == a.generations.size());
    CHECK(back[3].tokens == a.generations[3].tokens);
    CHECK(back[3].text == a.generations[3].text);
    const EvalReport r = score_generations(back, toy.videos, a.report.config_hash);
    CHECK(r.bleu4 == a.report.bleu4);
    CHECK(r.cider == a.report.cider);
    CHECK(r.mean_len == a.report.mean_len);
    const auto j = report_to_json(a.report);
    CHECK(j.contains("bleu4"));
    CHECK(j.contains("cider"));
    CHECK(j.contains("mean_len"));
    CHECK(j.contains("config_hash"));
  }
  SUBCASE("memorized captions score 100") {
    std::vector<GenerationResult> perfect;
    for (const auto& v : toy.videos) {
      GenerationResult g;
      g.video_id = v.video_id;
      g.text = v.references[0];
      perfect.push_back(g);
    }
    CHECK(score_generations(perfect, toy.videos, "").bleu4 == 100.0);
  }
  CHECK_THROWS_AS(evaluate_split(*model, toy.vocab, {}), std::invalid_argument);
}
