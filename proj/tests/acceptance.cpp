// Acceptance run: one [PASS]/[FAIL] line per criterion, exit status 1 if any
// hard criterion fails. The layer-ordering check only warns.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hmd/checkpoint.hpp"
#include "hmd/cli.hpp"
#include "hmd/decoder.hpp"
#include "hmd/evaluation.hpp"
#include "hmd/metrics.hpp"
#include "hmd/param_audit.hpp"
#include "hmd/tokens.hpp"
#include "hmd/training.hpp"
#include "hmd/verification.hpp"

using namespace hmd;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr std::size_t kAuditLow = 3800000;
constexpr std::size_t kAuditHigh = 4500000;
constexpr double kAuditSeconds = 1.0;
constexpr double kOverfitLoss = 0.05;
constexpr std::size_t kOverfitEpochs = 500;
constexpr double kOverfitSeconds = 600.0;
constexpr double kLayerSlack = 0.1;
constexpr double kWeightSumTolerance = 1e-6;
constexpr double kDecompositionTolerance = 1e-12;
constexpr double kMetricTolerance = 1e-9;

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string num(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) std::cerr << "hmdec " << args.front() << " failed: " << err.str();
  return code;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("hmdec_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct PipelineRun {
  bool ok = false;
  fs::path dir;
  double seconds = 0.0;
  std::vector<nlohmann::json> log;
  nlohmann::json report;
};

// make-toy-data, train, evaluate on the train split, all through the CLI.
PipelineRun toy_pipeline(const std::string& name, const std::vector<std::string>& extra_train_flags) {
  PipelineRun r;
  r.dir = fresh_dir(name);
  const std::string d = r.dir.string();
  const auto start = Clock::now();
  if (cli({"make-toy-data", "--out", d}) != 0) return r;
  std::vector<std::string> train = {"train", "--features-dir", d + "/features", "--manifest", d + "/manifest.jsonl",
                                    "--vocab", d + "/vocab.tsv", "--config", d + "/config.json", "--checkpoint",
                                    d + "/model.ckpt", "--out", d + "/loss.jsonl"};
  train.insert(train.end(), extra_train_flags.begin(), extra_train_flags.end());
  if (cli(train) != 0) return r;
  if (cli({"evaluate", "--split", "train", "--checkpoint", d + "/model.ckpt", "--features-dir", d + "/features",
           "--manifest", d + "/manifest.jsonl", "--out", d + "/report.json", "--dump", d + "/dump.jsonl"}) != 0) {
    return r;
  }
  r.seconds = seconds_since(start);
  std::istringstream log(read_text(r.dir / "loss.jsonl"));
  for (std::string line; std::getline(log, line);) r.log.push_back(nlohmann::json::parse(line));
  r.report = nlohmann::json::parse(read_text(r.dir / "report.json"));
  r.ok = !r.log.empty();
  return r;
}

struct ToyData {
  std::vector<TrainItem> items;
  std::vector<EvalVideo> videos;
};

ToyData load_toy(const fs::path& dir, const Vocabulary& vocab) {
  const auto manifest = read_manifest(dir / "manifest.jsonl");
  return {load_train_items(dir / "features", manifest, vocab), load_eval_videos(dir / "features", manifest)};
}

// ---------------------------------------------------------------------------

void gradient_suite() {
  const GradSuiteReport r = run_gradient_suite();
  report(r.max_rel_error < kGradTolerance && r.seconds < kGradSeconds, "gradient suite",
         std::to_string(r.entries.size()) + " checks, max relative error " + num(r.max_rel_error, 3) + " (< " +
             num(kGradTolerance) + "), " + num(r.seconds, 3) + " s (< " + num(kGradSeconds) + " s)");
}

void parameter_audit() {
  const auto start = Clock::now();
  const DecoderConfig paper;  // n = 512, d_a = 100, five layers
  const ParamAudit memory =
      count_params(memory_decoder_inventory(paper, 12596, 1024), AuditScope::decoder_core, "memory decoder");
  const ParamAudit lstm =
      count_params(lstm_baseline_inventory(paper, 12596, 1024), AuditScope::decoder_core, "attention LSTM");
  const std::string table = format_audit(memory) + format_audit(lstm);
  const double secs = seconds_since(start);
  std::cout << table;
  const bool in_range = memory.total >= kAuditLow && memory.total <= kAuditHigh;
  report(in_range && memory.total < lstm.total && secs < kAuditSeconds, "parameter audit",
         "decoder-core " + std::to_string(memory.total) + " in [" + std::to_string(kAuditLow) + ", " +
             std::to_string(kAuditHigh) + "], lstm baseline " + std::to_string(lstm.total) + ", " + num(secs, 3) +
             " s");
}

void overfit_and_properties(const PipelineRun& run) {
  if (!run.ok) {
    report(false, "overfit pipeline", "toy pipeline did not complete");
    report(false, "causality and normalization", "no trained model");
    return;
  }
  const LoadedCheckpoint ck = load_checkpoint(run.dir / "model.ckpt");
  const ToyData toy = load_toy(run.dir, ck.vocab);
  const LossBreakdown final_loss = evaluate_loss(*ck.model, toy.items, 5);
  const double epoch_loss = run.log.back()["loss"].get<double>();
  const double bleu = run.report["bleu4"].get<double>();
  report(final_loss.total < kOverfitLoss && epoch_loss < kOverfitLoss && run.log.size() <= kOverfitEpochs &&
             bleu == 100.0 && run.seconds < kOverfitSeconds,
         "overfit pipeline",
         "loss " + num(final_loss.total) + " (last epoch mean " + num(epoch_loss) + ") < " + num(kOverfitLoss) +
             " after " + std::to_string(run.log.size()) + " epochs, BLEU@4 " + num(bleu) + ", " +
             num(run.seconds, 3) + " s");

  // Layer ordering, soft.
  const double l1 = *final_loss.layer1, l3 = *final_loss.layer3, l5 = final_loss.output;
  const bool ordered = l1 + kLayerSlack >= l3 && l3 + kLayerSlack >= l5;
  std::cout << (ordered ? "[PASS] " : "[WARN] ") << "layer ordering (soft): L1 " << num(l1) << ", L3 " << num(l3)
            << ", L5 " << num(l5) << " (slack " << kLayerSlack << ")" << std::endl;

  // Causality, normalization, bounds and decomposition on the trained model.
  const DecoderConfig& config = ck.model->config();
  DecoderParams params = init_decoder_params(config, ck.model->shape().vocab_size, ck.model->shape().feature_width);
  {
    auto dst = named_tensors(params);
    const auto src = std::as_const(*ck.model).parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].tensor = *src[i].tensor;
  }
  bool causal = true, bounded = true;
  double worst_sum = 0.0, worst_decomposition = 0.0;
  const auto check_sum = [&](const std::vector<double>& w) {
    double s = 0.0;
    for (double x : w) s += x;
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
  };
  for (const auto& item : toy.items) {
    ad::Tape tape;
    const DecoderVars vars = bind<DecoderT>(tape, params, false, nullptr);
    const VisualContext visual = project_and_pool(tape.constant(item.frames), vars.feature_proj);
    const ColdStartState cold = make_cold_start(config.seed, item.video_id, config.n);
    const auto base = decoder_forward(vars, config.attention, visual, cold, item.tokens);
    for (const auto& s : base.steps) {
      for (const auto& h : s.hidden)
        for (double x : h.value().values()) bounded = bounded && x > -1.0 && x < 1.0;
      for (const auto& w : s.memory_weights)
        if (w.valid()) check_sum(w.value().data());
      check_sum(s.visual_weights_1.value().data());
      check_sum(s.visual_weights_4.value().data());
    }
    for (std::size_t cut = 1; cut < item.tokens.size(); ++cut) {
      auto perturbed = item.tokens;
      for (std::size_t i = cut; i < perturbed.size(); ++i) perturbed[i] = (perturbed[i] + 1) % ck.vocab.size();
      const auto other = decoder_forward(vars, config.attention, visual, cold, perturbed);
      for (std::size_t t = 0; t < cut; ++t) {
        causal = causal && other.steps[t].logits1.value() == base.steps[t].logits1.value() &&
                 other.steps[t].logits3.value() == base.steps[t].logits3.value() &&
                 other.steps[t].logits5.value() == base.steps[t].logits5.value();
      }
    }
  }
  for (const auto& v : toy.videos) {
    const auto g = ck.model->generate(v.frames, v.video_id);
    for (const auto& site : g.attention)
      for (const auto& w : site.steps) check_sum(w);
  }
  for (std::size_t start = 0; start < toy.items.size(); start += 5) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(start + 5, toy.items.size()); ++i) idx.push_back(i);
    ad::Tape tape;
    const TapeLoss l = ck.model->loss(tape, make_batch(toy.items, idx));
    const double recomposed =
        config.lambda1 * l.layer1->item() + config.lambda3 * l.layer3->item() + config.lambda5 * l.output.item();
    worst_decomposition = std::max(worst_decomposition, std::abs(l.total.item() - recomposed));
  }
  report(causal && bounded && worst_sum <= kWeightSumTolerance && worst_decomposition <= kDecompositionTolerance,
         "causality and normalization",
         std::string("future-token perturbation ") + (causal ? "bit-identical" : "CHANGED earlier logits") +
             ", gated outputs " + (bounded ? "inside" : "OUTSIDE") + " (-1, 1), max |sum(alpha) - 1| " +
             num(worst_sum, 3) + " (<= " + num(kWeightSumTolerance) + "), max decomposition error " +
             num(worst_decomposition, 3) + " (<= " + num(kDecompositionTolerance) + ")");
}

void determinism(const PipelineRun& first) {
  const PipelineRun second = toy_pipeline("determinism", {});
  const bool same_log = first.ok && second.ok && read_text(first.dir / "loss.jsonl") == read_text(second.dir / "loss.jsonl");
  const bool same_dump = first.ok && second.ok && read_text(first.dir / "dump.jsonl") == read_text(second.dir / "dump.jsonl");
  report(same_log && same_dump, "determinism",
         std::string("loss logs ") + (same_log ? "identical" : "DIFFER") + ", generation dumps " +
             (same_dump ? "identical" : "DIFFER"));
}

void metric_oracles() {
  bool ok = true;
  std::string detail;
  const auto close = [&](double got, double want, const std::string& what) {
    if (std::abs(got - want) > kMetricTolerance) {
      ok = false;
      detail += what + " got " + num(got, 17) + " want " + num(want, 17) + "; ";
    }
  };
  const auto short_bleu = bleu4({"the cat sat"}, {{"the cat sat down"}});
  close(short_bleu.score, 0.0, "bleu short");
  close(short_bleu.brevity_penalty, 0.71653131057378927, "brevity penalty");
  close(bleu4({"a man is playing a guitar", "the dog runs in the park"},
              {{"a man is playing the guitar", "a man plays a guitar"},
               {"a dog runs in a park", "the dog is running in the park"}})
            .score,
        52.33175696960528, "bleu corpus");
  const auto c = cider({"a man is playing a guitar", "a dog runs"},
                       {{"a man plays a guitar", "a man is playing guitar"}, {"a dog is running", "the dog runs fast"}});
  close(c.score, 3.6211891107402026, "cider corpus");
  close(c.per_video[0], 4.712874018837563, "cider video 1");
  close(c.per_video[1], 2.5295042026428423, "cider video 2");
  const auto u = cider({"red fox jumps high", "a cat"}, {{"red fox jumps high"}, {"a dog"}});
  close(u.per_video[0], 10.0, "cider unique");
  close(u.score, 5.625, "cider unique corpus");
  // Exact cases.
  if (bleu4({"a man is playing a guitar"}, {{"a man is playing a guitar"}}).score != 100.0) ok = false, detail += "bleu identity; ";
  if (bleu4({"a b c d e"}, {{"v w x y z"}}).score != 0.0) ok = false, detail += "bleu disjoint; ";
  if (cider({"p q r", "s t"}, {{"a b c"}, {"d e"}}).score != 0.0) ok = false, detail += "cider disjoint; ";
  report(ok, "metric oracles", ok ? "bleu4 and cider match the hand oracles to 1e-9, identity and disjoint exact" : detail);
}

void ablation(const std::string& label, const std::vector<std::string>& flags) {
  const PipelineRun r = toy_pipeline("ablation_" + label, flags);
  if (!r.ok) {
    report(false, "ablation " + label, "pipeline did not complete");
    return;
  }
  const LoadedCheckpoint ck = load_checkpoint(r.dir / "model.ckpt");
  const double loss = evaluate_loss(*ck.model, load_toy(r.dir, ck.vocab).items, 5).total;
  report(loss < kOverfitLoss, "ablation " + label,
         "loss " + num(loss) + " < " + num(kOverfitLoss) + " after " + std::to_string(r.log.size()) +
             " epochs, BLEU@4 " + num(r.report["bleu4"].get<double>()));
}

}  // namespace

int main() {
  const auto start = Clock::now();
  gradient_suite();
  parameter_audit();
  const PipelineRun toy = toy_pipeline("overfit", {});
  overfit_and_properties(toy);
  determinism(toy);
  metric_oracles();
  ablation("attention-dot", {"--attention", "dot"});
  ablation("decoder-lstm", {"--decoder", "lstm"});
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << " in "
            << num(seconds_since(start), 3) << " s" << std::endl;
  return failures == 0 ? 0 : 1;
}
