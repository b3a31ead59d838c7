#include "hmd/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "hmd/checkpoint.hpp"
#include "hmd/data.hpp"
#include "hmd/evaluation.hpp"
#include "hmd/metrics.hpp"
#include "hmd/model.hpp"
#include "hmd/param_audit.hpp"
#include "hmd/toy_data.hpp"
#include "hmd/training.hpp"
#include "hmd/verification.hpp"

namespace hmd {

namespace {

namespace fs = std::filesystem;

/// Raised for bad command lines that CLI11 itself cannot detect.
class usage_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelFlags {
  std::string config_path;
  std::size_t n = 0;
  std::size_t d_a = 0;
  double lambda1 = 0, lambda3 = 0, lambda5 = 0;
  std::size_t max_len = 0;
  std::uint64_t seed = 0;
  std::string attention;
  std::string decoder;
  CLI::Option* n_opt = nullptr;
  CLI::Option* d_a_opt = nullptr;
  CLI::Option* l1_opt = nullptr;
  CLI::Option* l3_opt = nullptr;
  CLI::Option* l5_opt = nullptr;
  CLI::Option* max_len_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* attention_opt = nullptr;
  CLI::Option* decoder_opt = nullptr;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file; flags win on conflict");
    n_opt = app->add_option("--n", n, "channel width");
    d_a_opt = app->add_option("--d-a", d_a, "attention width");
    l1_opt = app->add_option("--lambda1", lambda1, "loss weight of layer 1");
    l3_opt = app->add_option("--lambda3", lambda3, "loss weight of layer 3");
    l5_opt = app->add_option("--lambda5", lambda5, "loss weight of the output layer");
    max_len_opt = app->add_option("--max-len", max_len, "maximum generated caption length");
    seed_opt = app->add_option("--seed", seed, "run seed");
    attention_opt = app->add_option("--attention", attention, "soft or dot")->check(CLI::IsMember({"soft", "dot"}));
    decoder_opt = app->add_option("--decoder", decoder, "memory or lstm")->check(CLI::IsMember({"memory", "lstm"}));
  }

  DecoderConfig apply(DecoderConfig c) const {
    if (n_opt->count()) c.n = n;
    if (d_a_opt->count()) c.attention_width = d_a;
    if (l1_opt->count()) c.lambda1 = lambda1;
    if (l3_opt->count()) c.lambda3 = lambda3;
    if (l5_opt->count()) c.lambda5 = lambda5;
    if (max_len_opt->count()) c.max_caption_len = max_len;
    if (seed_opt->count()) c.seed = seed;
    if (attention_opt->count()) c.attention = parse_attention_kind(attention);
    if (decoder_opt->count()) c.decoder = parse_decoder_kind(decoder);
    return c;
  }
};

struct TrainFlags {
  double lr = 0;
  std::size_t batch_size = 0;
  std::size_t epochs = 0;
  double target_loss = 0;
  std::size_t patience = 0;
  CLI::Option* lr_opt = nullptr;
  CLI::Option* batch_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* target_opt = nullptr;
  CLI::Option* patience_opt = nullptr;

  void add_to(CLI::App* app) {
    lr_opt = app->add_option("--lr", lr, "Adam learning rate");
    batch_opt = app->add_option("--batch-size", batch_size, "batch size");
    epochs_opt = app->add_option("--epochs", epochs, "maximum number of epochs");
    target_opt = app->add_option("--target-loss", target_loss, "stop once the epoch loss is below this value");
    patience_opt = app->add_option("--patience", patience, "early-stopping patience on validation loss");
  }

  TrainOptions apply(TrainOptions o) const {
    if (lr_opt->count()) o.adam.learning_rate = lr;
    if (batch_opt->count()) o.batch_size = batch_size;
    if (epochs_opt->count()) o.epochs = epochs;
    if (target_opt->count()) o.target_loss = target_loss;
    if (patience_opt->count()) o.patience = patience;
    return o;
  }
};

/// Splits a config file into model and training settings.
void load_config_file(const std::string& path, DecoderConfig& config, TrainOptions& options) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw config_error("config file must hold a JSON object");
  nlohmann::json model = nlohmann::json::object();
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "lr") options.adam.learning_rate = value.get<double>();
      else if (key == "batch_size") options.batch_size = value.get<std::size_t>();
      else if (key == "epochs") options.epochs = value.get<std::size_t>();
      else if (key == "target_loss") options.target_loss = value.get<double>();
      else if (key == "patience") options.patience = value.get<std::size_t>();
      else model[key] = value;
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("bad training setting in config file: ") + e.what());
  }
  config = config_from_json(model, config);
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw usage_error(std::string(flag) + " is required");
}

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------

struct Paths {
  std::string features_dir;
  std::string manifest;
  std::string vocab;
  std::string checkpoint;
  std::string out;
  std::string split;
};

int cmd_train(const Paths& p, const ModelFlags& mf, const TrainFlags& tf, std::size_t min_count,
              std::ostream& out) {
  require(p.features_dir, "--features-dir");
  require(p.manifest, "--manifest");
  require(p.checkpoint, "--checkpoint");
  DecoderConfig config;
  TrainOptions options;
  load_config_file(mf.config_path, config, options);
  config = mf.apply(config);
  options = tf.apply(options);
  config.validate();
  if (options.batch_size == 0) throw config_error("batch size must be positive");
  if (!(options.adam.learning_rate > 0)) throw config_error("learning rate must be positive");
  options.seed = config.seed;

  const auto manifest = read_manifest(p.manifest);
  const auto train_entries = select_split(manifest, "train");
  if (train_entries.empty()) throw std::runtime_error("manifest has no train split");
  Vocabulary vocab;
  if (!p.vocab.empty() && fs::exists(p.vocab)) {
    vocab = read_vocab(p.vocab);
  } else {
    std::vector<std::string> corpus;
    for (const auto& e : train_entries) corpus.insert(corpus.end(), e.captions.begin(), e.captions.end());
    vocab = build_vocab(corpus, min_count);
    if (!p.vocab.empty()) write_vocab(vocab, p.vocab);
  }
  const auto items = load_train_items(p.features_dir, train_entries, vocab);
  const auto validation = load_train_items(p.features_dir, select_split(manifest, "val"), vocab);
  if (items.empty()) throw std::runtime_error("train split has no usable captions");

  auto model = make_captioner(config, {vocab.size(), items.front().frames.cols()});
  AdamState adam = make_adam_state(std::as_const(*model).parameters(), options.adam);

  std::ofstream log;
  if (!p.out.empty()) {
    log.open(p.out, std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write loss log " + p.out);
  }
  out << "training " << to_string(config.decoder) << " decoder (" << to_string(config.attention)
      << " attention) on " << items.size() << " captions, vocabulary " << vocab.size() << ", config "
      << config_hash(config) << "\n";
  const TrainResult result = train(*model, items, validation, adam, options, {}, [&](const EpochStats& s) {
    const std::string line = epoch_log_line(s);
    if (log.is_open()) log << line << "\n";
    out << line << "\n";
  });
  save_checkpoint(p.checkpoint, *model, vocab, result.progress, &adam);

  const LossBreakdown final_loss = evaluate_loss(*model, items, options.batch_size);
  out << "stopped: " << to_string(result.reason) << " after " << result.progress.epoch << " epochs\n";
  out << "final training loss " << fmt(final_loss.total);
  if (final_loss.layer1) out << " (L1 " << fmt(*final_loss.layer1) << ", L3 " << fmt(*final_loss.layer3) << ", L5 "
                             << fmt(final_loss.output) << ")";
  out << "\ncheckpoint written to " << p.checkpoint << "\n";
  return kExitOk;
}

struct LoadedSplit {
  LoadedCheckpoint checkpoint;
  std::vector<EvalVideo> videos;
};

LoadedSplit load_for_eval(const Paths& p, std::optional<std::size_t> max_len) {
  require(p.checkpoint, "--checkpoint");
  require(p.features_dir, "--features-dir");
  require(p.manifest, "--manifest");
  LoadedSplit s;
  s.checkpoint = load_checkpoint(p.checkpoint);
  if (max_len) {
    DecoderConfig c = s.checkpoint.model->config();
    c.max_caption_len = *max_len;
    auto fresh = make_captioner(c, s.checkpoint.model->shape());
    auto dst = fresh->parameters();
    const auto src = std::as_const(*s.checkpoint.model).parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].tensor = *src[i].tensor;
    s.checkpoint.model = std::move(fresh);
  }
  s.videos = load_eval_videos(p.features_dir, select_split(read_manifest(p.manifest), p.split));
  if (s.videos.empty()) throw std::runtime_error("split '" + p.split + "' is empty");
  return s;
}

int cmd_generate(const Paths& p, std::optional<std::size_t> max_len, std::ostream& out) {
  require(p.out, "--out");
  const LoadedSplit s = load_for_eval(p, max_len);
  const auto gens = generate_split(*s.checkpoint.model, s.checkpoint.vocab, s.videos);
  write_generation_dump(gens, p.out);
  for (const auto& g : gens) out << g.video_id << "\t" << g.text << "\n";
  out << gens.size() << " generations written to " << p.out << "\n";
  return kExitOk;
}

int cmd_evaluate(const Paths& p, std::optional<std::size_t> max_len, const std::string& dump, std::ostream& out) {
  const LoadedSplit s = load_for_eval(p, max_len);
  const SplitEvaluation ev = evaluate_split(*s.checkpoint.model, s.checkpoint.vocab, s.videos);
  if (!dump.empty()) write_generation_dump(ev.generations, dump);
  const std::string report = report_to_json(ev.report).dump(2) + "\n";
  if (!p.out.empty()) write_text(p.out, report);
  for (std::size_t i = 0; i < ev.generations.size(); ++i) {
    out << ev.generations[i].video_id << "\t" << ev.generations[i].text << "\t(smoothed sentence BLEU "
        << fmt(sentence_bleu_smoothed(ev.generations[i].text, s.videos[i].references), 2) << ")\n";
  }
  out << report;
  return kExitOk;
}

int cmd_count_params(const ModelFlags& mf, std::size_t q, std::size_t vocab_size, const std::string& scope_name,
                     const std::string& out_path, std::ostream& out) {
  DecoderConfig config;
  TrainOptions unused;
  load_config_file(mf.config_path, config, unused);
  config = mf.apply(config);
  if (config.n == 0 || config.attention_width == 0) throw config_error("n and d_a must be positive");
  if (q == 0 || vocab_size == 0) throw config_error("--q and --vocab-size must be positive");
  const AuditScope scope = parse_audit_scope(scope_name);
  const ParamAudit memory = count_params(memory_decoder_inventory(config, vocab_size, q), scope, "memory decoder");
  const ParamAudit lstm = count_params(lstm_baseline_inventory(config, vocab_size, q), scope, "one-layer attention LSTM");
  out << "n=" << config.n << " d_a=" << config.attention_width << " q=" << q << " |Vocab|=" << vocab_size << "\n";
  out << format_audit(memory) << format_audit(lstm);
  out << "memory decoder " << to_string(scope) << " total: " << memory.total << "\n";
  out << "lstm baseline " << to_string(scope) << " total: " << lstm.total << "\n";
  out << "memory decoder smaller than lstm baseline: " << (memory.total < lstm.total ? "yes" : "no") << "\n";
  if (!out_path.empty()) {
    const auto to_json = [](const ParamAudit& a) {
      nlohmann::ordered_json j;
      j["model"] = a.model;
      j["scope"] = std::string(to_string(a.scope));
      j["total"] = a.total;
      nlohmann::ordered_json items = nlohmann::ordered_json::array();
      for (const auto& e : a.included) {
        items.push_back({{"name", e.name}, {"shape", e.shape}, {"role", to_string(e.role)}, {"count", e.count}});
      }
      j["items"] = items;
      nlohmann::ordered_json excluded = nlohmann::ordered_json::array();
      for (const auto& e : a.excluded) {
        excluded.push_back({{"name", e.name}, {"shape", e.shape}, {"role", to_string(e.role)}, {"count", e.count}});
      }
      j["excluded"] = excluded;
      return j;
    };
    nlohmann::ordered_json j;
    j["memory_decoder"] = to_json(memory);
    j["lstm_baseline"] = to_json(lstm);
    write_text(out_path, j.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_inspect_attention(const Paths& p, const std::string& video, std::ostream& out) {
  require(p.checkpoint, "--checkpoint");
  require(p.features_dir, "--features-dir");
  require(video, "--video");
  const LoadedCheckpoint ck = load_checkpoint(p.checkpoint);
  const FeatureFile f = read_feature_file(feature_path(p.features_dir, video));
  GenerationResult g = ck.model->generate(f.to_tensor(), video);
  g.text = decode_tokens(g.tokens, ck.vocab);
  if (!p.out.empty()) write_text(p.out, generation_to_json(g).dump(2) + "\n");

  std::vector<std::string> words;
  for (auto t : g.tokens) words.push_back(ck.vocab.token(t));
  out << "video " << g.video_id << ": \"" << g.text << "\"\n";
  for (const auto& site : g.attention) {
    out << site.name << "\n";
    const bool memory_site = site.name.rfind("memory_", 0) == 0;
    for (std::size_t s = 0; s < site.steps.size(); ++s) {
      // Memory sites start at decoding step 2.
      const std::size_t step = memory_site ? s + 2 : s + 1;
      out << "  step " << step;
      if (step - 1 < words.size()) out << " (" << words[step - 1] << ")";
      else out << " (<eos>)";
      out << ":";
      for (double w : site.steps[s]) out << " " << fmt(w, 3);
      out << "\n";
    }
  }
  return kExitOk;
}

int cmd_grad_check(std::uint64_t seed, std::size_t points, std::ostream& out) {
  GradSuiteOptions o;
  o.seed = seed;
  o.primitive_points = points;
  const GradSuiteReport r = run_gradient_suite(o);
  out << format_grad_suite(r);
  out << (r.passed() ? "PASS" : "FAIL") << ": max relative error " << r.max_rel_error << " (threshold 1e-4)\n";
  return r.passed() ? kExitOk : kExitRuntime;
}

int cmd_make_toy_data(const std::string& dir, std::uint64_t seed, std::ostream& out) {
  require(dir, "--out");
  ToyCorpusSpec spec;
  spec.seed = seed;
  write_toy_corpus(make_toy_corpus(spec), dir);
  // Settings that overfit the toy corpus well within 500 epochs.
  nlohmann::ordered_json cfg;
  cfg["n"] = 32;
  cfg["d_a"] = 16;
  cfg["lr"] = 0.005;
  cfg["batch_size"] = 5;
  cfg["epochs"] = 300;
  write_text(fs::path(dir) / "config.json", cfg.dump(2) + "\n");
  out << "toy corpus written to " << dir << " (features/, manifest.jsonl, vocab.tsv, config.json)\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical memory decoder toolkit for caption generation", "hmdec"};
  app.require_subcommand(1);

  Paths paths;
  ModelFlags mf_train, mf_count;
  std::size_t eval_max_len = 0;
  TrainFlags tf;
  std::size_t min_count = 1;
  std::string dump;
  std::size_t q = 1024;
  std::size_t vocab_size = 12596;
  std::string scope = "decoder-core";
  std::string video;
  std::uint64_t seed = 0;
  std::size_t points = 10;

  const auto add_paths = [&](CLI::App* sub, bool split) {
    sub->add_option("--features-dir", paths.features_dir, "directory of <video_id>.vff files");
    sub->add_option("--manifest", paths.manifest, "caption manifest (JSON lines)");
    sub->add_option("--checkpoint", paths.checkpoint, "checkpoint file");
    sub->add_option("--out", paths.out, "output file");
    if (split) sub->add_option("--split", paths.split, "train, val or test")->default_val("test");
  };

  auto* train = app.add_subcommand("train", "fit a model, write a checkpoint and a per-epoch loss log");
  add_paths(train, false);
  train->add_option("--vocab", paths.vocab, "vocabulary file; built from the train split and written here if absent");
  train->add_option("--min-count", min_count, "minimum token count when building the vocabulary");
  mf_train.add_to(train);
  tf.add_to(train);

  auto* generate = app.add_subcommand("generate", "greedy-decode a split and dump the generations");
  add_paths(generate, true);
  auto* gen_max_len = generate->add_option("--max-len", eval_max_len, "override the maximum caption length");

  auto* evaluate = app.add_subcommand("evaluate", "BLEU@4 / CIDEr report for a split");
  add_paths(evaluate, true);
  evaluate->add_option("--dump", dump, "also write the generation dump here");
  auto* eval_max_len_opt = evaluate->add_option("--max-len", eval_max_len, "override the maximum caption length");

  auto* count = app.add_subcommand("count-params", "itemized parameter audit: memory decoder vs LSTM baseline");
  mf_count.add_to(count);
  count->add_option("--q", q, "raw frame feature width")->default_val(1024);
  count->add_option("--vocab-size", vocab_size, "vocabulary size")->default_val(12596);
  count->add_option("--scope", scope, "decoder-core or full")->default_val("decoder-core");
  count->add_option("--out", paths.out, "also write the audit as JSON");

  auto* inspect = app.add_subcommand("inspect-attention", "per-layer attention weights for one video");
  inspect->add_option("--checkpoint", paths.checkpoint, "checkpoint file");
  inspect->add_option("--features-dir", paths.features_dir, "directory of <video_id>.vff files");
  inspect->add_option("--video", video, "video id");
  inspect->add_option("--out", paths.out, "also write the generation record as JSON");

  auto* grad = app.add_subcommand("grad-check", "run the finite-difference gradient suite");
  grad->add_option("--seed", seed, "seed for the random evaluation points");
  grad->add_option("--points", points, "random points per primitive")->default_val(10);

  auto* toy = app.add_subcommand("make-toy-data", "write the synthetic overfit corpus");
  toy->add_option("--out", paths.out, "output directory");
  toy->add_option("--seed", seed, "corpus seed");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(paths, mf_train, tf, min_count, out);
    const auto max_len = [&](CLI::Option* o) {
      return o->count() ? std::optional<std::size_t>(eval_max_len) : std::nullopt;
    };
    if (*generate) return cmd_generate(paths, max_len(gen_max_len), out);
    if (*evaluate) return cmd_evaluate(paths, max_len(eval_max_len_opt), dump, out);
    if (*count) return cmd_count_params(mf_count, q, vocab_size, scope, paths.out, out);
    if (*inspect) return cmd_inspect_attention(paths, video, out);
    if (*grad) return cmd_grad_check(seed, points, out);
    if (*toy) return cmd_make_toy_data(paths.out, seed, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace hmd
