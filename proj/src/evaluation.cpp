#include "hmd/evaluation.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "hmd/hashing.hpp"
#include "hmd/metrics.hpp"

namespace hmd {

std::string config_hash(const DecoderConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_to_json(config).dump())));
  return buf;
}

std::vector<GenerationResult> generate_split(const Captioner& model, const Vocabulary& vocab,
                                             const std::vector<EvalVideo>& videos) {
  std::vector<GenerationResult> out;
  for (const auto& v : videos) {
    GenerationResult g = model.generate(v.frames, v.video_id);
    g.text = decode_tokens(g.tokens, vocab);
    out.push_back(std::move(g));
  }
  return out;
}

EvalReport score_generations(const std::vector<GenerationResult>& generations, const std::vector<EvalVideo>& videos,
                             const std::string& hash) {
  if (generations.size() != videos.size()) throw std::invalid_argument("score_generations: count mismatch");
  std::vector<std::string> candidates;
  std::vector<std::vector<std::string>> refs;
  double len = 0.0;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (generations[i].video_id != videos[i].video_id) {
      throw std::invalid_argument("score_generations: generation for " + generations[i].video_id +
                                  " does not line up with video " + videos[i].video_id);
    }
    candidates.push_back(generations[i].text);
    refs.push_back(videos[i].references);
    len += static_cast<double>(generations[i].tokens.size());
  }
  EvalReport r;
  r.bleu4 = bleu4(candidates, refs).score;
  r.cider = cider(candidates, refs).score;
  r.mean_len = len / static_cast<double>(videos.size());
  r.config_hash = hash;
  return r;
}

SplitEvaluation evaluate_split(const Captioner& model, const Vocabulary& vocab, const std::vector<EvalVideo>& videos) {
  if (videos.empty()) throw std::invalid_argument("evaluate_split: empty split");
  SplitEvaluation out;
  out.generations = generate_split(model, vocab, videos);
  out.report = score_generations(out.generations, videos, config_hash(model.config()));
  return out;
}

nlohmann::ordered_json generation_to_json(const GenerationResult& g) {
  nlohmann::ordered_json j;
  j["video_id"] = g.video_id;
  j["caption"] = g.text;
  j["tokens"] = g.tokens;
  nlohmann::ordered_json att = nlohmann::ordered_json::object();
  for (const auto& site : g.attention) att[site.name] = site.steps;
  j["attention"] = att;
  return j;
}

GenerationResult generation_from_json(const nlohmann::json& j) {
  GenerationResult g;
  g.video_id = j.at("video_id").get<std::string>();
  g.text = j.at("caption").get<std::string>();
  g.tokens = j.at("tokens").get<std::vector<std::size_t>>();
  for (const auto& [name, steps] : j.at("attention").items()) {
    g.attention.push_back({name, steps.get<std::vector<std::vector<double>>>()});
  }
  return g;
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["bleu4"] = r.bleu4;
  j["cider"] = r.cider;
  j["mean_len"] = r.mean_len;
  j["config_hash"] = r.config_hash;
  return j;
}

void write_generation_dump(const std::vector<GenerationResult>& generations, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write generation dump " + path.string());
  for (const auto& g : generations) out << generation_to_json(g).dump() << "\n";
}

std::vector<GenerationResult> read_generation_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open generation dump " + path.string());
  std::vector<GenerationResult> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(generation_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace hmd
