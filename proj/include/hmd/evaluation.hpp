#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "hmd/data.hpp"
#include "hmd/generation.hpp"
#include "hmd/model.hpp"

namespace hmd {

struct EvalReport {
  double bleu4 = 0.0;
  double cider = 0.0;
  double mean_len = 0.0;
  std::string config_hash;
};

/// FNV-1a (hex) of the canonical config JSON.
std::string config_hash(const DecoderConfig& config);

/// Greedy decode of every video, in input order, with text filled in.
std::vector<GenerationResult> generate_split(const Captioner& model, const Vocabulary& vocab,
                                             const std::vector<EvalVideo>& videos);

/// Metrics of generated captions against the videos' references.
EvalReport score_generations(const std::vector<GenerationResult>& generations, const std::vector<EvalVideo>& videos,
                             const std::string& hash);

struct SplitEvaluation {
  EvalReport report;
  std::vector<GenerationResult> generations;
};

SplitEvaluation evaluate_split(const Captioner& model, const Vocabulary& vocab, const std::vector<EvalVideo>& videos);

nlohmann::ordered_json generation_to_json(const GenerationResult& g);
GenerationResult generation_from_json(const nlohmann::json& j);
nlohmann::ordered_json report_to_json(const EvalReport& r);

/// One JSON line per generation.
void write_generation_dump(const std::vector<GenerationResult>& generations, const std::filesystem::path& path);
std::vector<GenerationResult> read_generation_dump(const std::filesystem::path& path);

}  // namespace hmd
