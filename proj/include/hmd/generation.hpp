#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hmd {

/// Attention weights recorded at one attention site, one vector per decoding
/// step at which the site was active.
struct AttentionSite {
  std::string name;
  std::vector<std::vector<double>> steps;
};

struct GenerationResult {
  std::string video_id;
  /// Emitted tokens, without BOS/EOS.
  std::vector<std::size_t> tokens;
  std::string text;
  std::vector<AttentionSite> attention;
};

}  // namespace hmd
