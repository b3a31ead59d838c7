#include "hmd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hmd {

namespace {

using Words = std::vector<std::string>;
using Gram = std::vector<std::string>;
using Counts = std::map<Gram, std::size_t>;

Words split(const std::string& s) {
  std::istringstream is(s);
  Words out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

Counts ngrams(const Words& w, std::size_t n) {
  Counts out;
  for (std::size_t i = 0; i + n <= w.size(); ++i) ++out[Gram(w.begin() + static_cast<std::ptrdiff_t>(i),
                                                             w.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

void check_inputs(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& refs) {
  if (candidates.empty()) throw std::invalid_argument("metric: empty candidate set");
  if (candidates.size() != refs.size()) throw std::invalid_argument("metric: one reference group per candidate");
  for (const auto& r : refs) {
    if (r.empty()) throw std::invalid_argument("metric: every candidate needs at least one reference");
  }
}

struct SentenceStats {
  std::array<std::size_t, 4> matched{};
  std::array<std::size_t, 4> totals{};
  std::size_t cand_len = 0;
  std::size_t ref_len = 0;
};

SentenceStats sentence_stats(const std::string& candidate, const std::vector<std::string>& references) {
  SentenceStats s;
  const Words c = split(candidate);
  std::vector<Words> refs;
  for (const auto& r : references) refs.push_back(split(r));
  s.cand_len = c.size();
  std::size_t best = 0;
  bool first = true;
  for (const auto& r : refs) {
    const auto diff = [&](std::size_t len) { return len > s.cand_len ? len - s.cand_len : s.cand_len - len; };
    if (first || diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) best = r.size();
    first = false;
  }
  s.ref_len = best;
  for (std::size_t n = 1; n <= 4; ++n) {
    Counts max_ref;
    for (const auto& r : refs) {
      for (const auto& [g, k] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], k);
    }
    for (const auto& [g, k] : ngrams(c, n)) {
      const auto it = max_ref.find(g);
      s.matched[n - 1] += std::min(k, it == max_ref.end() ? std::size_t{0} : it->second);
      s.totals[n - 1] += k;
    }
  }
  return s;
}

double brevity_penalty(std::size_t cand_len, std::size_t ref_len) {
  if (cand_len == 0) return 0.0;
  return cand_len > ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
}

}  // namespace

BleuResult bleu4(const std::vector<std::string>& candidates,
                 const std::vector<std::vector<std::string>>& references) {
  check_inputs(candidates, references);
  BleuResult r;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const SentenceStats s = sentence_stats(candidates[i], references[i]);
    for (std::size_t n = 0; n < 4; ++n) {
      r.matched[n] += s.matched[n];
      r.totals[n] += s.totals[n];
    }
    r.candidate_length += s.cand_len;
    r.reference_length += s.ref_len;
  }
  r.brevity_penalty = brevity_penalty(r.candidate_length, r.reference_length);
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    r.precisions[n] = r.totals[n] == 0 ? 0.0 : static_cast<double>(r.matched[n]) / static_cast<double>(r.totals[n]);
    if (r.precisions[n] == 0.0) zero = true;
    else log_sum += std::log(r.precisions[n]);
  }
  r.score = zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

double sentence_bleu_smoothed(const std::string& candidate, const std::vector<std::string>& references) {
  if (references.empty()) throw std::invalid_argument("sentence_bleu_smoothed: no references");
  const SentenceStats s = sentence_stats(candidate, references);
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    const bool smooth = n >= 2;
    const double num = static_cast<double>(s.matched[n]) + (smooth ? 1.0 : 0.0);
    const double den = static_cast<double>(s.totals[n]) + (smooth ? 1.0 : 0.0);
    if (num == 0.0 || den == 0.0) return 0.0;
    log_sum += std::log(num / den);
  }
  return 100.0 * brevity_penalty(s.cand_len, s.ref_len) * std::exp(log_sum / 4.0);
}

CiderResult cider(const std::vector<std::string>& candidates,
                  const std::vector<std::vector<std::string>>& references) {
  check_inputs(candidates, references);
  const std::size_t videos = candidates.size();
  const double log_n = std::log(static_cast<double>(videos));

  std::array<std::map<Gram, std::size_t>, 4> df;
  for (const auto& group : references) {
    for (std::size_t n = 1; n <= 4; ++n) {
      std::set<Gram> seen;
      for (const auto& r : group) {
        for (const auto& [g, k] : ngrams(split(r), n)) seen.insert(g);
      }
      for (const auto& g : seen) ++df[n - 1][g];
    }
  }

  const auto tfidf = [&](const Words& w, std::size_t n) {
    std::map<Gram, double> v;
    for (const auto& [g, k] : ngrams(w, n)) {
      const auto it = df[n - 1].find(g);
      const double d = it == df[n - 1].end() ? 1.0 : static_cast<double>(std::max<std::size_t>(1, it->second));
      v[g] = static_cast<double>(k) * (log_n - std::log(d));
    }
    return v;
  };
  const auto norm = [](const std::map<Gram, double>& v) {
    double s = 0.0;
    for (const auto& [g, x] : v) s += x * x;
    return std::sqrt(s);
  };

  CiderResult out;
  for (std::size_t i = 0; i < videos; ++i) {
    const Words c = split(candidates[i]);
    double total = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto cv = tfidf(c, n);
      const double cn = norm(cv);
      double acc = 0.0;
      for (const auto& r : references[i]) {
        const auto rv = tfidf(split(r), n);
        const double rn = norm(rv);
        if (cn == 0.0 || rn == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, x] : cv) {
          const auto it = rv.find(g);
          if (it != rv.end()) dot += x * it->second;
        }
        acc += dot / (cn * rn);
      }
      total += acc / static_cast<double>(references[i].size());
    }
    out.per_video.push_back(10.0 * total / 4.0);
  }
  double sum = 0.0;
  for (double v : out.per_video) sum += v;
  out.score = sum / static_cast<double>(videos);
  return out;
}

}  // namespace hmd
