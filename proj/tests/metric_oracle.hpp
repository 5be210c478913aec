#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "twon/rng.hpp"

namespace twon::testing {

// Counting by linear scans over explicit n-gram copies; shares no code with
// the library's map-based counter.

using Gram = std::vector<std::string>;

inline std::vector<std::string> split_spaces(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

inline std::vector<Gram> grams(const std::vector<std::string>& toks, std::size_t n) {
  std::vector<Gram> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) out.emplace_back(toks.begin() + i, toks.begin() + i + n);
  return out;
}

/// Sum over distinct candidate n-grams of min(count in cand, count in ref).
inline std::size_t oracle_matches(const std::vector<Gram>& cand, const std::vector<Gram>& ref) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    bool seen = false;
    for (std::size_t j = 0; j < i; ++j) seen = seen || cand[j] == cand[i];
    if (seen) continue;
    std::size_t in_cand = 0, in_ref = 0;
    for (const auto& g : cand) in_cand += g == cand[i];
    for (const auto& g : ref) in_ref += g == cand[i];
    total += std::min(in_cand, in_ref);
  }
  return total;
}

inline double oracle_precision(const std::string& cand, const std::string& ref, std::size_t n) {
  const auto c = grams(split_spaces(cand), n);
  return static_cast<double>(oracle_matches(c, grams(split_spaces(ref), n))) / static_cast<double>(c.size());
}

inline double oracle_bleu(const std::string& cand, const std::string& ref, std::size_t max_n, double eps) {
  const auto c = split_spaces(cand), r = split_spaces(ref);
  const std::size_t orders = std::min(max_n, c.size());
  double product = 1.0;
  for (std::size_t n = 1; n <= orders; ++n) {
    const auto cg = grams(c, n);
    const std::size_t m = oracle_matches(cg, grams(r, n));
    product *= m == 0 ? eps / static_cast<double>(cg.size()) : static_cast<double>(m) / static_cast<double>(cg.size());
  }
  const double bp = c.size() < r.size() ? std::exp(1.0 - static_cast<double>(r.size()) / static_cast<double>(c.size()))
                                        : 1.0;
  return bp * std::pow(product, 1.0 / static_cast<double>(orders));
}

inline double oracle_length_ratio(const std::string& gen, const std::string& orig) {
  return static_cast<double>(split_spaces(gen).size()) / static_cast<double>(split_spaces(orig).size());
}

/// 1 to 10 tokens from a five-word vocabulary, so repeats are common.
inline std::string random_text(Rng& rng) {
  static const char* vocab[] = {"a", "b", "c", "d", "e"};
  const std::size_t n = 1 + rng.below(10);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += vocab[rng.below(5)];
  }
  return s;
}

}  // namespace twon::testing
