#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "twon/embedding.hpp"
#include "twon/error.hpp"
#include "twon/message.hpp"
#include "twon/rng.hpp"
#include "twon/text.hpp"

namespace twon::metrics {

using Tokens = std::vector<std::string>;

namespace detail {

/// Clipped n-gram matches and the number of candidate n-grams.
inline std::pair<std::size_t, std::size_t> clipped_matches(const Tokens& cand, const Tokens& ref, std::size_t n) {
  if (cand.size() < n) return {0, 0};
  std::map<std::span<const std::string>, std::size_t,
           decltype([](std::span<const std::string> a, std::span<const std::string> b) {
             return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
           })>
      ref_counts, cand_counts;
  const std::span<const std::string> c(cand), r(ref);
  for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[r.subspan(i, n)];
  for (std::size_t i = 0; i + n <= c.size(); ++i) ++cand_counts[c.subspan(i, n)];
  std::size_t matched = 0;
  for (const auto& [gram, count] : cand_counts) {
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) matched += std::min(count, it->second);
  }
  return {matched, cand.size() - n + 1};
}

}  // namespace detail

/// Sentence BLEU on whitespace tokens. Orders run from 1 to
/// min(max_n, candidate length); an order with no matches contributes
/// epsilon / (candidate n-grams) instead of zero. Brevity penalty
/// exp(1 - r/c) applies when the candidate is shorter than the reference.
inline double bleu(const Tokens& cand, const Tokens& ref, int max_n = 4, double epsilon = 0.1) {
  if (max_n < 1 || max_n > 4) throw InputError("bleu max_n must be in 1..4");
  if (!(epsilon > 0.0)) throw InputError("bleu smoothing epsilon must be positive");
  if (cand.empty() || ref.empty()) throw InputError("bleu needs non-empty candidate and reference");
  const std::size_t orders = std::min<std::size_t>(static_cast<std::size_t>(max_n), cand.size());
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= orders; ++n) {
    const auto [matched, total] = detail::clipped_matches(cand, ref, n);
    const double p = matched == 0 ? epsilon / static_cast<double>(total)
                                  : static_cast<double>(matched) / static_cast<double>(total);
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(orders));
}

inline double bleu(std::string_view candidate, std::string_view reference, int max_n = 4, double epsilon = 0.1) {
  return bleu(text::tokenize(candidate), text::tokenize(reference), max_n, epsilon);
}

/// Modified (clipped) n-gram precision of the candidate against the reference.
inline double ngram_precision(const Tokens& cand, const Tokens& ref, int n) {
  if (n != 1 && n != 2) throw InputError("ngram_precision supports n = 1 or 2");
  if (cand.size() < static_cast<std::size_t>(n))
    throw InputError("candidate has fewer than " + std::to_string(n) + " tokens");
  const auto [matched, total] = detail::clipped_matches(cand, ref, static_cast<std::size_t>(n));
  return static_cast<double>(matched) / static_cast<double>(total);
}

inline double ngram_precision(std::string_view candidate, std::string_view reference, int n) {
  return ngram_precision(text::tokenize(candidate), text::tokenize(reference), n);
}

inline double length_ratio(const Tokens& generated, const Tokens& original) {
  if (original.empty()) throw InputError("length_ratio: original has no tokens");
  return static_cast<double>(generated.size()) / static_cast<double>(original.size());
}

inline double length_ratio(std::string_view generated, std::string_view original) {
  return length_ratio(text::tokenize(generated), text::tokenize(original));
}

enum class DistanceKind { Euclidean, Cosine };

inline const char* to_string(DistanceKind k) { return k == DistanceKind::Euclidean ? "euclidean" : "cosine"; }

inline DistanceKind parse_distance(const std::string& s) {
  if (s == "euclidean") return DistanceKind::Euclidean;
  if (s == "cosine") return DistanceKind::Cosine;
  throw InputError("unknown distance kind '" + s + "'");
}

inline double embedding_distance(const EmbeddingVector& a, const EmbeddingVector& b,
                                 DistanceKind kind = DistanceKind::Euclidean) {
  if (a.dim() != b.dim()) throw InputError("embedding dimensions differ");
  if (kind == DistanceKind::Euclidean) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
      const double d = a.values[i] - b.values[i];
      s += d * d;
    }
    return std::sqrt(s);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) throw InputError("cosine distance of a zero vector");
  return std::max(0.0, 1.0 - dot / std::sqrt(na * nb));
}

/// Sample Pearson correlation. Errors (never returns 0) when undefined.
inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InputError("pearson: length mismatch");
  if (xs.size() < 2) throw InputError("pearson: need at least two points");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (constant(xs) || constant(ys)) throw NumericError("pearson: zero variance, correlation undefined");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct LabelCorrelation {
  std::vector<std::string> subclass_names;
  std::vector<std::optional<double>> per_subclass;  // nullopt: zero variance
  std::optional<double> aggregate;                  // mean over defined subclasses
};

/// Per-subclass Pearson r between original and generated label scores
/// (rows are samples), aggregated by the mean over defined subclasses.
inline LabelCorrelation label_correlation(std::span<const std::vector<double>> original,
                                          std::span<const std::vector<double>> generated,
                                          std::span<const std::string> subclass_names) {
  if (original.size() != generated.size()) throw InputError("label_correlation: sample counts differ");
  const std::size_t s = subclass_names.size();
  if (s == 0) throw InputError("label_correlation: no subclasses");
  for (std::size_t i = 0; i < original.size(); ++i)
    if (original[i].size() != s || generated[i].size() != s)
      throw InputError("label_correlation: label vector width differs from subclass count");

  LabelCorrelation out;
  out.subclass_names.assign(subclass_names.begin(), subclass_names.end());
  double sum = 0.0;
  std::size_t defined = 0;
  std::vector<double> xs(original.size()), ys(original.size());
  for (std::size_t c = 0; c < s; ++c) {
    for (std::size_t i = 0; i < original.size(); ++i) {
      xs[i] = original[i][c];
      ys[i] = generated[i][c];
    }
    try {
      const double r = pearson(xs, ys);
      out.per_subclass.push_back(r);
      sum += r;
      ++defined;
    } catch (const NumericError&) {
      out.per_subclass.push_back(std::nullopt);
    }
  }
  if (defined) out.aggregate = sum / static_cast<double>(defined);
  return out;
}

// ---------------------------------------------------------------------------
// Aggregated realism report
// ---------------------------------------------------------------------------

/// Label scores of one sample pair for one category.
struct LabelPair {
  std::vector<std::string> subclass_names;
  std::vector<double> original;
  std::vector<double> generated;
};

struct EvalPair {
  std::string original;
  std::string generated;
  std::optional<std::pair<EmbeddingVector, EmbeddingVector>> embeddings;  // (original, generated)
  std::map<std::string, LabelPair> labels;                                // by category
};

/// Label categories in report order.
inline const std::vector<std::string>& label_categories() {
  static const std::vector<std::string> c{"topics", "emotions", "sentiment", "offensive", "hate", "irony"};
  return c;
}

enum class Task { Post, Reply };
inline const char* to_string(Task t) { return t == Task::Post ? "post" : "reply"; }

struct MetricStat {
  std::string name;
  double mean = 0.0;
  double std = 0.0;
  std::size_t repetitions = 0;  // repetitions in which the metric was defined
};

inline constexpr int kDefaultSamples = 100;
inline constexpr int kDefaultRepetitions = 10;

struct ReportOptions {
  int n = kDefaultSamples;
  int k = kDefaultRepetitions;
  std::uint64_t seed = 0;
  int bleu_max_n = 4;
  double epsilon = 0.1;
  DistanceKind distance = DistanceKind::Euclidean;
  Task task = Task::Post;
  Language language = Language::EN;
  std::string condition = "in-context";
};

struct MetricReport {
  std::vector<MetricStat> metrics;  // fixed row order, see metric_order()
  int n_samples = 0;
  int k_repetitions = 0;
  Task task = Task::Post;
  Language language = Language::EN;
  std::string condition;
  DistanceKind distance = DistanceKind::Euclidean;
  std::uint64_t seed = 0;
  int bleu_max_n = 4;
  double epsilon = 0.1;

  const MetricStat* find(std::string_view name) const {
    for (const auto& m : metrics)
      if (m.name == name) return &m;
    return nullptr;
  }
};

inline std::vector<std::string> metric_order() {
  std::vector<std::string> order{"bleu", "unigram", "bigram", "length_ratio"};
  for (const auto& c : label_categories()) order.push_back("tweeteval." + c);
  order.push_back("embedding_distance");
  return order;
}

inline double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
inline double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

namespace detail {

/// Metric values for one drawn sample. Metrics that are undefined for the
/// sample (e.g. bigram precision of a one-token text) are left out.
inline std::map<std::string, double> score_sample(std::span<const EvalPair* const> sample, const ReportOptions& o) {
  std::map<std::string, std::vector<double>> per;
  for (const EvalPair* p : sample) {
    const auto gen = text::tokenize(p->generated);
    const auto org = text::tokenize(p->original);
    if (org.empty()) throw InputError("evaluation pair with empty original text");
    if (!gen.empty()) {
      per["bleu"].push_back(bleu(gen, org, o.bleu_max_n, o.epsilon));
      per["unigram"].push_back(ngram_precision(gen, org, 1));
      if (gen.size() >= 2) per["bigram"].push_back(ngram_precision(gen, org, 2));
    } else {
      per["bleu"].push_back(0.0);
      per["unigram"].push_back(0.0);
    }
    per["length_ratio"].push_back(length_ratio(gen, org));
    if (p->embeddings)
      per["embedding_distance"].push_back(embedding_distance(p->embeddings->first, p->embeddings->second, o.distance));
  }
  std::map<std::string, double> out;
  for (const auto& [name, values] : per)
    if (!values.empty()) out[name] = mean_of(values);

  for (const auto& category : label_categories()) {
    std::vector<std::vector<double>> orig, gen;
    std::vector<std::string> names;
    for (const EvalPair* p : sample) {
      auto it = p->labels.find(category);
      if (it == p->labels.end()) continue;
      if (names.empty()) names = it->second.subclass_names;
      orig.push_back(it->second.original);
      gen.push_back(it->second.generated);
    }
    if (orig.size() < 2) continue;
    const auto corr = label_correlation(orig, gen, names);
    if (corr.aggregate) out["tweeteval." + category] = *corr.aggregate;
  }
  return out;
}

}  // namespace detail

/// k repetitions of n pairs drawn without replacement (repetition r uses seed
/// mix(seed, r)); each metric is averaged within a repetition, then reported
/// as mean and sample std across repetitions.
inline MetricReport aggregate_report(std::span<const EvalPair> pairs, const ReportOptions& o) {
  if (o.n < 1 || o.k < 1) throw InputError("n and k must be positive");
  if (pairs.size() < static_cast<std::size_t>(o.n))
    throw InputError("need at least n=" + std::to_string(o.n) + " pairs, got " + std::to_string(pairs.size()));

  std::map<std::string, std::vector<double>> per_rep;
  std::vector<std::size_t> idx(pairs.size());
  for (int r = 0; r < o.k; ++r) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(mix_seed(o.seed, static_cast<std::uint64_t>(r)));
    // Partial Fisher-Yates: the first n slots are a uniform draw.
    for (std::size_t i = 0; i < static_cast<std::size_t>(o.n); ++i)
      std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    std::vector<const EvalPair*> sample;
    for (int i = 0; i < o.n; ++i) sample.push_back(&pairs[idx[static_cast<std::size_t>(i)]]);
    for (const auto& [name, v] : detail::score_sample(sample, o)) per_rep[name].push_back(v);
  }

  MetricReport rep;
  rep.n_samples = o.n;
  rep.k_repetitions = o.k;
  rep.task = o.task;
  rep.language = o.language;
  rep.condition = o.condition;
  rep.distance = o.distance;
  rep.seed = o.seed;
  rep.bleu_max_n = o.bleu_max_n;
  rep.epsilon = o.epsilon;
  for (const auto& name : metric_order()) {
    auto it = per_rep.find(name);
    if (it == per_rep.end()) continue;
    rep.metrics.push_back({name, mean_of(it->second), sample_std(it->second), it->second.size()});
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["task"] = to_string(r.task);
  j["language"] = twon::to_string(r.language);
  j["condition"] = r.condition;
  j["n"] = r.n_samples;
  j["k"] = r.k_repetitions;
  j["seed"] = r.seed;
  j["bleu"] = {{"max_n", r.bleu_max_n}, {"epsilon", r.epsilon}};
  j["distance"] = to_string(r.distance);
  j["label_aggregation"] = "mean";
  j["std"] = "sample";
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  for (const auto& s : r.metrics) m[s.name] = {{"mean", s.mean}, {"std", s.std}, {"repetitions", s.repetitions}};
  j["metrics"] = m;
  return j;
}

template <typename Json>
MetricReport report_from_json(const Json& j) {
  try {
    MetricReport r;
    r.task = j.at("task").template get<std::string>() == "post" ? Task::Post : Task::Reply;
    r.language = parse_language(j.at("language").template get<std::string>());
    r.condition = j.at("condition").template get<std::string>();
    r.n_samples = j.at("n").template get<int>();
    r.k_repetitions = j.at("k").template get<int>();
    r.seed = j.value("seed", std::uint64_t{0});
    r.distance = parse_distance(j.value("distance", std::string("euclidean")));
    if (j.contains("bleu")) {
      r.bleu_max_n = j.at("bleu").value("max_n", 4);
      r.epsilon = j.at("bleu").value("epsilon", 0.1);
    }
    for (const auto& [name, v] : j.at("metrics").items()) {
      MetricStat s{name, v.at("mean").template get<double>(), v.at("std").template get<double>(),
                   v.value("repetitions", std::size_t{0})};
      if (s.std < 0) throw DataError("metric '" + name + "' has negative std");
      r.metrics.push_back(s);
    }
    // Plain json objects iterate alphabetically; restore report row order.
    const auto order = metric_order();
    auto rank = [&](const MetricStat& m) {
      return static_cast<std::size_t>(std::find(order.begin(), order.end(), m.name) - order.begin());
    };
    std::stable_sort(r.metrics.begin(), r.metrics.end(),
                     [&](const MetricStat& a, const MetricStat& b) { return rank(a) < rank(b); });
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metric report: ") + e.what());
  }
}

/// Aligned plain-text table, one metric per row.
inline std::string to_table(const MetricReport& r) {
  std::ostringstream os;
  os << "task=" << to_string(r.task) << "  language=" << twon::to_string(r.language) << "  condition=" << r.condition
     << "  n=" << r.n_samples << "  k=" << r.k_repetitions << "  distance=" << to_string(r.distance) << "\n";
  os << std::left << std::setw(24) << "metric" << std::right << std::setw(10) << "mean" << std::setw(12) << "std"
     << "\n";
  os << std::string(46, '-') << "\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& m : r.metrics)
    os << std::left << std::setw(24) << m.name << std::right << std::setw(10) << m.mean << std::setw(6) << "(+-"
       << std::setw(6) << m.std << ")\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Discourse metric q
// ---------------------------------------------------------------------------

class DiscourseMetric {
 public:
  virtual ~DiscourseMetric() = default;
  virtual double evaluate(std::span<const Message> transcript) const = 0;
  virtual std::string name() const = 0;
};

/// Fraction of messages containing at least one lexicon term. Terms and
/// messages are compared as case-folded token sequences, so a multi-word
/// term must appear contiguously.
class LexiconMetric final : public DiscourseMetric {
 public:
  explicit LexiconMetric(std::vector<std::string> terms) {
    for (const auto& t : terms) {
      auto toks = text::tokenize(text::fold_case(t));
      if (!toks.empty()) terms_.push_back(std::move(toks));
    }
    if (terms_.empty()) throw InputError("lexicon is empty");
  }

  /// UTF-8, one term per line; '#' starts a comment line.
  static LexiconMetric from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read lexicon " + path.string());
    std::vector<std::string> terms;
    std::string line;
    while (std::getline(in, line)) {
      const auto t = text::trim(line);
      if (t.empty() || t.front() == '#') continue;
      terms.emplace_back(t);
    }
    return LexiconMetric(std::move(terms));
  }

  double evaluate(std::span<const Message> transcript) const override {
    if (transcript.empty()) throw InputError("discourse metric on an empty transcript");
    std::size_t hits = 0;
    for (const auto& m : transcript) {
      const auto toks = text::tokenize(text::fold_case(m.text));
      if (std::any_of(terms_.begin(), terms_.end(), [&](const Tokens& term) {
            return std::search(toks.begin(), toks.end(), term.begin(), term.end()) != toks.end();
          }))
        ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(transcript.size());
  }

  std::string name() const override { return "lexicon_fraction"; }

 private:
  std::vector<Tokens> terms_;
};

inline double discourse_metric_q(std::span<const Message> transcript, const DiscourseMetric& metric) {
  if (transcript.empty()) throw InputError("discourse metric on an empty transcript");
  return metric.evaluate(transcript);
}

}  // namespace twon::metrics
