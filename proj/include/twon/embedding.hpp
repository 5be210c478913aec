#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "twon/error.hpp"
#include "twon/rng.hpp"
#include "twon/text.hpp"

namespace twon {

/// Output of a frozen text encoder.
struct EmbeddingVector {
  std::vector<double> values;

  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t dim() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

inline void check_finite(const EmbeddingVector& e) {
  for (double v : e.values)
    if (!std::isfinite(v)) throw InputError("embedding has a non-finite entry");
}

class EmbeddingSource {
 public:
  virtual ~EmbeddingSource() = default;
  /// One vector per text, same order as the input.
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const = 0;
  virtual std::size_t dimension() const = 0;
};

/// Signed feature hashing of case-folded tokens, L2-normalized. Gives a
/// deterministic encoder for runs without the model sidecar.
class HashingEmbedder final : public EmbeddingSource {
 public:
  explicit HashingEmbedder(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw InputError("embedding dimension must be positive");
  }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      std::vector<double> v(dim_, 0.0);
      for (const auto& tok : text::tokenize(text::fold_case(t))) {
        const auto h = fnv1a(tok);
        v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      if (norm > 0.0)
        for (double& x : v) x /= std::sqrt(norm);
      out.emplace_back(std::move(v));
    }
    return out;
  }

  std::size_t dimension() const override { return dim_; }

 private:
  std::size_t dim_;
};

/// Precomputed vectors keyed by exact text. File layout:
/// {"dimension": d, "vectors": {"<text>": [d floats], ...}}
class FixtureEmbeddings final : public EmbeddingSource {
 public:
  explicit FixtureEmbeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read embedding fixture " + path.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
      dim_ = j.at("dimension").get<std::size_t>();
      for (const auto& [key, arr] : j.at("vectors").items()) {
        EmbeddingVector e(arr.get<std::vector<double>>());
        if (e.dim() != dim_) throw DataError("fixture vector for '" + key + "' has wrong dimension");
        check_finite(e);
        table_.emplace(key, std::move(e));
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed embedding fixture " + path.string() + ": " + e.what());
    } catch (const InputError& e) {
      throw DataError(e.what());
    }
  }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      auto it = table_.find(t);
      if (it == table_.end()) throw DataError("no fixture embedding for text '" + t + "'");
      out.push_back(it->second);
    }
    return out;
  }

  std::size_t dimension() const override { return dim_; }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, EmbeddingVector> table_;
};

/// Per-text scores from an external classifier for one label category.
struct LabelScores {
  std::vector<std::string> subclass_names;
  std::vector<std::vector<double>> scores;  // one row per text
};

class LabelSource {
 public:
  virtual ~LabelSource() = default;
  virtual LabelScores classify(std::span<const std::string> texts, const std::string& category) const = 0;
};

/// File layout: {"<category>": {"subclass_names": [...], "scores": {"<text>": [...]}}}
class FixtureLabels final : public LabelSource {
 public:
  explicit FixtureLabels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read label fixture " + path.string());
    try {
      const auto j = nlohmann::json::parse(in);
      for (const auto& [category, body] : j.items()) {
        Category c;
        c.subclass_names = body.at("subclass_names").get<std::vector<std::string>>();
        for (const auto& [t, row] : body.at("scores").items()) {
          auto v = row.get<std::vector<double>>();
          if (v.size() != c.subclass_names.size())
            throw DataError("label fixture row for '" + t + "' does not match subclass count");
          c.rows.emplace(t, std::move(v));
        }
        categories_.emplace(category, std::move(c));
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed label fixture " + path.string() + ": " + e.what());
    }
  }

  std::vector<std::string> categories() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : categories_) out.push_back(k);
    return out;
  }

  LabelScores classify(std::span<const std::string> texts, const std::string& category) const override {
    auto it = categories_.find(category);
    if (it == categories_.end()) throw DataError("label fixture has no category '" + category + "'");
    LabelScores s;
    s.subclass_names = it->second.subclass_names;
    for (const auto& t : texts) {
      auto row = it->second.rows.find(t);
      if (row == it->second.rows.end()) throw DataError("no " + category + " labels for text '" + t + "'");
      s.scores.push_back(row->second);
    }
    return s;
  }

 private:
  struct Category {
    std::vector<std::string> subclass_names;
    std::unordered_map<std::string, std::vector<double>> rows;
  };
  std::map<std::string, Category> categories_;
};

}  // namespace twon
