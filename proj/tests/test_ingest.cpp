#include <gtest/gtest.h>

#include <sstream>

#include "corpus_gen.hpp"
#include "support.hpp"
#include "twon/ingest.hpp"

using namespace twon;
using namespace twon::ingest;

namespace {

RawSample post(const std::string& user, const std::string& text, std::int64_t ts = 0) {
  RawSample s;
  s.user_id = user;
  s.text = text;
  s.timestamp = ts;
  return s;
}

RawSample reply(const std::string& user, const std::string& text, const std::string& to, std::int64_t ts) {
  RawSample s = post(user, text, ts);
  s.kind = MessageKind::Reply;
  s.reply_to_text = to;
  return s;
}

std::set<std::string> users(const Corpus& c) {
  std::set<std::string> u;
  for (const auto& s : c.samples) u.insert(s.user_id);
  return u;
}

}  // namespace

TEST(Filter, RuleExamples) {
  EXPECT_EQ(filter_sample(post("a", "RT @x great point about the budget debate today")), FilterReason::Retweet);
  EXPECT_EQ(filter_sample(post("a", "RT@x great point about the budget debate today")), FilterReason::Retweet);
  EXPECT_EQ(filter_sample(post("a", "RTX is not a retweet marker at all, just text")), FilterReason::Keep);
  EXPECT_EQ(filter_sample(post("a", "read this https://a.b/c")), FilterReason::Url);
  EXPECT_EQ(filter_sample(post("a", "an article at www.example.com about the budget")), FilterReason::Url);
  EXPECT_EQ(filter_sample(post("a", "the full text is up on tagesschau.de for everyone")), FilterReason::Url);
  EXPECT_EQ(filter_sample(post("a", "short")), FilterReason::TooShort);
}

TEST(Filter, ThirtyTwoCharacterBoundary) {
  const std::string s31(31, 'x'), s32(32, 'x');
  EXPECT_EQ(filter_sample(post("a", s31)), FilterReason::TooShort);
  EXPECT_EQ(filter_sample(post("a", s32)), FilterReason::Keep);
  // Characters, not bytes: 32 two-byte characters are kept, 31 are not.
  std::string u31, u32;
  for (int i = 0; i < 31; ++i) u31 += "\xC3\xBC";
  u32 = u31 + "\xC3\xBC";
  EXPECT_EQ(filter_sample(post("a", u31)), FilterReason::TooShort);
  EXPECT_EQ(filter_sample(post("a", u32)), FilterReason::Keep);
  EXPECT_EQ(filter_sample(post("a", s31), 31), FilterReason::Keep);
}

TEST(Filter, ProvenanceAndIdempotence) {
  const auto corpus = Corpus::from(twon::testing::fuzz_corpus(2000, 9));
  const auto once = filter_corpus(corpus);
  const auto twice = filter_corpus(once);
  EXPECT_EQ(once.samples, twice.samples);
  EXPECT_EQ(once.removed, twice.removed);
  EXPECT_EQ(once.samples.size() + once.removed_total(), corpus.samples.size());
  EXPECT_GT(once.removed.at("url"), 0u);
  EXPECT_GT(once.removed.at("retweet"), 0u);
  EXPECT_GT(once.removed.at("too_short"), 0u);
  EXPECT_FALSE(once.samples.empty());
  for (const auto& s : once.samples) {
    EXPECT_GE(text::char_count(s.text), 32u);
    EXPECT_FALSE(s.text.starts_with("RT "));
    EXPECT_EQ(s.text.find("http"), std::string::npos);
  }
  const auto j = provenance_json(once);
  EXPECT_EQ(j["input"], 2000);
  EXPECT_EQ(j["output"], once.samples.size());
}

TEST(ActiveUsers, TopKByCount) {
  std::vector<RawSample> s;
  for (int i = 0; i < 5; ++i) s.push_back(post("A", "a"));
  for (int i = 0; i < 3; ++i) s.push_back(post("B", "b"));
  s.push_back(post("C", "c"));
  const auto c = Corpus::from(s);
  const auto top2 = select_active_users(c, 2);
  EXPECT_EQ(users(top2), (std::set<std::string>{"A", "B"}));
  EXPECT_EQ(top2.removed.at("inactive_user"), 1u);
  EXPECT_EQ(select_active_users(c, 3).samples, c.samples);
  EXPECT_EQ(select_active_users(c, 10).samples, c.samples);
}

TEST(ActiveUsers, TiesAreLexicographic) {
  const auto c = Corpus::from({post("B", "x"), post("A", "y"), post("B", "z"), post("A", "w")});
  EXPECT_EQ(users(select_active_users(c, 1)), (std::set<std::string>{"A"}));
}

TEST(ActiveUsers, Errors) {
  EXPECT_THROW(select_active_users(Corpus{}, 1), InputError);
  EXPECT_THROW(select_active_users(Corpus::from({post("A", "x")}), 0), InputError);
}

TEST(ReplyPairs, ChronologicalAndCapped) {
  std::vector<RawSample> s;
  for (int i = 0; i < 3; ++i) s.push_back(reply("u", "r" + std::to_string(i), "p" + std::to_string(i), 30 - 10 * i));
  for (int i = 0; i < 8; ++i) s.push_back(reply("v", "r" + std::to_string(i), "p" + std::to_string(i), i));
  s.push_back(post("w", "only a post"));
  const auto pairs = build_reply_pairs(Corpus::from(s), 5);
  ASSERT_EQ(pairs.size(), 2u);
  const auto& u = pairs.at("u").pairs();
  ASSERT_EQ(u.size(), 3u);
  EXPECT_EQ(u.front(), std::make_pair(std::string("p2"), std::string("r2")));
  EXPECT_EQ(u.back(), std::make_pair(std::string("p0"), std::string("r0")));
  const auto& v = pairs.at("v").pairs();
  ASSERT_EQ(v.size(), 5u);
  EXPECT_EQ(v.front().second, "r3");
  EXPECT_EQ(v.back().second, "r7");
  EXPECT_TRUE(build_reply_pairs(Corpus::from({post("a", "x")}), 5).empty());
  EXPECT_THROW(build_reply_pairs(Corpus::from(s), 0), InputError);
}

namespace {

/// Injective for texts up to 24 bytes: the bytes themselves.
class ByteEmbedder final : public EmbeddingSource {
 public:
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override {
    std::vector<EmbeddingVector> out;
    for (const auto& t : texts) {
      std::vector<double> v(24, 0.0);
      for (std::size_t i = 0; i < t.size() && i < 24; ++i) v[i] = static_cast<unsigned char>(t[i]);
      out.emplace_back(v);
    }
    return out;
  }
  std::size_t dimension() const override { return 24; }
};

/// User "u" replies to 4 of 14 posts by "author", all inside u's window.
Corpus likelihood_corpus() {
  std::vector<RawSample> s;
  for (int i = 0; i < 14; ++i) s.push_back(post("author", "post number " + std::to_string(i), 10 + i));
  for (int i = 0; i < 4; ++i)
    s.push_back(reply("u", "reply " + std::to_string(i), "post number " + std::to_string(i), i == 0 ? 5 : 30 + i));
  return Corpus::from(s);
}

}  // namespace

TEST(LikelihoodDataset, BalancedPerUser) {
  const HashingEmbedder emb(8);
  const auto ds = build_likelihood_dataset(likelihood_corpus(), emb, {.seed = 1});
  std::size_t pos = 0, neg = 0;
  for (const auto& ex : ds.examples) {
    EXPECT_EQ(ex.user, "u");
    (ex.label ? pos : neg)++;
    EXPECT_EQ(ex.post.dim(), 8u);
    EXPECT_EQ(ex.history.size(), ex.label ? 3u : 4u);
  }
  EXPECT_EQ(pos, 4u);
  EXPECT_EQ(neg, 4u);
  EXPECT_NO_THROW(check_balanced(ds.examples));
  // "author" never replies.
  ASSERT_EQ(ds.skipped.size(), 1u);
  EXPECT_EQ(ds.skipped[0].user, "author");
}

TEST(LikelihoodDataset, NegativesAreUnrepliedPosts) {
  const ByteEmbedder emb;
  const auto ds = build_likelihood_dataset(likelihood_corpus(), emb, {.seed = 1});
  std::vector<EmbeddingVector> replied;
  for (int i = 0; i < 4; ++i) {
    const std::string t = "post number " + std::to_string(i);
    replied.push_back(emb.embed(std::span<const std::string>(&t, 1)).front());
  }
  for (const auto& ex : ds.examples) {
    const bool is_replied = std::find(replied.begin(), replied.end(), ex.post) != replied.end();
    EXPECT_EQ(is_replied, ex.label == 1);
  }
}

TEST(LikelihoodDataset, Determinism) {
  const HashingEmbedder emb(8);
  const auto a = build_likelihood_dataset(likelihood_corpus(), emb, {.seed = 1});
  const auto b = build_likelihood_dataset(likelihood_corpus(), emb, {.seed = 1});
  ASSERT_EQ(a.examples.size(), b.examples.size());
  for (std::size_t i = 0; i < a.examples.size(); ++i) EXPECT_EQ(a.examples[i].post, b.examples[i].post);
  // Some seed picks a different set of negatives.
  bool differs = false;
  for (std::uint64_t seed = 2; seed < 20 && !differs; ++seed) {
    const auto c = build_likelihood_dataset(likelihood_corpus(), emb, {.seed = seed});
    for (std::size_t i = 0; i < c.examples.size(); ++i) differs = differs || !(c.examples[i].post == a.examples[i].post);
  }
  EXPECT_TRUE(differs);
}

TEST(LikelihoodDataset, UserWithoutNegativesSkipped) {
  // Every post inside u's window was replied to.
  const auto c = Corpus::from({post("author", "only post", 10), reply("u", "first reply", "only post", 10)});
  const HashingEmbedder emb(4);
  const auto ds = build_likelihood_dataset(c, emb);
  EXPECT_TRUE(ds.examples.empty());
  ASSERT_EQ(ds.skipped.size(), 2u);
  EXPECT_EQ(ds.skipped[1].user, "u");
}

TEST(LikelihoodDataset, UnbalancedNamesUser) {
  const HashingEmbedder emb(4);
  auto ds = build_likelihood_dataset(likelihood_corpus(), emb);
  ds.examples.pop_back();
  try {
    check_balanced(ds.examples);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'u'"), std::string::npos);
  }
}

TEST(Split, UserLevelAndDeterministic) {
  std::vector<RawSample> s;
  for (int u = 0; u < 10; ++u)
    for (int i = 0; i < 3; ++i) s.push_back(post("u" + std::to_string(u), "t" + std::to_string(i)));
  const auto c = Corpus::from(s);
  const auto [train, test] = split(c, 0.8, 4);
  EXPECT_EQ(users(train).size(), 8u);
  EXPECT_EQ(users(test).size(), 2u);
  for (const auto& u : users(test)) EXPECT_FALSE(users(train).contains(u));
  EXPECT_EQ(train.samples.size() + test.samples.size(), s.size());
  const auto again = split(c, 0.8, 4);
  EXPECT_EQ(again.first.samples, train.samples);

  // Rounding is clamped so both sides are non-empty.
  const auto [tiny_train, tiny_test] = split(c, 0.01, 4);
  EXPECT_EQ(users(tiny_train).size(), 1u);

  EXPECT_THROW(split(Corpus::from({post("solo", "x"), post("solo", "y")}), 0.5, 1), InputError);
  EXPECT_THROW(split(c, 1.0, 1), InputError);
  EXPECT_THROW(split(c, 0.0, 1), InputError);
}

TEST(Jsonl, SamplesRoundTrip) {
  auto samples = twon::testing::fuzz_corpus(50, 3);
  samples[0].topic = "energy";
  std::stringstream ss;
  write_samples(ss, samples);
  EXPECT_EQ(read_samples(ss), samples);
}

TEST(Jsonl, MalformedLinesNamed) {
  std::stringstream missing(
      R"({"user_id":"a","text":"x","kind":"post","language":"en","timestamp":1})"
      "\n"
      R"({"user_id":"a","text":"x","kind":"reply","language":"en","timestamp":1})");
  try {
    read_samples(missing);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::stringstream garbage("{not json");
  EXPECT_THROW(read_samples(garbage), DataError);
}

TEST(Jsonl, ExamplesRoundTrip) {
  const HashingEmbedder emb(4);
  const auto ds = build_likelihood_dataset(likelihood_corpus(), emb);
  std::stringstream ss;
  for (const auto& ex : ds.examples) ss << to_json(ex).dump() << '\n';
  const auto back = read_examples(ss);
  ASSERT_EQ(back.size(), ds.examples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].post, ds.examples[i].post);
    EXPECT_EQ(back[i].history, ds.examples[i].history);
    EXPECT_EQ(back[i].label, ds.examples[i].label);
  }
  std::stringstream bad(R"({"label":3,"history":[[1]],"post":[1]})");
  EXPECT_THROW(read_examples(bad), DataError);
}
