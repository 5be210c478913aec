#include <gtest/gtest.h>

#include "fake_sidecar.hpp"
#include "twon/sidecar.hpp"

using namespace twon;
using twon::testing::FakeSidecar;

namespace {

RemoteOptions fast() {
  RemoteOptions o;
  o.timeout = std::chrono::milliseconds(2000);
  o.retries = 1;
  o.backoff = std::chrono::milliseconds(1);
  return o;
}

}  // namespace

TEST(SidecarClient, HealthAndEmbed) {
  FakeSidecar sc;
  SidecarClient c(sc.url(), fast());
  const auto h = c.healthz();
  EXPECT_EQ(h.version, "fake-1");
  EXPECT_EQ(h.d, 4u);
  const std::vector<std::string> texts{"a", "a", "bcd"};
  const auto v = c.embed(texts);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0].values, v[1].values);
  EXPECT_EQ(v[2].dim(), 4u);
}

TEST(SidecarClient, EndpointPrefix) {
  FakeSidecar sc;
  EXPECT_THROW(SidecarClient(sc.url() + "/v1", fast()).healthz(), TransportError);
  EXPECT_THROW(SidecarClient("no-scheme", fast()), ConfigError);
}

TEST(SidecarClient, EmbedShapeValidated) {
  FakeSidecar sc;
  sc.embed = [](const nlohmann::json&, httplib::Response& res) {
    res.set_content(R"({"vectors":[[1,2,3]],"d":4})", "application/json");
  };
  const std::vector<std::string> texts{"a"};
  EXPECT_THROW(SidecarClient(sc.url(), fast()).embed(texts), TransportError);

  sc.embed = [](const nlohmann::json&, httplib::Response& res) {
    res.set_content(R"({"vectors":[[1,2,3,4],[1,2,3,4]],"d":4})", "application/json");
  };
  EXPECT_THROW(SidecarClient(sc.url(), fast()).embed(texts), TransportError);
}

TEST(SidecarClient, EmbeddingsDimensionMustMatchHealth) {
  FakeSidecar sc;
  SidecarEmbeddings e(sc.url(), fast());
  EXPECT_EQ(e.dimension(), 4u);
  sc.embed = [](const nlohmann::json&, httplib::Response& res) {
    res.set_content(R"({"vectors":[[1,2]],"d":2})", "application/json");
  };
  const std::vector<std::string> texts{"a"};
  EXPECT_THROW(e.embed(texts), TransportError);
}

TEST(SidecarClient, Labels) {
  FakeSidecar sc;
  SidecarLabels l(sc.url(), fast());
  const std::vector<std::string> texts{"abc", "defgh"};
  const auto s = l.classify(texts, "sentiment");
  EXPECT_EQ(sc.last_body["category"], "sentiment");
  EXPECT_EQ(s.subclass_names, (std::vector<std::string>{"positive", "negative"}));
  ASSERT_EQ(s.scores.size(), 2u);
  EXPECT_DOUBLE_EQ(s.scores[0][0], 0.3);

  sc.labels = [](const nlohmann::json&, httplib::Response& res) {
    res.set_content(R"({"scores":[[1.5,0],[0,0]],"subclass_names":["a","b"]})", "application/json");
  };
  EXPECT_THROW(l.classify(texts, "sentiment"), TransportError);
  sc.labels = [](const nlohmann::json&, httplib::Response& res) {
    res.set_content(R"({"scores":[[1],[0]],"subclass_names":["a","b"]})", "application/json");
  };
  EXPECT_THROW(l.classify(texts, "sentiment"), TransportError);
}

TEST(SidecarClient, ServerErrorAfterRetries) {
  FakeSidecar sc;
  sc.embed = [](const nlohmann::json&, httplib::Response& res) {
    res.status = 500;
    res.set_content(R"({"error":"boom"})", "application/json");
  };
  const std::vector<std::string> texts{"a"};
  EXPECT_THROW(SidecarClient(sc.url(), fast()).embed(texts), TransportError);
  EXPECT_EQ(sc.calls.load(), 2);
}

TEST(SidecarClient, TimeoutIsTransportError) {
  FakeSidecar sc;
  sc.generate = [](const nlohmann::json&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(400));
    res.set_content(R"({"text":"late"})", "application/json");
  };
  RemoteOptions o = fast();
  o.timeout = std::chrono::milliseconds(100);
  o.retries = 0;
  Prompt p;
  p.rendered_text = "x";
  EXPECT_THROW(SidecarClient(sc.url(), o).generate(p), TransportError);
}

TEST(RemoteGenerator, ConcurrentCallsCapped) {
  FakeSidecar sc;
  std::atomic<int> in_flight{0}, peak{0};
  sc.generate = [&](const nlohmann::json&, httplib::Response& res) {
    const int now = ++in_flight;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    --in_flight;
    res.set_content(R"({"text":"ok"})", "application/json");
  };
  RemoteGenerator g(sc.url(), fast(), 2);
  std::vector<std::thread> threads;
  for (int i = 0; i < 6; ++i)
    threads.emplace_back([&] {
      Prompt p;
      p.rendered_text = "x";
      EXPECT_EQ(g.generate({p, {}, 0}), "ok");
    });
  for (auto& t : threads) t.join();
  EXPECT_LE(peak.load(), 2);
}
