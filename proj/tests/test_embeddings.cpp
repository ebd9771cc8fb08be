#include <gtest/gtest.h>

#include <cstdlib>
#include <set>
#include <thread>

#include "topoprior/embeddings.hpp"
#include "topoprior/error.hpp"
#include "topoprior/synthdata.hpp"

// After Eigen: resolv.h, pulled in by httplib, defines a `_res` macro.
#include <httplib.h>

using namespace topoprior;

namespace {

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

std::vector<EmbeddingVector> domain_queries(const SyntheticEmbedder& e, int domain, int n) {
  std::vector<DomainSpec> specs = default_domain_specs();
  specs.push_back(default_ood_spec());
  std::vector<EmbeddingVector> out;
  for (const auto& r : make_queries({specs[domain]}, n, 99)) out.push_back(e.embed_query(r.query));
  return out;
}

}  // namespace

TEST(Synthetic, DeterministicAndUnitNorm) {
  const SyntheticEmbedder a;
  const SyntheticEmbedder b;
  for (const std::string text : {"", "domain:0 role:3 d0w1", "hello world", "w1 w1 w1"}) {
    const auto va = a.embed_query(text);
    EXPECT_EQ(va, a.embed_query(text));
    EXPECT_EQ(va, b.embed_query(text));
    EXPECT_EQ(va.size(), 64);
    if (!text.empty()) EXPECT_NEAR(va.norm(), 1.0, 1e-9);
  }
}

TEST(Synthetic, ConfigChangesOutput) {
  const SyntheticEmbedder a;
  const SyntheticEmbedder b(SyntheticEmbedderConfig{64, 8});
  EXPECT_NE(a.embed_query("domain:1 w3"), b.embed_query("domain:1 w3"));
  const SyntheticEmbedder wide(SyntheticEmbedderConfig{128});
  EXPECT_EQ(wide.embed_query("x").size(), 128);
}

TEST(Synthetic, FeatureVectorQueriesAreNormalized) {
  const SyntheticEmbedder e;
  std::vector<double> f(64, 0.0);
  f[3] = 2.0;
  const auto v = e.embed_query(f);
  EXPECT_DOUBLE_EQ(v[3], 1.0);
  EXPECT_THROW(e.embed_query(std::vector<double>(5, 1.0)), ValidationError);
  EXPECT_THROW(e.embed_query(std::vector<double>(64, 0.0)), ValidationError);
}

TEST(Synthetic, RolesAreDistinctUnitVectors) {
  const SyntheticEmbedder e;
  const RolePool pool = RolePool::standard();
  const auto m = e.embed_pool(pool);
  ASSERT_EQ(m.rows(), 13);
  for (int i = 0; i < 13; ++i) {
    EXPECT_EQ(m.row(i).transpose(), e.embed_role(pool[i]));
    EXPECT_NEAR(m.row(i).norm(), 1.0, 1e-9);
    for (int j = 0; j < i; ++j) EXPECT_GT((m.row(i) - m.row(j)).norm(), 1e-6);
  }
}

TEST(Synthetic, DomainSignaturesAreOrthonormal) {
  const SyntheticEmbedder e;
  for (int a = 0; a < 6; ++a) {
    EXPECT_NEAR(e.domain_signature(a).norm(), 1.0, 1e-12);
    for (int b = 0; b < a; ++b)
      EXPECT_NEAR(e.domain_signature(a).dot(e.domain_signature(b)), 0.0, 1e-12);
  }
}

TEST(Synthetic, InterDomainCosineBelowCeiling) {
  const SyntheticEmbedder e;
  std::vector<std::vector<EmbeddingVector>> q;
  for (int d = 0; d < 5; ++d) q.push_back(domain_queries(e, d, 1000));
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < a; ++b) {
      double mean = 0.0;
      for (int i = 0; i < 1000; ++i) mean += cosine(q[a][i], q[b][i]);
      mean /= 1000.0;
      EXPECT_LT(mean, 0.5) << "domains " << a << " and " << b;
    }
}

TEST(Synthetic, DomainsCluster) {
  const SyntheticEmbedder e;
  std::vector<std::vector<EmbeddingVector>> q;
  for (int d = 0; d < 4; ++d) q.push_back(domain_queries(e, d, 100));
  double intra = 0.0;
  double inter = 0.0;
  int n_intra = 0;
  int n_inter = 0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b <= a; ++b)
      for (int i = 0; i < 100; ++i)
        for (int j = 0; j < 100; ++j) {
          if (a == b && i == j) continue;
          const double c = cosine(q[a][i], q[b][j]);
          if (a == b) {
            intra += c;
            ++n_intra;
          } else {
            inter += c;
            ++n_inter;
          }
        }
  EXPECT_GT(intra / n_intra, inter / n_inter);
}

TEST(Synthetic, ConcurrentCallsAgree) {
  const SyntheticEmbedder e;
  std::vector<EmbeddingVector> results(8);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] { results[t] = e.embed_query("domain:" + std::to_string(t % 3)); });
  for (auto& t : threads) t.join();
  for (int t = 0; t < 8; ++t) EXPECT_EQ(results[t], e.embed_query("domain:" + std::to_string(t % 3)));
}

class HttpClientTest : public ::testing::Test {
 protected:
  void SetUp() override {
    unsetenv("TOPOPRIOR_EMBEDDING_URL");
    server_.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      const auto body = nlohmann::json::parse(req.body);
      nlohmann::json vectors = nlohmann::json::array();
      for (const auto& t : body.at("texts")) {
        const double len = static_cast<double>(t.get<std::string>().size());
        vectors.push_back({len, 1.0, -1.0});
      }
      res.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
    });
    server_.Post("/short", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"vectors":[[1.0]]})", "application/json");
    });
    server_.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("{oops", "application/json");
    });
    server_.Post("/fail", [](const httplib::Request&, httplib::Response& res) {
      res.status = 503;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
};

TEST_F(HttpClientTest, RoundTripsVectors) {
  const HttpEmbeddingClient client({url("/embed"), 3, 5});
  const auto v = client.embed_texts({"ab", "abcd"});
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0], (EmbeddingVector(3) << 2.0, 1.0, -1.0).finished());
  EXPECT_EQ(v[1][0], 4.0);
  EXPECT_EQ(client.embed_query(std::string("xyz"))[0], 3.0);
  EXPECT_EQ(client.embed_query(std::vector<double>{1, 2, 3})[2], 3.0);
  EXPECT_EQ(requests_.load(), 2);
}

TEST_F(HttpClientTest, EnvironmentOverridesEndpoint) {
  setenv("TOPOPRIOR_EMBEDDING_URL", url("/embed").c_str(), 1);
  const HttpEmbeddingClient client({"http://127.0.0.1:1/unused", 3, 5});
  unsetenv("TOPOPRIOR_EMBEDDING_URL");
  EXPECT_EQ(client.endpoint(), url("/embed"));
  EXPECT_EQ(client.embed_query(std::string("a"))[0], 1.0);
}

TEST_F(HttpClientTest, ProtocolErrorsAreRetriableTransportErrors) {
  for (const std::string path : {"/short", "/broken", "/fail"}) {
    const HttpEmbeddingClient client({url(path), 3, 5});
    try {
      client.embed_query(std::string("q"));
      FAIL() << path;
    } catch (const TransportError& e) {
      EXPECT_TRUE(e.retriable());
      EXPECT_FALSE(e.cause().empty());
    }
  }
}

TEST(HttpClient, UnreachableServiceIsTransportError) {
  unsetenv("TOPOPRIOR_EMBEDDING_URL");
  const HttpEmbeddingClient client({"http://127.0.0.1:1/embed", 3, 1});
  EXPECT_THROW(client.embed_query(std::string("q")), TransportError);
}

TEST(HttpClient, RejectsMissingConfig) {
  unsetenv("TOPOPRIOR_EMBEDDING_URL");
  EXPECT_THROW(HttpEmbeddingClient({"", 3, 1}), ConfigError);
  EXPECT_THROW(HttpEmbeddingClient({"http://x/embed", 0, 1}), ConfigError);
}
