#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "semuq/clustering.hpp"
#include "test_support.hpp"

#include <httplib.h>
#include <json.hpp>

using namespace semuq;

namespace {

VerdictMatrix identity_verdicts(std::size_t n)
{
  VerdictMatrix m(n, std::vector<Verdict>(n, Verdict::neutral));
  for (std::size_t i = 0; i < n; ++i)
    m[i][i] = Verdict::entailment;
  return m;
}

std::set<std::set<std::size_t>> partition_of(const SemanticClustering& c)
{
  std::set<std::set<std::size_t>> out;
  for (const auto& cl : c.clusters)
    out.insert(std::set<std::size_t>(cl.member_indices.begin(), cl.member_indices.end()));
  return out;
}

} // namespace

TEST_CASE("verdict parsing takes the first verdict word")
{
  CHECK(parse_verdict("Entailment.") == Verdict::entailment);
  CHECK(parse_verdict("  neutral, not entailment") == Verdict::neutral);
  CHECK(parse_verdict("CONTRADICTION") == Verdict::contradiction);
  try {
    parse_verdict("maybe");
    FAIL("expected a protocol error");
  } catch (const ProtocolError& e) {
    CHECK(e.raw_response == "maybe");
  }
}

TEST_CASE("default template is the entailment prompt")
{
  const std::string t = kDefaultEntailmentTemplate;
  CHECK(t.find("We are evaluating answers to the question: {question}") == 0);
  CHECK(t.find("Does Possible Answer 1 semantically entail Possible Answer 2?") != std::string::npos);
  CHECK(t.find("{text1}") != std::string::npos);
  CHECK(t.find("{text2}") != std::string::npos);
}

TEST_CASE("exact-match backend normalizes case, whitespace and punctuation")
{
  ExactMatchBackend b;
  CHECK(bidirectional_entails(b, "q", "Saudi Arabia", "saudi arabia "));
  CHECK(bidirectional_entails(b, "q", "  Saudi   Arabia.", "saudi arabia"));
  CHECK_FALSE(bidirectional_entails(b, "q", "Saudi Arabia", "Iran"));
  CHECK_THROWS_AS(bidirectional_entails(b, "q", "", "Iran"), ParameterError);
  CHECK(normalize_answer("  Hello\t World!! ") == "hello world");
}

TEST_CASE("one-directional entailment does not merge")
{
  auto m = identity_verdicts(2);
  m[0][1] = Verdict::entailment;
  PrecomputedBackend b(m);
  CHECK_FALSE(bidirectional_entails(b, "q", Candidate{ 0, "a" }, Candidate{ 1, "b" }));
  m[1][0] = Verdict::entailment;
  PrecomputedBackend both(m);
  CHECK(bidirectional_entails(both, "q", Candidate{ 0, "a" }, Candidate{ 1, "b" }));
}

TEST_CASE("precomputed matrices are validated")
{
  VerdictMatrix ragged = { { Verdict::entailment, Verdict::neutral }, { Verdict::entailment } };
  CHECK_THROWS_AS(PrecomputedBackend{ ragged }, ValidationError);
  auto bad_diag = identity_verdicts(3);
  bad_diag[1][1] = Verdict::neutral;
  CHECK_THROWS_AS(PrecomputedBackend{ bad_diag }, ValidationError);

  PrecomputedBackend three(identity_verdicts(3));
  const auto bundle = test::make_bundle("q", { "a", "b" }, { 0.5, 0.5 });
  CHECK_THROWS_AS(assign_clusters(bundle, three), ValidationError);
}

TEST_CASE("table answers form six clusters with exact match")
{
  const auto bundle = test::table_bundle();
  const auto c = assign_clusters(bundle, ExactMatchBackend{});
  REQUIRE(c.size() == 6);
  CHECK_NOTHROW(c.check_partition());
  CHECK(c.sizes() == std::vector<std::size_t>{ 1, 5, 1, 1, 1, 1 });
  CHECK(c.clusters[1].representative_index == 1);
  CHECK(c.clusters[1].member_indices == std::vector<std::size_t>{ 1, 2, 4, 7, 9 });
  CHECK(partition_of(c) == partition_of(clustering_from_record_ids(bundle)));

  const Eigen::VectorXd pc = cluster_probabilities(c, bundle);
  CHECK(std::abs(pc[1] - 0.88824) < 5e-5);
  CHECK(std::abs(pc[1] - 5.0 * bundle.generations[1].norm_seq_prob) < 1e-12);
  CHECK(std::abs(pc.sum() - 1.0) < 1e-9);

  const Eigen::VectorXd d = discrete_cluster_probabilities(c);
  Eigen::VectorXd expect(6);
  expect << 0.1, 0.5, 0.1, 0.1, 0.1, 0.1;
  CHECK((d - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("trivial clusterings")
{
  const auto same = test::make_bundle("q", std::vector<std::string>(10, "x"), std::vector<double>(10, 0.1));
  const auto one = assign_clusters(same, ExactMatchBackend{});
  CHECK(one.size() == 1);
  CHECK(one.clusters[0].member_indices.size() == 10);
  CHECK(cluster_probabilities(one, Eigen::VectorXd::Constant(10, 0.1))[0] == doctest::Approx(1.0));
  CHECK(discrete_cluster_probabilities(one)[0] == 1.0);

  const auto singletons = assign_clusters(same, PrecomputedBackend(identity_verdicts(10)));
  CHECK(singletons.size() == 10);
  CHECK((discrete_cluster_probabilities(singletons).array() - 0.1).abs().maxCoeff() < 1e-12);

  auto halves = test::make_bundle("q", { "a", "b", "b" }, { 0.5, 0.25, 0.25 });
  validate_and_normalize(halves);
  const auto h = assign_clusters(halves, ExactMatchBackend{});
  CHECK(cluster_probabilities(h, halves)[0] == doctest::Approx(0.5));
  CHECK(cluster_probabilities(h, halves)[1] == doctest::Approx(0.5));
}

TEST_CASE("cluster probabilities reject zero mass and are scale invariant")
{
  const auto c = assign_clusters(test::make_bundle("q", { "a", "b" }, { 1, 1 }), ExactMatchBackend{});
  CHECK_THROWS_AS(cluster_probabilities(c, Eigen::VectorXd::Zero(2)), DegenerateInputError);

  auto b = test::table_bundle();
  auto scaled = b;
  for (auto& g : scaled.generations) {
    g.raw_seq_prob *= 123.0;
    g.norm_seq_prob = std::nan("");
  }
  validate_and_normalize(scaled);
  const auto cl = clustering_from_record_ids(b);
  CHECK((cluster_probabilities(cl, b) - cluster_probabilities(cl, scaled)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("permuting generations preserves the exact-match partition")
{
  std::mt19937_64 rng(3);
  const std::vector<std::string> pool = { "Paris", "paris.", "Lyon", "LYON", "Nice", "Marseille" };
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::string> texts(8);
    for (auto& t : texts)
      t = pool[pick(rng)];
    const auto base = assign_clusters(test::make_bundle("q", texts, std::vector<double>(8, 1)), ExactMatchBackend{});
    CHECK_NOTHROW(base.check_partition());

    std::vector<std::size_t> perm(8);
    std::iota(perm.begin(), perm.end(), std::size_t{ 0 });
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::string> shuffled(8);
    for (std::size_t i = 0; i < 8; ++i)
      shuffled[i] = texts[perm[i]];
    const auto other =
      assign_clusters(test::make_bundle("q", shuffled, std::vector<double>(8, 1)), ExactMatchBackend{});

    std::set<std::set<std::size_t>> mapped;
    for (const auto& cl : other.clusters) {
      std::set<std::size_t> s;
      for (auto i : cl.member_indices)
        s.insert(perm[i]);
      mapped.insert(s);
    }
    CHECK(mapped == partition_of(base));
    for (const auto& cl : other.clusters)
      CHECK(cl.representative_index == cl.member_indices.front());
  }
}

TEST_CASE("record cluster ids build the clustering")
{
  auto b = test::table_bundle();
  const auto c = clustering_from_record_ids(b);
  CHECK(c.size() == 6);
  CHECK(c.clusters[0].cluster_id == 1);
  b.generations[3].cluster_id.reset();
  CHECK_THROWS_WITH_AS(clustering_from_record_ids(b), doctest::Contains("cluster_id"), ValidationError);
}

TEST_CASE("partition check catches overlaps and gaps")
{
  SemanticClustering c;
  c.generation_count = 3;
  c.clusters = { Cluster{ 0, { 0, 1 }, 0 }, Cluster{ 1, { 1 }, 1 } };
  CHECK_THROWS_AS(c.check_partition(), ValidationError);
  c.clusters = { Cluster{ 0, { 0, 1 }, 0 } };
  CHECK_THROWS_AS(c.check_partition(), ValidationError);
  c.clusters = { Cluster{ 0, { 0, 1 }, 2 }, Cluster{ 1, { 2 }, 2 } };
  CHECK_THROWS_AS(c.check_partition(), ValidationError);
}

namespace {

/// In-process entailment service on a random local port.
struct FakeService
{
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> calls{ 0 };
  std::atomic<int> failures_left{ 0 };
  std::string mode = "ok";
  nlohmann::json last_request;
  std::mutex mutex;

  FakeService()
  {
    server.Post("/judge", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      if (failures_left > 0) {
        --failures_left;
        res.status = 503;
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      {
        std::lock_guard lock(mutex);
        last_request = body;
      }
      if (mode == "garbage") {
        res.set_content("{\"verdict\": \"perhaps\"}", "application/json");
        return;
      }
      if (mode == "notjson") {
        res.set_content("<html>", "text/html");
        return;
      }
      if (mode == "bad-request") {
        res.status = 400;
        return;
      }
      // Entailment iff the answers (after the question prefix) share a first letter.
      const std::string q = body.at("question");
      std::string a = body.at("text1");
      std::string b = body.at("text2");
      a = a.substr(q.size() + 1);
      b = b.substr(q.size() + 1);
      const bool same = std::tolower(a[0]) == std::tolower(b[0]);
      res.set_content(nlohmann::json{ { "verdict", same ? "entailment" : "neutral" } }.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~FakeService()
  {
    server.stop();
    thread.join();
  }

  BackendConfig config(int retries = 3) const
  {
    BackendConfig c;
    c.kind = BackendKind::external_service;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/judge";
    c.retries = retries;
    return c;
  }
};

} // namespace

TEST_CASE("service backend posts question-concatenated answers")
{
  FakeService svc;
  ServiceBackend backend(svc.config());
  CHECK(backend.prompt_template() == kDefaultEntailmentTemplate);

  auto bundle = test::make_bundle("q", { "Apple", "avocado", "Banana" }, { 0.3, 0.3, 0.4 });
  bundle.prompt = "Name a fruit";
  const auto c = assign_clusters(bundle, backend);
  CHECK(c.sizes() == std::vector<std::size_t>{ 2, 1 });

  std::lock_guard lock(svc.mutex);
  CHECK(svc.last_request.at("question") == "Name a fruit");
  CHECK(svc.last_request.at("text1").get<std::string>().rfind("Name a fruit ", 0) == 0);
  CHECK(svc.last_request.at("template") == kDefaultEntailmentTemplate);
}

TEST_CASE("service backend retries transient failures")
{
  FakeService svc;
  svc.failures_left = 2;
  ServiceBackend backend(svc.config(3));
  CHECK(bidirectional_entails(backend, "q", "apple", "apricot"));
  CHECK(svc.calls >= 4);

  svc.failures_left = 10;
  ServiceBackend impatient(svc.config(2));
  CHECK_THROWS_AS(impatient.judge("q", Candidate{ 0, "a" }, Candidate{ 1, "b" }), TransportError);
}

TEST_CASE("service backend surfaces protocol errors with the raw reply")
{
  FakeService svc;
  ServiceBackend backend(svc.config());
  svc.mode = "garbage";
  try {
    backend.judge("q", Candidate{ 0, "a" }, Candidate{ 1, "b" });
    FAIL("expected a protocol error");
  } catch (const ProtocolError& e) {
    CHECK(e.raw_response.find("perhaps") != std::string::npos);
  }
  svc.mode = "notjson";
  CHECK_THROWS_AS(backend.judge("q", Candidate{ 0, "a" }, Candidate{ 1, "b" }), ProtocolError);
  svc.mode = "bad-request";
  CHECK_THROWS_AS(backend.judge("q", Candidate{ 0, "a" }, Candidate{ 1, "b" }), ProtocolError);

  // Errors during clustering name the failing pair.
  svc.mode = "garbage";
  const auto bundle = test::make_bundle("q", { "a", "b" }, { 0.5, 0.5 });
  CHECK_THROWS_WITH_AS(assign_clusters(bundle, backend), doctest::Contains("generation 1"), EntailmentError);
}

TEST_CASE("unreachable service raises a transport error")
{
  BackendConfig c;
  c.endpoint = "http://127.0.0.1:1/judge";
  c.retries = 1;
  ServiceBackend backend(c);
  CHECK_THROWS_AS(backend.judge("q", Candidate{ 0, "a" }, Candidate{ 1, "b" }), TransportError);
  c.endpoint = "localhost";
  CHECK_THROWS_AS(ServiceBackend{ c }, ParameterError);
}
