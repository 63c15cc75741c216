#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <random>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "llmdmd/generator.hpp"

using namespace llmdmd;

namespace {

PromptContract swing_contract() {
  PromptContract c;
  c.loop = TargetKind::Differential;
  c.states = {{"delta", "rad", "rotor angle", SignalKind::State}, {"omega", "pu", "rotor speed", SignalKind::State}};
  c.library = VariableLibrary(TargetKind::Differential);
  return c;
}

ScoredSkeleton example(const std::string& text, double score) {
  ScoredSkeleton s;
  s.skeleton = parse(text, SymbolScope({"delta", "omega"}, {}), {"delta"});
  s.canonical = serialize(s.skeleton);
  s.score = score;
  return s;
}

class FlakyBackend : public GeneratorBackend {
 public:
  explicit FlakyBackend(int failures) : failures_(failures) {}
  std::vector<std::string> complete(const GenerationRequest&) override {
    ++calls;
    if (calls <= failures_) throw TransportError("connection reset");
    return {"```skeleton\nddelta/dt = p0\n```"};
  }
  int calls = 0;

 private:
  int failures_;
};

struct LocalServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;
  std::atomic<int> hits{0};
  std::string last_body;
  std::string last_auth;

  LocalServer() {
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1"; }
};

std::string chat_response(const std::vector<std::string>& contents) {
  nlohmann::json choices = nlohmann::json::array();
  for (std::size_t i = 0; i < contents.size(); ++i) {
    choices.push_back({{"index", i}, {"message", {{"role", "assistant"}, {"content", contents[i]}}}});
  }
  return nlohmann::json{{"id", "x"}, {"choices", choices}}.dump();
}

}  // namespace

TEST_CASE("prompt with no examples holds contract and stub") {
  const auto c = swing_contract();
  const auto p = build_prompt(c, {}, {"delta", "omega"});
  CHECK(p.rfind(render_contract(c), 0) == 0);
  CHECK(p.find("## Example") == std::string::npos);
  CHECK(p.find("ddelta/dt =\ndomega/dt =\n") != std::string::npos);
  CHECK(p.find("(empty)") != std::string::npos);
}

TEST_CASE("examples keep their order and prompts are deterministic") {
  const auto c = swing_contract();
  const std::vector<ScoredSkeleton> ex{example("ddelta/dt = p0*delta", -2.0), example("ddelta/dt = p0*omega", -1.0)};
  const auto p = build_prompt(c, ex, {"delta"});
  const auto a = p.find("ddelta/dt = p0*delta");
  const auto b = p.find("ddelta/dt = p0*omega");
  REQUIRE(a != std::string::npos);
  REQUIRE(b != std::string::npos);
  CHECK(a < b);
  CHECK(p.find("score -2") < p.find("score -1"));
  CHECK(build_prompt(c, ex, {"delta"}) == p);
}

TEST_CASE("library entries appear in the contract") {
  auto c = swing_contract();
  c.library.add({"P_e", "pu", "electrical power", SignalKind::Algebraic});
  const auto text = render_contract(c);
  CHECK(text.find("P_e") != std::string::npos);
  CHECK(text.find("electrical power") != std::string::npos);
  c.loop = TargetKind::Algebraic;
  CHECK(build_prompt(c, {}, {"P_e"}).find("P_e =\n") != std::string::npos);
}

TEST_CASE("mock backend replays batches") {
  MockBackend m({{"A", "B"}, {"C"}});
  GenerationRequest req;
  CHECK(m.complete(req) == std::vector<std::string>{"A", "B"});
  CHECK(m.complete(req) == std::vector<std::string>{"C"});
  CHECK_THROWS_AS(m.complete(req), BackendUnavailable);
  CHECK(m.calls() == 2);
}

TEST_CASE("mock batches are capped at n") {
  MockBackend m({{"A", "B", "C", "D", "E"}});
  GenerationRequest req;
  req.n = 4;
  CHECK(m.complete(req).size() == 4);
}

TEST_CASE("mock script files") {
  MockBackend m = MockBackend::from_file(LLMDMD_FIXTURE_DIR "/swing2_de_script.json");
  GenerationRequest req;
  CHECK_FALSE(m.complete(req).empty());
  CHECK_THROWS(MockBackend::from_file("/nonexistent/script.json"));
}

TEST_CASE("completion parsing") {
  const auto both = parse_completion(
      "Here you go.\n```skeleton\nddelta/dt = p0*omega\n```\n```requirements\n"
      "[{\"name\":\"i_d\",\"justification\":\"stator current\"}]\n```\n");
  CHECK(both.skeleton_text == "ddelta/dt = p0*omega");
  REQUIRE(both.requirements.size() == 1);
  CHECK(both.requirements[0].name == "i_d");
  CHECK(both.requirements[0].justification == "stator current");

  const auto prose = parse_completion("I think the rotor angle follows the speed deviation.");
  CHECK(prose.skeleton_text.empty());
  CHECK(prose.requirements.empty());

  const auto json_block = parse_completion("```skeleton\nddelta/dt = p0\n```\n```json\n[{\"name\":\"P_e\"}]\n```");
  REQUIRE(json_block.requirements.size() == 1);
  CHECK(json_block.requirements[0].name == "P_e");

  const auto bad = parse_completion("```skeleton\nddelta/dt = p0\n```\n```requirements\nnot json\n```");
  CHECK(bad.requirements.empty());
  CHECK(bad.requirements_malformed);
  CHECK(bad.skeleton_text == "ddelta/dt = p0");

  const auto truncated = parse_completion("```skeleton\nddelta/dt = p0*omega\n");
  CHECK(truncated.skeleton_text == "ddelta/dt = p0*omega");
}

TEST_CASE("completion parsing survives random input") {
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<int> len(0, 400);
  const std::vector<std::string> pieces{"```", "skeleton", "requirements", "json", "\n", "[{", "\"name\"", ":", "}]",
                                        "ddelta/dt = ", "\xff\xfe", "{", "\"", "\\"};
  std::uniform_int_distribution<std::size_t> piece(0, pieces.size() - 1);
  for (int i = 0; i < 20000; ++i) {
    std::string s;
    const int n = len(rng);
    for (int k = 0; k < n; ++k) {
      if (byte(rng) < 64) {
        s += pieces[piece(rng)];
      } else {
        s.push_back(static_cast<char>(byte(rng)));
      }
    }
    CHECK_NOTHROW(parse_completion(s));
  }
}

TEST_CASE("retries with exponential backoff") {
  FlakyBackend flaky(2);
  GenerationRequest req;
  req.attempts = 3;
  req.backoff = std::chrono::milliseconds(100);
  std::vector<std::chrono::milliseconds> waits;
  const auto out = generate(req, flaky, [&](std::chrono::milliseconds d) { waits.push_back(d); });
  CHECK(out.size() == 1);
  CHECK(flaky.calls == 3);
  REQUIRE(waits.size() == 2);
  CHECK(waits[0].count() == 100);
  CHECK(waits[1].count() == 200);

  FlakyBackend dead(10);
  CHECK_THROWS_AS(generate(req, dead, [](std::chrono::milliseconds) {}), BackendUnavailable);
  CHECK(dead.calls == 3);
}

TEST_CASE("request validation") {
  GenerationRequest req;
  req.n = 0;
  CHECK_THROWS_AS(req.validate(), std::invalid_argument);
  req = GenerationRequest{};
  req.temperature = 0.0;
  CHECK_THROWS_AS(req.validate(), std::invalid_argument);
}

TEST_CASE("chat-completions request and response") {
  OpenAIBackend::Options o;
  o.model = "test-model";
  GenerationRequest req;
  req.prompt = "hello";
  req.n = 3;
  req.temperature = 0.7;
  req.max_tokens = 55;
  const auto body = nlohmann::json::parse(OpenAIBackend::request_body(o, req));
  CHECK(body["model"] == "test-model");
  CHECK(body["n"] == 3);
  CHECK(body["temperature"] == 0.7);
  CHECK(body["max_tokens"] == 55);
  CHECK(body["messages"].back()["content"] == "hello");

  CHECK(OpenAIBackend::parse_response(chat_response({"a", "b"})) == std::vector<std::string>{"a", "b"});
  CHECK_THROWS_AS(OpenAIBackend::parse_response("{not json"), TransportError);
  CHECK_THROWS_AS(OpenAIBackend::parse_response("{\"choices\": 3}"), TransportError);
}

TEST_CASE("HTTP backend against a local server") {
  LocalServer srv;
  srv.server.Post("/v1/chat/completions", [&](const httplib::Request& rq, httplib::Response& rs) {
    const int hit = ++srv.hits;
    srv.last_body = rq.body;
    srv.last_auth = rq.get_header_value("Authorization");
    if (hit == 1) {
      rs.status = 503;
      return;
    }
    rs.set_content(chat_response({"```skeleton\nddelta/dt = p0\n```", "two", "three", "four", "five"}),
                   "application/json");
  });
  ::setenv("LLMDMD_TEST_KEY", "sk-local", 1);
  OpenAIBackend backend({srv.url(), "m", "LLMDMD_TEST_KEY"});
  GenerationRequest req;
  req.prompt = "p";
  req.n = 4;
  req.timeout = std::chrono::milliseconds(5000);
  int sleeps = 0;
  const auto out = generate(req, backend, [&](std::chrono::milliseconds) { ++sleeps; });
  CHECK(srv.hits == 2);
  CHECK(sleeps == 1);
  CHECK(out.size() <= 4);
  CHECK(out[0].skeleton_text == "ddelta/dt = p0");
  CHECK(srv.last_auth == "Bearer sk-local");
  CHECK(nlohmann::json::parse(srv.last_body)["n"] == 4);
}

TEST_CASE("HTTP client errors are not retried") {
  LocalServer srv;
  srv.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& rs) {
    ++srv.hits;
    rs.status = 401;
    rs.set_content("{\"error\":\"bad key\"}", "application/json");
  });
  OpenAIBackend backend({srv.url(), "m", "LLMDMD_UNSET_KEY_VAR"});
  GenerationRequest req;
  req.timeout = std::chrono::milliseconds(5000);
  CHECK_THROWS_AS(generate(req, backend, [](std::chrono::milliseconds) {}), BackendUnavailable);
  CHECK(srv.hits == 1);
}

TEST_CASE("unreachable endpoint is reported") {
  OpenAIBackend backend({"http://127.0.0.1:1/v1", "m", "LLMDMD_UNSET_KEY_VAR"});
  GenerationRequest req;
  req.attempts = 2;
  req.timeout = std::chrono::milliseconds(1000);
  CHECK_THROWS_AS(generate(req, backend, [](std::chrono::milliseconds) {}), BackendUnavailable);
}
