#include <gtest/gtest.h>

#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "atg/envserver.hpp"
#include "atg/envspec_io.hpp"
#include "atg/errors.hpp"
#include "test_util.hpp"

namespace atg {
namespace {

using nlohmann::json;

json call(Session& s, const json& msg) { return json::parse(s.handle(msg.dump())); }

json step_msg(Action a) { return {{"cmd", "step"}, {"action", std::string(action_name(a))}}; }

TEST(Base64, RoundTrip) {
  std::mt19937_64 rng(3);
  for (std::size_t n = 0; n < 40; ++n) {
    std::vector<std::uint8_t> bytes(n);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    const std::string text = base64_encode(bytes);
    EXPECT_EQ(text.size(), 4 * ((n + 2) / 3));
    EXPECT_EQ(base64_decode(text), bytes);
  }
  const std::string hello = "hello";
  EXPECT_EQ(base64_encode({reinterpret_cast<const std::uint8_t*>(hello.data()), hello.size()}),
            "aGVsbG8=");
  EXPECT_THROW(base64_decode("abc"), IoError);
}

TEST(SessionTest, ErrorCodes) {
  Session s("t", {});
  EXPECT_EQ(call(s, step_msg(Action::NoOp))["code"], "no_episode");
  json r = json::parse(s.handle("{not json"));
  EXPECT_EQ(r["ok"], false);
  EXPECT_EQ(r["code"], "parse");
  EXPECT_EQ(json::parse(s.handle("[1,2]"))["code"], "parse");
  EXPECT_EQ(call(s, {{"cmd", "dance"}})["code"], "bad_cmd");
  EXPECT_EQ(call(s, {{"cmd", "reset"}, {"seed", 0}})["ok"], true);
  EXPECT_EQ(call(s, {{"cmd", "step"}, {"action", "jump"}})["code"], "bad_action");
  EXPECT_EQ(call(s, {{"cmd", "step"}})["code"], "bad_action");
  EXPECT_EQ(call(s, {{"cmd", "reset"}, {"seed", -1}})["code"], "bad_request");
  EXPECT_EQ(call(s, {{"cmd", "reset"}, {"spec", "Nowhere"}})["code"], "bad_request");
  EXPECT_EQ(call(s, {{"cmd", "reset"}, {"spec", "walls: [\n"}})["ok"], false);
  // None of the above ended the session or lost the episode.
  EXPECT_FALSE(s.closed());
  EXPECT_TRUE(s.has_episode());
  EXPECT_EQ(call(s, step_msg(Action::NoOp))["ok"], true);
}

TEST(SessionTest, ObservationAndInfoMatchTheWorld) {
  Session s("t", {});
  const json r = call(s, {{"cmd", "reset"}, {"spec", "Standard"}, {"seed", 4}});
  ASSERT_EQ(r["ok"], true);
  EXPECT_EQ(r["session"], "t");
  const WorldState w = spawn_episode(standard_spec(), 4);
  const RenderConfig cfg;
  EXPECT_EQ(r["obs"]["width"], cfg.columns);
  EXPECT_EQ(r["obs"]["height"], cfg.rows);
  EXPECT_EQ(r["obs"]["channels"], 3);
  EXPECT_EQ(r["obs"]["encoding"], "base64");
  EXPECT_EQ(base64_decode(r["obs"]["data"].get<std::string>()), render_frame(w, cfg).to_bytes());
  const LocalCoords l = local_coords(w.agent, w.target);
  EXPECT_EQ(r["info"]["x"].get<double>(), l.x);
  EXPECT_EQ(r["info"]["y"].get<double>(), l.y);
  EXPECT_EQ(r["info"]["a"].get<double>(), l.a);
  EXPECT_EQ(r["info"]["step"], 0);
}

TEST(SessionTest, SpecDocumentAndClose) {
  Session s("t", {});
  json r = call(s, {{"cmd", "spec"}});
  EXPECT_EQ(r["name"], "Standard");
  EXPECT_EQ(spec_from_document(r["spec"].get<std::string>()), standard_spec());

  // A full document is accepted in place of a suite name.
  const EnvSpec room = testing::open_room();
  ASSERT_EQ(call(s, {{"cmd", "reset"}, {"spec", spec_to_document(room)}})["ok"], true);
  r = call(s, {{"cmd", "spec"}});
  EXPECT_EQ(spec_from_document(r["spec"].get<std::string>()), room);

  r = call(s, {{"cmd", "close"}});
  EXPECT_EQ(r["ok"], true);
  EXPECT_TRUE(s.closed());
  EXPECT_FALSE(s.has_episode());
}

TEST(SessionTest, StepAfterTerminalIsRejected) {
  ServerDefaults d;
  d.termination.max_length = 3;
  Session s("t", d);
  call(s, {{"cmd", "reset"}});
  for (int i = 0; i < 3; ++i) {
    const json r = call(s, step_msg(Action::NoOp));
    EXPECT_EQ(r["terminal"], i == 2);
    EXPECT_EQ(r["info"]["step"], i + 1);
  }
  EXPECT_EQ(call(s, step_msg(Action::NoOp))["code"], "terminal");
  EXPECT_EQ(call(s, {{"cmd", "reset"}})["ok"], true);
  EXPECT_EQ(call(s, step_msg(Action::NoOp))["ok"], true);
}

// Drives a world in-process and over the wire with the same actions and
// asserts observation bytes, rewards and terminals agree exactly.
void expect_equivalent(EnvClient& client, const std::string& env, std::uint64_t seed,
                       const std::vector<Action>& actions) {
  const ServerDefaults d;
  WorldState w = spawn_episode(suite_env(env), seed);
  json r = json::parse(client.request(json{{"cmd", "reset"}, {"spec", env}, {"seed", seed}}.dump()));
  ASSERT_EQ(r["ok"], true) << r.dump();
  ASSERT_EQ(base64_decode(r["obs"]["data"].get<std::string>()), render_frame(w, d.render).to_bytes());
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const StepOutcome o = step(w, actions[t], d.reward, d.kinematics, d.termination);
    r = json::parse(client.request(step_msg(actions[t]).dump()));
    ASSERT_EQ(r["ok"], true) << r.dump();
    ASSERT_EQ(r["reward"].get<double>(), o.reward) << t;
    ASSERT_EQ(r["terminal"].get<bool>(), o.terminal) << t;
    ASSERT_EQ(base64_decode(r["obs"]["data"].get<std::string>()),
              render_frame(w, d.render).to_bytes())
        << t;
    if (o.terminal) break;
  }
}

class ServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_ = std::make_unique<Server>("127.0.0.1", 0, ServerDefaults{});
    thread_ = std::thread([this] { server_->run(); });
  }
  void TearDown() override {
    server_->stop();
    thread_.join();
  }
  std::uint16_t port() const { return server_->port(); }

  std::unique_ptr<Server> server_;
  std::thread thread_;
};

TEST_F(ServerTest, ScriptedEpisodeMatchesInProcess) {
  EnvClient c("127.0.0.1", port());
  expect_equivalent(c, "Standard", 3, testing::random_actions(100, 1));
  expect_equivalent(c, "Noise2", 8, testing::random_actions(100, 2));
}

TEST_F(ServerTest, ConcurrentSessionsAreIsolated) {
  EnvClient a("127.0.0.1", port());
  EnvClient b("127.0.0.1", port());
  const ServerDefaults d;
  WorldState wa = spawn_episode(standard_spec(), 1);
  WorldState wb = spawn_episode(suite_env("Counterclockwise"), 2);
  json ra = json::parse(a.request(R"({"cmd":"reset","seed":1})"));
  json rb = json::parse(b.request(R"({"cmd":"reset","spec":"Counterclockwise","seed":2})"));
  EXPECT_NE(ra["session"], rb["session"]);
  const auto acts_a = testing::random_actions(60, 5);
  const auto acts_b = testing::random_actions(60, 6);
  for (std::size_t t = 0; t < 60; ++t) {
    const StepOutcome oa = step(wa, acts_a[t], d.reward, d.kinematics, d.termination);
    const StepOutcome ob = step(wb, acts_b[t], d.reward, d.kinematics, d.termination);
    ra = json::parse(a.request(step_msg(acts_a[t]).dump()));
    rb = json::parse(b.request(step_msg(acts_b[t]).dump()));
    ASSERT_EQ(ra["reward"].get<double>(), oa.reward);
    ASSERT_EQ(rb["reward"].get<double>(), ob.reward);
    if (oa.terminal || ob.terminal) break;
  }
  EXPECT_EQ(json::parse(b.request(R"({"cmd":"spec"})"))["name"], "Counterclockwise");
  EXPECT_EQ(json::parse(a.request(R"({"cmd":"spec"})"))["name"], "Standard");
}

TEST_F(ServerTest, DisconnectMidEpisodeLeavesServerUsable) {
  for (int i = 0; i < 5; ++i) {
    EnvClient c("127.0.0.1", port());
    c.request(R"({"cmd":"reset","seed":0})");
    c.request(R"({"cmd":"step","action":"turn-left"})");
    c.close();
  }
  EnvClient c("127.0.0.1", port());
  // A fresh connection starts without an episode.
  EXPECT_EQ(json::parse(c.request(R"({"cmd":"step","action":"no-op"})"))["code"], "no_episode");
  const json r = json::parse(c.request(R"({"cmd":"close"})"));
  EXPECT_EQ(r["closed"], true);
  EXPECT_THROW(c.request(R"({"cmd":"spec"})"), IoError);
}

TEST_F(ServerTest, ResponsesKeepRequestOrder) {
  EnvClient c("127.0.0.1", port());
  c.request(R"({"cmd":"reset","seed":0})");
  for (int t = 1; t <= 20; ++t) {
    const json r = json::parse(c.request(R"({"cmd":"step","action":"move-forward"})"));
    if (r["terminal"].get<bool>()) break;
    ASSERT_EQ(r["info"]["step"], t);
  }
}

TEST(ServerBind, FailureNamesAddress) {
  Server first("127.0.0.1", 0, {});
  try {
    Server second("127.0.0.1", first.port(), {});
    FAIL() << "second bind succeeded";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("127.0.0.1:" + std::to_string(first.port())),
              std::string::npos);
  }
  EXPECT_THROW(Server("not-an-address", 0, {}), IoError);
}

TEST(ServerBind, StopBeforeRunReturns) {
  Server s("127.0.0.1", 0, {});
  s.stop();
  s.run();
  SUCCEED();
}

}  // namespace
}  // namespace atg
