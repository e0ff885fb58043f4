#include <doctest.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <json.hpp>

#include "lfd/bc.hpp"
#include "lfd/bridge.hpp"
#include "lfd/gail.hpp"
#include "lfd/error.hpp"

using namespace lfd;
using json = nlohmann::json;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

namespace {

std::string msg(json j) {
  j["schema"] = "TELEOP1";
  return j.dump();
}

std::string cmd_msg(const Vec3& d, const std::string& gesture = "hold") {
  return msg({{"type", "cmd"}, {"target_delta", {d.x(), d.y(), d.z()}}, {"gesture", gesture}});
}

json only(const TeleopSession::Reply& r) {
  REQUIRE(r.to_sender.size() == 1);
  return json::parse(r.to_sender[0]);
}

BridgeConfig stepping() {
  BridgeConfig c;
  c.step_per_command = true;
  c.seed = 4;
  return c;
}

// Steers the target above the tile in 1 cm moves.
void approach(TeleopSession& s, double height, int limit = 200) {
  for (int i = 0; i < limit; ++i) {
    const Vec3 want = s.env().state().tile_pos + Vec3(0, 0, height);
    const Vec3 d = want - s.target_pose().translation();
    if ((s.env().state().effector_pos - s.env().state().tile_pos).norm() < 0.03) return;
    const double n = d.norm();
    s.handle(cmd_msg(n > 0.01 ? Vec3(d * (0.01 / n)) : d), true);
  }
}

}  // namespace

TEST_CASE("session rejects malformed and foreign messages") {
  TeleopSession s(stepping());
  CHECK(only(s.handle("{oops", true))["code"] == "ParseError");
  CHECK(only(s.handle(R"({"type":"cmd"})", true))["code"] == "SchemaMismatch");
  CHECK(only(s.handle(R"({"schema":"TELEOP2","type":"cmd"})", true))["code"] == "SchemaMismatch");
  CHECK(only(s.handle(msg({{"type", "fly"}}), true))["code"] == "UnknownType");
  CHECK(only(s.handle(msg({{"type", "cmd"}, {"target_delta", {1, 2}}}), true))["code"] == "ParseError");
  CHECK(only(s.handle(msg({{"type", "cmd"}, {"gesture", "grab"}}), true))["code"] == "ParseError");
  CHECK(only(s.handle(msg({{"type", "reset"}, {"seed", -3}}), true))["code"] == "ParseError");
  CHECK(only(s.handle(msg({{"type", "skeleton"}, {"landmarks", json::object()}}), true))["code"] == "ConfigError");
  CHECK(s.env().state().step_index == 0);
}

TEST_CASE("viewers may poll state but not command") {
  TeleopSession s(stepping());
  const json e = only(s.handle(cmd_msg(Vec3(0.01, 0, 0)), false));
  CHECK(e["type"] == "error");
  CHECK(e["code"] == "ViewOnly");
  CHECK(s.env().state().step_index == 0);
  const json st = only(s.handle(msg({{"type", "state"}}), false));
  CHECK(st["type"] == "state");
  CHECK(st["role"] == "viewer");
  CHECK(st["frames"].size() == 7);
  CHECK(st["joints"].size() == 6);
}

TEST_CASE("a command moves the effector toward the target") {
  TeleopSession s(stepping());
  const Vec3 p0 = s.env().state().effector_pos;
  const auto r = s.handle(cmd_msg(Vec3(0, 0, 0.005)), true);
  CHECK(r.broadcast_state);
  CHECK(r.to_sender.empty());
  CHECK(s.env().state().step_index == 1);
  const Vec3 p1 = s.env().state().effector_pos;
  CHECK(p1.z() > p0.z());
  // a zero command with the arm on target leaves the joints alone
  for (int i = 0; i < 20; ++i) s.handle(cmd_msg(Vec3::Zero()), true);
  const JointAngles q = s.env().state().q;
  s.handle(cmd_msg(Vec3::Zero()), true);
  CHECK(s.env().state().q.degrees() == q.degrees());
}

TEST_CASE("unreachable targets freeze motion with IkTrackingLost") {
  TeleopSession s(stepping());
  const HomTransform before = s.target_pose();
  const auto r = s.handle(cmd_msg(Vec3(3.0, 0, 0)), true);
  REQUIRE(r.to_sender.size() == 1);
  CHECK(json::parse(r.to_sender[0])["code"] == "IkTrackingLost");
  CHECK(s.target_pose().matrix() == before.matrix());
  CHECK(s.env().state().step_index == 1);
}

TEST_CASE("teleoperated pick produces the pick event in state") {
  TeleopSession s(stepping());
  approach(s, 0.02);
  REQUIRE((s.env().state().effector_pos - s.env().state().tile_pos).norm() < 0.04);
  REQUIRE_FALSE(s.env().state().done);
  s.handle(cmd_msg(Vec3::Zero(), "suction"), true);
  const json st = json::parse(s.state_message(true));
  CHECK(st["event"] == "picked");
  CHECK(st["reward"] == 1.0);
  CHECK(st["attached"] == true);
  CHECK(st["tile_status"] == "attached");
}

TEST_CASE("ticks coalesce commands: last writer wins per field") {
  BridgeConfig c;
  c.seed = 4;
  TeleopSession s(c);
  CHECK_FALSE(s.handle(cmd_msg(Vec3(0, 0, 0.01)), true).broadcast_state);
  s.handle(msg({{"type", "cmd"}, {"target_delta", {0, 0, 0.002}}}), true);
  s.handle(msg({{"type", "cmd"}, {"gesture", "drop"}}), true);
  CHECK(s.env().state().step_index == 0);
  const Vec3 t0 = s.target_pose().translation();
  bool stepped = false;
  s.tick(stepped);
  CHECK(stepped);
  CHECK(s.env().state().step_index == 1);
  CHECK((s.target_pose().translation() - t0 - Vec3(0, 0, 0.002)).norm() < 1e-12);
  CHECK(s.env().state().effector.mode == EffectorMode::kSuctionOff);
  s.tick(stepped);
  CHECK_FALSE(stepped);
}

TEST_CASE("recording saves whole episodes that replay exactly") {
  const auto path = std::filesystem::temp_directory_path() / "lfd_test_teleop.jsonl";
  std::filesystem::remove(path);
  BridgeConfig c = stepping();
  c.scene.max_steps = 8;
  c.record_path = path;
  TeleopSession s(c);
  const json a = only(s.handle(msg({{"type", "record"}, {"on", true}}), true));
  CHECK(a["type"] == "ack");
  CHECK(a["live"] == true);
  std::vector<std::string> notes;
  for (int i = 0; i < 8; ++i) {
    const auto r = s.handle(cmd_msg(Vec3(0.004, 0, 0)), true);
    notes.insert(notes.end(), r.to_sender.begin(), r.to_sender.end());
  }
  REQUIRE(notes.size() == 1);
  const json saved = json::parse(notes[0]);
  CHECK(saved["type"] == "saved");
  CHECK(saved["trajectories"] == 1);
  CHECK(saved["outcome"] == "truncated");
  REQUIRE(s.recorded().size() == 1);
  const Trajectory& t = s.recorded().trajectories[0];
  CHECK(t.source == DemoSource::kTeleop);
  CHECK(t.steps.size() == 8);
  CHECK(t.well_formed());
  CHECK(load_demos(path) == s.recorded());

  // replaying the recorded actions reproduces the observations
  TileEnv env(c.scene);
  ObsVec obs = env.reset(t.seed);
  for (const auto& st : t.steps) {
    CHECK(obs == st.observation);
    obs = env.step(st.action).observation;
  }

  // arming mid-episode waits for the next one
  s.handle(msg({{"type", "reset"}, {"seed", 10}}), true);
  s.handle(cmd_msg(Vec3(0.004, 0, 0)), true);
  s.handle(msg({{"type", "record"}, {"on", false}}), true);
  const json late = only(s.handle(msg({{"type", "record"}, {"on", true}}), true));
  CHECK(late["live"] == false);
  s.handle(msg({{"type", "reset"}}), true);
  CHECK(s.recording_live());
  CHECK(s.env().episode_seed() == 11);

  // a new session picks up the saved file
  TeleopSession again(c);
  CHECK(again.recorded().size() == 1);
  std::filesystem::remove(path);
}

TEST_CASE("stepping a finished episode asks for a reset") {
  BridgeConfig c = stepping();
  c.scene.max_steps = 2;
  TeleopSession s(c);
  s.handle(cmd_msg(Vec3::Zero()), true);
  s.handle(cmd_msg(Vec3::Zero()), true);
  CHECK(s.env().state().done);
  CHECK(only(s.handle(cmd_msg(Vec3::Zero()), true))["code"] == "EpisodeDone");
  s.handle(msg({{"type", "reset"}}), true);
  CHECK_FALSE(s.env().state().done);
}

TEST_CASE("a fixed command script replays to the identical trajectory") {
  auto run = [] {
    BridgeConfig c;
    c.seed = 21;
    c.scene.max_steps = 30;
    TeleopSession s(c);
    s.handle(msg({{"type", "record"}, {"on", true}}), true);
    bool stepped = false;
    for (int i = 0; i < 30; ++i) {
      s.handle(cmd_msg(Vec3(0.003 * std::sin(i * 0.3), 0.002, -0.001), i == 12 ? "suction" : "hold"), true);
      if (i % 3 == 0) s.handle(msg({{"type", "cmd"}, {"rot_delta", {0, 0, 1.5}}}), true);
      s.tick(stepped);
    }
    return s.recorded();
  };
  const DemoSet a = run(), b = run();
  REQUIRE(a.size() == 1);
  CHECK(a == b);
  CHECK(a.trajectories[0].steps.size() == 30);
}

TEST_CASE("teleop recordings feed BC and GAIL unchanged") {
  BridgeConfig c = stepping();
  c.scene.max_steps = 40;
  TeleopSession s(c);
  s.handle(msg({{"type", "record"}, {"on", true}}), true);
  approach(s, 0.02, 40);
  while (!s.env().state().done) s.handle(cmd_msg(Vec3::Zero(), "suction"), true);
  const DemoSet set = s.recorded();
  REQUIRE(set.size() == 1);
  CHECK(set.trajectories[0].well_formed());
  std::stringstream ss;
  write_demos(ss, set);
  const DemoSet back = read_demos(ss);
  const TransitionTable table = flatten(back);
  Rng rng(3);
  ActorCritic p({16}, rng);
  PolicyGrads g;
  const double loss = bc_loss(p, sample_bc_batch(table, 32, rng), 0.5, &g);
  CHECK(std::isfinite(loss));
  CHECK(g.all_finite());
  // and as GAIL expert data
  EnvPool pool(c.scene, 1, 1);
  PpoConfig pc;
  pc.buffer_size = 64;
  pc.batch_size = 32;
  RolloutBuffer buf = collect_rollouts(pool, p, pc, rng);
  Discriminator d({16}, rng);
  Adam adam = make_disc_optimizer(d, AdamConfig{});
  GailConfig gc;
  gc.batch_size = 32;
  gail_iteration(d, adam, buf, table, gc, rng);
  CHECK(buf.rewards_gail.allFinite());
}

// ---------------------------------------------------------------- server

namespace {

struct WsClient {
  boost::asio::io_context ioc;
  websocket::stream<tcp::socket> ws{ioc};

  explicit WsClient(std::uint16_t port) {
    tcp::resolver res(ioc);
    boost::asio::connect(ws.next_layer(), res.resolve("127.0.0.1", std::to_string(port)));
    ws.next_layer().set_option(tcp::no_delay(true));
    ws.handshake("127.0.0.1", "/ws");
  }
  json read() {
    beast::flat_buffer b;
    ws.read(b);
    return json::parse(beast::buffers_to_string(b.data()));
  }
  // Skips frames until one of the given type arrives.
  json read_type(const std::string& type) {
    for (int i = 0; i < 50; ++i) {
      json j = read();
      if (j["type"] == type) return j;
    }
    FAIL("no frame of type " << type);
    return {};
  }
  void send(const std::string& s) { ws.write(boost::asio::buffer(s)); }
};

http::response<http::string_body> http_get(std::uint16_t port, const std::string& target) {
  boost::asio::io_context ioc;
  tcp::socket sock(ioc);
  tcp::resolver res(ioc);
  boost::asio::connect(sock, res.resolve("127.0.0.1", std::to_string(port)));
  http::request<http::empty_body> req{http::verb::get, target, 11};
  req.set(http::field::host, "127.0.0.1");
  http::write(sock, req);
  beast::flat_buffer b;
  http::response<http::string_body> resp;
  http::read(sock, b, resp);
  return resp;
}

}  // namespace

TEST_CASE("server: static files, websocket roles, driver hand-over") {
  const auto dir = std::filesystem::temp_directory_path() / "lfd_test_static";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "index.html") << "<html>cockpit</html>";
  std::ofstream(dir / "app.js") << "let x = 1;";

  BridgeConfig c = stepping();
  c.port = 0;
  c.static_dir = dir;
  TeleopServer server(c);
  server.start();
  const std::uint16_t port = server.port();
  REQUIRE(port != 0);

  SUBCASE("static") {
    auto r = http_get(port, "/");
    CHECK(r.result() == http::status::ok);
    CHECK(r.body() == "<html>cockpit</html>");
    CHECK(r[http::field::content_type].starts_with("text/html"));
    r = http_get(port, "/app.js");
    CHECK(r.result() == http::status::ok);
    CHECK(r[http::field::content_type].find("javascript") != std::string::npos);
    CHECK(http_get(port, "/missing.css").result() == http::status::not_found);
    CHECK(http_get(port, "/../etc/passwd").result() != http::status::ok);
  }

  SUBCASE("websocket") {
    WsClient a(port);
    json h = a.read();
    CHECK(h["type"] == "hello");
    CHECK(h["role"] == "driver");
    CHECK(a.read()["type"] == "state");

    WsClient b(port);
    CHECK(b.read()["role"] == "viewer");
    CHECK(b.read()["type"] == "state");

    b.send(cmd_msg(Vec3(0, 0, 0.005)));
    const json e = b.read();
    CHECK(e["code"] == "ViewOnly");

    a.send(cmd_msg(Vec3(0, 0, 0.005)));
    const json sa = a.read_type("state"), sb = b.read_type("state");
    CHECK(sa["step"] == 1);
    CHECK(sb["step"] == 1);
    CHECK(sb["role"] == "viewer");

    a.ws.close(websocket::close_code::normal);
    const json promoted = b.read_type("hello");
    CHECK(promoted["role"] == "driver");
    b.send(cmd_msg(Vec3(0, 0, 0.005)));
    CHECK(b.read_type("state")["step"] == 2);
  }

  SUBCASE("port in use") {
    BridgeConfig d = c;
    d.port = port;
    TeleopServer other(d);
    try {
      other.start();
      FAIL("expected PortInUse");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kPortInUse);
    }
  }

  server.stop();
  std::filesystem::remove_all(dir);
}

TEST_CASE("server: fixed-rate ticks broadcast state") {
  BridgeConfig c;
  c.port = 0;
  c.tick_hz = 50;
  TeleopServer server(c);
  server.start();
  WsClient a(server.port());
  a.read_type("state");
  a.send(cmd_msg(Vec3(0, 0, 0.004)));
  const auto t0 = std::chrono::steady_clock::now();
  const json st = a.read_type("state");
  CHECK(st["step"] == 1);
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(2));
  server.stop();
}
