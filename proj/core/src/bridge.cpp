#include "lfd/bridge.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>

#include <Eigen/Geometry>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "lfd/error.hpp"
#include "lfd/gesture.hpp"
#include "lfd/handmap.hpp"

namespace lfd {

using nlohmann::json;

namespace {

json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_json(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  }
  return a;
}

Vec3 read_vec3(const json& j, const char* key) {
  Vec3 v = Vec3::Zero();
  if (!j.contains(key)) return v;
  const auto& a = j[key];
  if (!a.is_array() || a.size() != 3) throw Error(ErrorCode::kParseError, std::string(key) + " must hold 3 numbers");
  for (size_t i = 0; i < 3; ++i) {
    if (!a[i].is_number()) throw Error(ErrorCode::kParseError, std::string(key) + " must hold numbers");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  if (!v.allFinite()) throw Error(ErrorCode::kParseError, std::string(key) + " must be finite");
  return v;
}

EffectorCmd cmd_for_gesture(GestureLabel g) {
  switch (g) {
    case GestureLabel::kClosing: return EffectorCmd::kSuction;
    case GestureLabel::kOpening: return EffectorCmd::kDrop;
    default: return EffectorCmd::kHold;
  }
}

std::string ack(std::string_view what, json extra = json::object()) {
  extra["schema"] = kTeleopSchema;
  extra["type"] = "ack";
  extra["what"] = what;
  return extra.dump();
}

}  // namespace

// ---------------------------------------------------------------- session

TeleopSession::TeleopSession(const BridgeConfig& config) : config_(config), env_(config.scene) {
  if (!config_.gesture_model.empty()) gesture_model_ = SvmModel::load(config_.gesture_model);
  if (!config_.record_path.empty() && std::filesystem::exists(config_.record_path)) {
    recorded_ = load_demos(config_.record_path);
  }
  reset(config_.seed);
}

void TeleopSession::reset(std::uint64_t seed) {
  env_.reset(seed);
  target_ = env_.effector_pose();
  last_ = StepResult{};
  last_.observation = env_.observation();
  pending_.reset();
  skeleton_anchor_.reset();
  // an unfinished recording is discarded
  current_ = Trajectory{};
  current_.source = DemoSource::kTeleop;
  current_.seed = seed;
  recording_live_ = recording_;
}

std::string TeleopSession::error_message(std::string_view code, std::string_view message) {
  return json{{"schema", kTeleopSchema}, {"type", "error"}, {"code", code}, {"message", message}}.dump();
}

std::string TeleopSession::hello_message(bool driver) const {
  return json{{"schema", kTeleopSchema},
              {"type", "hello"},
              {"role", driver ? "driver" : "viewer"},
              {"tick_hz", config_.tick_hz},
              {"step_per_command", config_.step_per_command}}
      .dump();
}

std::string TeleopSession::state_message(bool driver) const {
  const EnvState& s = env_.state();
  const HomTransform pose = env_.effector_pose();
  json frames = json::array();
  for (const auto& f : chain_frames(env_.config().dh, s.q)) frames.push_back(mat_json(f));
  json j{{"schema", kTeleopSchema},
         {"type", "state"},
         {"role", driver ? "driver" : "viewer"},
         {"step", s.step_index},
         {"episode_seed", env_.episode_seed()},
         {"joints", vec_json(s.q.degrees())},
         {"effector_pose", {{"position", vec_json(pose.translation())}, {"rotation", mat_json(pose.rotation())}}},
         {"effector", to_string(s.effector.mode)},
         {"tile", vec_json(s.tile_pos)},
         {"tile_status", to_string(s.tile_status)},
         {"target", vec_json(env_.config().target)},
         {"attached", s.tile_status == TileStatus::kAttached},
         {"reward", last_.reward},
         {"event", to_string(last_.event)},
         {"done", s.done},
         {"recording", recording_},
         {"recorded", recorded_.size()},
         {"frames", frames}};
  return j.dump();
}

std::optional<std::string> TeleopSession::step_with(const TeleopCommand& cmd, std::vector<std::string>& notes) {
  if (env_.state().done) return error_message("EpisodeDone", "episode finished; send reset");

  const HomTransform prev_target = target_;
  const Vec3 rot = cmd.rot_delta * (std::numbers::pi / 180.0);
  Mat3 r = target_.rotation();
  if (rot.norm() > 0) r = Eigen::AngleAxisd(rot.norm(), rot.normalized()).toRotationMatrix() * r;
  target_ = HomTransform(r, target_.translation() + cmd.target_delta);

  std::optional<std::string> err;
  AgentAction action;
  action.cmd = cmd.cmd;
  const JointAngles q = env_.state().q;
  // Already on target: no motion at all, so idle ticks leave the arm alone.
  if (transform_error(env_.effector_pose(), target_) > config_.ik.e_max) {
    try {
      const IkSolution sol = solve_ik(env_.config().dh, q, target_, config_.ik);
      Vec6 d;
      for (int i = 0; i < 6; ++i) d[i] = wrap_degrees(sol.q[i] - q[i]) / env_.config().max_delta_deg;
      const double peak = d.cwiseAbs().maxCoeff();
      action.joint_deltas = peak > 1.0 ? Vec6(d / peak) : d;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotConverged) throw;
      target_ = prev_target;
      err = error_message(to_string(ErrorCode::kIkTrackingLost), "target pose unreachable; motion frozen");
    }
  }

  const ObsVec obs = env_.observation();
  action.clip();
  last_ = env_.step(action);
  if (recording_live_) {
    current_.steps.push_back(Transition{obs, action, last_.reward, last_.done, last_.event});
    if (last_.done) notes.push_back(finish_recording());
  }
  return err;
}

std::string TeleopSession::finish_recording() {
  current_.outcome = current_.steps.back().event;
  recorded_.trajectories.push_back(std::move(current_));
  current_ = Trajectory{};
  current_.source = DemoSource::kTeleop;
  current_.seed = env_.episode_seed();
  recording_live_ = false;
  if (!config_.record_path.empty()) save_demos(config_.record_path, recorded_);
  json j{{"schema", kTeleopSchema},
         {"type", "saved"},
         {"trajectories", recorded_.size()},
         {"outcome", to_string(recorded_.trajectories.back().outcome)}};
  if (!config_.record_path.empty()) j["path"] = config_.record_path.string();
  return j.dump();
}

TeleopSession::Reply TeleopSession::handle(std::string_view text, bool driver) {
  Reply reply;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    reply.to_sender.push_back(error_message("ParseError", e.what()));
    return reply;
  }
  if (!j.is_object() || !j.contains("schema") || j["schema"] != kTeleopSchema) {
    reply.to_sender.push_back(error_message("SchemaMismatch", "messages must carry schema TELEOP1"));
    return reply;
  }
  const std::string type = j.value("type", "");
  const bool known = type == "cmd" || type == "record" || type == "reset" || type == "skeleton" || type == "state";
  if (!known) {
    reply.to_sender.push_back(error_message("UnknownType", "unknown message type '" + type + "'"));
    return reply;
  }
  if (type == "state") {  // explicit poll
    reply.to_sender.push_back(state_message(driver));
    return reply;
  }
  if (!driver) {
    reply.to_sender.push_back(error_message("ViewOnly", "another client is driving this session"));
    return reply;
  }

  try {
    if (type == "reset") {
      std::uint64_t seed = env_.episode_seed() + 1;
      if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw Error(ErrorCode::kParseError, "seed must be a non-negative integer");
        seed = j["seed"].get<std::uint64_t>();
      }
      reset(seed);
      reply.broadcast_state = true;
    } else if (type == "record") {
      if (!j.contains("on") || !j["on"].is_boolean()) throw Error(ErrorCode::kParseError, "record needs a boolean 'on'");
      const bool on = j["on"].get<bool>();
      if (on && !recording_) {
        recording_ = true;
        // only whole episodes are recorded: arm now if nothing happened yet
        recording_live_ = env_.state().step_index == 0 && !env_.state().done;
        current_ = Trajectory{};
        current_.source = DemoSource::kTeleop;
        current_.seed = env_.episode_seed();
      } else if (!on) {
        recording_ = false;
        recording_live_ = false;
        current_.steps.clear();
      }
      reply.to_sender.push_back(ack("record", {{"on", recording_}, {"live", recording_live_}}));
    } else {
      TeleopCommand cmd;
      if (type == "cmd") {
        cmd.target_delta = read_vec3(j, "target_delta");
        cmd.rot_delta = read_vec3(j, "rot_delta");
        cmd.cmd = effector_cmd_from_string(j.value("gesture", std::string("hold")));
      } else {  // skeleton
        if (!gesture_model_) throw Error(ErrorCode::kConfigError, "skeleton mode needs a gesture model");
        if (!j.contains("landmarks") || !j["landmarks"].is_object()) {
          throw Error(ErrorCode::kParseError, "skeleton needs a 'landmarks' object");
        }
        const HandSkeleton skel = skeleton_from_json(j["landmarks"].dump());
        const HandFrame frame = hand_frame(skel);
        const GestureLabel g = gesture_svm_predict(*gesture_model_, featurize(skel));
        // hand motion relative to the first frame moves the target
        if (!skeleton_anchor_) {
          skeleton_anchor_ = frame.origin;
          target_anchor_ = target_.translation();
        }
        const Vec3 want = target_anchor_ + (frame.origin - *skeleton_anchor_);
        cmd.target_delta = want - target_.translation();
        cmd.cmd = cmd_for_gesture(g);
        reply.to_sender.push_back(ack("skeleton", {{"gesture", to_string(g)}}));
      }
      if (config_.step_per_command) {
        if (auto err = step_with(cmd, reply.to_sender)) reply.to_sender.push_back(*err);
        reply.broadcast_state = true;
      } else {
        // coalesce until the next tick: last writer wins per field
        if (!pending_) pending_ = TeleopCommand{};
        if (type == "skeleton" || j.contains("target_delta")) pending_->target_delta = cmd.target_delta;
        if (j.contains("rot_delta")) pending_->rot_delta = cmd.rot_delta;
        if (type == "skeleton" || j.contains("gesture")) pending_->cmd = cmd.cmd;
      }
    }
  } catch (const Error& e) {
    reply.to_sender.push_back(error_message(to_string(e.code()), e.what()));
  } catch (const json::exception& e) {
    reply.to_sender.push_back(error_message("ParseError", e.what()));
  }
  return reply;
}

std::vector<std::string> TeleopSession::tick(bool& stepped) {
  std::vector<std::string> out;
  stepped = false;
  if (!pending_) return out;
  const TeleopCommand cmd = *pending_;
  pending_.reset();
  if (auto err = step_with(cmd, out)) out.push_back(*err);
  stepped = true;
  return out;
}

// ---------------------------------------------------------------- server

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

namespace {

std::string_view mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

class WsClient;

}  // namespace

struct TeleopServer::Impl {
  explicit Impl(BridgeConfig c) : config(std::move(c)), acceptor(ioc), timer(ioc), signals(ioc) {}

  BridgeConfig config;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  asio::steady_timer timer;
  asio::signal_set signals;
  std::unique_ptr<TeleopSession> session;
  std::vector<std::shared_ptr<WsClient>> clients;  // first is the driver
  std::thread thread;
  std::mutex mu;
  std::condition_variable cv;
  bool stopped = false;

  void do_accept();
  void schedule_tick();
  void on_open(const std::shared_ptr<WsClient>& c);
  void on_close(const std::shared_ptr<WsClient>& c);
  void on_message(const std::shared_ptr<WsClient>& c, std::string text);
  void broadcast_state();
  bool is_driver(const WsClient* c) const { return !clients.empty() && clients.front().get() == c; }
  void shutdown();
};

namespace {

class WsClient : public std::enable_shared_from_this<WsClient> {
 public:
  WsClient(tcp::socket socket, TeleopServer::Impl& server) : ws_(std::move(socket)), server_(server) {}

  template <class Body, class Allocator>
  void accept(http::request<Body, http::basic_fields<Allocator>> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->server_.on_open(self);
      self->read();
    });
  }

  void send(std::string text) {
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) write_next();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().cancel(ec);
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        self->server_.on_close(self);
        return;
      }
      std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->server_.on_message(self, std::move(text));
      if (!self->closed_) self->read();
    });
  }

  void write_next() {
    if (closed_) {
      queue_.clear();
      return;
    }
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->queue_.clear();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write_next();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  TeleopServer::Impl& server_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  bool closed_ = false;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket socket, TeleopServer::Impl& server) : stream_(std::move(socket)), server_(server) {}

  void run() { read(); }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->handle();
    });
  }

  void handle() {
    if (websocket::is_upgrade(req_)) {
      if (req_.target() != "/ws") return reply(http::status::not_found, "text/plain", "websocket endpoint is /ws");
      stream_.expires_never();
      auto client = std::make_shared<WsClient>(stream_.release_socket(), server_);
      client->accept(std::move(req_));
      return;
    }
    if (req_.method() != http::verb::get && req_.method() != http::verb::head) {
      return reply(http::status::bad_request, "text/plain", "unsupported method");
    }
    std::string target(req_.target());
    if (auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (target.empty() || target.back() == '/') target += "index.html";
    if (server_.config.static_dir.empty() || target.find("..") != std::string::npos) {
      return reply(http::status::not_found, "text/plain", "not found");
    }
    const auto path = server_.config.static_dir / std::filesystem::path(target).relative_path();
    std::ifstream in(path, std::ios::binary);
    if (!in) return reply(http::status::not_found, "text/plain", "not found");
    std::ostringstream body;
    body << in.rdbuf();
    reply(http::status::ok, mime_type(path), body.str());
  }

  void reply(http::status status, std::string_view type, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::content_type, beast::string_view(type.data(), type.size()));
    res->keep_alive(req_.keep_alive());
    if (req_.method() != http::verb::head) res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec || !res->keep_alive()) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->read();
    });
  }

  beast::tcp_stream stream_;
  TeleopServer::Impl& server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

void TeleopServer::Impl::do_accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<HttpConnection>(std::move(socket), *this)->run();
    do_accept();
  });
}

void TeleopServer::Impl::schedule_tick() {
  if (config.step_per_command || config.tick_hz <= 0) return;
  timer.expires_after(std::chrono::microseconds(static_cast<long>(1e6 / config.tick_hz)));
  timer.async_wait([this](beast::error_code ec) {
    if (ec) return;
    bool stepped = false;
    const auto notes = session->tick(stepped);
    if (!clients.empty()) {
      for (const auto& n : notes) clients.front()->send(n);
    }
    if (stepped) broadcast_state();
    schedule_tick();
  });
}

void TeleopServer::Impl::on_open(const std::shared_ptr<WsClient>& c) {
  clients.push_back(c);
  const bool driver = is_driver(c.get());
  c->send(session->hello_message(driver));
  c->send(session->state_message(driver));
}

void TeleopServer::Impl::on_close(const std::shared_ptr<WsClient>& c) {
  const bool was_driver = is_driver(c.get());
  std::erase(clients, c);
  if (was_driver && !clients.empty()) clients.front()->send(session->hello_message(true));  // promoted
}

void TeleopServer::Impl::on_message(const std::shared_ptr<WsClient>& c, std::string text) {
  const bool driver = is_driver(c.get());
  const auto reply = session->handle(text, driver);
  for (const auto& m : reply.to_sender) c->send(m);
  if (reply.broadcast_state) broadcast_state();
}

void TeleopServer::Impl::broadcast_state() {
  for (size_t i = 0; i < clients.size(); ++i) clients[i]->send(session->state_message(i == 0));
}

void TeleopServer::Impl::shutdown() {
  beast::error_code ec;
  acceptor.close(ec);
  timer.cancel();
  signals.cancel(ec);
  for (auto& c : clients) c->close();
  clients.clear();
  ioc.stop();
}

TeleopServer::TeleopServer(BridgeConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

TeleopServer::~TeleopServer() { stop(); }

void TeleopServer::start() {
  auto& im = *impl_;
  im.session = std::make_unique<TeleopSession>(im.config);
  beast::error_code ec;
  const tcp::endpoint ep(asio::ip::make_address(im.config.address, ec), im.config.port);
  if (ec) throw Error(ErrorCode::kConfigError, "bad bridge address '" + im.config.address + "'");
  im.acceptor.open(ep.protocol(), ec);
  if (!ec) im.acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) im.acceptor.bind(ep, ec);
  if (ec) {
    throw Error(ErrorCode::kPortInUse,
                "cannot bind " + im.config.address + ":" + std::to_string(im.config.port) + ": " + ec.message());
  }
  im.acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw Error(ErrorCode::kPortInUse, "cannot listen: " + ec.message());
  im.do_accept();
  im.schedule_tick();
  im.signals.add(SIGINT, ec);
  im.signals.add(SIGTERM, ec);
  im.signals.async_wait([&im](beast::error_code e, int) {
    if (!e) im.shutdown();
  });
  im.thread = std::thread([&im] {
    im.ioc.run();
    std::lock_guard lock(im.mu);
    im.stopped = true;
    im.cv.notify_all();
  });
}

void TeleopServer::stop() {
  auto& im = *impl_;
  if (!im.thread.joinable()) return;
  asio::post(im.ioc, [&im] { im.shutdown(); });
  im.thread.join();
}

void TeleopServer::wait() {
  auto& im = *impl_;
  std::unique_lock lock(im.mu);
  im.cv.wait(lock, [&im] { return im.stopped; });
}

std::uint16_t TeleopServer::port() const {
  beast::error_code ec;
  const auto ep = impl_->acceptor.local_endpoint(ec);
  return ec ? impl_->config.port : ep.port();
}

}  // namespace lfd
