#include "atg/envserver.hpp"

#include <functional>
#include <list>
#include <mutex>
#include <thread>

#include <boost/asio.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "atg/envspec_io.hpp"
#include "atg/errors.hpp"

namespace atg {

namespace asio = boost::asio;
using asio::ip::tcp;
using nlohmann::json;

// ------------------------------------------------------------------ base64

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  if (bytes.empty()) return out;
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw IoError("base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  if (text.empty()) return out;
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw IoError("base64: invalid input");
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock keeps the zero bytes that stand in for padding.
  if (text.ends_with("==")) len -= 2;
  else if (text.ends_with("=")) len -= 1;
  out.resize(len);
  return out;
}

// ----------------------------------------------------------------- session

namespace {

json error_reply(std::string_view code, const std::string& message) {
  return json{{"ok", false}, {"code", code}, {"error", message}};
}

json observation(const WorldState& world, const RenderConfig& render) {
  const Frame f = render_frame(world, render);
  const std::vector<std::uint8_t> bytes = f.to_bytes();
  return json{{"width", f.width()},
              {"height", f.height()},
              {"channels", Frame::channels()},
              {"encoding", "base64"},
              {"data", base64_encode(bytes)}};
}

json info(const WorldState& world) {
  const LocalCoords l = local_coords(world.agent, world.target);
  return json{{"x", l.x}, {"y", l.y}, {"a", l.a}, {"step", world.step_count}};
}

EnvSpec resolve_spec(const json& field, const EnvSpec& fallback) {
  if (field.is_null()) return fallback;
  if (!field.is_string()) throw UsageError("spec must be a suite name or a spec document");
  const std::string text = field.get<std::string>();
  if (text.find(':') != std::string::npos || text.find('\n') != std::string::npos)
    return spec_from_document(text);
  return suite_env(text);
}

}  // namespace

Session::Session(std::string id, ServerDefaults defaults)
    : id_(std::move(id)), defaults_(std::move(defaults)) {}

std::string Session::handle(std::string_view line) {
  json reply;
  try {
    json msg;
    try {
      msg = json::parse(line);
    } catch (const json::parse_error& e) {
      return error_reply("parse", e.what()).dump();
    }
    if (!msg.is_object() || !msg.contains("cmd") || !msg["cmd"].is_string())
      return error_reply("parse", "expected an object with a string \"cmd\"").dump();
    const std::string cmd = msg["cmd"].get<std::string>();

    if (cmd == "reset") {
      const EnvSpec spec = resolve_spec(msg.value("spec", json()), defaults_.spec);
      std::uint64_t seed = 0;
      if (msg.contains("seed")) {
        if (!msg["seed"].is_number_unsigned())
          return error_reply("bad_request", "seed must be a non-negative integer").dump();
        seed = msg["seed"].get<std::uint64_t>();
      }
      world_ = spawn_episode(spec, seed);
      reply = {{"ok", true},
               {"session", id_},
               {"obs", observation(*world_, defaults_.render)},
               {"info", info(*world_)}};
    } else if (cmd == "step") {
      if (!msg.contains("action") || !msg["action"].is_string())
        return error_reply("bad_action", "missing action name").dump();
      const std::string name = msg["action"].get<std::string>();
      const std::optional<Action> a = parse_action(name);
      if (!a) return error_reply("bad_action", "unknown action '" + name + "'").dump();
      if (!world_) return error_reply("no_episode", "send reset before step").dump();
      if (world_->terminal) return error_reply("terminal", "episode has ended; reset").dump();
      const StepOutcome o =
          step(*world_, *a, defaults_.reward, defaults_.kinematics, defaults_.termination);
      reply = {{"ok", true},
               {"obs", observation(*world_, defaults_.render)},
               {"reward", o.reward},
               {"terminal", o.terminal},
               {"info", info(*world_)}};
    } else if (cmd == "spec") {
      const EnvSpec& spec = world_ ? *world_->spec : defaults_.spec;
      reply = {{"ok", true}, {"name", spec.name}, {"spec", spec_to_document(spec)}};
    } else if (cmd == "close") {
      world_.reset();
      closed_ = true;
      reply = {{"ok", true}, {"closed", true}};
    } else {
      return error_reply("bad_cmd", "unknown cmd '" + cmd + "'").dump();
    }
  } catch (const json::exception& e) {
    return error_reply("bad_request", e.what()).dump();
  } catch (const ValidationError& e) {
    return error_reply("bad_spec", e.what()).dump();
  } catch (const ConfigError& e) {
    return error_reply("bad_spec", e.what()).dump();
  } catch (const UsageError& e) {
    return error_reply("bad_request", e.what()).dump();
  } catch (const std::exception& e) {
    return error_reply("internal", e.what()).dump();
  }
  return reply.dump();
}

// ------------------------------------------------------------------ server

namespace {

constexpr std::size_t kMaxLine = 16u << 20;

struct Connection {
  tcp::socket socket;
  std::thread thread;
  std::atomic<bool> done{false};
  explicit Connection(tcp::socket s) : socket(std::move(s)) {}
};

}  // namespace

struct Server::Impl {
  asio::io_context io;
  tcp::acceptor acceptor{io};
  ServerDefaults defaults;
  std::mutex mutex;
  std::list<Connection> connections;
  std::atomic<bool> stopping{false};
  std::uint64_t next_id = 0;

  void serve_connection(Connection& c, std::string id) {
    Session session(std::move(id), defaults);
    asio::streambuf buf(kMaxLine);
    boost::system::error_code ec;
    while (!session.closed()) {
      const std::size_t n = asio::read_until(c.socket, buf, '\n', ec);
      if (ec) break;
      std::string line(asio::buffers_begin(buf.data()),
                       asio::buffers_begin(buf.data()) + static_cast<std::ptrdiff_t>(n - 1));
      buf.consume(n);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::string reply = session.handle(line);
      reply.push_back('\n');
      asio::write(c.socket, asio::buffer(reply), ec);
      if (ec) break;
    }
    c.socket.shutdown(tcp::socket::shutdown_both, ec);
    c.done = true;
  }

  void reap(bool all) {
    std::lock_guard lock(mutex);
    for (auto it = connections.begin(); it != connections.end();) {
      if (all || it->done) {
        if (it->thread.joinable()) it->thread.join();
        it = connections.erase(it);
      } else {
        ++it;
      }
    }
  }
};

Server::Server(const std::string& host, std::uint16_t port, ServerDefaults defaults)
    : impl_(std::make_unique<Impl>()) {
  impl_->defaults = std::move(defaults);
  const std::string where = host + ":" + std::to_string(port);
  boost::system::error_code ec;
  const auto addr = asio::ip::make_address(host, ec);
  if (ec) throw IoError("cannot bind " + where + ": " + ec.message());
  const tcp::endpoint ep(addr, port);
  impl_->acceptor.open(ep.protocol(), ec);
  if (!ec) impl_->acceptor.set_option(tcp::acceptor::reuse_address(true), ec);
  if (!ec) impl_->acceptor.bind(ep, ec);
  if (!ec) impl_->acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw IoError("cannot bind " + where + ": " + ec.message());
}

Server::~Server() {
  stop();
  impl_->reap(true);
}

std::uint16_t Server::port() const noexcept {
  boost::system::error_code ec;
  const auto ep = impl_->acceptor.local_endpoint(ec);
  return ec ? 0 : ep.port();
}

void Server::run() {
  auto accept_next = std::make_shared<std::function<void()>>();
  *accept_next = [this, accept_next] {
    impl_->acceptor.async_accept([this, accept_next](boost::system::error_code ec,
                                                     tcp::socket socket) {
      if (impl_->stopping || !impl_->acceptor.is_open()) return;
      if (!ec) {
        socket.set_option(tcp::no_delay(true), ec);
        impl_->reap(false);
        std::lock_guard lock(impl_->mutex);
        Connection& c = impl_->connections.emplace_back(std::move(socket));
        const std::string id = "s" + std::to_string(++impl_->next_id);
        c.thread = std::thread([this, &c, id] { impl_->serve_connection(c, id); });
      }
      (*accept_next)();
    });
  };
  if (!impl_->stopping) {
    (*accept_next)();
    impl_->io.run();
  }
  *accept_next = nullptr;
  // Wake readers blocked on idle connections; a handler that is mid-request
  // still writes its reply before it sees the closed read side.
  {
    std::lock_guard lock(impl_->mutex);
    for (Connection& c : impl_->connections) {
      boost::system::error_code ec;
      c.socket.shutdown(tcp::socket::shutdown_receive, ec);
    }
  }
  impl_->reap(true);
}

void Server::stop() {
  if (impl_->stopping.exchange(true)) return;
  asio::post(impl_->io, [this] {
    boost::system::error_code ec;
    impl_->acceptor.close(ec);
    impl_->io.stop();
  });
}

// ------------------------------------------------------------------ client

struct EnvClient::Impl {
  asio::io_context io;
  tcp::socket socket{io};
  asio::streambuf buf{kMaxLine};
};

EnvClient::EnvClient(const std::string& host, std::uint16_t port)
    : impl_(std::make_unique<Impl>()) {
  boost::system::error_code ec;
  tcp::resolver resolver(impl_->io);
  const auto endpoints = resolver.resolve(host, std::to_string(port), ec);
  if (!ec) asio::connect(impl_->socket, endpoints, ec);
  if (ec) throw IoError("cannot connect to " + host + ":" + std::to_string(port) + ": " +
                        ec.message());
  impl_->socket.set_option(tcp::no_delay(true), ec);
}

EnvClient::~EnvClient() { close(); }

std::string EnvClient::request(std::string_view json_line) {
  std::string out(json_line);
  out.push_back('\n');
  boost::system::error_code ec;
  asio::write(impl_->socket, asio::buffer(out), ec);
  if (ec) throw IoError("send failed: " + ec.message());
  const std::size_t n = asio::read_until(impl_->socket, impl_->buf, '\n', ec);
  if (ec) throw IoError("receive failed: " + ec.message());
  std::string line(asio::buffers_begin(impl_->buf.data()),
                   asio::buffers_begin(impl_->buf.data()) + static_cast<std::ptrdiff_t>(n - 1));
  impl_->buf.consume(n);
  return line;
}

void EnvClient::close() {
  boost::system::error_code ec;
  if (impl_ && impl_->socket.is_open()) {
    impl_->socket.shutdown(tcp::socket::shutdown_both, ec);
    impl_->socket.close(ec);
  }
}

}  // namespace atg
