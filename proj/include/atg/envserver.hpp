#pragma once

// Newline-delimited JSON environment server. One session per TCP
// connection; see docs/protocol.json for the message shapes.

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "atg/evalkit.hpp"

namespace atg {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

struct ServerDefaults {
  EnvSpec spec = standard_spec();
  RenderConfig render;
  RewardParams reward;
  Kinematics kinematics;
  TerminationConfig termination;
};

class Session {
 public:
  Session(std::string id, ServerDefaults defaults);

  // One request line in, one response line out (no trailing newline).
  // Never throws; failures come back as {"ok":false,"code":...}.
  std::string handle(std::string_view line);

  const std::string& id() const noexcept { return id_; }
  bool closed() const noexcept { return closed_; }
  bool has_episode() const noexcept { return world_.has_value(); }

 private:
  std::string id_;
  ServerDefaults defaults_;
  std::optional<WorldState> world_;
  bool closed_ = false;
};

inline std::string handle_message(Session& session, std::string_view line) {
  return session.handle(line);
}

class Server {
 public:
  // Binds immediately; throws IoError naming the address on failure.
  // Port 0 picks a free port.
  Server(const std::string& host, std::uint16_t port, ServerDefaults defaults);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const noexcept;
  // Blocks until stop(); each connection runs on its own thread.
  void run();
  // Safe from any thread or a signal-watching thread. Lets in-flight
  // requests finish, then closes every connection.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Minimal blocking client, one request at a time.
class EnvClient {
 public:
  EnvClient(const std::string& host, std::uint16_t port);
  ~EnvClient();
  EnvClient(const EnvClient&) = delete;
  EnvClient& operator=(const EnvClient&) = delete;

  // Sends `json_line` plus a newline and returns the response line.
  std::string request(std::string_view json_line);
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace atg
