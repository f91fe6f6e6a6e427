#pragma once

// JSON-lines episode server. Every message is one JSON object per line; the
// same messages travel over stdio and TCP. See docs/wire-protocol.md.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "viewplan/episode.hpp"

namespace viewplan {

struct ServerConfig {
  ProtocolVariant variant = ProtocolVariant::Default;
  std::uint64_t seed = 0;  // picks the instance for a reset that names none
  CameraIntrinsics intrinsics;
  bool render = true;             // false: observations carry no images
  std::filesystem::path log_path; // RolloutLog JSONL sink; empty disables
};

/// Error codes carried by {"type": "error"} messages.
namespace wire_error {
inline constexpr std::string_view kBadJson = "bad_json";
inline constexpr std::string_view kBadMessage = "bad_message";
inline constexpr std::string_view kNoEpisode = "no_episode";
inline constexpr std::string_view kUnknownInstance = "unknown_instance";
inline constexpr std::string_view kUnknownScene = "unknown_scene";
inline constexpr std::string_view kDuplicateEpisode = "duplicate_episode";
inline constexpr std::string_view kInternal = "internal";
}  // namespace wire_error

json error_message(std::string_view code, const std::string& detail, const std::string& episode_id = {});

class EpisodeServer {
 public:
  /// Scenes are shared read-only across sessions. Instances keep manifest order.
  EpisodeServer(std::vector<EpisodeInstance> instances, std::map<std::string, std::shared_ptr<const Scene>> scenes,
                ServerConfig cfg);
  ~EpisodeServer();
  EpisodeServer(const EpisodeServer&) = delete;
  EpisodeServer& operator=(const EpisodeServer&) = delete;

  /// One logical client. Not thread-safe; each connection owns its session.
  class Session {
   public:
    /// Replies to one input line (zero or more messages, usually one).
    std::vector<json> handle_line(std::string_view line);
    /// Ends any open episode as aborted ("disconnect") so it is still logged.
    void close();
    ~Session();

    [[nodiscard]] const std::string& id() const { return id_; }

   private:
    friend class EpisodeServer;
    struct Active;
    Session(EpisodeServer& server, std::string id);

    json on_reset(const json& msg);
    json on_act(const json& msg);
    json observation();
    json finish();

    EpisodeServer& server_;
    std::string id_;
    std::size_t resets_ = 0;
    std::map<std::string, bool> used_ids_;
    std::unique_ptr<Active> active_;
  };

  std::unique_ptr<Session> open_session();

  /// Serves one session over a line stream until EOF.
  void serve_stream(std::istream& in, std::ostream& out);

  /// Accepts TCP connections until stop(). `ready` receives the bound port
  /// (useful with port 0). One thread per connection.
  void serve_tcp(const std::string& host, unsigned short port, const std::function<void(unsigned short)>& ready = {});
  /// Thread-safe; unblocks serve_tcp and closes open connections.
  void stop();

  /// Completed episodes in completion order.
  [[nodiscard]] std::vector<RolloutLog> logs() const;
  [[nodiscard]] const ServerConfig& config() const { return cfg_; }
  [[nodiscard]] const std::vector<EpisodeInstance>& instances() const { return instances_; }

 private:
  void record(RolloutLog log);

  std::vector<EpisodeInstance> instances_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::shared_ptr<const Scene>> scenes_;
  ServerConfig cfg_;
  std::atomic<std::uint64_t> sessions_{0};

  mutable std::mutex log_mutex_;
  std::vector<RolloutLog> logs_;

  struct Tcp;
  std::unique_ptr<Tcp> tcp_;
  std::mutex tcp_mutex_;
};

}  // namespace viewplan
