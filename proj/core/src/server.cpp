#include "viewplan/server.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <thread>

#include <boost/asio.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "viewplan/image_io.hpp"
#include "viewplan/random.hpp"

namespace viewplan {

namespace asio = boost::asio;
using asio::ip::tcp;

json error_message(std::string_view code, const std::string& detail, const std::string& episode_id) {
  json j = {{"type", "error"}, {"code", code}, {"detail", detail}};
  if (!episode_id.empty()) j["episode_id"] = episode_id;
  return j;
}

namespace {

struct WireError {
  std::string_view code;
  std::string detail;
};

json image_json(const RenderedView& view, bool with_png) {
  json j = {{"id", view_id(view)}};
  if (with_png) j["png"] = base64_encode(encode_png(to_image(view)));
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Session

struct EpisodeServer::Session::Active {
  std::string episode_id;
  Episode episode;
  const Scene* scene = nullptr;
  bool send_png = true;
  json target_image;
  json topdown_image;
  std::vector<std::vector<std::string>> request_images;
};

EpisodeServer::Session::Session(EpisodeServer& server, std::string id) : server_(server), id_(std::move(id)) {}

EpisodeServer::Session::~Session() { close(); }

void EpisodeServer::Session::close() {
  if (active_ && !active_->episode.terminal()) {
    active_->episode.abort("disconnect");
    finish();
  }
  active_.reset();
}

std::vector<json> EpisodeServer::Session::handle_line(std::string_view line) {
  const auto first = line.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};  // blank lines are ignored
  json msg;
  try {
    msg = json::parse(line);
  } catch (const json::parse_error& e) {
    return {error_message(wire_error::kBadJson, e.what())};
  }
  try {
    if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
      throw WireError{wire_error::kBadMessage, "message must be an object with a string 'type'"};
    }
    const auto type = msg["type"].get<std::string>();
    if (type == "reset") return {on_reset(msg)};
    if (type == "act") return {on_act(msg)};
    throw WireError{wire_error::kBadMessage, "unknown message type '" + type + "'"};
  } catch (const WireError& e) {
    return {error_message(e.code, e.detail, msg.is_object() ? msg.value("episode_id", std::string()) : "")};
  } catch (const json::exception& e) {
    return {error_message(wire_error::kBadMessage, e.what())};
  } catch (const std::exception& e) {
    // An internal failure ends the current episode but never the connection.
    spdlog::error("session {}: {}", id_, e.what());
    std::string episode_id;
    if (active_ && !active_->episode.terminal()) {
      episode_id = active_->episode_id;
      active_->episode.abort(std::string("internal error: ") + e.what());
      finish();
      active_.reset();
    }
    return {error_message(wire_error::kInternal, e.what(), episode_id)};
  }
}

json EpisodeServer::Session::on_reset(const json& msg) {
  const auto& instances = server_.instances_;
  EpisodeInstance inst;
  if (msg.contains("instance")) {
    try {
      inst = episode_instance_from_json(msg["instance"]);
    } catch (const std::exception& e) {
      throw WireError{wire_error::kBadMessage, std::string("bad inline instance: ") + e.what()};
    }
  } else if (msg.contains("instance_id")) {
    const auto id = msg["instance_id"].get<std::string>();
    const auto it = server_.by_id_.find(id);
    if (it == server_.by_id_.end()) throw WireError{wire_error::kUnknownInstance, "unknown instance '" + id + "'"};
    inst = instances[it->second];
  } else {
    if (instances.empty()) throw WireError{wire_error::kUnknownInstance, "server has no instances"};
    Rng rng(derive_seed(server_.cfg_.seed, fmt::format("{}/{}", id_, resets_)));
    inst = instances[uniform_index(rng, instances.size())];
  }

  const std::string episode_id = msg.value("episode_id", fmt::format("{}-{}", id_, resets_ + 1));
  if (used_ids_.count(episode_id)) {
    throw WireError{wire_error::kDuplicateEpisode, "episode id '" + episode_id + "' already used"};
  }
  const Scene* scene = nullptr;
  if (server_.cfg_.render) {
    const auto it = server_.scenes_.find(inst.scene_id);
    if (it == server_.scenes_.end()) throw WireError{wire_error::kUnknownScene, "scene '" + inst.scene_id + "' not loaded"};
    scene = it->second.get();
  }

  // A reset mid-episode supersedes it; the old one is still logged.
  if (active_ && !active_->episode.terminal()) {
    active_->episode.abort("reset");
    finish();
  }
  ++resets_;
  used_ids_[episode_id] = true;
  active_ = std::make_unique<Active>(Active{episode_id, Episode(inst, server_.cfg_.variant), scene,
                                            msg.value("images", true), nullptr, nullptr, {}});
  if (scene) {
    const auto& intr = server_.cfg_.intrinsics;
    active_->target_image = image_json(render_view(*scene, inst.target, intr), active_->send_png);
    active_->topdown_image = image_json(render_view(*scene, topdown_pose(*scene, intr), intr), active_->send_png);
  }
  if (active_->episode.terminal()) return finish();  // zero budget
  return observation();
}

json EpisodeServer::Session::on_act(const json& msg) {
  if (!msg.contains("response") || !msg["response"].is_string()) {
    throw WireError{wire_error::kBadMessage, "act needs a string 'response'"};
  }
  if (!active_ || active_->episode.terminal()) throw WireError{wire_error::kNoEpisode, "no episode in progress"};
  if (msg.contains("episode_id") && msg["episode_id"] != active_->episode_id) {
    throw WireError{wire_error::kNoEpisode, "episode '" + msg["episode_id"].get<std::string>() + "' is not active"};
  }
  active_->episode.step(msg["response"].get<std::string>());
  if (active_->episode.terminal()) return finish();
  return observation();
}

json EpisodeServer::Session::observation() {
  const Episode& ep = active_->episode;
  json obs = {{"type", "observation"},
              {"episode_id", active_->episode_id},
              {"instance_id", ep.instance().instance_id},
              {"turn", ep.turn()},
              {"pose", pose_to_json(ep.pose())},
              {"pose_prompt", format_pose_prompt(ep.pose())},
              {"budget_remaining", ep.budget_remaining()}};
  std::vector<std::string> ids;
  if (active_->scene) {
    json current = image_json(render_view(*active_->scene, ep.pose(), server_.cfg_.intrinsics), active_->send_png);
    ids = {current["id"].get<std::string>(), active_->target_image["id"].get<std::string>()};
    json images = {{"current", std::move(current)}, {"target", active_->target_image}};
    if (ep.turn() == 0) {
      images["topdown"] = active_->topdown_image;
      ids.push_back(active_->topdown_image["id"].get<std::string>());
    }
    obs["images"] = std::move(images);
  }
  active_->request_images.push_back(std::move(ids));
  return obs;
}

json EpisodeServer::Session::finish() {
  const Episode& ep = active_->episode;
  RolloutLog log;
  log.episode_id = active_->episode_id;
  log.instance = ep.instance();
  log.variant = ep.variant();
  log.turns = ep.history();
  log.request_images = active_->request_images;
  log.request_images.resize(log.turns.size());
  log.outcome = *ep.outcome();
  json result = {{"type", "result"}, {"episode_id", log.episode_id}, {"instance_id", log.instance.instance_id}};
  result.update(to_json(log.outcome));
  server_.record(std::move(log));
  return result;
}

// ---------------------------------------------------------------------------
// Server

struct EpisodeServer::Tcp {
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::mutex mutex;
  std::vector<std::shared_ptr<tcp::socket>> sockets;
  std::vector<std::thread> workers;
};

EpisodeServer::EpisodeServer(std::vector<EpisodeInstance> instances,
                             std::map<std::string, std::shared_ptr<const Scene>> scenes, ServerConfig cfg)
    : instances_(std::move(instances)), scenes_(std::move(scenes)), cfg_(std::move(cfg)) {
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    if (!by_id_.emplace(instances_[i].instance_id, i).second) {
      throw std::invalid_argument("duplicate instance id " + instances_[i].instance_id);
    }
  }
  if (!cfg_.log_path.empty()) {
    if (cfg_.log_path.has_parent_path()) std::filesystem::create_directories(cfg_.log_path.parent_path());
    std::ofstream(cfg_.log_path, std::ios::trunc);
  }
}

EpisodeServer::~EpisodeServer() { stop(); }

std::unique_ptr<EpisodeServer::Session> EpisodeServer::open_session() {
  return std::unique_ptr<Session>(new Session(*this, fmt::format("s{}", ++sessions_)));
}

void EpisodeServer::record(RolloutLog log) {
  std::lock_guard lock(log_mutex_);
  if (!cfg_.log_path.empty()) {
    std::ofstream out(cfg_.log_path, std::ios::app);
    for (const json& j : log.to_jsonl()) out << j.dump() << '\n';
    if (!out) spdlog::error("failed to append rollout log to {}", cfg_.log_path.string());
  }
  logs_.push_back(std::move(log));
}

std::vector<RolloutLog> EpisodeServer::logs() const {
  std::lock_guard lock(log_mutex_);
  return logs_;
}

void EpisodeServer::serve_stream(std::istream& in, std::ostream& out) {
  auto session = open_session();
  std::string line;
  while (std::getline(in, line)) {
    for (const json& reply : session->handle_line(line)) out << reply.dump() << '\n';
    out.flush();
  }
  session->close();
}

void EpisodeServer::serve_tcp(const std::string& host, unsigned short port,
                              const std::function<void(unsigned short)>& ready) {
  Tcp* t = nullptr;
  {
    std::lock_guard lock(tcp_mutex_);
    if (tcp_) throw std::logic_error("serve_tcp already running");
    tcp_ = std::make_unique<Tcp>();
    t = tcp_.get();
  }
  const tcp::endpoint ep(asio::ip::make_address(host), port);
  t->acceptor.open(ep.protocol());
  t->acceptor.set_option(tcp::acceptor::reuse_address(true));
  t->acceptor.bind(ep);
  t->acceptor.listen();
  spdlog::info("listening on {}:{}", host, t->acceptor.local_endpoint().port());
  if (ready) ready(t->acceptor.local_endpoint().port());

  auto handle = [this](std::shared_ptr<tcp::socket> sock) {
    auto session = open_session();
    asio::streambuf buf;
    boost::system::error_code ec;
    while (true) {
      asio::read_until(*sock, buf, '\n', ec);
      if (ec) break;
      std::istream is(&buf);
      std::string line;
      std::getline(is, line);
      std::string out;
      for (const json& reply : session->handle_line(line)) out += reply.dump() + '\n';
      if (!out.empty()) asio::write(*sock, asio::buffer(out), ec);
      if (ec) break;
    }
    session->close();
  };

  std::function<void()> accept = [&] {
    t->acceptor.async_accept([&](boost::system::error_code ec, tcp::socket sock) {
      if (ec) return;  // acceptor closed by stop()
      auto shared = std::make_shared<tcp::socket>(std::move(sock));
      {
        std::lock_guard lock(t->mutex);
        t->sockets.push_back(shared);
        t->workers.emplace_back(handle, shared);
      }
      accept();
    });
  };
  accept();
  t->io.run();

  std::vector<std::thread> workers;
  {
    std::lock_guard lock(t->mutex);
    workers.swap(t->workers);
  }
  for (auto& w : workers) w.join();
  std::lock_guard lock(tcp_mutex_);
  tcp_.reset();
}

void EpisodeServer::stop() {
  std::lock_guard lock(tcp_mutex_);
  if (!tcp_) return;
  Tcp* t = tcp_.get();
  asio::post(t->io, [t] {
    boost::system::error_code ec;
    t->acceptor.close(ec);
    std::lock_guard inner(t->mutex);
    for (auto& s : t->sockets) s->shutdown(tcp::socket::shutdown_both, ec);
    t->io.stop();
  });
}

}  // namespace viewplan
