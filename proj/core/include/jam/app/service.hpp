#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "jam/app/embed_client.hpp"
#include "jam/baselines.hpp"
#include "jam/checkpoint.hpp"
#include "jam/embedding_table.hpp"
#include "jam/ranking.hpp"

namespace jam::app {

/// A checkpoint bound to its catalog, with a ready ranker. Never moved after
/// construction (the ranker points into it); hold it through shared_ptr.
struct LoadedModel {
  std::string checkpoint_id;
  std::string kind;   // checkpoint kind tag
  std::string mixer;  // JAM mixer name, or the baseline's name
  std::shared_ptr<const Catalog> catalog;
  std::optional<JamParams> jam;
  std::optional<TwoTowerParams> twotower;
  std::optional<TalkRecParams> talkrec;
  std::unique_ptr<Recommender> ranker;
};

std::shared_ptr<const LoadedModel> load_model(const std::filesystem::path& checkpoint,
                                              std::shared_ptr<const Catalog> catalog,
                                              std::size_t threads = 1);

/// Everything one request reads. Immutable once published.
struct Snapshot {
  std::shared_ptr<const LoadedModel> model;
  std::shared_ptr<const EmbeddingTable> users;
  std::shared_ptr<const EmbeddingTable> queries;
};

/// Checks table widths against the model before anything is served.
std::shared_ptr<const Snapshot> make_snapshot(std::shared_ptr<const LoadedModel> model,
                                              std::shared_ptr<const EmbeddingTable> users,
                                              std::shared_ptr<const EmbeddingTable> queries);

struct HttpReply {
  int status = 200;
  std::string body;
};

/// Request handling over an atomically swappable snapshot.
class RecommendService {
 public:
  RecommendService(std::shared_ptr<const Snapshot> snapshot,
                   std::shared_ptr<const EmbedProvider> provider = nullptr);

  std::shared_ptr<const Snapshot> snapshot() const;
  /// Requests already running keep the snapshot they started with.
  void swap_snapshot(std::shared_ptr<const Snapshot> next);

  /// POST /recommend. Body: {"user_id"?, "query_id" | "query_text", "k"?}.
  /// 200 ok, 400 malformed, 404 unknown id, 502 provider failure.
  HttpReply handle_recommend(const std::string& body) const;
  /// GET /healthz
  HttpReply handle_healthz() const;

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const Snapshot> snapshot_;
  std::shared_ptr<const EmbedProvider> provider_;
};

inline constexpr std::size_t kDefaultTopK = 10;

/// HTTP front end. start() binds (port 0 picks a free port) and serves on a
/// background thread; the snapshot is complete before the listener opens.
class HttpServer {
 public:
  explicit HttpServer(RecommendService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  int start(const std::string& host, int port);
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace jam::app
