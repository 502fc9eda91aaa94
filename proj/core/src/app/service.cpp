#include "jam/app/service.hpp"

#include "httplib.h"
#include "json.hpp"

namespace jam::app {

namespace {

using nlohmann::json;

HttpReply error_reply(int status, const std::string& message, bool retryable = false) {
  return {status, json{{"error", message}, {"retryable", retryable}}.dump()};
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void require_dim(const char* what, std::size_t have, std::size_t want) {
  if (have != want) {
    fail(ErrorKind::Config, std::string(what) + " table has dim " + std::to_string(have) +
                                ", model expects " + std::to_string(want));
  }
}

}  // namespace

std::shared_ptr<const LoadedModel> load_model(const std::filesystem::path& checkpoint,
                                              std::shared_ptr<const Catalog> catalog,
                                              std::size_t threads) {
  auto m = std::make_shared<LoadedModel>();
  m->checkpoint_id = checkpoint_id(checkpoint);
  m->catalog = std::move(catalog);
  const Catalog& cat = *m->catalog;
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  m->kind = ckpt.kind;
  if (ckpt.kind == "jam") {
    m->jam = jam_params_from(ckpt);
    m->mixer = m->jam->mixer.name();
    m->ranker = std::make_unique<JamRanker>(*m->jam, cat, threads);
  } else if (ckpt.kind == "twotower") {
    m->twotower = twotower_from(ckpt);
    require_dim("catalog (concatenated)", cat.concat_dim(), m->twotower->item1.cols());
    m->mixer = "twotower";
    m->ranker = std::make_unique<TwoTowerRanker>(*m->twotower, cat, threads);
  } else if (ckpt.kind == "talkrec") {
    m->talkrec = talkrec_from(ckpt);
    if (m->talkrec->item.size() != cat.n_modalities()) {
      fail(ErrorKind::Config, "talkrec checkpoint modality count differs from the catalog");
    }
    for (std::size_t i = 0; i < cat.n_modalities(); ++i) {
      require_dim("catalog modality", cat.modality_dim(i), m->talkrec->item[i].cols());
    }
    m->mixer = "talkrec";
    m->ranker = std::make_unique<TalkRecRanker>(*m->talkrec, cat, threads);
  } else if (ckpt.kind == "pop") {
    auto pm = pop_from(ckpt);
    require_dim("catalog (item count)", cat.size(), pm.counts.size());
    m->mixer = "pop";
    m->ranker = std::make_unique<PopRanker>(std::move(pm));
  } else if (ckpt.kind == "random") {
    const auto n = std::stoull(ckpt.meta_at("n_items"));
    require_dim("catalog (item count)", cat.size(), n);
    m->mixer = "random";
    m->ranker = std::make_unique<RandomRanker>(cat.size(), std::stoull(ckpt.meta_at("seed")));
  } else {
    fail(ErrorKind::Format, "unknown checkpoint kind '" + ckpt.kind + "'");
  }
  return m;
}

std::shared_ptr<const Snapshot> make_snapshot(std::shared_ptr<const LoadedModel> model,
                                              std::shared_ptr<const EmbeddingTable> users,
                                              std::shared_ptr<const EmbeddingTable> queries) {
  if (!model || !users || !queries) fail(ErrorKind::Contract, "snapshot: missing component");
  if (model->jam) {
    require_dim("user", users->dim(), model->jam->user_dim());
    require_dim("query", queries->dim(), model->jam->query_dim());
  } else if (model->twotower) {
    require_dim("user", users->dim(), model->twotower->user1.cols());
  } else if (model->talkrec) {
    require_dim("query", queries->dim(), model->talkrec->query.cols());
  }
  return std::make_shared<const Snapshot>(Snapshot{std::move(model), std::move(users), std::move(queries)});
}

RecommendService::RecommendService(std::shared_ptr<const Snapshot> snapshot,
                                   std::shared_ptr<const EmbedProvider> provider)
    : snapshot_(std::move(snapshot)), provider_(std::move(provider)) {
  if (!snapshot_) fail(ErrorKind::Contract, "service: no snapshot");
}

std::shared_ptr<const Snapshot> RecommendService::snapshot() const {
  std::lock_guard lock(mu_);
  return snapshot_;
}

void RecommendService::swap_snapshot(std::shared_ptr<const Snapshot> next) {
  if (!next) fail(ErrorKind::Contract, "service: no snapshot");
  std::lock_guard lock(mu_);
  snapshot_ = std::move(next);
}

HttpReply RecommendService::handle_recommend(const std::string& body) const {
  const auto snap = snapshot();

  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception&) {
    return error_reply(400, "request body is not valid JSON");
  }
  if (!req.is_object()) return error_reply(400, "request body must be a JSON object");

  std::size_t k = kDefaultTopK;
  if (req.contains("k")) {
    const auto& kv = req["k"];
    if (!kv.is_number_integer() || kv.get<long long>() < 1) {
      return error_reply(400, "\"k\" must be an integer >= 1");
    }
    k = static_cast<std::size_t>(kv.get<long long>());
  }
  auto optional_string = [&](const char* key, std::optional<std::string>& out) {
    if (!req.contains(key) || req[key].is_null()) return true;
    if (!req[key].is_string()) return false;
    out = req[key].get<std::string>();
    return true;
  };
  std::optional<std::string> user_id, query_id, query_text;
  if (!optional_string("user_id", user_id)) return error_reply(400, "\"user_id\" must be a string");
  if (!optional_string("query_id", query_id)) return error_reply(400, "\"query_id\" must be a string");
  if (!optional_string("query_text", query_text)) return error_reply(400, "\"query_text\" must be a string");
  if (query_id.has_value() == query_text.has_value()) {
    return error_reply(400, "exactly one of \"query_id\" and \"query_text\" is required");
  }

  std::span<const float> user;
  if (user_id) {
    const auto idx = snap->users->find(*user_id);
    if (!idx) return error_reply(404, "unknown user_id '" + *user_id + "'");
    user = snap->users->row(*idx);
  }

  std::vector<float> embedded;
  std::span<const float> query;
  if (query_id) {
    const auto idx = snap->queries->find(*query_id);
    if (!idx) return error_reply(404, "unknown query_id '" + *query_id + "'");
    query = snap->queries->row(*idx);
  } else {
    if (!provider_) return error_reply(502, "no embedding provider configured for query_text", false);
    try {
      embedded = provider_->embed(*query_text);
    } catch (const Error& e) {
      return error_reply(502, std::string("embedding provider failed: ") + e.what(), true);
    }
    if (embedded.size() != snap->queries->dim()) {
      return error_reply(502, "embedding provider returned the wrong dimension", true);
    }
    query = embedded;
  }

  const std::uint64_t salt =
      fnv1a(query_id ? *query_id : *query_text, fnv1a(user_id.value_or(""), fnv1a(query_id ? "id" : "text")));
  RankedList ranked;
  try {
    ranked = snap->model->ranker->rank(RankQuery{user, query, salt}, k);
  } catch (const Error& e) {
    return error_reply(500, e.what());
  }

  json items = json::array();
  const auto& ids = snap->model->catalog->item_ids();
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    items.push_back({{"item_id", ids[ranked.items[i]]}, {"score", ranked.scores[i]}});
  }
  json resp{{"items", items}, {"model", snap->model->checkpoint_id}, {"mixer", snap->model->mixer}};
  return {200, resp.dump()};
}

HttpReply RecommendService::handle_healthz() const {
  const auto snap = snapshot();
  json j{{"status", "ok"},
         {"model", snap->model->checkpoint_id},
         {"kind", snap->model->kind},
         {"mixer", snap->model->mixer},
         {"n_items", snap->model->catalog->size()},
         {"n_users", snap->users->size()},
         {"n_queries", snap->queries->size()}};
  return {200, j.dump()};
}

struct HttpServer::Impl {
  RecommendService& service;
  httplib::Server server;
  std::thread thread;
};

HttpServer::HttpServer(RecommendService& service) : impl_(new Impl{service, {}, {}}) {
  auto& svc = impl_->service;
  impl_->server.Post("/recommend", [&svc](const httplib::Request& req, httplib::Response& res) {
    const auto reply = svc.handle_recommend(req.body);
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  });
  impl_->server.Get("/healthz", [&svc](const httplib::Request&, httplib::Response& res) {
    const auto reply = svc.handle_healthz();
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) fail(ErrorKind::Usage, "cannot bind " + host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    fail(ErrorKind::Usage, "cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace jam::app
