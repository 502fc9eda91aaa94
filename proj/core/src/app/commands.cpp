#include "jam/app/commands.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <pthread.h>

#include "CLI11.hpp"
#include "jam/app/embed_client.hpp"
#include "jam/app/service.hpp"
#include "jam/baselines.hpp"
#include "jam/checkpoint.hpp"
#include "json.hpp"

namespace jam::app {

namespace {

namespace fs = std::filesystem;

const fs::path& required(const fs::path& p, const char* flag) {
  if (p.empty()) fail(ErrorKind::Usage, std::string("missing required --") + flag);
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Data, "write failed: " + path.string());
}

std::shared_ptr<const EmbedProvider> make_provider(const AppConfig& cfg, std::size_t query_dim) {
  if (!cfg.embed_provider_url) return nullptr;
  return std::make_shared<HttpEmbedProvider>(*cfg.embed_provider_url, query_dim, cfg.embed_timeout_s);
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage: return kExitUsage;
    case ErrorKind::Provider: return kExitProvider;
    default: return kExitData;
  }
}

Tables load_tables(const AppConfig& cfg) {
  Tables t;
  t.catalog = std::make_shared<const Catalog>(load_catalog(required(cfg.catalog, "catalog")));
  t.users = std::make_shared<const EmbeddingTable>(
      load_embedding_table(required(cfg.users, "users"), ids_path_for(cfg.users)));
  t.queries = std::make_shared<const EmbeddingTable>(
      load_embedding_table(required(cfg.queries, "queries"), ids_path_for(cfg.queries)));
  return t;
}

TripletDataset load_records(const AppConfig& cfg, const Tables& tables) {
  return load_triplets(required(cfg.triplets, "triplets"), *tables.users, *tables.queries,
                       *tables.catalog);
}

std::string model_tag(const AppConfig& cfg) {
  if (cfg.model == "jam") return "jam-" + MixerKind::parse(cfg.mixer).name();
  return cfg.model;
}

void cmd_synth(const SynthConfig& synth, const fs::path& out_dir, std::ostream& out) {
  const auto world = synth_generate(synth);
  save_world(world, out_dir);
  out << "wrote " << world.catalog.size() << " items, " << world.users.size() << " users, "
      << world.queries.size() << " queries, " << world.triplets.size() << " records to "
      << out_dir.string() << '\n';
}

void cmd_split(const AppConfig& cfg, std::ostream& out) {
  const auto tables = load_tables(cfg);
  const auto split = chronological_split(load_records(cfg, tables));
  const std::pair<const char*, const TripletDataset*> parts[] = {
      {"train", &split.train}, {"val", &split.val}, {"test", &split.test}};
  for (const auto& [name, ds] : parts) {
    const auto path = cfg.out_dir / (std::string(name) + ".jsonl");
    fs::create_directories(cfg.out_dir);
    save_triplets(path, *ds, *tables.users, *tables.queries, *tables.catalog);
    out << name << '\t' << ds->size() << '\t' << path.string() << '\n';
  }
}

MetricsReport cmd_train(const AppConfig& cfg, std::ostream& out) {
  cfg.train.validate();
  const auto tables = load_tables(cfg);
  const auto split = chronological_split(load_records(cfg, tables));
  const TrainData data{split.train, *tables.catalog, *tables.users, *tables.queries};
  const std::string tag = model_tag(cfg);
  fs::create_directories(cfg.out_dir);

  const auto seeds = effective_seeds(cfg);
  std::vector<MetricValues> per_seed;
  std::string method;
  bool uses_query = false, uses_user = false;
  for (auto seed : seeds) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const std::string stem = tag + "-seed" + std::to_string(seed);
    const auto ckpt_path = cfg.out_dir / (stem + ".ckpt");
    std::string log;
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& e) {
      log += nlohmann::json{{"epoch", e.epoch}, {"loss", e.loss}, {"val_ndcg10", e.val_ndcg10}, {"lr", e.lr}}.dump();
      log += '\n';
    };
    const SeededRng init_rng = SeededRng(seed).fork(1);

    if (cfg.model == "jam") {
      const auto run = train_jam(tc, MixerKind::parse(cfg.mixer), data, split.val, hooks, cfg.use_bias);
      save_jam_checkpoint(ckpt_path, run.params, tables.catalog->modality_names());
      out << stem << ": best epoch " << run.history.best_epoch << ", val NDCG@10 "
          << run.history.best_val_ndcg10 << '\n';
    } else if (cfg.model == "twotower") {
      SeededRng rng = init_rng;
      TwoTowerTrainable model(init_twotower(tables.users->dim(), tables.catalog->concat_dim(), tc.d,
                                            cfg.hidden, rng));
      const auto history = train_model(model, tc, data, split.val, hooks);
      save_checkpoint(ckpt_path, twotower_checkpoint(model.params()));
      out << stem << ": best epoch " << history.best_epoch << ", val NDCG@10 " << history.best_val_ndcg10 << '\n';
    } else if (cfg.model == "talkrec") {
      SeededRng rng = init_rng;
      TalkRecTrainable model(init_talkrec(tables.queries->dim(), tables.catalog->modality_dims(), tc.d,
                                          cfg.tau, rng));
      const auto history = train_model(model, tc, data, split.val, hooks);
      save_checkpoint(ckpt_path, talkrec_checkpoint(model.params()));
      out << stem << ": best epoch " << history.best_epoch << ", val NDCG@10 " << history.best_val_ndcg10 << '\n';
    } else if (cfg.model == "pop") {
      save_checkpoint(ckpt_path, pop_checkpoint(build_pop(split.train, tables.catalog->size())));
    } else if (cfg.model == "random") {
      save_checkpoint(ckpt_path, random_checkpoint(tables.catalog->size(), seed));
    } else {
      fail(ErrorKind::Usage, "unknown model '" + cfg.model + "'");
    }
    if (!log.empty()) write_text(cfg.out_dir / (stem + ".log.jsonl"), log);

    const auto model = load_model(ckpt_path, tables.catalog, tc.threads);
    EvalOptions opts;
    opts.threads = tc.threads;
    per_seed.push_back(evaluate(*model->ranker, split.test, *tables.users, *tables.queries, opts));
    method = model->ranker->name();
    uses_query = model->ranker->uses_query();
    uses_user = model->ranker->uses_user();
  }

  auto report = aggregate(method, uses_query, uses_user, seeds, per_seed,
                          compute_coverage(split.train, split.test));
  write_text(cfg.out_dir / (tag + ".report.json"), report_to_json(report) + "\n");
  const std::string table = format_table({report});
  write_text(cfg.out_dir / (tag + ".report.txt"), table);
  out << table;
  return report;
}

MetricsReport cmd_evaluate(const AppConfig& cfg, const std::vector<fs::path>& checkpoints,
                           std::ostream& out) {
  if (checkpoints.empty()) fail(ErrorKind::Usage, "missing required --checkpoint");
  const auto tables = load_tables(cfg);
  const auto split = chronological_split(load_records(cfg, tables));
  std::vector<MetricValues> per_seed;
  std::vector<std::uint64_t> runs;
  std::string method;
  bool uses_query = false, uses_user = false;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const auto model = load_model(checkpoints[i], tables.catalog, cfg.train.threads);
    EvalOptions opts;
    opts.threads = cfg.train.threads;
    per_seed.push_back(evaluate(*model->ranker, split.test, *tables.users, *tables.queries, opts));
    if (i > 0 && model->ranker->name() != method) {
      fail(ErrorKind::Usage, "evaluate: checkpoints hold different methods (" + method + ", " +
                                 model->ranker->name() + ")");
    }
    method = model->ranker->name();
    uses_query = model->ranker->uses_query();
    uses_user = model->ranker->uses_user();
    runs.push_back(i + 1);
  }
  auto report = aggregate(method, uses_query, uses_user, runs, per_seed,
                          compute_coverage(split.train, split.test));
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / (method + ".report.json"), report_to_json(report) + "\n");
  const std::string table = format_table({report});
  write_text(cfg.out_dir / (method + ".report.txt"), table);
  out << table;
  return report;
}

void cmd_recommend(const AppConfig& cfg, const RecommendArgs& args, std::ostream& out) {
  if (args.k < 1) fail(ErrorKind::Usage, "--k must be >= 1");
  if (args.anonymous && args.user_id) fail(ErrorKind::Usage, "--anonymous and --user are exclusive");
  if (!args.anonymous && !args.user_id) fail(ErrorKind::Usage, "give --user or --anonymous");
  if (args.query_id.has_value() == args.query_text.has_value()) {
    fail(ErrorKind::Usage, "give exactly one of --query-id and --query-text");
  }
  const auto tables = load_tables(cfg);
  const auto model = load_model(required(cfg.checkpoint, "checkpoint"), tables.catalog, cfg.train.threads);
  (void)make_snapshot(model, tables.users, tables.queries);

  std::span<const float> user;
  if (args.user_id) user = tables.users->row(tables.users->index_of(*args.user_id));
  std::vector<float> embedded;
  std::span<const float> query;
  if (args.query_id) {
    query = tables.queries->row(tables.queries->index_of(*args.query_id));
  } else {
    const auto provider = make_provider(cfg, tables.queries->dim());
    if (!provider) fail(ErrorKind::Usage, "--query-text needs an embedding provider (--embed-provider-url or JAM_EMBED_URL)");
    embedded = provider->embed(*args.query_text);
    query = embedded;
  }
  const auto ranked = model->ranker->rank(RankQuery{user, query, 0}, args.k);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    out << (i + 1) << '\t' << tables.catalog->item_ids()[ranked.items[i]] << '\t' << ranked.scores[i] << '\n';
  }
}

void cmd_serve(const AppConfig& cfg, std::ostream& out) {
  auto build = [&cfg] {
    const auto tables = load_tables(cfg);
    const auto model = load_model(required(cfg.checkpoint, "checkpoint"), tables.catalog, cfg.train.threads);
    return make_snapshot(model, tables.users, tables.queries);
  };
  auto snapshot = build();
  RecommendService service(snapshot, make_provider(cfg, snapshot->queries->dim()));

  // Signals are taken synchronously on this thread; server threads inherit the mask.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  sigaddset(&set, SIGHUP);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  HttpServer server(service);
  const int port = server.start(cfg.host, cfg.port);
  out << "listening on " << cfg.host << ':' << port << " model " << snapshot->model->checkpoint_id
      << std::endl;
  for (;;) {
    int sig = 0;
    if (sigwait(&set, &sig) != 0) break;
    if (sig != SIGHUP) break;
    try {
      service.swap_snapshot(build());
      out << "reloaded model " << service.snapshot()->model->checkpoint_id << std::endl;
    } catch (const Error& e) {
      out << "reload failed, keeping current model: " << one_line(e.what()) << std::endl;
    }
  }
  server.stop();
}

void cmd_export(const AppConfig& cfg, const ExportRequest& request, const fs::path& out_path,
                std::ostream& out) {
  const auto tables = load_tables(cfg);
  const auto model = load_model(required(cfg.checkpoint, "checkpoint"), tables.catalog);
  if (!model->jam) fail(ErrorKind::Usage, "export needs a JAM checkpoint, got '" + model->kind + "'");
  (void)make_snapshot(model, tables.users, tables.queries);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream file(out_path, std::ios::trunc);
  if (!file) fail(ErrorKind::Data, "cannot write " + out_path.string());
  export_latents(*model->jam, *tables.catalog, *tables.users, *tables.queries, request, file);
  out << "wrote " << tables.catalog->size() + request.users.size() + request.pairs.size()
      << " rows to " << out_path.string() << '\n';
}

std::vector<GridPoint> cmd_gridsearch(const AppConfig& cfg, std::ostream& out) {
  cfg.train.validate();
  const auto tables = load_tables(cfg);
  const auto split = chronological_split(load_records(cfg, tables));
  const TrainData data{split.train, *tables.catalog, *tables.users, *tables.queries};
  const auto grid = grid_search(cfg.train, MixerKind::parse(cfg.mixer), data, split.val);
  nlohmann::json j = nlohmann::json::array();
  out << "d\tlr_max\tbest_epoch\tval_ndcg10\n";
  for (const auto& g : grid) {
    j.push_back({{"d", g.d}, {"lr_max", g.lr_max}, {"best_epoch", g.best_epoch}, {"val_ndcg10", g.best_val_ndcg10}});
    out << g.d << '\t' << g.lr_max << '\t' << g.best_epoch << '\t' << g.best_val_ndcg10 << '\n';
  }
  write_text(cfg.out_dir / (model_tag(cfg) + ".grid.json"), j.dump(2) + "\n");
  return grid;
}

// ---- argument parsing -----------------------------------------------------

namespace {

const std::vector<std::string> kDataKeys = {"catalog", "users", "queries", "triplets"};
const std::vector<std::string> kTrainKeys = {"model", "mixer", "use_bias", "hidden", "tau", "epochs",
                                             "batch_size", "n_negatives", "lr_max", "lr_min",
                                             "weight_decay", "patience", "seed", "seeds", "d", "threads"};

std::string flag_for(const std::string& key) {
  std::string f = "--" + key;
  for (char& c : f) {
    if (c == '_') c = '-';
  }
  return f;
}

/// Config-backed flags for one subcommand. Values stay strings until the
/// typed assignment in set_config_value.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::string> keys;

  void attach(CLI::App* sub, std::vector<std::string> ks) {
    sub->add_option("--config", config_path, "flat key = value config file");
    for (const auto& k : ks) {
      keys.push_back(k);
      sub->add_option(flag_for(k), values[k], "config key '" + k + "'");
    }
  }

  AppConfig resolve(CLI::App* sub) const {
    AppConfig cfg;
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    for (const auto& k : keys) {
      if (sub->count(flag_for(k)) > 0) set_config_value(cfg, k, values.at(k));
    }
    apply_environment(cfg);
    return cfg;
  }
};

std::vector<std::string> concat(std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"JAM: query-as-translation music recommender", "jam"};
  app.require_subcommand(1);

  SynthConfig synth;
  std::string synth_out = "data";
  auto* s_synth = app.add_subcommand("synth", "generate a planted-structure synthetic world");
  s_synth->add_option("--out", synth_out, "output directory");
  s_synth->add_option("--n-users", synth.n_users);
  s_synth->add_option("--n-queries", synth.n_queries);
  s_synth->add_option("--n-items", synth.n_items);
  s_synth->add_option("--latent-dim", synth.latent_dim);
  s_synth->add_option("--n-mod", synth.n_mod);
  s_synth->add_option("--noise-sigma", synth.noise_sigma);
  s_synth->add_option("--distractor-overlap", synth.distractor_overlap);
  s_synth->add_option("--n-records", synth.n_records);
  s_synth->add_option("--seed", synth.seed);

  ConfigFlags f_split, f_train, f_eval, f_rec, f_serve, f_export, f_grid;
  auto* s_split = app.add_subcommand("split", "chronological train/val/test split");
  f_split.attach(s_split, concat({kDataKeys, {"out_dir"}}));

  auto* s_train = app.add_subcommand("train", "train one model per seed and report test metrics");
  f_train.attach(s_train, concat({kDataKeys, kTrainKeys, {"out_dir"}}));

  std::vector<std::string> eval_ckpts;
  auto* s_eval = app.add_subcommand("evaluate", "evaluate checkpoints on the test split");
  f_eval.attach(s_eval, concat({kDataKeys, {"threads", "out_dir"}}));
  s_eval->add_option("--ckpt", eval_ckpts, "checkpoint (repeat for several seeds)")->required();

  RecommendArgs rec;
  std::string rec_user, rec_qid, rec_qtext;
  auto* s_rec = app.add_subcommand("recommend", "print the top-k items for a user and query");
  f_rec.attach(s_rec, {"catalog", "users", "queries", "checkpoint", "threads", "embed_provider_url",
                       "embed_timeout_s"});
  s_rec->add_option("--user", rec_user);
  s_rec->add_option("--query-id", rec_qid);
  s_rec->add_option("--query-text", rec_qtext);
  s_rec->add_option("--k", rec.k);
  s_rec->add_flag("--anonymous", rec.anonymous, "rank from the origin user (pure query translation)");

  auto* s_serve = app.add_subcommand("serve", "HTTP top-k endpoint");
  f_serve.attach(s_serve, {"catalog", "users", "queries", "checkpoint", "threads", "host", "port",
                           "embed_provider_url", "embed_timeout_s"});

  std::string export_out = "latents.csv";
  std::vector<std::string> export_users, export_pairs;
  auto* s_export = app.add_subcommand("export", "write latent vectors as CSV");
  f_export.attach(s_export, {"catalog", "users", "queries", "checkpoint"});
  s_export->add_option("--out", export_out, "CSV path");
  s_export->add_option("--user", export_users, "user id (repeatable)");
  s_export->add_option("--pair", export_pairs, "user_id:query_id (repeatable)");

  auto* s_grid = app.add_subcommand("gridsearch", "grid over d and lr_max, scored on validation");
  f_grid.attach(s_grid, concat({kDataKeys, kTrainKeys, {"out_dir"}}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s_synth->parsed()) {
      cmd_synth(synth, synth_out, out);
    } else if (s_split->parsed()) {
      cmd_split(f_split.resolve(s_split), out);
    } else if (s_train->parsed()) {
      cmd_train(f_train.resolve(s_train), out);
    } else if (s_eval->parsed()) {
      std::vector<fs::path> paths(eval_ckpts.begin(), eval_ckpts.end());
      cmd_evaluate(f_eval.resolve(s_eval), paths, out);
    } else if (s_rec->parsed()) {
      if (s_rec->count("--user")) rec.user_id = rec_user;
      if (s_rec->count("--query-id")) rec.query_id = rec_qid;
      if (s_rec->count("--query-text")) rec.query_text = rec_qtext;
      cmd_recommend(f_rec.resolve(s_rec), rec, out);
    } else if (s_serve->parsed()) {
      cmd_serve(f_serve.resolve(s_serve), out);
    } else if (s_export->parsed()) {
      ExportRequest req;
      req.users = export_users;
      for (const auto& p : export_pairs) {
        const auto colon = p.find(':');
        if (colon == std::string::npos) fail(ErrorKind::Usage, "--pair expects user_id:query_id, got '" + p + "'");
        req.pairs.emplace_back(p.substr(0, colon), p.substr(colon + 1));
      }
      cmd_export(f_export.resolve(s_export), req, export_out, out);
    } else if (s_grid->parsed()) {
      cmd_gridsearch(f_grid.resolve(s_grid), out);
    }
  } catch (const Error& e) {
    err << "error: " << to_string(e.kind()) << ": " << one_line(e.what()) << std::endl;
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: data: " << one_line(e.what()) << std::endl;
    return kExitData;
  }
  return kExitOk;
}

}  // namespace jam::app
