#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "jam/app/config.hpp"
#include "jam/app/export.hpp"
#include "jam/evaluate.hpp"
#include "jam/synth.hpp"
#include "jam/train.hpp"

namespace jam::app {

// Exit statuses, stable across commands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitProvider = 3;

int exit_code_for(ErrorKind kind) noexcept;

/// Parses argv (`jam <command> [flags]`) and runs the command. Errors are
/// reported as one line, `error: <kind>: <message>`, on `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct Tables {
  std::shared_ptr<const Catalog> catalog;
  std::shared_ptr<const EmbeddingTable> users;
  std::shared_ptr<const EmbeddingTable> queries;
};

Tables load_tables(const AppConfig& cfg);
TripletDataset load_records(const AppConfig& cfg, const Tables& tables);

/// Artifact prefix for a model: "jam-<mixer>" or the baseline name.
std::string model_tag(const AppConfig& cfg);

void cmd_synth(const SynthConfig& synth, const std::filesystem::path& out_dir, std::ostream& out);

/// Writes train/val/test .jsonl into out_dir.
void cmd_split(const AppConfig& cfg, std::ostream& out);

/// Trains one model per seed on the chronological split of cfg.triplets,
/// writes `<tag>-seed<S>.ckpt` and `<tag>-seed<S>.log.jsonl` per seed plus
/// `<tag>.report.json` / `<tag>.report.txt` across seeds.
MetricsReport cmd_train(const AppConfig& cfg, std::ostream& out);

/// Evaluates checkpoints (one per seed) on the test split and writes
/// `<name>.report.json` / `.txt` into out_dir.
MetricsReport cmd_evaluate(const AppConfig& cfg, const std::vector<std::filesystem::path>& checkpoints,
                           std::ostream& out);

struct RecommendArgs {
  std::optional<std::string> user_id;
  std::optional<std::string> query_id;
  std::optional<std::string> query_text;
  std::size_t k = 10;
  bool anonymous = false;
};

/// Prints `rank<TAB>item_id<TAB>score` lines.
void cmd_recommend(const AppConfig& cfg, const RecommendArgs& args, std::ostream& out);

/// Serves until SIGINT/SIGTERM; SIGHUP reloads the checkpoint.
void cmd_serve(const AppConfig& cfg, std::ostream& out);

void cmd_export(const AppConfig& cfg, const ExportRequest& request,
                const std::filesystem::path& out_path, std::ostream& out);

std::vector<GridPoint> cmd_gridsearch(const AppConfig& cfg, std::ostream& out);

}  // namespace jam::app
