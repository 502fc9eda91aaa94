#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "jam/train.hpp"

namespace jam::app {

/// Operator configuration. Loaded from a flat `key = value` file; command-line
/// flags override file values, and JAM_EMBED_URL overrides both for the
/// embedding provider.
struct AppConfig {
  std::filesystem::path catalog;     // catalog manifest
  std::filesystem::path users;       // user table (.jamb, ids alongside as .ids)
  std::filesystem::path queries;     // query table
  std::filesystem::path triplets;    // JSON-lines records
  std::filesystem::path checkpoint;  // model to load (evaluate/recommend/serve/export)
  std::filesystem::path out_dir = "out";

  TrainConfig train;
  std::vector<std::uint64_t> seeds;  // empty: just train.seed
  std::string model = "jam";         // jam | twotower | talkrec | pop | random
  std::string mixer = "avg";
  bool use_bias = false;
  std::size_t hidden = 256;          // TwoTower hidden width
  double tau = 0.07;                 // TalkRec temperature

  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::string> embed_provider_url;
  double embed_timeout_s = 5.0;
};

/// Keys accepted by set_config_value, in documentation order.
const std::vector<std::string>& config_keys();

/// Typed assignment of one key. Unknown keys and unparsable values throw
/// Error(Usage).
void set_config_value(AppConfig& cfg, std::string_view key, std::string_view value);

/// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
void apply_config_text(AppConfig& cfg, std::string_view text);
void apply_config_file(AppConfig& cfg, const std::filesystem::path& path);

/// Applies JAM_EMBED_URL when set and non-empty.
void apply_environment(AppConfig& cfg);

/// The ids file paired with a table: `<stem>.ids` next to the matrix.
std::filesystem::path ids_path_for(const std::filesystem::path& matrix_path);

/// The seeds a multi-seed command iterates over.
std::vector<std::uint64_t> effective_seeds(const AppConfig& cfg);

}  // namespace jam::app
