#include "jam/app/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace jam::app {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  fail(ErrorKind::Usage, "config: '" + std::string(key) + "' expects " + expected + ", got '" +
                             std::string(value) + "'");
}

template <typename T>
T parse_number(std::string_view key, std::string_view value, const char* expected) {
  T out{};
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) bad_value(key, value, expected);
  return out;
}

std::size_t parse_count(std::string_view key, std::string_view value) {
  return parse_number<std::size_t>(key, value, "a non-negative integer");
}

double parse_real(std::string_view key, std::string_view value) {
  return parse_number<double>(key, value, "a number");
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  bad_value(key, value, "a boolean");
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "catalog",      "users",     "queries",   "triplets",    "checkpoint", "out_dir",
      "model",        "mixer",     "use_bias",  "hidden",      "tau",        "epochs",
      "batch_size",   "n_negatives", "lr_max",  "lr_min",      "weight_decay", "patience",
      "seed",         "seeds",     "d",         "threads",     "host",       "port",
      "embed_provider_url", "embed_timeout_s"};
  return keys;
}

void set_config_value(AppConfig& cfg, std::string_view key, std::string_view value) {
  value = trim(value);
  auto& t = cfg.train;
  if (key == "catalog") cfg.catalog = std::string(value);
  else if (key == "users") cfg.users = std::string(value);
  else if (key == "queries") cfg.queries = std::string(value);
  else if (key == "triplets") cfg.triplets = std::string(value);
  else if (key == "checkpoint") cfg.checkpoint = std::string(value);
  else if (key == "out_dir") cfg.out_dir = std::string(value);
  else if (key == "model") {
    if (value != "jam" && value != "twotower" && value != "talkrec" && value != "pop" && value != "random") {
      bad_value(key, value, "one of jam, twotower, talkrec, pop, random");
    }
    cfg.model = std::string(value);
  } else if (key == "mixer") {
    try {
      (void)MixerKind::parse(value);
    } catch (const Error&) {
      bad_value(key, value, "avg, cross or moe-k<N>");
    }
    cfg.mixer = std::string(value);
  } else if (key == "use_bias") cfg.use_bias = parse_bool(key, value);
  else if (key == "hidden") cfg.hidden = parse_count(key, value);
  else if (key == "tau") cfg.tau = parse_real(key, value);
  else if (key == "epochs") t.epochs = parse_count(key, value);
  else if (key == "batch_size") t.batch_size = parse_count(key, value);
  else if (key == "n_negatives") t.n_negatives = parse_count(key, value);
  else if (key == "lr_max") t.lr_max = parse_real(key, value);
  else if (key == "lr_min") t.lr_min = parse_real(key, value);
  else if (key == "weight_decay") t.weight_decay = parse_real(key, value);
  else if (key == "patience") t.patience = parse_count(key, value);
  else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value, "an unsigned integer");
  else if (key == "seeds") {
    cfg.seeds.clear();
    std::size_t start = 0;
    while (start <= value.size()) {
      const auto end = std::min(value.find(',', start), value.size());
      const auto part = trim(value.substr(start, end - start));
      if (part.empty()) bad_value(key, value, "a comma-separated list of seeds");
      cfg.seeds.push_back(parse_number<std::uint64_t>(key, part, "a comma-separated list of seeds"));
      start = end + 1;
    }
  } else if (key == "d") t.d = parse_count(key, value);
  else if (key == "threads") t.threads = parse_count(key, value);
  else if (key == "host") cfg.host = std::string(value);
  else if (key == "port") {
    const int port = parse_number<int>(key, value, "an integer port");
    if (port < 1 || port > 65535) bad_value(key, value, "a port in 1..65535");
    cfg.port = port;
  } else if (key == "embed_provider_url") {
    if (value.empty()) cfg.embed_provider_url.reset();
    else cfg.embed_provider_url = std::string(value);
  } else if (key == "embed_timeout_s") {
    cfg.embed_timeout_s = parse_real(key, value);
    if (!(cfg.embed_timeout_s > 0.0)) bad_value(key, value, "a positive number of seconds");
  } else {
    fail(ErrorKind::Usage, "config: unknown key '" + std::string(key) + "'");
  }
}

void apply_config_text(AppConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorKind::Usage, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void apply_config_file(AppConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Usage, "cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(cfg, text.str());
}

void apply_environment(AppConfig& cfg) {
  if (const char* url = std::getenv("JAM_EMBED_URL"); url != nullptr && *url != '\0') {
    cfg.embed_provider_url = url;
  }
}

std::filesystem::path ids_path_for(const std::filesystem::path& matrix_path) {
  auto p = matrix_path;
  return p.replace_extension(".ids");
}

std::vector<std::uint64_t> effective_seeds(const AppConfig& cfg) {
  if (cfg.seeds.empty()) return {cfg.train.seed};
  return cfg.seeds;
}

}  // namespace jam::app
