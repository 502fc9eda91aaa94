#include "jam/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

namespace jam {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) fail(ErrorKind::Format, "checkpoint: truncated header");
  return v;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  return out;
}

std::size_t to_size(const std::string& text, const char* field) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    fail(ErrorKind::Format, std::string("checkpoint: bad integer for '") + field + "': " + text);
  }
}

}  // namespace

const DenseMatrix& Checkpoint::tensor(const std::string& name) const {
  for (std::size_t i = 0; i < tensor_names.size(); ++i) {
    if (tensor_names[i] == name) return tensors[i];
  }
  fail(ErrorKind::Format, "checkpoint: missing tensor '" + name + "'");
}

const std::string& Checkpoint::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) fail(ErrorKind::Format, "checkpoint: missing header field '" + key + "'");
  return it->second;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  require(ckpt.tensor_names.size() == ckpt.tensors.size(), "checkpoint: names/tensors mismatch");
  nlohmann::json header;
  header["kind"] = ckpt.kind;
  header["meta"] = ckpt.meta;
  header["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    header["tensors"].push_back({{"name", ckpt.tensor_names[i]},
                                 {"rows", ckpt.tensors[i].rows()},
                                 {"cols", ckpt.tensors[i].cols()}});
  }
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write " + path.string());
  out.write(kCheckpointMagic, 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : ckpt.tensors) write_jamb(out, t);
  if (!out) fail(ErrorKind::Data, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    fail(ErrorKind::Format, path.string() + ": not a checkpoint (bad magic)");
  }
  const std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion) {
    fail(ErrorKind::Format, path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::string text(read_u32(in), '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(text.size()))) {
    fail(ErrorKind::Format, path.string() + ": truncated checkpoint header");
  }

  Checkpoint ckpt;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  try {
    const auto header = nlohmann::json::parse(text);
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.meta = header.at("meta").get<std::map<std::string, std::string>>();
    for (const auto& t : header.at("tensors")) {
      ckpt.tensor_names.push_back(t.at("name").get<std::string>());
      shapes.emplace_back(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": bad checkpoint header: " + e.what());
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    DenseMatrix m;
    try {
      m = read_jamb(in);
    } catch (const Error& e) {
      fail(e.kind(), path.string() + ": tensor '" + ckpt.tensor_names[i] + "': " + e.what());
    }
    if (m.rows() != shapes[i].first || m.cols() != shapes[i].second) {
      fail(ErrorKind::Format, path.string() + ": tensor '" + ckpt.tensor_names[i] +
                                  "' shape differs from header");
    }
    ckpt.tensors.push_back(std::move(m));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    fail(ErrorKind::Format, path.string() + ": trailing bytes after last tensor");
  }
  return ckpt;
}

std::string checkpoint_id(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "cannot open checkpoint " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Checkpoint jam_checkpoint(const JamParams& params, const std::vector<std::string>& modality_names) {
  validate_params(params);
  if (modality_names.size() != params.n_modalities()) {
    fail(ErrorKind::Contract, "checkpoint: modality names do not match model");
  }
  Checkpoint ckpt;
  ckpt.kind = "jam";
  const auto shape = params.shape();
  std::vector<std::string> dims;
  for (auto d : shape.item_dims) dims.push_back(std::to_string(d));
  ckpt.meta = {{"d", std::to_string(params.d)},
               {"mixer", params.mixer.name()},
               {"k", std::to_string(params.mixer.k)},
               {"noise", params.mixer.noise_enabled ? "1" : "0"},
               {"use_bias", params.use_bias ? "1" : "0"},
               {"gate_dim", std::to_string(shape.gate_dim)},
               {"user_dim", std::to_string(shape.user_dim)},
               {"query_dim", std::to_string(shape.query_dim)},
               {"modality_names", join(modality_names)},
               {"modality_dims", join(dims)}};
  params.for_each_tensor([&](const std::string& name, const DenseMatrix& m) {
    ckpt.tensor_names.push_back(name);
    ckpt.tensors.push_back(m);
  });
  return ckpt;
}

JamParams jam_params_from(const Checkpoint& ckpt) {
  if (ckpt.kind != "jam") fail(ErrorKind::Format, "checkpoint holds a '" + ckpt.kind + "' model, not jam");
  ModelShape shape;
  shape.d = to_size(ckpt.meta_at("d"), "d");
  shape.gate_dim = to_size(ckpt.meta_at("gate_dim"), "gate_dim");
  shape.user_dim = to_size(ckpt.meta_at("user_dim"), "user_dim");
  shape.query_dim = to_size(ckpt.meta_at("query_dim"), "query_dim");
  shape.use_bias = ckpt.meta_at("use_bias") == "1";
  for (const auto& d : split(ckpt.meta_at("modality_dims"))) shape.item_dims.push_back(to_size(d, "modality_dims"));
  MixerKind mixer;
  try {
    mixer = MixerKind::parse(ckpt.meta_at("mixer"));
  } catch (const Error& e) {
    fail(ErrorKind::Format, std::string("checkpoint: ") + e.what());
  }
  mixer.k = to_size(ckpt.meta_at("k"), "k");
  mixer.noise_enabled = ckpt.meta_at("noise") == "1";

  SeededRng rng(0);
  JamParams params = init_params(shape, mixer, rng);
  std::size_t visited = 0;
  params.for_each_tensor([&](const std::string& name, DenseMatrix& m) {
    const DenseMatrix& stored = ckpt.tensor(name);
    if (stored.rows() != m.rows() || stored.cols() != m.cols()) {
      fail(ErrorKind::Format, "checkpoint: tensor '" + name + "' has the wrong shape");
    }
    m = stored;
    ++visited;
  });
  if (visited != ckpt.tensors.size()) fail(ErrorKind::Format, "checkpoint: unexpected extra tensors");
  validate_params(params);
  return params;
}

void save_jam_checkpoint(const std::filesystem::path& path, const JamParams& params,
                         const std::vector<std::string>& modality_names) {
  save_checkpoint(path, jam_checkpoint(params, modality_names));
}

JamParams load_jam_checkpoint(const std::filesystem::path& path) {
  return jam_params_from(load_checkpoint(path));
}

}  // namespace jam
