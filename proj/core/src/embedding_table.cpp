#include "jam/embedding_table.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace jam {

namespace {

static_assert(std::endian::native == std::endian::little,
              "JAMB I/O assumes a little-endian host");

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in, const char* field) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    fail(ErrorKind::Format, std::string("JAMB: truncated header field '") + field + "'");
  }
  return v;
}

std::unordered_map<std::string, std::size_t> build_index(const std::vector<std::string>& ids,
                                                         const char* what) {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!index.emplace(ids[i], i).second) {
      fail(ErrorKind::Data, std::string(what) + ": duplicate id '" + ids[i] + "'");
    }
  }
  return index;
}

void check_finite(const DenseMatrix& m, const std::string& what) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (!all_finite(m.row(r))) {
      fail(ErrorKind::Data, what + ": non-finite value in row " + std::to_string(r));
    }
  }
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::vector<std::string> ids, DenseMatrix matrix)
    : ids_(std::move(ids)), matrix_(std::move(matrix)) {
  if (ids_.size() != matrix_.rows()) {
    fail(ErrorKind::Alignment, "embedding table: " + std::to_string(ids_.size()) +
                                   " ids for " + std::to_string(matrix_.rows()) + " rows");
  }
  if (matrix_.cols() == 0) fail(ErrorKind::Format, "embedding table: dim must be > 0");
  check_finite(matrix_, "embedding table");
  index_ = build_index(ids_, "embedding table");
}

std::optional<std::size_t> EmbeddingTable::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingTable::index_of(std::string_view id) const {
  if (auto idx = find(id)) return *idx;
  fail(ErrorKind::NotFound, "unknown id '" + std::string(id) + "'");
}

void write_jamb(std::ostream& out, const DenseMatrix& m) {
  out.write(kJambMagic, 4);
  write_u32(out, kJambVersion);
  write_u32(out, static_cast<std::uint32_t>(m.rows()));
  write_u32(out, static_cast<std::uint32_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.values().data()),
            static_cast<std::streamsize>(m.size() * sizeof(float)));
  if (!out) fail(ErrorKind::Data, "JAMB: write failed");
}

DenseMatrix read_jamb(std::istream& in, bool exact_payload) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kJambMagic, 4) != 0) {
    fail(ErrorKind::Format, "JAMB: bad magic");
  }
  const std::uint32_t version = read_u32(in, "version");
  if (version != kJambVersion) {
    fail(ErrorKind::Format, "JAMB: unsupported version " + std::to_string(version));
  }
  const std::uint32_t rows = read_u32(in, "rows");
  const std::uint32_t dim = read_u32(in, "dim");
  const std::size_t count = std::size_t(rows) * dim;
  std::vector<float> data(count);
  if (!in.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(count * sizeof(float)))) {
    fail(ErrorKind::Format, "JAMB: payload shorter than header declares (" +
                                std::to_string(rows) + "x" + std::to_string(dim) + ")");
  }
  if (exact_payload && in.peek() != std::char_traits<char>::eof()) {
    fail(ErrorKind::Format, "JAMB: payload longer than header declares (" +
                                std::to_string(rows) + "x" + std::to_string(dim) + ")");
  }
  DenseMatrix m(rows, dim, std::move(data));
  check_finite(m, "JAMB");
  return m;
}

DenseMatrix load_jamb(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "cannot open " + path.string());
  try {
    return read_jamb(in, /*exact_payload=*/true);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

void save_jamb(const std::filesystem::path& path, const DenseMatrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write " + path.string());
  write_jamb(out, m);
}

std::vector<std::string> load_ids(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Data, "cannot open " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ids.push_back(std::move(line));
  }
  return ids;
}

void save_ids(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write " + path.string());
  for (const auto& id : ids) out << id << '\n';
}

EmbeddingTable load_embedding_table(const std::filesystem::path& matrix_path,
                                    const std::filesystem::path& ids_path) {
  DenseMatrix m = load_jamb(matrix_path);
  std::vector<std::string> ids = load_ids(ids_path);
  if (ids.size() != m.rows()) {
    fail(ErrorKind::Alignment, ids_path.string() + ": " + std::to_string(ids.size()) +
                                   " ids but " + matrix_path.string() + " has " +
                                   std::to_string(m.rows()) + " rows");
  }
  return EmbeddingTable(std::move(ids), std::move(m));
}

void save_embedding_table(const EmbeddingTable& table, const std::filesystem::path& matrix_path,
                          const std::filesystem::path& ids_path) {
  save_jamb(matrix_path, table.matrix());
  save_ids(ids_path, table.ids());
}

Catalog::Catalog(std::vector<std::string> item_ids, std::vector<std::string> modality_names,
                 std::vector<DenseMatrix> modalities)
    : item_ids_(std::move(item_ids)),
      names_(std::move(modality_names)),
      modalities_(std::move(modalities)) {
  if (modalities_.empty()) fail(ErrorKind::Data, "catalog: at least one modality required");
  if (names_.size() != modalities_.size()) {
    fail(ErrorKind::Data, "catalog: modality names/matrices count mismatch");
  }
  for (std::size_t i = 0; i < modalities_.size(); ++i) {
    if (modalities_[i].rows() != item_ids_.size()) {
      fail(ErrorKind::Alignment, "catalog: modality '" + names_[i] + "' has " +
                                     std::to_string(modalities_[i].rows()) + " rows for " +
                                     std::to_string(item_ids_.size()) + " items");
    }
    if (modalities_[i].cols() == 0) fail(ErrorKind::Format, "catalog: zero-width modality");
    check_finite(modalities_[i], "catalog modality '" + names_[i] + "'");
  }
  index_ = build_index(item_ids_, "catalog");
}

std::vector<std::size_t> Catalog::modality_dims() const {
  std::vector<std::size_t> dims;
  for (const auto& m : modalities_) dims.push_back(m.cols());
  return dims;
}

std::size_t Catalog::concat_dim() const {
  std::size_t total = 0;
  for (const auto& m : modalities_) total += m.cols();
  return total;
}

std::optional<std::size_t> Catalog::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Catalog::index_of(std::string_view id) const {
  if (auto idx = find(id)) return *idx;
  fail(ErrorKind::NotFound, "unknown item id '" + std::string(id) + "'");
}

Catalog load_catalog(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorKind::Data, "cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, manifest_path.string() + ": " + e.what());
  }
  const auto base = manifest_path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  try {
    std::vector<std::string> ids = load_ids(resolve(manifest.at("item_ids").get<std::string>()));
    std::vector<std::string> names;
    std::vector<DenseMatrix> mats;
    for (const auto& entry : manifest.at("modalities")) {
      names.push_back(entry.at("name").get<std::string>());
      mats.push_back(load_jamb(resolve(entry.at("matrix").get<std::string>())));
    }
    return Catalog(std::move(ids), std::move(names), std::move(mats));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, manifest_path.string() + ": " + e.what());
  }
}

void save_catalog(const Catalog& catalog, const std::filesystem::path& manifest_path) {
  const auto base = manifest_path.parent_path();
  const std::string stem = manifest_path.stem().string();
  if (!base.empty()) std::filesystem::create_directories(base);
  nlohmann::json manifest;
  const std::string ids_name = stem + ".items.ids";
  save_ids(base / ids_name, catalog.item_ids());
  manifest["item_ids"] = ids_name;
  manifest["modalities"] = nlohmann::json::array();
  for (std::size_t i = 0; i < catalog.n_modalities(); ++i) {
    const std::string file = stem + "." + catalog.modality_names()[i] + ".jamb";
    save_jamb(base / file, catalog.modality(i));
    manifest["modalities"].push_back({{"name", catalog.modality_names()[i]}, {"matrix", file}});
  }
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';
}

}  // namespace jam
