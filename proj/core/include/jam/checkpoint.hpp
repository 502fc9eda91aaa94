#pragma once

// Checkpoint container, little-endian:
//   "JAMC" | u32 version | u32 header_len | header (JSON, sorted keys)
//   | one JAMB block per tensor, in header order
// The header carries a model kind tag, string metadata and the tensor list.
// Nothing time-dependent is written, so equal params give equal bytes.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "jam/embedding_table.hpp"
#include "jam/model.hpp"

namespace jam {

inline constexpr char kCheckpointMagic[4] = {'J', 'A', 'M', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;  // "jam", "twotower", "talkrec", "pop", "random"
  std::map<std::string, std::string> meta;
  std::vector<std::string> tensor_names;
  std::vector<DenseMatrix> tensors;

  const DenseMatrix& tensor(const std::string& name) const;
  const std::string& meta_at(const std::string& key) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a 64 of the file bytes, as 16 hex digits.
std::string checkpoint_id(const std::filesystem::path& path);

/// Header fields: d, mixer, k, noise, use_bias, gate_dim, modality names/dims.
Checkpoint jam_checkpoint(const JamParams& params, const std::vector<std::string>& modality_names);
JamParams jam_params_from(const Checkpoint& ckpt);

void save_jam_checkpoint(const std::filesystem::path& path, const JamParams& params,
                         const std::vector<std::string>& modality_names);
JamParams load_jam_checkpoint(const std::filesystem::path& path);

}  // namespace jam
