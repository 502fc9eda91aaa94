#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "jam/embedding_table.hpp"
#include "jam/model.hpp"

namespace jam::app {

struct ExportRequest {
  std::vector<std::string> users;
  std::vector<std::pair<std::string, std::string>> pairs;  // (user_id, query_id)
};

/// CSV of latent vectors: header `kind,id,query_id,v0..v{d-1}`, then one row
/// per catalog item (mean of its modality projections), one per requested
/// user, and one per requested (user, query) pair holding u + q.
/// Floats use the shortest round-trip representation.
void export_latents(const JamParams& params, const Catalog& catalog, const EmbeddingTable& users,
                    const EmbeddingTable& queries, const ExportRequest& request, std::ostream& out);

}  // namespace jam::app
