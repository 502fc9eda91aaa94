#include "jam/app/export.hpp"

#include <charconv>
#include <ostream>

namespace jam::app {

namespace {

void write_row(std::ostream& out, const char* kind, const std::string& id, const std::string& query_id,
               std::span<const float> v) {
  out << kind << ',' << id << ',' << query_id;
  char buf[32];
  for (float x : v) {
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
  }
  out << '\n';
}

}  // namespace

void export_latents(const JamParams& params, const Catalog& catalog, const EmbeddingTable& users,
                    const EmbeddingTable& queries, const ExportRequest& request, std::ostream& out) {
  out << "kind,id,query_id";
  for (std::size_t i = 0; i < params.d; ++i) out << ",v" << i;
  out << '\n';

  const std::size_t n_mod = catalog.n_modalities();
  std::vector<std::span<const float>> raw(n_mod);
  for (std::size_t item = 0; item < catalog.size(); ++item) {
    for (std::size_t m = 0; m < n_mod; ++m) raw[m] = catalog.raw(m, item);
    const auto mixed = mix_avg(project_items(params, raw)).mixed;
    write_row(out, "item", catalog.item_ids()[item], "", mixed);
  }
  for (const auto& uid : request.users) {
    write_row(out, "user", uid, "", project_user(params, users.row(users.index_of(uid))));
  }
  for (const auto& [uid, qid] : request.pairs) {
    auto u = project_user(params, users.row(users.index_of(uid)));
    const auto q = project_query(params, queries.row(queries.index_of(qid)));
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += q[i];
    write_row(out, "user_plus_query", uid, qid, u);
  }
  if (!out) fail(ErrorKind::Data, "export: write failed");
}

}  // namespace jam::app
