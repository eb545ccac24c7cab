#include "orca/catalog/store.h"

#include <chrono>
#include <fstream>
#include <sstream>

#include "orca/common/error.h"

namespace orca::catalog {

namespace fs = std::filesystem;

CatalogStore::CatalogStore(fs::path state_dir) : dir_(std::move(state_dir) / "catalog") {}

fs::path CatalogStore::path_for(const std::string& database_id) const { return dir_ / (database_id + ".catalog"); }

bool CatalogStore::exists(const std::string& database_id) const {
  std::error_code ec;
  return fs::exists(path_for(database_id), ec);
}

SchemaCatalog CatalogStore::persist(SchemaCatalog catalog) const {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) fail(ErrorCode::StateDirUnwritable, dir_.string() + ": " + ec.message());

  auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                 std::chrono::system_clock::now().time_since_epoch()).count();
  std::int64_t stamp = now;
  if (exists(catalog.database_id)) {
    try {
      stamp = std::max(stamp, load(catalog.database_id).captured_at + 1);
    } catch (const Error&) {
      // Unreadable previous document: overwrite it.
    }
  }
  catalog.captured_at = stamp;

  const auto target = path_for(catalog.database_id);
  const auto tmp = fs::path(target.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) fail(ErrorCode::StateDirUnwritable, "cannot write " + tmp.string());
    out << to_json(catalog).dump();
    if (!out) fail(ErrorCode::StateDirUnwritable, "write failed for " + tmp.string());
  }
  fs::rename(tmp, target, ec);
  if (ec) fail(ErrorCode::StateDirUnwritable, target.string() + ": " + ec.message());
  return catalog;
}

SchemaCatalog CatalogStore::load(const std::string& database_id) const {
  std::ifstream in(path_for(database_id));
  if (!in) fail(ErrorCode::UnknownDatabaseId, "no catalog for '" + database_id + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  auto j = nlohmann::json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::IoError, "corrupt catalog document for '" + database_id + "'");
  return catalog_from_json(j);
}

std::vector<std::string> CatalogStore::list() const {
  std::vector<std::string> ids;
  std::error_code ec;
  if (!fs::exists(dir_, ec)) return ids;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.path().extension() == ".catalog") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace orca::catalog
