#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "orca/catalog/catalog.h"

namespace orca::catalog {

/// Versioned catalog documents under <state_dir>/catalog/<database_id>.catalog.
class CatalogStore {
 public:
  explicit CatalogStore(std::filesystem::path state_dir);

  /// Writes the catalog, stamping captured_at with the current time (strictly
  /// later than any previous stamp for the same id). Returns the stored value.
  SchemaCatalog persist(SchemaCatalog catalog) const;
  SchemaCatalog load(const std::string& database_id) const;
  bool exists(const std::string& database_id) const;
  std::vector<std::string> list() const;

  std::filesystem::path path_for(const std::string& database_id) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace orca::catalog
