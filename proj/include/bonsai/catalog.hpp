#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bonsai/model.hpp"

namespace bonsai::catalog {

using bonsai::from_json;
using bonsai::to_json;

enum class EntryKind { kFeed, kList, kStarterPack };

struct CatalogEntry {
  EntryKind kind = EntryKind::kFeed;
  std::string uri;
  std::string title;
  std::string description;
  std::int64_t likes = 0;
  friend bool operator==(const CatalogEntry&, const CatalogEntry&) = default;
};

SourceKind source_kind(EntryKind kind);

struct IngestReport {
  std::size_t feeds = 0;
  std::size_t lists = 0;
  std::size_t starter_packs = 0;
  std::size_t dropped_low_likes = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> warnings;  // "line N: reason"
};

// Read-only searchable directory of feeds, lists and starter packs.
class Catalog {
 public:
  // JSON lines, one entry per line. Malformed lines are skipped with a
  // warning; feeds with fewer than two likes are dropped. Throws Error(kConfig)
  // when nothing valid remains.
  static Catalog ingest(const std::filesystem::path& path, IngestReport* report = nullptr);
  static Catalog ingest(std::istream& in, IngestReport* report = nullptr);

  // Case-insensitive substring match on title or description, ordered by
  // likes descending, then title, then uri. Throws Error(kDomain) on an empty
  // query.
  std::vector<CatalogEntry> search(std::string_view query,
                                   std::optional<std::vector<EntryKind>> kinds = std::nullopt,
                                   std::size_t limit = 10) const;

  std::size_t size() const { return entries_.size(); }
  const std::vector<CatalogEntry>& entries() const { return entries_; }

 private:
  struct Indexed {
    std::string folded;  // lowercased title + '\n' + description
  };
  std::vector<CatalogEntry> entries_;
  std::vector<Indexed> index_;
};

void to_json(Json& j, const CatalogEntry& e);
void to_json(Json& j, const IngestReport& r);

}  // namespace bonsai::catalog

namespace bonsai {
template <>
struct EnumNames<catalog::EntryKind> {
  static constexpr std::array<std::string_view, 3> kNames{"feed", "list", "starter_pack"};
};
}  // namespace bonsai
