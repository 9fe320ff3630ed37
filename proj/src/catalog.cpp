#include "bonsai/catalog.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "bonsai/error.hpp"
#include "bonsai/log.hpp"
#include "bonsai/util.hpp"

namespace bonsai::catalog {

SourceKind source_kind(EntryKind kind) {
  switch (kind) {
    case EntryKind::kFeed: return SourceKind::kFeed;
    case EntryKind::kList: return SourceKind::kList;
    case EntryKind::kStarterPack: return SourceKind::kStarterPack;
  }
  return SourceKind::kFeed;
}

Catalog Catalog::ingest(const std::filesystem::path& path, IngestReport* report) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open catalog " + path.string());
  return ingest(in, report);
}

Catalog Catalog::ingest(std::istream& in, IngestReport* report) {
  IngestReport local;
  IngestReport& rep = report ? *report : local;
  rep = IngestReport{};

  Catalog catalog;
  std::set<std::string> uris;
  std::string line;
  std::size_t line_no = 0;
  auto warn = [&](std::string reason) {
    auto msg = "line " + std::to_string(line_no) + ": " + reason;
    log::warn("catalog ingest skipped line", {{"line", line_no}, {"reason", reason}});
    rep.warnings.push_back(std::move(msg));
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    CatalogEntry entry;
    try {
      auto j = Json::parse(line);
      auto kind = parse_enum<EntryKind>(j.at("kind").get<std::string>());
      if (!kind) {
        warn("unknown kind " + j.at("kind").dump());
        continue;
      }
      entry.kind = *kind;
      entry.uri = j.at("uri").get<std::string>();
      entry.title = j.value("title", std::string{});
      entry.description = j.value("description", std::string{});
      entry.likes = j.value("likes", std::int64_t{0});
    } catch (const std::exception& e) {
      warn(std::string("malformed entry: ") + e.what());
      continue;
    }
    if (util::trim(entry.uri).empty()) {
      warn("empty uri");
      continue;
    }
    if (entry.likes < 0) {
      warn("negative likes");
      continue;
    }
    if (entry.kind == EntryKind::kFeed && entry.likes < 2) {
      ++rep.dropped_low_likes;
      log::info("catalog ingest dropped feed below like threshold",
                {{"line", line_no}, {"uri", entry.uri}, {"likes", entry.likes}});
      continue;
    }
    if (!uris.insert(entry.uri).second) {
      ++rep.duplicates;
      warn("duplicate uri " + entry.uri);
      continue;
    }
    switch (entry.kind) {
      case EntryKind::kFeed: ++rep.feeds; break;
      case EntryKind::kList: ++rep.lists; break;
      case EntryKind::kStarterPack: ++rep.starter_packs; break;
    }
    catalog.index_.push_back({util::to_lower(entry.title) + '\n' + util::to_lower(entry.description)});
    catalog.entries_.push_back(std::move(entry));
  }

  if (catalog.entries_.empty()) {
    throw Error(ErrorCode::kConfig, "catalog contains no valid entries");
  }
  return catalog;
}

std::vector<CatalogEntry> Catalog::search(std::string_view query,
                                          std::optional<std::vector<EntryKind>> kinds,
                                          std::size_t limit) const {
  auto needle = util::to_lower(util::trim(query));
  if (needle.empty()) throw Error(ErrorCode::kDomain, "catalog search query must not be empty");

  std::vector<const CatalogEntry*> hits;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (kinds && std::find(kinds->begin(), kinds->end(), e.kind) == kinds->end()) continue;
    // The newline separator keeps matches from spanning title and description.
    if (index_[i].folded.find(needle) != std::string::npos) hits.push_back(&e);
  }
  std::sort(hits.begin(), hits.end(), [](const CatalogEntry* a, const CatalogEntry* b) {
    if (a->likes != b->likes) return a->likes > b->likes;
    if (a->title != b->title) return a->title < b->title;
    return a->uri < b->uri;
  });
  if (hits.size() > limit) hits.resize(limit);

  std::vector<CatalogEntry> out;
  out.reserve(hits.size());
  for (const auto* h : hits) out.push_back(*h);
  return out;
}

void to_json(Json& j, const CatalogEntry& e) {
  j = Json{{"kind", e.kind},
           {"uri", e.uri},
           {"title", e.title},
           {"description", e.description},
           {"likes", e.likes}};
}

void to_json(Json& j, const IngestReport& r) {
  j = Json{{"feeds", r.feeds},
           {"lists", r.lists},
           {"starter_packs", r.starter_packs},
           {"dropped_low_likes", r.dropped_low_likes},
           {"duplicates", r.duplicates},
           {"warnings", r.warnings}};
}

}  // namespace bonsai::catalog
