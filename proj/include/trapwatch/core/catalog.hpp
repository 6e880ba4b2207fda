#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace trapwatch {

struct SpeciesEntry {
  int class_id = 0;
  std::string scientific_name;
  std::string common_name;

  friend bool operator==(const SpeciesEntry&, const SpeciesEntry&) = default;
};

/// Ordered class list. Ids are contiguous from zero; every name (either
/// column, compared case-insensitively) identifies exactly one entry.
class SpeciesCatalog {
 public:
  explicit SpeciesCatalog(std::vector<SpeciesEntry> entries);

  /// The 26-class UK catalog in its published listing order.
  static const SpeciesCatalog& default_catalog();

  /// Tab-separated `class_id<TAB>scientific_name<TAB>common_name` lines.
  static SpeciesCatalog parse(std::string_view text);
  static SpeciesCatalog load(const std::filesystem::path& path);
  std::string to_text() const;

  /// Case-insensitive match on scientific or common name.
  /// Throws Errc::unknown_class.
  int lookup(std::string_view name) const;

  bool contains(int class_id) const noexcept {
    return class_id >= 0 && static_cast<std::size_t>(class_id) < entries_.size();
  }
  const SpeciesEntry& at(int class_id) const;
  std::size_t size() const noexcept { return entries_.size(); }
  std::span<const SpeciesEntry> entries() const noexcept { return entries_; }

 private:
  std::vector<SpeciesEntry> entries_;
};

/// Convenience wrapper over SpeciesCatalog::lookup.
inline int lookup_class(const SpeciesCatalog& catalog, std::string_view name) {
  return catalog.lookup(name);
}

}  // namespace trapwatch
