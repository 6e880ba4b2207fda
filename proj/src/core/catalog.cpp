#include "trapwatch/core/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "trapwatch/core/error.hpp"

namespace trapwatch {
namespace {

std::string fold(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

SpeciesCatalog::SpeciesCatalog(std::vector<SpeciesEntry> entries)
    : entries_(std::move(entries)) {
  std::unordered_map<std::string, int> owner;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.class_id != static_cast<int>(i)) {
      throw Error(Errc::config_error,
                  fmt::format("catalog ids must be contiguous from 0; entry {} has id {}",
                              i, e.class_id));
    }
    if (e.scientific_name.empty()) {
      throw Error(Errc::config_error, fmt::format("class {} has no name", e.class_id));
    }
    for (const auto* name : {&e.scientific_name, &e.common_name}) {
      if (name->empty()) continue;
      auto [it, inserted] = owner.emplace(fold(*name), e.class_id);
      if (!inserted && it->second != e.class_id) {
        throw Error(Errc::config_error,
                    fmt::format("catalog name '{}' is used by classes {} and {}", *name,
                                it->second, e.class_id));
      }
    }
  }
}

const SpeciesCatalog& SpeciesCatalog::default_catalog() {
  static const SpeciesCatalog catalog({
      {0, "Person", "Person"},
      {1, "Vulpes vulpes", "Red fox"},
      {2, "Dama dama", "European fallow deer"},
      {3, "Capreolus capreolus", "Roe deer"},
      {4, "Erinaceus europaeus", "European hedgehog"},
      {5, "Capercaillie cock", "Wood grouse (cock)"},
      {6, "Capercaillie hen", "Wood grouse (hen)"},
      {7, "Bos taurus", "Cattle"},
      {8, "Canis familiaris", "Domestic dog"},
      {9, "Cervus elaphus", "Red deer"},
      {10, "Oryctolagus cuniculus", "European rabbit"},
      {11, "Meles meles", "European badger"},
      {12, "Buteo buteo", "Common buzzard"},
      {13, "Accipiter gentilis", "Northern goshawk"},
      {14, "Felis catus", "Domestic cat"},
      {15, "Sciurus carolinensis", "Eastern grey squirrel"},
      {16, "Sciurus vulgaris", "Red squirrel"},
      {17, "Martes martes", "European pine martin"},
      {18, "Phasianus colchicus", "Common pheasant"},
      {19, "Passer domesticus", "House sparrow"},
      {20, "Ovis aries", "Domestic sheep"},
      {21, "Columba palumbus", "Common wood pigeon"},
      {22, "Numenius arquata", "Common curlew"},
      {23, "Numenius arquata chick", "Common curlew (chick)"},
      {24, "Capra hircus", "Domestic goat"},
      {25, "Calibration pole", "Calibration pole"},
  });
  return catalog;
}

SpeciesCatalog SpeciesCatalog::parse(std::string_view text) {
  std::vector<SpeciesEntry> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (;;) {
      auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() < 2 || cols.size() > 3) {
      throw Error(Errc::config_error,
                  fmt::format("catalog line {}: expected id<TAB>scientific<TAB>common", line_no));
    }
    SpeciesEntry e;
    try {
      std::size_t used = 0;
      e.class_id = std::stoi(cols[0], &used);
      if (used != cols[0].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(Errc::config_error,
                  fmt::format("catalog line {}: bad class id '{}'", line_no, cols[0]));
    }
    e.scientific_name = cols[1];
    e.common_name = cols.size() > 2 ? cols[2] : std::string{};
    entries.push_back(std::move(e));
  }
  return SpeciesCatalog(std::move(entries));
}

SpeciesCatalog SpeciesCatalog::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(Errc::io_error, fmt::format("cannot read catalog {}", path.string()));
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string SpeciesCatalog::to_text() const {
  std::string out;
  for (const auto& e : entries_) {
    out += fmt::format("{}\t{}\t{}\n", e.class_id, e.scientific_name, e.common_name);
  }
  return out;
}

int SpeciesCatalog::lookup(std::string_view name) const {
  if (entries_.empty()) {
    throw Error(Errc::unknown_class, "catalog is empty");
  }
  const auto key = fold(name);
  for (const auto& e : entries_) {
    if (fold(e.scientific_name) == key || (!e.common_name.empty() && fold(e.common_name) == key)) {
      return e.class_id;
    }
  }
  throw Error(Errc::unknown_class, fmt::format("unknown class '{}'", name));
}

const SpeciesEntry& SpeciesCatalog::at(int class_id) const {
  if (!contains(class_id)) {
    throw Error(Errc::unknown_class, fmt::format("unknown class id {}", class_id));
  }
  return entries_[static_cast<std::size_t>(class_id)];
}

}  // namespace trapwatch
