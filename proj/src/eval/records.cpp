#include "trapwatch/eval/records.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "trapwatch/core/error.hpp"

namespace trapwatch::eval {
namespace {

template <typename Fn>
void for_each_record(std::string_view text, Fn&& fn) {
  std::size_t start = 0;
  int line_no = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    auto line = text.substr(start, nl == std::string_view::npos ? text.size() - start : nl - start);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto first = line.find_first_not_of(" \t");
    if (first != std::string_view::npos && line[first] != '#') {
      std::istringstream in{std::string(line)};
      std::vector<std::string> fields;
      for (std::string f; in >> f;) fields.push_back(std::move(f));
      fn(fields, line_no);
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
}

double to_double(const std::string& s, int line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(Errc::invalid_argument, fmt::format("line {}: '{}' is not a number", line_no, s));
}

int to_int(const std::string& s, int line_no) {
  try {
    std::size_t used = 0;
    int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(Errc::invalid_argument, fmt::format("line {}: '{}' is not a class id", line_no, s));
}

BoundingBox box_from(const std::vector<std::string>& f, std::size_t at, int line_no) {
  return BoundingBox{to_double(f[at], line_no), to_double(f[at + 1], line_no),
                     to_double(f[at + 2], line_no), to_double(f[at + 3], line_no),
                     Frame::original};
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, fmt::format("cannot read {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<ScoredPrediction> parse_predictions(std::string_view text) {
  std::vector<ScoredPrediction> out;
  for_each_record(text, [&](const std::vector<std::string>& f, int line_no) {
    if (f.size() != 7) {
      throw Error(Errc::invalid_argument,
                  fmt::format("line {}: expected 7 fields, got {}", line_no, f.size()));
    }
    ScoredPrediction p{f[0], to_int(f[1], line_no), to_double(f[2], line_no),
                       box_from(f, 3, line_no)};
    if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) {
      throw Error(Errc::invalid_argument,
                  fmt::format("line {}: confidence {} outside [0,1]", line_no, p.confidence));
    }
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<GroundTruth> parse_truths(std::string_view text) {
  std::vector<GroundTruth> out;
  for_each_record(text, [&](const std::vector<std::string>& f, int line_no) {
    if (f.size() != 7 && f.size() != 6) {
      throw Error(Errc::invalid_argument,
                  fmt::format("line {}: expected 6 or 7 fields, got {}", line_no, f.size()));
    }
    const std::size_t box_at = f.size() == 7 ? 3 : 2;
    out.push_back(GroundTruth{f[0], to_int(f[1], line_no), box_from(f, box_at, line_no)});
  });
  return out;
}

std::vector<ScoredPrediction> load_predictions(const std::filesystem::path& path) {
  return parse_predictions(slurp(path));
}

std::vector<GroundTruth> load_truths(const std::filesystem::path& path) {
  return parse_truths(slurp(path));
}

std::string format_prediction(const ScoredPrediction& p) {
  return fmt::format("{} {} {} {} {} {} {}", p.image_id, p.class_id, p.confidence, p.box.x_min,
                     p.box.y_min, p.box.x_max, p.box.y_max);
}

}  // namespace trapwatch::eval
