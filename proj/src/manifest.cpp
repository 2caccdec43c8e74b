#include "moedr/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace moedr {

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

std::string resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path fp(p);
  if (fp.is_absolute()) return fp.string();
  return (base / fp).string();
}

}  // namespace

std::vector<ManifestEntry> parse_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  const auto base = std::filesystem::path(path).parent_path();

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty manifest");
  {
    auto header = split_csv_row(line);
    const std::vector<std::string> expected = {"subject_id", "reading_path", "interview_path", "label"};
    if (header != expected) {
      throw std::runtime_error(path + ": bad header, expected subject_id,reading_path,interview_path,label");
    }
  }

  std::vector<ManifestEntry> entries;
  std::unordered_set<std::string> seen;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_row(line);
    if (cells.size() != 4) {
      throw std::runtime_error(path + ": row " + std::to_string(row) + " has " +
                               std::to_string(cells.size()) + " columns, expected 4");
    }
    ManifestEntry e;
    e.subject_id = cells[0];
    if (e.subject_id.empty()) {
      throw std::runtime_error(path + ": row " + std::to_string(row) + " has an empty subject_id");
    }
    if (!seen.insert(e.subject_id).second) {
      throw std::runtime_error(path + ": duplicate subject_id '" + e.subject_id + "' at row " +
                               std::to_string(row));
    }
    if (cells[1].empty() || cells[2].empty()) {
      throw std::runtime_error(path + ": row " + std::to_string(row) + " is missing an audio path");
    }
    e.reading_path = resolve(base, cells[1]);
    e.interview_path = resolve(base, cells[2]);
    if (cells[3] == "control") {
      e.label = Label::control;
    } else if (cells[3] == "depression") {
      e.label = Label::depression;
    } else {
      throw std::runtime_error(path + ": row " + std::to_string(row) + " has unknown label '" +
                               cells[3] + "' (expected control|depression)");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << "subject_id,reading_path,interview_path,label\n";
  const auto base = std::filesystem::path(path).parent_path();
  for (const auto& e : entries) {
    // Keep stored paths relative when they live under the manifest directory.
    auto rel = [&](const std::string& p) {
      std::filesystem::path fp(p);
      auto r = std::filesystem::relative(fp, base.empty() ? "." : base);
      if (!r.empty() && r.native().rfind("..", 0) != 0) return r.string();
      return p;
    };
    out << e.subject_id << ',' << rel(e.reading_path) << ',' << rel(e.interview_path) << ','
        << (e.label == Label::control ? "control" : "depression") << '\n';
  }
  if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace moedr
