#pragma once

#include <string>
#include <vector>

namespace moedr {

enum class Label { control = 0, depression = 1 };

struct ManifestEntry {
  std::string subject_id;
  std::string reading_path;    // resolved against the manifest directory
  std::string interview_path;
  Label label = Label::control;
};

// CSV with header `subject_id,reading_path,interview_path,label`. Labels are
// `control` or `depression`; duplicate subject ids are rejected. Relative paths
// are resolved against the manifest's directory.
std::vector<ManifestEntry> parse_manifest(const std::string& path);

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

}  // namespace moedr
