#pragma once

// Scan files are UTF-8 JSON lines. Line 1 is a header
//   {"format":"ustar-scan/1","subject":S,"scan":N,"C":dim,"annotations":{"0":t,...,"9":t}}
// and every following line one frame
//   {"t":int,"pos_mm":[3],"rot_deg":[3],"feat":[C],"viewdist":[10]}
// Floats are written with 17 significant digits so a read reproduces every
// value bit for bit.
//
// A corpus manifest is {"format":"ustar-corpus/1","scans":[{"path":...,"subject":...}]}
// with paths relative to the manifest's directory.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ustar/scan.hpp"

namespace ustar {

inline constexpr const char* kScanFormat = "ustar-scan/1";
inline constexpr const char* kCorpusFormat = "ustar-corpus/1";

class ScanFormatError : public std::invalid_argument {
 public:
  ScanFormatError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::string format_scan(const ScanTrajectory& scan);
ScanTrajectory parse_scan(const std::string& text, const std::string& source = "<memory>");
void write_scan(const ScanTrajectory& scan, const std::filesystem::path& path);
ScanTrajectory read_scan(const std::filesystem::path& path);

struct ManifestEntry {
  std::string path;
  int subject = 0;
};

struct CorpusManifest {
  std::vector<ManifestEntry> scans;
};

void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);
CorpusManifest read_manifest(const std::filesystem::path& path);

/// Writes `text` to `path` atomically enough for our purposes (truncate + write).
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace ustar
