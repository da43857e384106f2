#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ppd/error.hpp"

namespace ppd {

uint64_t fnv1a64(std::string_view bytes);
std::string hex64(uint64_t v);

std::string read_file_bytes(const std::filesystem::path& path);

// Writes to "<path>.partial" and renames into place on success, so a failed
// stage never clobbers a valid artifact; stray .partial files mark the
// quarantined output of an aborted run.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Per-stage manifest: config digest, seed, and a content hash per artifact.
// Entries are sorted by name and the file carries no timestamps, so reruns
// with the same seed are byte-identical.
struct Manifest {
  std::string stage;
  std::string config_digest;
  std::string compat_digest;
  uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> artifacts;  // name -> hash

  void add(const std::filesystem::path& path);
  std::string render() const;
  void write(const std::filesystem::path& path) const;
};

// Sidecar metadata stamped next to binary artifacts ("<artifact>.meta"):
// JSON with the digests, seed and content hash. Chained stages verify the
// compat digest before consuming an artifact.
void write_artifact_meta(const std::filesystem::path& artifact,
                         const std::string& config_digest, const std::string& compat_digest,
                         uint64_t seed);

void verify_artifact_compat(const std::filesystem::path& artifact,
                            const std::string& expected_compat_digest);

}  // namespace ppd
