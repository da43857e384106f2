#include "ppd/manifest.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "ppd/csv.hpp"

namespace ppd {

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io_error, "cannot open '" + path.string() + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  const std::filesystem::path partial = path.string() + ".partial";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io_error, "cannot write '" + partial.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::io_error, "write failed for '" + partial.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(partial, path, ec);
  if (ec) {
    fail(ErrorKind::io_error,
         "cannot move '" + partial.string() + "' into place: " + ec.message());
  }
}

void Manifest::add(const std::filesystem::path& path) {
  artifacts.emplace_back(path.filename().string(), hex64(fnv1a64(read_file_bytes(path))));
}

std::string Manifest::render() const {
  std::vector<std::pair<std::string, std::string>> sorted = artifacts;
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  out += "# ppd manifest\n";
  out += "stage=" + stage + "\n";
  out += "config_digest=" + config_digest + "\n";
  out += "compat_digest=" + compat_digest + "\n";
  out += "seed=" + std::to_string(seed) + "\n";
  for (const auto& [name, hash] : sorted) {
    out += "artifact " + name + " " + hash + "\n";
  }
  return out;
}

void Manifest::write(const std::filesystem::path& path) const {
  write_file_atomic(path, render());
}

void write_artifact_meta(const std::filesystem::path& artifact,
                         const std::string& config_digest, const std::string& compat_digest,
                         uint64_t seed) {
  nlohmann::json meta;
  meta["config_digest"] = config_digest;
  meta["compat_digest"] = compat_digest;
  meta["seed"] = seed;
  meta["content_hash"] = hex64(fnv1a64(read_file_bytes(artifact)));
  write_file_atomic(artifact.string() + ".meta", meta.dump(2) + "\n");
}

void verify_artifact_compat(const std::filesystem::path& artifact,
                            const std::string& expected_compat_digest) {
  const std::filesystem::path meta_path = artifact.string() + ".meta";
  if (!std::filesystem::exists(artifact)) {
    fail(ErrorKind::io_error, "missing input artifact '" + artifact.string() + "'");
  }
  if (!std::filesystem::exists(meta_path)) {
    fail(ErrorKind::io_error, "missing artifact metadata '" + meta_path.string() + "'");
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file_bytes(meta_path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io_error, "corrupt artifact metadata '" + meta_path.string() + "': " + e.what());
  }
  const std::string got = meta.value("compat_digest", "");
  if (got != expected_compat_digest) {
    fail(ErrorKind::state_error,
         "digest mismatch for '" + artifact.string() + "': artifact was produced with " + got +
             ", current config is " + expected_compat_digest +
             " (data/model/schedule/seed sections differ)");
  }
}

}  // namespace ppd

namespace ppd {

void CsvWriter::save(const std::filesystem::path& path) const {
  write_file_atomic(path, buffer_);
}

}  // namespace ppd
