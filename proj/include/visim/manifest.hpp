#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace visim {

/// One per run directory: the command, the fully-resolved config (every
/// default materialized), the seed, and the artifact paths. Written
/// atomically at run start, finalized (status + end time) at run end; the
/// manifest alone suffices to rerun the command identically.
struct RunManifest {
  std::string command;
  nlohmann::json resolved_config;
  std::uint64_t seed = 0;
  std::vector<std::string> artifacts;
  std::string tool_version;
  std::string started_at;
  std::string finished_at;
  std::string status;  // "running" | "ok" | "failed"

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);

/// Throws on parse errors; sets *version_mismatch when the manifest was
/// written by a different tool version (callers warn, not fail).
RunManifest load_manifest(const std::filesystem::path& path,
                          bool* version_mismatch = nullptr);

std::string iso8601_utc_now();

/// Stable content address for run directories: (command, config, seed).
std::string run_directory_hash(const std::string& command,
                               const nlohmann::json& resolved_config,
                               std::uint64_t seed);

/// Exclusive lock file for a run directory; released on destruction.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir, bool force);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
  bool held_ = false;
};

}  // namespace visim
