#include "visim/manifest.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>

#include "visim/version.hpp"

namespace visim {

nlohmann::json RunManifest::to_json() const {
  return nlohmann::json{{"format", "visim-manifest-v1"},
                        {"command", command},
                        {"resolved_config", resolved_config},
                        {"seed", seed},
                        {"artifacts", artifacts},
                        {"tool_version", tool_version},
                        {"started_at", started_at},
                        {"finished_at", finished_at},
                        {"status", status}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "visim-manifest-v1")
    throw std::runtime_error("manifest: unsupported format tag '" +
                             j.value("format", "") + "'");
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.resolved_config = j.at("resolved_config");
  m.seed = j.at("seed").get<std::uint64_t>();
  m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  m.status = j.value("status", "");
  return m;
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("write_manifest: cannot open " + tmp.string());
    out << manifest.to_json().dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

RunManifest load_manifest(const std::filesystem::path& path, bool* version_mismatch) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_manifest: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("load_manifest: corrupt manifest " + path.string() + ": " +
                             e.what());
  }
  RunManifest m = RunManifest::from_json(j);
  if (version_mismatch) *version_mismatch = m.tool_version != kToolVersion;
  return m;
}

std::string iso8601_utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string run_directory_hash(const std::string& command,
                               const nlohmann::json& resolved_config,
                               std::uint64_t seed) {
  // FNV-1a over the canonical serialization
  const std::string payload =
      command + "\x1f" + resolved_config.dump() + "\x1f" + std::to_string(seed);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : payload) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%012llx", static_cast<unsigned long long>(h & 0xFFFFFFFFFFFFULL));
  return buf;
}

RunLock::RunLock(const std::filesystem::path& dir, bool force) {
  path_ = dir / ".lock";
  if (force) std::filesystem::remove(path_);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw std::runtime_error("run directory " + dir.string() +
                             " is locked by another process (" + path_.string() +
                             " exists; --force overrides)");
  }
  ::close(fd);
  held_ = true;
}

RunLock::~RunLock() {
  if (held_) {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
}

}  // namespace visim
