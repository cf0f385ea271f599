#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace stereopose::cli {

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Exclusive advisory lock on `<dir>/.lock`, released on destruction.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  int fd_ = -1;
};

/// One record per command run, written next to the outputs as `<first output>.manifest.json`
/// (`<command>.manifest.json` when the run produced nothing).
class RunManifest {
 public:
  RunManifest(std::string command, std::filesystem::path out_dir);

  nlohmann::json& config() { return config_; }
  void input(const std::filesystem::path& path);
  void output(const std::filesystem::path& path);

  /// Starts timing `name`; the previous stage (if any) is closed.
  void stage(const std::string& name);
  void fail(const std::string& message);
  void write();

 private:
  void close_stage();

  std::string command_;
  std::filesystem::path out_dir_;
  nlohmann::json config_ = nlohmann::json::object();
  nlohmann::json inputs_ = nlohmann::json::array();
  nlohmann::json outputs_ = nlohmann::json::array();
  nlohmann::json timings_ = nlohmann::json::object();
  std::string current_;
  std::chrono::steady_clock::time_point stage_start_;
  std::string status_ = "ok";
  std::string error_;
};

}  // namespace stereopose::cli
