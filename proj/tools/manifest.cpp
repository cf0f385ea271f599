#include "manifest.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <memory>

#include "stereopose/errors.hpp"

#ifndef STEREOPOSE_VERSION
#define STEREOPOSE_VERSION "unknown"
#endif

namespace stereopose::cli {

namespace fs = std::filesystem;

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open '" + path.string() + "' for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoFailure("sha256 init failed");
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md;
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[md[i] >> 4];
    hex += kHex[md[i] & 15];
  }
  return hex;
}

DirectoryLock::DirectoryLock(const std::filesystem::path& dir) {
  const auto path = dir / ".lock";
  fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoFailure("cannot open '" + path.string() + "': " + std::strerror(errno));
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    throw IoFailure("output directory '" + dir.string() + "' is locked by another run");
  }
}

DirectoryLock::~DirectoryLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

RunManifest::RunManifest(std::string command, std::filesystem::path out_dir)
    : command_(std::move(command)), out_dir_(std::move(out_dir)) {}

void RunManifest::input(const std::filesystem::path& path) {
  inputs_.push_back({{"path", path.string()}, {"sha256", sha256_file(path)}});
}

void RunManifest::output(const std::filesystem::path& path) {
  outputs_.push_back({{"path", path.string()}, {"sha256", sha256_file(path)}});
}

void RunManifest::close_stage() {
  if (current_.empty()) return;
  timings_[current_] = std::chrono::duration<double>(std::chrono::steady_clock::now() - stage_start_).count();
  current_.clear();
}

void RunManifest::stage(const std::string& name) {
  close_stage();
  current_ = name;
  stage_start_ = std::chrono::steady_clock::now();
}

void RunManifest::fail(const std::string& message) {
  status_ = "failed";
  error_ = message;
}

void RunManifest::write() {
  const std::string failed_stage = status_ == "failed" ? current_ : "";
  close_stage();
  nlohmann::json j = {{"command", command_},      {"version", STEREOPOSE_VERSION}, {"config", config_},
                      {"inputs", inputs_},        {"outputs", outputs_},           {"timings_s", timings_},
                      {"status", status_}};
  if (status_ == "failed") {
    j["failed_stage"] = failed_stage;
    j["error"] = error_;
  }
  // Named after the primary output so several runs can share a directory.
  const std::string stem =
      outputs_.empty() ? command_ : fs::path(outputs_[0]["path"].get<std::string>()).filename().string();
  const auto path = out_dir_ / (stem + ".manifest.json");
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

}  // namespace stereopose::cli
