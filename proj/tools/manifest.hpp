#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "dedtwin/errors.hpp"
#include "dedtwin/json_io.hpp"

namespace dedtwin::cli {

inline constexpr const char* kToolVersion = "1.0.0";

inline std::string sha256_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read " + p.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof(buf));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

/// Records what a run read and wrote. Outputs are listed relative to the
/// output directory and no timestamps are kept, so reruns compare byte-equal.
class Manifest {
public:
  Manifest(std::string command, std::filesystem::path out_dir)
      : command_(std::move(command)), out_(std::move(out_dir)) {}

  void config(const std::string& path) { config_ = path; }
  void seed(std::uint64_t s) { seed_ = s; }
  void option(const std::string& key, io::json value) { options_[key] = std::move(value); }

  void input(const std::filesystem::path& p) { inputs_.push_back(p); }

  std::filesystem::path output(const std::string& name) {
    outputs_.push_back(name);
    return out_ / name;
  }

  void write() const {
    io::json j;
    j["command"] = command_;
    j["tool_version"] = kToolVersion;
    j["config"] = config_.empty() ? io::json(nullptr) : io::json(config_);
    j["seed"] = seed_;
    j["options"] = options_;
    io::json in = io::json::array();
    for (const auto& p : inputs_) in.push_back({{"path", p.generic_string()}, {"sha256", sha256_file(p)}});
    j["inputs"] = in;
    io::json outs = io::json::array();
    for (const auto& name : outputs_) {
      const auto p = out_ / name;
      if (std::filesystem::exists(p)) outs.push_back({{"path", name}, {"sha256", sha256_file(p)}});
    }
    j["outputs"] = outs;
    io::write_file((out_ / "manifest.json").string(), j);
  }

private:
  std::string command_;
  std::filesystem::path out_;
  std::string config_;
  std::uint64_t seed_ = 0;
  io::json options_ = io::json::object();
  std::vector<std::filesystem::path> inputs_;
  std::vector<std::string> outputs_;
};

}  // namespace dedtwin::cli
