#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace mlbias {

inline constexpr const char* kToolkitVersion = "0.1.0";

// What a command ran with. Everything except the duration is embedded in
// the command's JSON report, so identical inputs give identical bytes; the
// sidecar manifest file adds the wall-clock duration.
struct RunManifest {
  RunManifest() = default;
  RunManifest(std::string cmd, nlohmann::json cfg) : command(std::move(cmd)), config(std::move(cfg)) {}

  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::string> input_hashes;  // path -> sha256
  std::map<std::string, std::uint64_t> seeds;
  std::string version = kToolkitVersion;
  double duration_seconds = 0.0;

  void add_input(const std::filesystem::path& path);
  nlohmann::json to_json(bool with_duration) const;
};

// Writes `report` with an embedded "manifest" member, plus
// `<sidecar_base>.manifest.json` carrying the duration.
void write_report(const std::filesystem::path& path, nlohmann::json report, const RunManifest& manifest,
                  const std::filesystem::path& sidecar_base);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(const std::vector<std::string>& fields);
  std::string str() const { return out_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::size_t width_;
  std::string out_;
};

// Fixed 4-decimal rendering used for every score in CSV reports.
std::string fmt4(double v);
std::string fmt2(double v);

}  // namespace mlbias
