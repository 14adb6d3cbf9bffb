#include "mlbias/report.hpp"

#include <cstdio>

#include "mlbias/error.hpp"
#include "mlbias/hash.hpp"
#include "mlbias/text.hpp"

namespace mlbias {

void RunManifest::add_input(const std::filesystem::path& path) {
  input_hashes[path.string()] = sha256_file(path);
}

nlohmann::json RunManifest::to_json(bool with_duration) const {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = config;
  j["inputs"] = input_hashes;
  j["seeds"] = seeds;
  j["version"] = version;
  if (with_duration) j["duration_seconds"] = duration_seconds;
  return j;
}

void write_report(const std::filesystem::path& path, nlohmann::json report, const RunManifest& manifest,
                  const std::filesystem::path& sidecar_base) {
  report["manifest"] = manifest.to_json(false);
  text::write_file(path, report.dump(1) + "\n");
  auto sidecar = manifest.to_json(true);
  sidecar["report"] = path.string();
  text::write_file(sidecar_base.string() + ".manifest.json", sidecar.dump(1) + "\n");
}

CsvWriter::CsvWriter(std::vector<std::string> header) : width_(header.size()) { row(header); }

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != width_) throw std::logic_error("csv: row width mismatch");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out_.push_back(',');
    const auto& f = fields[i];
    if (f.find_first_of(",\"\n") == std::string::npos) {
      out_ += f;
    } else {
      out_.push_back('"');
      for (char c : f) {
        if (c == '"') out_.push_back('"');
        out_.push_back(c);
      }
      out_.push_back('"');
    }
  }
  out_.push_back('\n');
}

void CsvWriter::save(const std::filesystem::path& path) const { text::write_file(path, out_); }

std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace mlbias
