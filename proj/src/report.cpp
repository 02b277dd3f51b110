#include "omniisr/report.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "omniisr/errors.hpp"

namespace omniisr {

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::add(std::vector<std::string> row) {
  if (row.size() != header_.size())
    throw ContractViolation("CSV row has " + std::to_string(row.size()) + " cells, header has " +
                            std::to_string(header_.size()));
  rows_.push_back(std::move(row));
  return *this;
}

std::string CsvTable::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

void CsvTable::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << str();
}

CsvTable trace_table(const RunTrace& trace, std::size_t taps) {
  std::vector<std::string> header{"iter", "ce"};
  for (std::size_t m = 1; m <= taps; ++m) header.push_back("mi_" + std::to_string(m));
  for (std::size_t m = 1; m <= taps; ++m) header.push_back("ne_" + std::to_string(m));
  for (const char* h : {"total", "grad_norm_sq", "eta"}) header.emplace_back(h);
  CsvTable table(header);
  for (const auto& row : trace) {
    std::vector<std::string> cells{std::to_string(row.iter), format_number(row.loss.ce)};
    for (std::size_t m = 0; m < taps; ++m) cells.push_back(format_number(row.loss.mi.at(m)));
    for (std::size_t m = 0; m < taps; ++m) cells.push_back(format_number(row.loss.ne.at(m)));
    cells.push_back(format_number(row.loss.total));
    cells.push_back(format_number(row.grad_norm_sq));
    cells.push_back(format_number(row.eta));
    table.add(std::move(cells));
  }
  return table;
}

CsvTable rounds_table(const std::vector<RoundDiagnostics>& rounds) {
  CsvTable table({"round", "drift", "H_t", "grad_norm_sq", "mean_client_loss", "participants"});
  for (const auto& r : rounds) {
    std::string ids;
    for (std::size_t i = 0; i < r.participants.size(); ++i) {
      if (i) ids += ';';
      ids += std::to_string(r.participants[i]);
    }
    table.add({std::to_string(r.round), format_number(r.drift), format_number(r.heterogeneity),
               format_number(r.grad_norm_sq), format_number(r.mean_client_loss), ids});
  }
  return table;
}

CsvTable alignment_table(const std::vector<HybridRound>& rounds) {
  CsvTable table({"round", "inner", "norm_cl", "norm_fl", "cosine", "alpha"});
  for (const auto& r : rounds) {
    const auto& a = r.alignment;
    table.add({std::to_string(a.round), format_number(a.inner), format_number(a.norm_cl),
               format_number(a.norm_fl), format_number(a.cosine), format_number(a.alpha)});
  }
  return table;
}

CsvTable bounds_table(const std::vector<BoundReport>& reports,
                      const std::vector<Complexity>& complexities) {
  CsvTable table({"mode", "initial_gap", "variance", "drift", "bias_floor", "total", "feasible",
                  "condition", "rounds_to_epsilon"});
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    std::string rounds = kUndefined;
    if (i < complexities.size() && complexities[i].feasible)
      rounds = std::to_string(complexities[i].rounds);
    table.add({to_string(r.mode), format_number(r.initial_gap), format_number(r.variance),
               format_number(r.drift), format_number(r.bias_floor), format_number(r.total),
               r.feasible ? "true" : "false", r.condition, rounds});
  }
  return table;
}

CsvTable escape_table(const std::vector<EscapeRow>& rows) {
  CsvTable table({"panel", "gamma", "eta", "R", "delta", "t_esc"});
  for (const auto& r : rows) {
    table.add({std::string(1, r.panel), format_number(r.curvature), format_number(r.eta),
               format_number(r.radius), format_number(r.delta),
               r.time ? format_number(*r.time) : kUndefined});
  }
  return table;
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw ContractViolation("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config_sha256"] = config_sha256;
  j["seed"] = seed;
  j["versions"] = {{"omniisr", version}, {"compiler", __VERSION__}, {"cxx_standard", __cplusplus}};
  j["started_utc"] = started_utc;
  j["finished_utc"] = finished_utc;
  j["files"] = files;
  j["exit_status"] = exit_status;
  if (!message.empty()) j["message"] = message;
  return j.dump(2) + "\n";
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace omniisr
