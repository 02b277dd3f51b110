#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "omniisr/hybrid.hpp"
#include "omniisr/theory.hpp"
#include "omniisr/trainer.hpp"

namespace omniisr {

/// Shortest text that reads back to the same double ("%.17g").
std::string format_number(double value);
/// Marker written where a closed form is undefined.
inline constexpr const char* kUndefined = "undefined";

/// Rows of comma-separated cells with a fixed header. Cells never contain
/// commas, so no quoting is needed.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  CsvTable& add(std::vector<std::string> row);
  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_.size(); }

  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// iter, ce, mi_1..mi_M, ne_1..ne_M, total, grad_norm_sq, eta
CsvTable trace_table(const RunTrace& trace, std::size_t taps);
/// round, drift, H_t, grad_norm_sq, mean_client_loss, participants
CsvTable rounds_table(const std::vector<RoundDiagnostics>& rounds);
/// round, inner, norm_cl, norm_fl, cosine, alpha
CsvTable alignment_table(const std::vector<HybridRound>& rounds);
/// mode, initial_gap, variance, drift, bias_floor, total, feasible, condition, rounds_to_epsilon
CsvTable bounds_table(const std::vector<BoundReport>& reports,
                      const std::vector<Complexity>& complexities);
/// panel, gamma, eta, R, delta, t_esc
CsvTable escape_table(const std::vector<EscapeRow>& rows);

/// Lower-case hex SHA-256 of `data`.
std::string sha256_hex(const std::string& data);

struct RunManifest {
  std::string command;
  std::string config_sha256;
  std::uint64_t seed = 0;
  std::string version;
  std::string started_utc;
  std::string finished_utc;
  std::vector<std::string> files;
  int exit_status = 0;
  std::string message;

  std::string to_json() const;
};

/// Current UTC time as an ISO-8601 string.
std::string utc_now();

}  // namespace omniisr
