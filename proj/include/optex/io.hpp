#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "optex/cell_model.hpp"
#include "optex/sensitivity.hpp"

namespace optex {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

/// Numeric CSV with one header row. Blank lines and lines starting with '#' are skipped.
CsvTable read_csv(const std::filesystem::path& path);

/// 64-bit FNV-1a, printed as 16 hex digits.
std::string fingerprint(const std::string& text);

/// Writes `# config_fingerprint=<fp>` (when fp is non-empty), the header and rows.
/// Values are printed with 17 significant digits so files round-trip exactly.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows, const std::string& fp = "");

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// Profile CSV `t_s,current_A`; dt inferred and required to be constant.
ExcitationProfile read_profile_csv(const std::filesystem::path& path, double temperature = 298.15);
void write_profile_csv(const std::filesystem::path& path, const ExcitationProfile& profile,
                       const std::string& fp = "");

nlohmann::json to_json(const FisherSummary& f);

}  // namespace optex
