#include "optex/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "optex/errors.hpp"

namespace optex {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV file: " + path.string());
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " columns");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": not a number: '" + c + "'");
      }
    }
    t.rows.push_back(std::move(row));
    t.line_numbers.push_back(lineno);
  }
  if (!have_header) throw ConfigError("empty CSV file: " + path.string());
  return t;
}

std::string fingerprint(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows, const std::string& fp) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!fp.empty()) out << "# config_fingerprint=" << fp << '\n';
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << format_double(r[i]);
    out << '\n';
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ExcitationProfile read_profile_csv(const std::filesystem::path& path, double temperature) {
  const auto t = read_csv(path);
  if (t.header.size() != 2) throw ConfigError(path.string() + ": expected columns t_s,current_A");
  ExcitationProfile p;
  p.temperature = temperature;
  p.label = path.stem().string();
  if (t.rows.size() >= 2) p.dt = t.rows[1][0] - t.rows[0][0];
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (i > 0) {
      const double step = t.rows[i][0] - t.rows[i - 1][0];
      if (std::abs(step - p.dt) > 1e-9 * std::max(1.0, p.dt))
        throw ConfigError(path.string() + ":" + std::to_string(t.line_numbers[i]) + ": non-constant time step");
    }
    p.currents.push_back(t.rows[i][1]);
  }
  p.validate();
  return p;
}

void write_profile_csv(const std::filesystem::path& path, const ExcitationProfile& profile,
                       const std::string& fp) {
  std::vector<std::vector<double>> rows;
  rows.reserve(profile.currents.size());
  for (std::size_t k = 0; k < profile.currents.size(); ++k)
    rows.push_back({static_cast<double>(k) * profile.dt, profile.currents[k]});
  write_csv(path, {"t_s", "current_A"}, rows, fp);
}

nlohmann::json to_json(const FisherSummary& f) {
  nlohmann::json j;
  j["parameter"] = to_string(f.parameter);
  j["fi_raw"] = f.fi_raw;
  j["fi_scaled"] = f.fi_scaled;
  // JSON has no infinity; a null bound means the profile carries no information.
  if (std::isfinite(f.cramer_rao))
    j["cramer_rao"] = f.cramer_rao;
  else
    j["cramer_rao"] = nullptr;
  j["n_samples"] = f.n_samples;
  return j;
}

}  // namespace optex
