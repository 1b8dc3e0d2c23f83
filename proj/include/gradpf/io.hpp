#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gradpf/diagnostics.hpp"
#include "gradpf/filter.hpp"
#include "gradpf/mcmc.hpp"

namespace gradpf::io {

namespace fs = std::filesystem;

// Shortest decimal text that round-trips to the same double.
std::string fmt_double(double v);

struct DataSeries {
  std::vector<Vec> states;  // empty for ingested data
  std::vector<Vec> observations;
};

// Header `t,x_1..x_nx,y_1..y_ny`; x columns are omitted when no states are known.
void write_data_csv(const fs::path& path, const DataSeries& data);
DataSeries read_data_csv(const fs::path& path);

// Positive prices from column `column` (by header name); returns the raw series.
std::vector<double> read_prices(const fs::path& path, const std::string& column);
// y_t = 100 log(s_t / s_{t-1}).
std::vector<double> log_returns(const std::vector<double>& prices);

void write_chain_csv(const fs::path& path, const mcmc::Chain& chain);
mcmc::Chain read_chain_csv(const fs::path& path);

nlohmann::json to_json(const dpf::FilterOutput& out);
void write_ancestry_csv(const fs::path& path, const dpf::FilterOutput& out);

nlohmann::json to_json(const diag::Report& report);

void write_text(const fs::path& path, const std::string& text);
void write_json(const fs::path& path, const nlohmann::json& j);

}  // namespace gradpf::io
