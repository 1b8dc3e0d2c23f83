#include "gradpf/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace gradpf::io {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& cell, const fs::path& path, int line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed number '" + cell + "'");
  }
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

// Reads the header and data rows, skipping blank lines and '#' comments.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

Table read_table(const fs::path& path) {
  std::ifstream in = open_in(path);
  Table t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    const std::vector<std::string> cells = split(line);
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                  std::to_string(t.header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const std::string& c : cells) row.push_back(parse_number(c, path, line_no));
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw Error(path.string() + ": missing header");
  return t;
}

}  // namespace

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

void write_data_csv(const fs::path& path, const DataSeries& data) {
  std::ofstream out = open_out(path);
  const bool has_x = !data.states.empty();
  const int nx = has_x ? static_cast<int>(data.states.front().size()) : 0;
  const int ny = data.observations.empty() ? 0 : static_cast<int>(data.observations.front().size());
  out << "t";
  for (int k = 1; k <= nx; ++k) out << ",x_" << k;
  for (int k = 1; k <= ny; ++k) out << ",y_" << k;
  out << "\n";
  for (std::size_t t = 0; t < data.observations.size(); ++t) {
    out << t + 1;
    for (int k = 0; k < nx; ++k) out << ',' << fmt_double(data.states[t](k));
    for (int k = 0; k < ny; ++k) out << ',' << fmt_double(data.observations[t](k));
    out << "\n";
  }
}

DataSeries read_data_csv(const fs::path& path) {
  const Table t = read_table(path);
  std::vector<int> xs, ys;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    const std::string& h = t.header[c];
    if (h.rfind("x_", 0) == 0) xs.push_back(static_cast<int>(c));
    if (h.rfind("y_", 0) == 0) ys.push_back(static_cast<int>(c));
  }
  if (ys.empty()) throw Error(path.string() + ": no y_ columns");
  if (ys.size() > kMaxDim || xs.size() > kMaxDim) throw Error(path.string() + ": too many columns");
  DataSeries d;
  for (const auto& row : t.rows) {
    Vec y(static_cast<int>(ys.size()));
    for (std::size_t k = 0; k < ys.size(); ++k) y(static_cast<int>(k)) = row[ys[k]];
    if (!y.allFinite()) throw Error(path.string() + ": non-finite observation");
    d.observations.push_back(y);
    if (!xs.empty()) {
      Vec x(static_cast<int>(xs.size()));
      for (std::size_t k = 0; k < xs.size(); ++k) x(static_cast<int>(k)) = row[xs[k]];
      d.states.push_back(x);
    }
  }
  if (d.observations.empty()) throw Error(path.string() + ": no data rows");
  return d;
}

std::vector<double> read_prices(const fs::path& path, const std::string& column) {
  std::ifstream in = open_in(path);
  std::string line;
  int line_no = 0;
  int col = -1;
  std::size_t width = 0;
  std::vector<double> prices;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    const std::vector<std::string> cells = split(line);
    if (col < 0) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (cells[c] == column) col = static_cast<int>(c);
      }
      if (col < 0) throw ConfigError(path.string() + ": no column named '" + column + "'");
      width = cells.size();
      continue;
    }
    if (cells.size() != width) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                  std::to_string(width) + " fields, found " + std::to_string(cells.size()));
    }
    const double p = parse_number(cells[col], path, line_no);
    if (!(p > 0.0) || !std::isfinite(p)) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": non-positive price");
    }
    prices.push_back(p);
  }
  if (prices.size() < 2) throw Error(path.string() + ": need at least two prices");
  return prices;
}

std::vector<double> log_returns(const std::vector<double>& prices) {
  if (prices.size() < 2) throw Error("log_returns: need at least two prices");
  std::vector<double> y(prices.size() - 1);
  for (std::size_t t = 1; t < prices.size(); ++t) {
    if (!(prices[t] > 0.0) || !(prices[t - 1] > 0.0)) throw Error("log_returns: non-positive price");
    y[t - 1] = 100.0 * std::log(prices[t] / prices[t - 1]);
  }
  return y;
}

void write_chain_csv(const fs::path& path, const mcmc::Chain& chain) {
  std::ofstream out = open_out(path);
  const int dim = chain.rows.empty() ? 0 : static_cast<int>(chain.rows.front().theta.size());
  out << "iter,accepted,logpost,nge";
  for (int k = 1; k <= dim; ++k) out << ",theta_" << k;
  out << "\n";
  for (const mcmc::ChainRow& r : chain.rows) {
    out << r.iter << ',' << (r.accepted ? 1 : 0) << ',' << fmt_double(r.logpost) << ',' << r.nge;
    for (int k = 0; k < dim; ++k) out << ',' << fmt_double(r.theta(k));
    out << "\n";
  }
}

mcmc::Chain read_chain_csv(const fs::path& path) {
  const Table t = read_table(path);
  const std::vector<std::string> fixed = {"iter", "accepted", "logpost", "nge"};
  if (t.header.size() < 5 || !std::equal(fixed.begin(), fixed.end(), t.header.begin())) {
    throw Error(path.string() + ": not a chain file (expected iter,accepted,logpost,nge,theta_..)");
  }
  for (std::size_t c = 4; c < t.header.size(); ++c) {
    if (t.header[c] != "theta_" + std::to_string(c - 3)) {
      throw Error(path.string() + ": unexpected column '" + t.header[c] + "'");
    }
  }
  mcmc::Chain chain;
  const int dim = static_cast<int>(t.header.size()) - 4;
  for (const auto& row : t.rows) {
    mcmc::ChainRow r;
    r.iter = static_cast<int>(row[0]);
    r.accepted = row[1] != 0.0;
    r.logpost = row[2];
    r.nge = static_cast<int>(row[3]);
    r.theta.resize(dim);
    for (int k = 0; k < dim; ++k) r.theta(k) = row[4 + k];
    chain.rows.push_back(std::move(r));
  }
  return chain;
}

nlohmann::json to_json(const dpf::FilterOutput& out) {
  nlohmann::json j;
  j["loglik"] = out.loglik;
  std::vector<double> grad(out.dloglik_dtheta.data(),
                           out.dloglik_dtheta.data() + out.dloglik_dtheta.size());
  j["grad"] = grad;
  std::vector<double> ess;
  std::vector<bool> flags;
  for (const auto& s : out.trace) {
    ess.push_back(s.ess);
    flags.push_back(s.resampled);
  }
  j["ess_trace"] = ess;
  j["resample_flags"] = flags;
  return j;
}

void write_ancestry_csv(const fs::path& path, const dpf::FilterOutput& out) {
  std::ofstream f = open_out(path);
  f << "t,i,parent\n";
  for (std::size_t t = 0; t < out.trace.size(); ++t) {
    const auto& a = out.trace[t].ancestry;
    for (std::size_t i = 0; i < a.size(); ++i) f << t + 1 << ',' << i << ',' << a[i] << "\n";
  }
}

nlohmann::json to_json(const diag::Report& report) {
  nlohmann::json j;
  j["chains"] = report.chains;
  j["draws_per_chain"] = report.draws_per_chain;
  j["acceptance"] = report.acceptance;
  j["mse"] = std::isnan(report.mse) ? nlohmann::json(nullptr) : nlohmann::json(report.mse);
  nlohmann::json comps = nlohmann::json::array();
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  for (const auto& c : report.components) {
    comps.push_back({{"name", c.name},
                     {"mean", num(c.mean)},
                     {"sd", num(c.sd)},
                     {"iact", num(c.iact)},
                     {"ess", num(c.ess)},
                     {"rhat", num(c.rhat)}});
  }
  j["components"] = comps;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace gradpf::io
