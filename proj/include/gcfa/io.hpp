#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gcfa/analytics.hpp"
#include "gcfa/data.hpp"
#include "gcfa/draws.hpp"
#include "gcfa/error.hpp"
#include "gcfa/stochastic.hpp"

namespace gcfa {

// ---------------------------------------------------------------------------
// CSV

/// Parses RFC 4180 CSV: quoted fields may contain commas, doubled quotes and
/// line breaks. Blank lines are skipped.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row.front().empty())) rows.push_back(std::move(row));
    row.clear();
  };
  char ch;
  while (in.get(ch)) {
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\n') {
      end_row();
    } else if (ch != '\r') {
      field.push_back(ch);
      field_started = true;
    }
  }
  if (quoted) throw input_error("CSV input ends inside a quoted field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

inline bool is_missing_token(const std::string& s) { return s.empty() || s == "NA"; }

inline std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

enum class ColumnRole { Auto, Continuous, Ordinal, Binary, Id, Ignore };

inline ColumnRole parse_role(const std::string& s) {
  if (s == "auto") return ColumnRole::Auto;
  if (s == "continuous") return ColumnRole::Continuous;
  if (s == "ordinal") return ColumnRole::Ordinal;
  if (s == "binary") return ColumnRole::Binary;
  if (s == "id") return ColumnRole::Id;
  if (s == "ignore") return ColumnRole::Ignore;
  throw input_error("unknown margin kind '" + s + "' (expected continuous, ordinal, binary, id, ignore or auto)");
}

/// Margin-spec file: one `column name: kind` line per column, '#' comments.
inline std::map<std::string, ColumnRole> read_margin_spec(std::istream& in) {
  std::map<std::string, ColumnRole> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto colon = line.rfind(':');
    if (colon == std::string::npos)
      throw input_error("margin spec line " + std::to_string(number) + ": expected 'name: kind'");
    out[trim(std::string_view(line).substr(0, colon))] = parse_role(trim(std::string_view(line).substr(colon + 1)));
  }
  return out;
}

inline std::map<std::string, ColumnRole> read_margin_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open margin spec " + path);
  return read_margin_spec(in);
}

struct IngestedData {
  MixedDataMatrix data;
  std::vector<std::string> ids;  // row labels, empty without an id column
  std::string id_label;
  // For discrete columns, the original value of code c at index c - 1.
  std::vector<std::vector<double>> levels;

  // Original value for a model-scale value of column j.
  double original_value(Index j, double v) const {
    const auto& l = levels[static_cast<std::size_t>(j)];
    if (l.empty()) return v;
    return l[static_cast<std::size_t>(std::lround(v)) - 1];
  }

  // Model-scale value for an original value of column j.
  double model_value(Index j, double v) const {
    const auto& l = levels[static_cast<std::size_t>(j)];
    if (l.empty()) return v;
    const auto it = std::find(l.begin(), l.end(), v);
    if (it == l.end()) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(it - l.begin() + 1);
  }

  Index column_index(const std::string& name) const {
    const auto lab = data.labels();
    const auto it = std::find(lab.begin(), lab.end(), name);
    if (it == lab.end()) throw input_error("unknown variable '" + name + "'");
    return static_cast<Index>(it - lab.begin());
  }
};

/// Reads a CSV with a header row. Empty or NA cells are missing. Columns not
/// named in `roles` are inferred: a non-numeric first column is the row id;
/// integer columns with at most 15 distinct values are ordinal (binary with
/// two); anything else is continuous. Discrete values are recoded 1..c in
/// increasing order.
inline IngestedData ingest_csv(std::istream& in, const std::map<std::string, ColumnRole>& roles = {}) {
  const auto rows = parse_csv(in);
  if (rows.empty()) throw input_error("CSV has no header row");
  const auto& header = rows.front();
  const std::size_t width = header.size();
  const std::size_t n = rows.size() - 1;
  if (n == 0) throw input_error("CSV has no data rows");
  for (std::size_t r = 1; r < rows.size(); ++r)
    if (rows[r].size() != width)
      throw input_error("row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) + " fields, header has " +
                        std::to_string(width));
  for (const auto& [name, role] : roles)
    if (std::find_if(header.begin(), header.end(), [&](const std::string& h) { return trim(h) == name; }) ==
        header.end())
      throw input_error("margin spec names unknown column '" + name + "'");

  IngestedData out;
  std::vector<std::vector<double>> columns;
  std::vector<MarginSpec> margins;
  for (std::size_t c = 0; c < width; ++c) {
    const std::string name = trim(header[c]);
    const auto found = roles.find(name);
    ColumnRole role = found == roles.end() ? ColumnRole::Auto : found->second;
    if (role == ColumnRole::Ignore) continue;

    std::vector<std::optional<double>> cells(n);
    std::optional<std::size_t> bad_row;
    for (std::size_t r = 0; r < n; ++r) {
      const std::string cell = trim(rows[r + 1][c]);
      if (is_missing_token(cell)) continue;
      cells[r] = parse_number(cell);
      if (!cells[r] && !bad_row) bad_row = r;
    }
    if (role == ColumnRole::Auto && bad_row && c == 0 && out.ids.empty()) role = ColumnRole::Id;
    if (role == ColumnRole::Id) {
      if (!out.ids.empty()) throw input_error("more than one id column");
      out.id_label = name;
      for (std::size_t r = 0; r < n; ++r) out.ids.push_back(trim(rows[r + 1][c]));
      continue;
    }
    if (bad_row)
      throw input_error("unparseable cell '" + trim(rows[*bad_row + 1][c]) + "' at row " + std::to_string(*bad_row + 1) +
                        ", column " + name);

    std::vector<double> col(n, kMissing);
    std::set<double> distinct;
    bool integral = true;
    for (std::size_t r = 0; r < n; ++r)
      if (cells[r]) {
        col[r] = *cells[r];
        distinct.insert(col[r]);
        integral = integral && std::floor(col[r]) == col[r];
      }
    if (distinct.empty()) throw input_error("column " + name + " is entirely missing");
    if (distinct.size() == 1) throw input_error("column " + name + " is constant");
    if (role == ColumnRole::Auto)
      role = !integral || distinct.size() > 15 ? ColumnRole::Continuous
             : distinct.size() == 2            ? ColumnRole::Binary
                                               : ColumnRole::Ordinal;
    if (role == ColumnRole::Binary && distinct.size() != 2)
      throw input_error("column " + name + " declared binary but has " + std::to_string(distinct.size()) + " values");

    std::vector<double> levels;
    if (role == ColumnRole::Continuous) {
      margins.push_back(MarginSpec::continuous(name));
    } else {
      levels.assign(distinct.begin(), distinct.end());
      for (double& v : col)
        if (!std::isnan(v)) v = static_cast<double>(std::lower_bound(levels.begin(), levels.end(), v) - levels.begin() + 1);
      margins.push_back(role == ColumnRole::Binary ? MarginSpec::binary(name)
                                                   : MarginSpec::ordinal(static_cast<int>(levels.size()), name));
    }
    out.levels.push_back(std::move(levels));
    columns.push_back(std::move(col));
  }
  if (columns.size() < 2) throw input_error("need at least two data columns");
  Eigen::MatrixXd y(static_cast<Index>(n), static_cast<Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j)
    for (std::size_t r = 0; r < n; ++r) y(static_cast<Index>(r), static_cast<Index>(j)) = columns[j][r];
  out.data = MixedDataMatrix(std::move(y), std::move(margins));
  return out;
}

inline IngestedData ingest_csv(const std::string& path, const std::map<std::string, ColumnRole>& roles = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open data file " + path);
  return ingest_csv(in, roles);
}

// ---------------------------------------------------------------------------
// Priors on the command line

/// "gdp:ALPHA,BETA" or "normal:VARIANCE"; a bare family name takes defaults.
inline LoadingsPrior parse_prior(const std::string& text) {
  const auto colon = text.find(':');
  const std::string family = text.substr(0, colon);
  const std::string args = colon == std::string::npos ? std::string{} : text.substr(colon + 1);
  auto number = [&](const std::string& s) {
    const auto v = parse_number(trim(s));
    if (!v) throw input_error("bad number '" + s + "' in prior '" + text + "'");
    return *v;
  };
  LoadingsPrior prior;
  if (family == "gdp") {
    GdpParams g;
    if (!args.empty()) {
      const auto comma = args.find(',');
      if (comma == std::string::npos) throw input_error("GDP prior needs gdp:ALPHA,BETA");
      g.alpha = number(args.substr(0, comma));
      g.beta = number(args.substr(comma + 1));
    }
    prior = g;
  } else if (family == "normal") {
    NormalParams nrm;
    if (!args.empty()) nrm.precision = 1.0 / number(args);
    prior = nrm;
  } else {
    throw input_error("unknown prior '" + text + "' (expected gdp:A,B or normal:VARIANCE)");
  }
  std::visit([](const auto& p) { p.validate(); }, prior);
  return prior;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string prior_text(const LoadingsPrior& prior) {
  if (const auto* g = std::get_if<GdpParams>(&prior)) return "gdp:" + format_double(g->alpha) + "," + format_double(g->beta);
  return "normal:" + format_double(1.0 / std::get<NormalParams>(prior).precision);
}

inline std::string identification_text(Identification id) {
  return id == Identification::Unconstrained ? "unconstrained" : "lower-triangular";
}

inline Identification parse_identification(const std::string& s) {
  if (s == "unconstrained") return Identification::Unconstrained;
  if (s == "lower-triangular") return Identification::LowerTriangularPositiveDiag;
  throw input_error("unknown identification '" + s + "' (expected lower-triangular or unconstrained)");
}

// ---------------------------------------------------------------------------
// Draw archive
//
// Text layout, one item per line, fields separated by tabs:
//   gcfa-draws 1
//   key<TAB>value            (header; see write_archive for the keys)
//   labels<TAB>name...       (p names)
//   cutpoints<TAB>count...   (p interior cutpoint counts, 0 without probit)
//   records                  (marks the start of the data)
//   one line per draw: p*k scaled loadings (row-major), p uniquenesses, n*k
//   scores if stored, then the cutpoints column by column; every number is
//   printed with %.17g.
// Wall-clock time is not stored so reruns with one seed are byte-identical.

inline constexpr const char* kArchiveMagic = "gcfa-draws 1";

inline void write_archive(std::ostream& out, const PosteriorDraws& d) {
  const auto& c = d.config;
  out << kArchiveMagic << '\n';
  out << "model\t" << d.model << '\n';
  out << "variables\t" << d.variables << '\n';
  out << "factors\t" << d.factors << '\n';
  out << "observations\t" << d.observations << '\n';
  out << "draws\t" << d.size() << '\n';
  out << "scores\t" << (d.scores.size() > 0 ? 1 : 0) << '\n';
  out << "seed\t" << c.seed << '\n';
  out << "iterations\t" << c.iterations << '\n';
  out << "burnin\t" << c.burnin << '\n';
  out << "thin\t" << c.thin << '\n';
  out << "prior\t" << prior_text(c.prior) << '\n';
  out << "identification\t" << identification_text(c.identification) << '\n';
  out << "px\t" << (c.px_enabled ? 1 : 0) << '\n';
  out << "px_prior_df\t" << format_double(c.px_prior_df) << '\n';
  out << "interrupted\t" << (d.interrupted ? 1 : 0) << '\n';
  out << "cutpoint_acceptance\t" << format_double(d.cutpoint_acceptance) << '\n';
  out << "labels";
  for (const auto& l : d.labels) out << '\t' << l;
  out << "\ncutpoints";
  for (Index j = 0; j < d.variables; ++j) out << '\t' << (d.has_cutpoints(j) ? d.cutpoints[static_cast<std::size_t>(j)].cols() : 0);
  out << "\nrecords\n";
  for (Index t = 0; t < d.size(); ++t) {
    std::string line;
    auto put = [&](double v) {
      if (!line.empty()) line.push_back('\t');
      line += format_double(v);
    };
    for (Index e = 0; e < d.loadings.cols(); ++e) put(d.loadings(t, e));
    for (Index e = 0; e < d.uniqueness.cols(); ++e) put(d.uniqueness(t, e));
    for (Index e = 0; e < d.scores.cols(); ++e) put(d.scores(t, e));
    for (Index j = 0; j < d.variables; ++j)
      if (d.has_cutpoints(j))
        for (Index e = 0; e < d.cutpoints[static_cast<std::size_t>(j)].cols(); ++e)
          put(d.cutpoints[static_cast<std::size_t>(j)](t, e));
    out << line << '\n';
  }
}

inline void write_archive(const std::string& path, const PosteriorDraws& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write archive " + path);
  write_archive(out, d);
  if (!out) throw input_error("error while writing archive " + path);
}

inline PosteriorDraws read_archive(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kArchiveMagic) throw input_error("not a draw archive (bad magic line)");
  std::map<std::string, std::string> header;
  PosteriorDraws d;
  std::vector<Index> cut_counts;
  while (std::getline(in, line) && line != "records") {
    const auto tab = line.find('\t');
    const std::string key = line.substr(0, tab);
    if (key == "labels" || key == "cutpoints") {
      std::stringstream ss(tab == std::string::npos ? std::string{} : line.substr(tab + 1));
      std::string item;
      while (std::getline(ss, item, '\t')) {
        if (key == "labels") {
          d.labels.push_back(item);
          continue;
        }
        const auto v = parse_number(item);
        if (!v || *v < 0) throw input_error("bad cutpoint count '" + item + "' in archive");
        cut_counts.push_back(static_cast<Index>(*v));
      }
      continue;
    }
    if (tab == std::string::npos) throw input_error("malformed archive header line '" + line + "'");
    header[key] = line.substr(tab + 1);
  }
  if (line != "records") throw input_error("archive has no records section");
  auto get = [&](const std::string& key) {
    const auto it = header.find(key);
    if (it == header.end()) throw input_error("archive header lacks '" + key + "'");
    return it->second;
  };
  auto integer = [&](const std::string& key) {
    const auto v = parse_number(get(key));
    if (!v || *v < 0 || std::floor(*v) != *v) throw input_error("archive header '" + key + "' is not a count");
    return static_cast<long long>(*v);
  };
  d.model = get("model");
  d.variables = integer("variables");
  d.factors = integer("factors");
  d.observations = integer("observations");
  const Index draws = integer("draws");
  const bool scores = integer("scores") == 1;
  auto& c = d.config;
  c.seed = std::stoull(get("seed"));
  c.iterations = static_cast<int>(integer("iterations"));
  c.burnin = static_cast<int>(integer("burnin"));
  c.thin = static_cast<int>(integer("thin"));
  c.factors = static_cast<int>(d.factors);
  c.prior = parse_prior(get("prior"));
  c.identification = parse_identification(get("identification"));
  c.px_enabled = integer("px") == 1;
  c.px_prior_df = std::stod(get("px_prior_df"));
  c.store_scores = scores;
  d.interrupted = integer("interrupted") == 1;
  d.cutpoint_acceptance = std::strtod(get("cutpoint_acceptance").c_str(), nullptr);
  if (static_cast<Index>(d.labels.size()) != d.variables) throw input_error("archive label count does not match variables");

  if (static_cast<Index>(cut_counts.size()) != d.variables)
    throw input_error("archive cutpoint counts do not match variables");

  d.reserve(draws, scores);
  Index cut_total = 0;
  if (std::any_of(cut_counts.begin(), cut_counts.end(), [](Index c) { return c > 0; }))
    for (Index c : cut_counts) {
      d.cutpoints.emplace_back(draws, c);
      cut_total += c;
    }
  const Index fixed = d.loadings.cols() + d.uniqueness.cols() + d.scores.cols();
  const Index width = fixed + cut_total;
  for (Index t = 0; t < draws; ++t) {
    if (!std::getline(in, line))
      throw input_error("archive ends after " + std::to_string(t) + " of " + std::to_string(draws) + " records");
    const char* p = line.c_str();
    for (Index e = 0; e < width; ++e) {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) throw input_error("archive record " + std::to_string(t + 1) + " is short");
      p = end;
      if (e < d.loadings.cols()) d.loadings(t, e) = v;
      else if (e < d.loadings.cols() + d.uniqueness.cols()) d.uniqueness(t, e - d.loadings.cols()) = v;
      else if (e < fixed) d.scores(t, e - d.loadings.cols() - d.uniqueness.cols()) = v;
      else {
        Index off = e - fixed;
        std::size_t j = 0;
        while (off >= d.cutpoints[j].cols()) off -= d.cutpoints[j++].cols();
        d.cutpoints[j](t, off) = v;
      }
    }
    if (*p != '\0') throw input_error("archive record " + std::to_string(t + 1) + " has extra fields");
  }
  if (std::getline(in, line) && !line.empty()) throw input_error("archive has more records than its header states");
  return d;
}

inline PosteriorDraws read_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open archive " + path);
  return read_archive(in);
}

// ---------------------------------------------------------------------------
// Tables

inline void write_summary(std::ostream& out, const std::vector<ParameterSummary>& rows) {
  out << "parameter\tmean\tsd\tcentral90_lo\tcentral90_hi\tcentral95_lo\tcentral95_hi\thpd90_lo\thpd90_hi\thpd95_lo\thpd95_hi\n";
  for (const auto& r : rows) {
    out << r.name;
    for (double v : {r.mean, r.sd, r.central90.lower, r.central90.upper, r.central95.lower, r.central95.upper,
                     r.hpd90.lower, r.hpd90.upper, r.hpd95.lower, r.hpd95.upper})
      out << '\t' << format_double(v);
    out << '\n';
  }
}

/// Tab-separated table with a header row.
class TableWriter {
 public:
  TableWriter(std::ostream& out, const std::vector<std::string>& columns) : out_(out), width_(columns.size()) {
    row(columns);
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw input_error("table row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "\t" : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ostream& out_;
  std::size_t width_;
};

}  // namespace gcfa
