#include "rdx/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "rdx/errors.hpp"

namespace rdx {

const char* to_string(Design design) {
  return design == Design::Sharp ? "sharp" : "fuzzy";
}

namespace {

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) {
    h ^= (v >> (8 * b)) & 0xffu;
    h *= 1099511628211ull;
  }
  return h;
}

std::string join_cell(const std::vector<std::string>& z) {
  std::string key;
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (k) key += '|';
    key += z[k];
  }
  return key;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Minimal RFC-4180 style splitter: commas, optional double quotes.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_real(const std::string& field, const char* name, std::size_t row) {
  if (field.empty())
    throw Error(ErrorKind::ParseError, std::string("missing value in column '") + name + "'", row);
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw Error(ErrorKind::ParseError,
                std::string("cannot parse '") + field + "' in column '" + name + "'", row);
  if (!std::isfinite(v))
    throw Error(ErrorKind::ParseError, std::string("non-finite value in column '") + name + "'", row);
  return v;
}

void validate_observation(const Observation& o, Design design, std::size_t row) {
  if (!std::isfinite(o.y) || !std::isfinite(o.x) || !std::isfinite(o.c))
    throw Error(ErrorKind::ParseError, "non-finite value", row);
  if (o.d != 0 && o.d != 1)
    throw Error(ErrorKind::ParseError, "treatment must be 0 or 1", row);
  if (design == Design::Sharp && o.d != (o.x >= o.c ? 1 : 0))
    throw Error(ErrorKind::SharpComplianceViolation, "d differs from 1(x >= c)", row);
}

}  // namespace

Dataset::Dataset(std::shared_ptr<const Storage> store,
                 std::shared_ptr<const std::vector<std::uint32_t>> rows,
                 std::vector<double> cutoffs, Design design)
    : store_(std::move(store)), rows_(std::move(rows)), cutoffs_(std::move(cutoffs)),
      design_(design) {
  std::uint64_t h = 14695981039346656037ull;
  h = fnv1a(h, reinterpret_cast<std::uintptr_t>(store_.get()));
  for (auto r : *rows_) h = fnv1a(h, r);
  fingerprint_ = fnv1a(h, rows_->size());
}

Dataset Dataset::from_observations(std::vector<Observation> obs, Design design,
                                   std::vector<std::string> covariate_names) {
  auto store = std::make_shared<Storage>();
  const std::size_t n = obs.size();
  store->y.reserve(n);
  store->x.reserve(n);
  store->c.reserve(n);
  store->d.reserve(n);
  std::size_t nz = covariate_names.size();
  if (nz == 0 && n > 0) nz = obs.front().z.size();
  if (covariate_names.empty())
    for (std::size_t k = 0; k < nz; ++k) covariate_names.push_back("z" + std::to_string(k + 1));
  store->z_names = std::move(covariate_names);

  std::set<double> cuts;
  for (std::size_t i = 0; i < n; ++i) {
    auto& o = obs[i];
    validate_observation(o, design, i + 1);
    if (o.z.size() != nz)
      throw Error(ErrorKind::ParseError, "inconsistent covariate count", i + 1);
    store->y.push_back(o.y);
    store->x.push_back(o.x);
    store->c.push_back(o.c);
    store->d.push_back(o.d);
    store->cell.push_back(join_cell(o.z));
    store->z.push_back(std::move(o.z));
    cuts.insert(o.c);
  }
  auto rows = std::make_shared<std::vector<std::uint32_t>>(n);
  for (std::size_t i = 0; i < n; ++i) (*rows)[i] = static_cast<std::uint32_t>(i);
  return Dataset(std::move(store), std::move(rows),
                 std::vector<double>(cuts.begin(), cuts.end()), design);
}

Observation Dataset::observation(std::size_t i) const {
  auto r = (*rows_)[i];
  return Observation{store_->y[r], store_->x[r], store_->c[r], store_->d[r], store_->z[r]};
}

std::vector<std::string> Dataset::covariate_cells() const {
  std::set<std::string> keys;
  for (std::size_t i = 0; i < size(); ++i) keys.insert(cell_key(i));
  return {keys.begin(), keys.end()};
}

bool Dataset::has_cutoff(double c) const {
  return std::binary_search(cutoffs_.begin(), cutoffs_.end(), c);
}

Dataset Dataset::subset(const RowFilter& f) const {
  if (f.cutoff && !has_cutoff(*f.cutoff))
    throw Error(ErrorKind::UnknownCutoff, "cutoff " + std::to_string(*f.cutoff) + " not in dataset");
  auto rows = std::make_shared<std::vector<std::uint32_t>>();
  rows->reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    const auto r = (*rows_)[i];
    const double xi = store_->x[r];
    const double ci = store_->c[r];
    if (f.cutoff && ci != *f.cutoff) continue;
    if (f.treated && store_->d[r] != *f.treated) continue;
    if (f.window && (xi < f.window->first || xi > f.window->second)) continue;
    if (f.above_cutoff && (xi >= ci) != *f.above_cutoff) continue;
    if (f.cell && store_->cell[r] != *f.cell) continue;
    rows->push_back(r);
  }
  return Dataset(store_, std::move(rows), cutoffs_, design_);
}

Dataset Dataset::select(std::span<const std::size_t> positions) const {
  auto rows = std::make_shared<std::vector<std::uint32_t>>();
  rows->reserve(positions.size());
  for (auto p : positions) {
    if (p >= size()) throw Error(ErrorKind::IndexOutOfRange, "view position out of range");
    rows->push_back((*rows_)[p]);
  }
  return Dataset(store_, std::move(rows), cutoffs_, design_);
}

Dataset Dataset::normalized() const {
  auto store = std::make_shared<Storage>();
  store->z_names = store_->z_names;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto r = (*rows_)[i];
    store->y.push_back(store_->y[r]);
    store->x.push_back(store_->x[r] - store_->c[r]);
    store->c.push_back(0.0);
    store->d.push_back(store_->d[r]);
    store->cell.push_back(store_->cell[r]);
    store->z.push_back(store_->z[r]);
  }
  auto rows = std::make_shared<std::vector<std::uint32_t>>(size());
  for (std::size_t i = 0; i < size(); ++i) (*rows)[i] = static_cast<std::uint32_t>(i);
  return Dataset(std::move(store), std::move(rows), {0.0}, design_);
}

Dataset Dataset::with_outcomes(std::span<const double> y) const {
  if (y.size() != size())
    throw Error(ErrorKind::InvalidArgument, "outcome vector length differs from view size");
  auto store = std::make_shared<Storage>();
  store->z_names = store_->z_names;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto r = (*rows_)[i];
    store->y.push_back(y[i]);
    store->x.push_back(store_->x[r]);
    store->c.push_back(store_->c[r]);
    store->d.push_back(store_->d[r]);
    store->cell.push_back(store_->cell[r]);
    store->z.push_back(store_->z[r]);
  }
  auto rows = std::make_shared<std::vector<std::uint32_t>>(size());
  for (std::size_t i = 0; i < size(); ++i) (*rows)[i] = static_cast<std::uint32_t>(i);
  return Dataset(std::move(store), std::move(rows), cutoffs_, design_);
}

CutoffPair make_pair(const Dataset& ds, double low, double high) {
  if (!(low < high))
    throw Error(ErrorKind::InvalidArgument, "cutoff pair requires low < high");
  if (!ds.has_cutoff(low))
    throw Error(ErrorKind::UnknownCutoff, "low cutoff " + std::to_string(low) + " not in dataset");
  if (!ds.has_cutoff(high))
    throw Error(ErrorKind::UnknownCutoff, "high cutoff " + std::to_string(high) + " not in dataset");
  return CutoffPair{low, high};
}

Dataset read_csv(std::istream& in, const ColumnMap& columns, Design design) {
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorKind::MissingColumn, "empty input: header row required");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
    line.erase(0, 3);
  const auto header = split_csv_line(line);
  auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    return std::nullopt;
  };
  auto require = [&](const std::string& name) {
    auto k = find(name);
    if (!k) throw Error(ErrorKind::MissingColumn, "column '" + name + "' not found");
    return *k;
  };
  const auto iy = require(columns.y);
  const auto ix = require(columns.x);
  const auto ic = require(columns.c);
  std::optional<std::size_t> id;
  if (!columns.d.empty()) id = find(columns.d);
  if (design == Design::Fuzzy && !id)
    throw Error(ErrorKind::MissingColumn, "fuzzy design requires treatment column '" + columns.d + "'");

  std::vector<std::string> z_names = columns.z;
  if (z_names.empty()) {
    for (std::size_t k = 1;; ++k) {
      auto name = "z" + std::to_string(k);
      if (!find(name)) break;
      z_names.push_back(name);
    }
  }
  std::vector<std::size_t> iz;
  for (const auto& name : z_names) iz.push_back(require(name));

  std::vector<Observation> obs;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw Error(ErrorKind::ParseError,
                  "expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(f.size()),
                  row);
    Observation o;
    o.y = parse_real(f[iy], columns.y.c_str(), row);
    o.x = parse_real(f[ix], columns.x.c_str(), row);
    o.c = parse_real(f[ic], columns.c.c_str(), row);
    if (id) {
      double dv = parse_real(f[*id], columns.d.c_str(), row);
      if (dv != 0.0 && dv != 1.0) throw Error(ErrorKind::ParseError, "treatment must be 0 or 1", row);
      o.d = static_cast<int>(dv);
    } else {
      o.d = o.x >= o.c ? 1 : 0;
    }
    for (auto k : iz) {
      if (f[k].empty()) throw Error(ErrorKind::ParseError, "missing covariate '" + header[k] + "'", row);
      o.z.push_back(f[k]);
    }
    validate_observation(o, design, row);
    obs.push_back(std::move(o));
  }
  return Dataset::from_observations(std::move(obs), design, std::move(z_names));
}

Dataset load_dataset(const std::string& path, const ColumnMap& columns, Design design) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open '" + path + "'");
  return read_csv(in, columns, design);
}

void write_csv(std::ostream& out, const Dataset& ds) {
  out << "y,x,c,d";
  for (const auto& name : ds.covariate_names()) out << ',' << name;
  out << '\n';
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto o = ds.observation(i);
    put(o.y);
    out << ',';
    put(o.x);
    out << ',';
    put(o.c);
    out << ',' << o.d;
    for (const auto& z : o.z) {
      if (z.find_first_of(",\"") != std::string::npos) {
        std::string q = "\"";
        for (char ch : z) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        out << ',' << q << '"';
      } else {
        out << ',' << z;
      }
    }
    out << '\n';
  }
}

}  // namespace rdx
