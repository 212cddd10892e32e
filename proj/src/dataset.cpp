#include "lfp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "lfp/smoothing.hpp"

namespace lfp {

Index LongitudinalSample::observed_count() const {
  return static_cast<Index>(mask.count());
}

Index Dataset::total_observed() const {
  Index n = 0;
  for (const auto& s : samples) n += s.observed_count();
  return n;
}

void Dataset::validate() const {
  if (samples.empty()) throw DataError("dataset has no samples");
  shape_size(tensor_shape);
  if (!(domain_lo < domain_hi) || !std::isfinite(domain_lo) || !std::isfinite(domain_hi))
    throw DataError("dataset domain must be a finite interval with positive length");
  const Index P = num_entries();
  bool any_two_times = false;
  for (const auto& s : samples) {
    if (s.values.rows() != s.num_times() || s.mask.rows() != s.num_times() ||
        s.values.cols() != P || s.mask.cols() != P)
      throw DataError("sample '" + s.id + "': value/mask dimensions inconsistent");
    if (s.times.empty()) throw DataError("sample '" + s.id + "' has no time points");
    for (size_t k = 0; k < s.times.size(); ++k) {
      if (k > 0 && !(s.times[k] > s.times[k - 1]))
        throw DataError("sample '" + s.id + "': times not strictly increasing");
      if (s.times[k] < domain_lo || s.times[k] > domain_hi)
        throw DataError("sample '" + s.id + "': time outside the declared domain");
    }
    if (s.num_times() >= 2) any_two_times = true;
  }
  if (!any_two_times)
    throw DataError("dataset needs at least one sample with two or more time points");
}

std::string entry_label(Index j, const std::vector<Index>& shape) {
  std::string label;
  Index rem = j;
  for (size_t d = 0; d < shape.size(); ++d) {
    if (d) label += '.';
    label += std::to_string(rem % shape[d] + 1);
    rem /= shape[d];
  }
  return label;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, int row, const std::string& col) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e)
    throw DataError("row " + std::to_string(row) + ", column '" + col +
                    "': cannot parse '" + s + "' as a number");
  return v;
}

// "2.3" -> 0-based multi-index {1, 2}; empty on malformed labels
bool parse_entry_label(const std::string& s, std::vector<Index>& idx) {
  idx.clear();
  size_t pos = 0;
  while (pos <= s.size()) {
    size_t dot = s.find('.', pos);
    std::string tok = s.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (tok.empty()) return false;
    Index v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || v < 1) return false;
    idx.push_back(v - 1);
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  return !idx.empty();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "': empty file");
  const std::vector<std::string> header = split_line(line);
  if (header.size() < 3 || header[0] != "sample_id" || header[1] != "time")
    throw DataError("'" + path + "': header must start with sample_id,time followed by entry columns");

  // entry columns: dot-joined multi-indices, all of one order, no duplicates
  std::vector<std::vector<Index>> col_idx(header.size() - 2);
  size_t order = 0;
  for (size_t c = 2; c < header.size(); ++c) {
    if (!parse_entry_label(header[c], col_idx[c - 2]))
      throw DataError("'" + path + "': malformed entry column '" + header[c] + "'");
    if (c == 2)
      order = col_idx[0].size();
    else if (col_idx[c - 2].size() != order)
      throw DataError("'" + path + "': entry column '" + header[c] + "' has inconsistent index order");
  }
  for (size_t a = 0; a < col_idx.size(); ++a)
    for (size_t b = a + 1; b < col_idx.size(); ++b)
      if (col_idx[a] == col_idx[b])
        throw DataError("'" + path + "': duplicate entry column '" + header[a + 2] + "'");

  // sidecar metadata wins over inference
  std::vector<Index> shape;
  bool have_domain = false;
  double lo = 0, hi = 1;
  {
    std::ifstream meta(path + ".json");
    if (meta) {
      nlohmann::json j;
      try {
        meta >> j;
      } catch (const std::exception& e) {
        throw DataError("'" + path + ".json': " + e.what());
      }
      if (j.contains("shape")) {
        shape = j["shape"].get<std::vector<Index>>();
        if (shape.size() != order)
          throw DataError("'" + path + ".json': shape order does not match the CSV header");
      }
      if (j.contains("domain")) {
        auto dom = j["domain"].get<std::vector<double>>();
        if (dom.size() != 2) throw DataError("'" + path + ".json': domain must be [lo, hi]");
        lo = dom[0];
        hi = dom[1];
        have_domain = true;
      }
    }
  }
  if (shape.empty()) {
    shape.assign(order, 1);
    for (const auto& idx : col_idx)
      for (size_t d = 0; d < order; ++d) shape[d] = std::max(shape[d], idx[d] + 1);
  }
  const Index P = shape_size(shape);
  std::vector<Index> col_to_entry(col_idx.size());
  for (size_t c = 0; c < col_idx.size(); ++c) {
    Index flat = 0, stride = 1;
    for (size_t d = 0; d < order; ++d) {
      if (col_idx[c][d] >= shape[d])
        throw DataError("'" + path + "': entry column '" + header[c + 2] +
                        "' exceeds the declared shape");
      flat += col_idx[c][d] * stride;
      stride *= shape[d];
    }
    col_to_entry[c] = flat;
  }

  // rows in file order, grouped by sample id in first-appearance order
  struct Row {
    double time;
    Vector values;
    std::vector<bool> mask;
  };
  std::vector<std::string> sample_order;
  std::map<std::string, std::vector<Row>> by_sample;
  int rowno = 1;
  while (std::getline(in, line)) {
    ++rowno;
    if (line.empty()) continue;
    std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size())
      throw DataError("'" + path + "': row " + std::to_string(rowno) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(header.size()));
    Row r;
    r.time = parse_double(cells[1], rowno, "time");
    r.values = Vector::Zero(P);
    r.mask.assign(static_cast<size_t>(P), false);
    for (size_t c = 2; c < cells.size(); ++c) {
      if (cells[c].empty()) continue;
      const Index j = col_to_entry[c - 2];
      r.values[j] = parse_double(cells[c], rowno, header[c]);
      r.mask[static_cast<size_t>(j)] = true;
    }
    auto it = by_sample.find(cells[0]);
    if (it == by_sample.end()) {
      sample_order.push_back(cells[0]);
      it = by_sample.emplace(cells[0], std::vector<Row>{}).first;
    }
    it->second.push_back(std::move(r));
  }

  Dataset d;
  d.tensor_shape = shape;
  for (const std::string& id : sample_order) {
    auto& rows = by_sample[id];
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.time < b.time; });
    for (size_t k = 1; k < rows.size(); ++k)
      if (rows[k].time == rows[k - 1].time)
        throw DataError("'" + path + "': duplicate time " + format_double(rows[k].time) +
                        " for sample '" + id + "'");
    LongitudinalSample s;
    s.id = id;
    s.values = Matrix::Zero(static_cast<Index>(rows.size()), P);
    s.mask = BoolGrid::Constant(static_cast<Index>(rows.size()), P, false);
    for (size_t k = 0; k < rows.size(); ++k) {
      s.times.push_back(rows[k].time);
      s.values.row(static_cast<Index>(k)) = rows[k].values.transpose();
      for (Index j = 0; j < P; ++j) s.mask(static_cast<Index>(k), j) = rows[k].mask[static_cast<size_t>(j)];
    }
    d.samples.push_back(std::move(s));
  }

  if (have_domain) {
    d.domain_lo = lo;
    d.domain_hi = hi;
  } else {
    double tmin = std::numeric_limits<double>::infinity();
    double tmax = -std::numeric_limits<double>::infinity();
    for (const auto& s : d.samples)
      for (double t : s.times) {
        tmin = std::min(tmin, t);
        tmax = std::max(tmax, t);
      }
    d.domain_lo = tmin;
    d.domain_hi = tmax;
  }
  d.validate();
  return d;
}

void save_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  const Index P = d.num_entries();
  out << "sample_id,time";
  for (Index j = 0; j < P; ++j) out << ',' << entry_label(j, d.tensor_shape);
  out << '\n';
  for (const auto& s : d.samples) {
    for (Index k = 0; k < s.num_times(); ++k) {
      out << s.id << ',' << format_double(s.times[static_cast<size_t>(k)]);
      for (Index j = 0; j < P; ++j) {
        out << ',';
        if (s.mask(k, j)) out << format_double(s.values(k, j));
      }
      out << '\n';
    }
  }
  nlohmann::json meta;
  meta["domain"] = {d.domain_lo, d.domain_hi};
  meta["shape"] = d.tensor_shape;
  std::ofstream mout(path + ".json");
  if (!mout) throw DataError("cannot write '" + path + ".json'");
  mout << meta.dump(2) << '\n';
}

Dataset sparsify(const Dataset& d, double proportion, std::uint64_t seed) {
  if (proportion < 0.0 || proportion >= 1.0)
    throw ConfigError("sparsify: proportion must lie in [0, 1)");
  if (proportion == 0.0) return d;

  const Index quota = static_cast<Index>(std::floor(proportion * static_cast<double>(d.total_observed())));
  Dataset out = d;
  if (quota == 0) return out;

  struct Obs {
    Index sample, time, entry;
  };
  std::vector<Obs> obs;
  obs.reserve(static_cast<size_t>(d.total_observed()));
  for (Index i = 0; i < out.num_samples(); ++i) {
    const auto& s = out.samples[static_cast<size_t>(i)];
    for (Index k = 0; k < s.num_times(); ++k)
      for (Index j = 0; j < s.values.cols(); ++j)
        if (s.mask(k, j)) obs.push_back({i, k, j});
  }

  std::mt19937_64 rng(seed);
  std::shuffle(obs.begin(), obs.end(), rng);

  // per-sample bookkeeping: time rows that still hold at least one observation
  std::vector<std::vector<Index>> row_counts(out.samples.size());
  std::vector<Index> occupied_rows(out.samples.size(), 0);
  for (size_t i = 0; i < out.samples.size(); ++i) {
    const auto& s = out.samples[i];
    row_counts[i].assign(static_cast<size_t>(s.num_times()), 0);
    for (Index k = 0; k < s.num_times(); ++k) {
      row_counts[i][static_cast<size_t>(k)] = s.mask.row(k).count();
      if (row_counts[i][static_cast<size_t>(k)] > 0) ++occupied_rows[i];
    }
  }

  // walk the shuffled list, skipping removals that would leave a sample with
  // fewer than two occupied time points
  Index removed = 0;
  for (const Obs& o : obs) {
    if (removed == quota) break;
    auto& cnt = row_counts[static_cast<size_t>(o.sample)][static_cast<size_t>(o.time)];
    if (cnt == 1 && occupied_rows[static_cast<size_t>(o.sample)] <= 2) continue;
    out.samples[static_cast<size_t>(o.sample)].mask(o.time, o.entry) = false;
    out.samples[static_cast<size_t>(o.sample)].values(o.time, o.entry) = 0.0;
    if (--cnt == 0) --occupied_rows[static_cast<size_t>(o.sample)];
    ++removed;
  }
  if (removed < quota)
    throw InsufficientDataError("sparsify: cannot remove " + std::to_string(quota) +
                                " observations while keeping two occupied time points per sample");
  return out;
}

Dataset center(const Dataset& d, const MeanField& mean) {
  Dataset out = d;
  for (auto& s : out.samples) {
    for (Index k = 0; k < s.num_times(); ++k) {
      const double t = s.times[static_cast<size_t>(k)];
      for (Index j = 0; j < s.values.cols(); ++j)
        if (s.mask(k, j)) s.values(k, j) -= mean.value_at(t, j);
    }
  }
  return out;
}

}  // namespace lfp
