#include "apcde/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace apcde {

Tensor Dataset::row_y(int i) const {
  Tensor out = Tensor::zeros({static_cast<std::size_t>(p())});
  for (int j = 0; j < p(); ++j) out[j] = y.at(i, j);
  return out;
}

std::vector<double> Dataset::row_x(int i) const {
  std::vector<double> out(x_dim());
  for (int j = 0; j < x_dim(); ++j) out[j] = x.at(i, j);
  return out;
}

std::vector<ColumnSpec> schema_from_heads(const std::vector<HeadSpec>& heads) {
  std::vector<ColumnSpec> schema;
  for (const HeadSpec& h : heads) {
    ColumnSpec c;
    c.kind = h.kind;
    if (h.kind == HeadKind::categorical)
      c.K = h.K;
    else
      c.m = h.m;
    schema.push_back(c);
  }
  return schema;
}

namespace {
int x_width(const std::vector<ColumnSpec>& schema) {
  int w = 0;
  for (const ColumnSpec& c : schema) w += c.kind == HeadKind::categorical ? 1 : c.m;
  return w;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_cell(const std::string& cell, int line_no, int col_no) {
  std::string trimmed = cell;
  while (!trimmed.empty() && (trimmed.front() == ' ' || trimmed.front() == '\t'))
    trimmed.erase(trimmed.begin());
  while (!trimmed.empty() && (trimmed.back() == ' ' || trimmed.back() == '\t'))
    trimmed.pop_back();
  if (trimmed.empty())
    throw DataError("csv: missing value at line " + std::to_string(line_no) + ", column " +
                    std::to_string(col_no));
  double value = 0.0;
  const char* begin = trimmed.data();
  const char* end = begin + trimmed.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw DataError("csv: malformed number '" + trimmed + "' at line " +
                    std::to_string(line_no) + ", column " + std::to_string(col_no));
  return value;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

Dataset load_dataset(const std::string& path, const std::vector<ColumnSpec>& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("load_dataset: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("load_dataset: empty file " + path);
  std::vector<std::string> header = split_csv_line(line);

  const int xw = x_width(schema);
  const int total = static_cast<int>(header.size());
  const int p = total - xw;
  if (p < 1)
    throw SchemaError("load_dataset: header has " + std::to_string(total) +
                      " columns, fewer than the schema requires");
  for (int j = 0; j < p; ++j) {
    std::string want = "y" + std::to_string(j);
    if (header[j] != want)
      throw SchemaError("load_dataset: expected column '" + want + "', found '" + header[j] +
                        "'");
  }

  std::vector<double> yvals, xvals;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != total)
      throw DataError("csv: line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " cells, expected " + std::to_string(total));
    for (int j = 0; j < total; ++j) {
      double v = parse_cell(cells[j], line_no, j + 1);
      (j < p ? yvals : xvals).push_back(v);
    }
  }
  const int n = static_cast<int>(yvals.size()) / std::max(p, 1);
  if (n < 1) throw DataError("load_dataset: no data rows in " + path);

  Dataset ds;
  ds.schema = schema;
  ds.prov.source = path;
  ds.y = Tensor({static_cast<std::size_t>(n), static_cast<std::size_t>(p)}, std::move(yvals));
  ds.x = Tensor({static_cast<std::size_t>(n), static_cast<std::size_t>(xw)}, std::move(xvals));
  if (!ds.y.all_finite()) throw DataError("load_dataset: non-finite response value");

  // Detect 0-based labels (any zero present) and shift to the internal 1..K.
  int off = 0;
  for (const ColumnSpec& c : schema) {
    if (c.kind == HeadKind::categorical) {
      bool any_zero = false;
      for (int i = 0; i < n; ++i) {
        double v = ds.x.at(i, off);
        if (v != std::floor(v))
          throw DataError("load_dataset: non-integer label in column " + std::to_string(p + off));
        if (v == 0.0) any_zero = true;
      }
      if (any_zero) {
        ds.prov.label_base = 0;
        for (int i = 0; i < n; ++i) ds.x.at(i, off) += 1.0;
      }
      for (int i = 0; i < n; ++i) {
        int label = static_cast<int>(ds.x.at(i, off));
        if (label < 1 || label > c.K)
          throw DataError("load_dataset: label " + std::to_string(label) +
                          " outside the declared " + std::to_string(c.K) + " levels");
      }
      off += 1;
    } else {
      off += c.m;
    }
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_dataset: cannot open " + path);
  for (int j = 0; j < ds.p(); ++j) out << (j ? "," : "") << "y" << j;
  for (int j = 0; j < ds.x_dim(); ++j) out << ",x" << j;
  out << "\n";
  const int shift = ds.prov.label_base == 0 ? -1 : 0;
  for (int i = 0; i < ds.n(); ++i) {
    for (int j = 0; j < ds.p(); ++j) out << (j ? "," : "") << format_double(ds.y.at(i, j));
    int off = 0;
    for (const ColumnSpec& c : ds.schema) {
      if (c.kind == HeadKind::categorical) {
        out << "," << format_double(ds.x.at(i, off) + shift);
        off += 1;
      } else {
        for (int k = 0; k < c.m; ++k) out << "," << format_double(ds.x.at(i, off + k));
        off += c.m;
      }
    }
    out << "\n";
  }
  if (!out) throw DataError("save_dataset: write failed for " + path);
}

Tensor map_to_byte_range(const Tensor& values, double source_max) {
  if (!(source_max > 0)) throw ArgumentError("map_to_byte_range: source_max must be positive");
  Tensor out = values;
  for (double& v : out.data()) v = std::round(v * 255.0 / source_max);
  return out;
}

double dequantize_value(double v, int bit_depth, Rng& rng) {
  if (bit_depth < 1 || bit_depth > 8)
    throw ArgumentError("dequantize: bit depth must be in 1..8");
  if (v != std::floor(v) || v < 0.0 || v > 255.0)
    throw DataError("dequantize: value " + std::to_string(v) + " outside integer 0..255");
  if (bit_depth < 8) {
    double cell = static_cast<double>(1 << (8 - bit_depth));
    v = std::floor(v / cell) * cell;
  }
  return (v + rng.uniform01()) / 256.0;
}

Tensor dequantize(const Tensor& values, int bit_depth, Rng& rng) {
  Tensor out = values;
  for (double& v : out.data()) v = dequantize_value(v, bit_depth, rng);
  return out;
}

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

namespace {
std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_num(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("mixture spec: bad number '" + s + "' in " + what);
  }
}
}  // namespace

MixtureSpec parse_mixture_spec(const std::string& text) {
  // Example: "K=2;mu=0,2|0,-2;sigma=0.6;probs=0.5,0.5;xb=0.5,0.1"
  MixtureSpec spec;
  spec.K = 0;
  for (const std::string& field : split(text, ';')) {
    if (field.empty()) continue;
    auto kv = split(field, '=');
    if (kv.size() != 2) throw ConfigError("mixture spec: expected key=value in '" + field + "'");
    const std::string& key = kv[0];
    const std::string& value = kv[1];
    if (key == "K") {
      spec.K = static_cast<int>(parse_num(value, key));
    } else if (key == "mu") {
      for (const std::string& block : split(value, '|')) {
        std::vector<double> dims;
        for (const std::string& c : split(block, ',')) dims.push_back(parse_num(c, key));
        spec.means.push_back(Tensor::vec(dims));
      }
    } else if (key == "sigma") {
      spec.sigma = parse_num(value, key);
    } else if (key == "probs") {
      spec.probs.clear();
      for (const std::string& c : split(value, ',')) spec.probs.push_back(parse_num(c, key));
    } else if (key == "xb") {
      auto parts = split(value, ',');
      if (parts.size() != 2) throw ConfigError("mixture spec: xb needs slope,tau");
      spec.with_xb = true;
      spec.xb_slope = parse_num(parts[0], key);
      spec.xb_tau = parse_num(parts[1], key);
    } else {
      throw ConfigError("mixture spec: unknown key '" + key + "'");
    }
  }
  if (spec.K == 0) spec.K = static_cast<int>(spec.means.size());
  if (spec.probs.empty())
    spec.probs.assign(spec.K, 1.0 / static_cast<double>(spec.K));
  return spec;
}

Dataset synth_conditional_mixture(const MixtureSpec& spec, int n, std::uint64_t seed) {
  if (n < 1) throw ArgumentError("synth_conditional_mixture: n must be >= 1");
  if (spec.K < 1 || static_cast<int>(spec.means.size()) != spec.K)
    throw ConfigError("mixture spec: K means required");
  if (static_cast<int>(spec.probs.size()) != spec.K)
    throw ConfigError("mixture spec: K class probabilities required");
  double psum = 0.0;
  for (double q : spec.probs) psum += q;
  if (std::abs(psum - 1.0) > 1e-9)
    throw ConfigError("mixture spec: class probabilities must sum to 1");
  if (!(spec.sigma > 0)) throw ConfigError("mixture spec: sigma must be positive");
  if (spec.with_xb && !(spec.xb_tau > 0))
    throw ConfigError("mixture spec: tau must be positive");
  const std::size_t p = spec.means[0].size();
  for (const Tensor& mu : spec.means)
    if (mu.size() != p) throw ConfigError("mixture spec: mean dimension mismatch");

  Rng rng(seed, Stream::synth);
  Dataset ds;
  ds.schema.push_back({HeadKind::categorical, spec.K, 0});
  if (spec.with_xb) ds.schema.push_back({HeadKind::linear_gaussian, 0, 1});
  const int xw = spec.with_xb ? 2 : 1;
  ds.y = Tensor::zeros({static_cast<std::size_t>(n), p});
  ds.x = Tensor::zeros({static_cast<std::size_t>(n), static_cast<std::size_t>(xw)});

  for (int i = 0; i < n; ++i) {
    double u = rng.uniform01();
    int k = 0;
    double cum = spec.probs[0];
    while (k + 1 < spec.K && u > cum) cum += spec.probs[++k];
    for (std::size_t j = 0; j < p; ++j)
      ds.y.at(i, j) = spec.means[k][j] + spec.sigma * rng.normal();
    ds.x.at(i, 0) = k + 1;  // internal 1..K
    if (spec.with_xb)
      ds.x.at(i, 1) = spec.xb_slope * ds.y.at(i, 0) + spec.xb_tau * rng.normal();
  }

  ds.prov.source = "synth";
  ds.prov.seed = seed;
  ds.prov.label_base = 1;
  std::ostringstream os;
  os << "K=" << spec.K << ";sigma=" << spec.sigma << ";n=" << n;
  ds.prov.spec_text = os.str();
  if (spec.K == 2 && std::abs(spec.probs[0] - 0.5) < 1e-12) {
    double sep = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      double diff = spec.means[0][j] - spec.means[1][j];
      sep += diff * diff;
    }
    ds.prov.bayes_error = normal_cdf(-std::sqrt(sep) / (2.0 * spec.sigma));
  }
  return ds;
}

}  // namespace apcde
