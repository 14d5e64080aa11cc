#pragma once

#include "nlfp/core.hpp"

#include <fstream>
#include <iomanip>
#include <locale>
#include <map>
#include <sstream>
#include <variant>

namespace nlfp {

/// Density sampled at the nodes x_i = x0 + i h of a uniform 1-D grid; node i
/// carries the cell mass values[i] * h.
struct GridDensity {
  double x0 = 0.0;
  double h = 1.0;
  std::vector<double> values;
  /// Wraps around [x0, x0 + n h) when evaluated off-grid.
  bool periodic = false;

  std::size_t size() const { return values.size(); }
  double node(std::size_t i) const { return x0 + static_cast<double>(i) * h; }
  double mass() const {
    double m = 0.0;
    for (double v : values) m += v;
    return m * h;
  }

  /// Linear interpolation between nodes, 0 outside unless periodic.
  double evaluate(double x) const {
    const double n = static_cast<double>(values.size());
    double s = (x - x0) / h;
    if (periodic) {
      s = std::fmod(s, n);
      if (s < 0.0) s += n;
    } else if (s < 0.0 || s > n - 1.0) {
      return 0.0;
    }
    const std::size_t i = std::min(static_cast<std::size_t>(s), values.size() - 1);
    const double u = s - static_cast<double>(i);
    const std::size_t j = (i + 1 < values.size()) ? i + 1 : (periodic ? 0 : i);
    return (1.0 - u) * values[i] + u * values[j];
  }

  void validate(double tol = 1e-9) const {
    require(!values.empty() && h > 0.0, "grid density needs nodes and a positive spacing");
    for (double v : values) require(v >= 0.0 && std::isfinite(v), "grid density must be finite and non-negative");
    require(std::abs(mass() - 1.0) <= tol, "grid density mass is " + std::to_string(mass()) + ", expected 1");
  }
};

template <int D>
struct ParticleCloud {
  std::vector<Vec<D>> positions;
  std::vector<double> weights;

  std::size_t size() const { return positions.size(); }

  static ParticleCloud uniform(std::vector<Vec<D>> pos) {
    ParticleCloud c;
    c.weights.assign(pos.size(), pos.empty() ? 0.0 : 1.0 / static_cast<double>(pos.size()));
    c.positions = std::move(pos);
    return c;
  }

  void validate(double tol = 1e-9) const {
    require(!positions.empty() && positions.size() == weights.size(), "particle cloud needs matching positions and weights");
    double m = 0.0;
    for (double w : weights) {
      require(w >= 0.0, "particle weights must be non-negative");
      m += w;
    }
    for (const auto& p : positions) require(p.allFinite(), "particle positions must be finite");
    require(std::abs(m - 1.0) <= tol, "particle weights sum to " + std::to_string(m) + ", expected 1");
  }
};

template <int D>
using Snapshot = std::variant<GridDensity, ParticleCloud<D>>;

/// mu(g) for a snapshot.
template <int D, class G>
double integrate(const Snapshot<D>& s, G&& g) {
  double sum = 0.0;
  if (const auto* gd = std::get_if<GridDensity>(&s)) {
    if constexpr (D == 1) {
      for (std::size_t i = 0; i < gd->size(); ++i)
        if (gd->values[i] != 0.0) sum += gd->values[i] * g(Vec<1>(gd->node(i)));
      return sum * gd->h;
    } else {
      throw ValidationError("grid densities are one-dimensional");
    }
  }
  const auto& pc = std::get<ParticleCloud<D>>(s);
  for (std::size_t i = 0; i < pc.size(); ++i) sum += pc.weights[i] * g(pc.positions[i]);
  return sum;
}

/// Time grid of probability measures (mu_t). For t < times.front() the curve
/// is frozen at the first snapshot, for t > times.back() at the last.
template <int D>
struct MeasureCurve {
  std::vector<double> times;
  std::vector<Snapshot<D>> snapshots;

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
  double start() const { return times.front(); }
  double end() const { return times.back(); }

  void push_back(double t, Snapshot<D> s) {
    times.push_back(t);
    snapshots.push_back(std::move(s));
  }

  /// Index of a grid time within `tol`, or -1.
  int index_of(double t, double tol = 1e-12) const {
    for (std::size_t i = 0; i < times.size(); ++i)
      if (std::abs(times[i] - t) <= tol * std::max(1.0, std::abs(t))) return static_cast<int>(i);
    return -1;
  }

  void validate(double tol = 1e-9) const {
    if (times.empty()) throw EmptyCurve("measure curve has no snapshots");
    require(times.size() == snapshots.size(), "measure curve times and snapshots differ in length");
    for (std::size_t i = 1; i < times.size(); ++i) require(times[i] > times[i - 1], "measure curve times must increase strictly");
    for (const auto& s : snapshots) std::visit([&](const auto& v) { v.validate(tol); }, s);
  }
};

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {
inline std::string fmt(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

/// RFC 4180 field: quoted when it holds a comma, quote or line break.
inline std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\r\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_number(const std::string& s, std::size_t line) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw ValidationError("line " + std::to_string(line) + ": not a number: '" + s + "'");
  return v;
}
}  // namespace detail

/// Grid snapshots as `time,x,density`; particle snapshots as `time,x1..xD,weight`.
/// CRLF line ends (RFC 4180).
template <int D>
void write_curve_csv(std::ostream& os, const MeasureCurve<D>& c) {
  const bool grid = !c.empty() && std::holds_alternative<GridDensity>(c.snapshots.front());
  if (grid) {
    os << "time,x,density\r\n";
  } else {
    os << "time";
    for (int a = 0; a < D; ++a) os << ",x" << (a + 1);
    os << ",weight\r\n";
  }
  for (std::size_t n = 0; n < c.size(); ++n) {
    const std::string t = detail::fmt(c.times[n]);
    if (const auto* g = std::get_if<GridDensity>(&c.snapshots[n])) {
      for (std::size_t i = 0; i < g->size(); ++i) os << t << ',' << detail::fmt(g->node(i)) << ',' << detail::fmt(g->values[i]) << "\r\n";
    } else {
      const auto& p = std::get<ParticleCloud<D>>(c.snapshots[n]);
      for (std::size_t i = 0; i < p.size(); ++i) {
        os << t;
        for (int a = 0; a < D; ++a) os << ',' << detail::fmt(p.positions[i](a));
        os << ',' << detail::fmt(p.weights[i]) << "\r\n";
      }
    }
  }
}

template <int D>
MeasureCurve<D> read_curve_csv(std::istream& is) {
  std::string line;
  auto next = [&] {
    if (!std::getline(is, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next()) throw EmptyCurve("curve file is empty");
  const auto header = detail::split_csv_line(line);
  const bool grid = header.size() == 3 && header[1] == "x" && header[2] == "density";
  if (!grid) {
    require(static_cast<int>(header.size()) == D + 2 && header.front() == "time" && header.back() == "weight",
            "curve header must be 'time,x,density' or 'time,x1..xd,weight'");
  }
  std::map<double, std::vector<std::vector<double>>> rows;
  std::size_t lineno = 1;
  while (next()) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    require(cells.size() == header.size(), "line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " fields");
    std::vector<double> v;
    for (const auto& s : cells) v.push_back(detail::parse_number(s, lineno));
    rows[v[0]].push_back(std::move(v));
  }
  MeasureCurve<D> c;
  for (auto& [t, rs] : rows) {
    if (grid) {
      if constexpr (D != 1) throw ValidationError("grid density curves are one-dimensional");
      std::sort(rs.begin(), rs.end(), [](const auto& a, const auto& b) { return a[1] < b[1]; });
      require(rs.size() >= 2, "grid snapshot needs at least two nodes");
      GridDensity g;
      g.x0 = rs.front()[1];
      g.h = (rs.back()[1] - rs.front()[1]) / static_cast<double>(rs.size() - 1);
      for (std::size_t i = 0; i < rs.size(); ++i) {
        require(std::abs(rs[i][1] - g.node(i)) <= 1e-9 * std::max(1.0, std::abs(g.node(i))), "grid snapshot nodes must be uniform");
        g.values.push_back(rs[i][2]);
      }
      c.push_back(t, g);
    } else {
      ParticleCloud<D> p;
      for (const auto& r : rs) {
        Vec<D> x;
        for (int a = 0; a < D; ++a) x(a) = r[1 + a];
        p.positions.push_back(x);
        p.weights.push_back(r[D + 1]);
      }
      c.push_back(t, p);
    }
  }
  if (c.empty()) throw EmptyCurve("curve file has no rows");
  return c;
}

template <int D>
MeasureCurve<D> load_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open curve file '" + path + "'");
  return read_curve_csv<D>(in);
}

namespace detail {
/// Sub-steps of length <= dt that land exactly on every grid time.
inline std::vector<double> fill_grid(const std::vector<double>& grid, double dt, std::vector<char>* on_grid = nullptr) {
  require(!grid.empty(), "time grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i) require(grid[i] > grid[i - 1], "time grid must increase strictly");
  std::vector<double> out{grid.front()};
  if (on_grid) on_grid->assign(1, 1);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double gap = grid[i] - grid[i - 1];
    const int m = std::max(1, static_cast<int>(std::ceil(gap / dt - 1e-9)));
    for (int k = 1; k <= m; ++k) {
      out.push_back(k == m ? grid[i] : grid[i - 1] + gap * k / m);
      if (on_grid) on_grid->push_back(k == m ? 1 : 0);
    }
  }
  return out;
}
}  // namespace detail

}  // namespace nlfp
