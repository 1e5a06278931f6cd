/// @file io.hpp
/// @brief Text formats: Nil^3 trajectory CSV (t,A,B,C,Phi), RRFS series CSV
/// (t,energy,volume,s) and RRFS field snapshots.
///
/// Every number is written with 17 significant digits, which round-trips
/// IEEE doubles exactly.
///
/// Snapshot layout:
///   line 1:  n N size_0 [size_1] spacing_0 [spacing_1]
///   then one line per node (node index i0 + size_0 * i1), holding the
///   row-major entries of g (n*n), A (n*N, row a = A_a), G (N*N).
#pragma once

#include "geoflow/ode.hpp"
#include "geoflow/periodic_grid.hpp"
#include "geoflow/rrfs.hpp"

#include <climits>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace geoflow::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size()) throw FormatError("not a number: '" + tok + "'");
  return v;
}

inline int parse_int(const std::string& tok) {
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (tok.empty() || end != tok.c_str() + tok.size() || v < INT_MIN || v > INT_MAX) {
    throw FormatError("not an integer: '" + tok + "'");
  }
  return static_cast<int>(v);
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

// ---------------------------------------------------------------------------
// Nil^3 trajectories

inline void write_nil3_csv(std::ostream& os, const ode::Trajectory& traj) {
  os << "t,A,B,C,Phi\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto& s = traj.states[k];
    os << fmt17(traj.times[k]) << ',' << fmt17(s(0)) << ',' << fmt17(s(1)) << ',' << fmt17(s(2)) << ','
       << fmt17(s(1) * s(2)) << '\n';
  }
}

inline ode::Trajectory read_nil3_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "t,A,B,C,Phi") throw FormatError("nil3 csv: bad header");
  ode::Trajectory traj;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cols = split(line, ',');
    if (cols.size() != 5) throw FormatError("nil3 csv: row " + std::to_string(row) + " needs 5 columns");
    const double t = parse_double(cols[0]);
    if (!traj.empty() && !(t > traj.times.back())) throw FormatError("nil3 csv: times must increase");
    ode::Vector s(3);
    for (int c = 0; c < 3; ++c) s(c) = parse_double(cols[c + 1]);
    traj.times.push_back(t);
    traj.states.push_back(s);
  }
  return traj;
}

// ---------------------------------------------------------------------------
// RRFS series

struct SeriesRow {
  double t = 0.0, energy = 0.0, volume = 0.0, s = 0.0;
};

inline void write_series_csv(std::ostream& os, const std::vector<SeriesRow>& rows) {
  os << "t,energy,volume,s\n";
  for (const auto& r : rows) os << fmt17(r.t) << ',' << fmt17(r.energy) << ',' << fmt17(r.volume) << ',' << fmt17(r.s) << '\n';
}

// ---------------------------------------------------------------------------
// Snapshots

inline void write_snapshot(std::ostream& os, const rrfs::RRFSState& s, const grid::PeriodicGrid& grid) {
  os << s.n << ' ' << s.N;
  for (int a = 0; a < grid.n_base(); ++a) os << ' ' << grid.size(a);
  for (int a = 0; a < grid.n_base(); ++a) os << ' ' << fmt17(grid.spacing(a));
  os << '\n';
  for (int k = 0; k < s.nodes(); ++k) {
    bool first = true;
    auto put = [&](double v) {
      if (!first) os << ' ';
      os << fmt17(v);
      first = false;
    };
    for (int i = 0; i < s.n; ++i)
      for (int j = 0; j < s.n; ++j) put(s.g[k](i, j));
    for (int i = 0; i < s.n; ++i)
      for (int j = 0; j < s.N; ++j) put(s.A[k](i, j));
    for (int i = 0; i < s.N; ++i)
      for (int j = 0; j < s.N; ++j) put(s.G[k](i, j));
    os << '\n';
  }
}

struct Snapshot {
  grid::PeriodicGrid grid;
  rrfs::RRFSState state;
};

inline Snapshot read_snapshot(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("snapshot: missing header");
  std::istringstream hs(line);
  std::vector<std::string> head;
  for (std::string tok; hs >> tok;) head.push_back(tok);
  if (head.size() < 4) throw FormatError("snapshot: short header");
  const int n = parse_int(head[0]);
  const int N = parse_int(head[1]);
  if ((n != 1 && n != 2) || N < 1) throw FormatError("snapshot: bad dimensions");
  if (head.size() != static_cast<std::size_t>(2 + 2 * n)) throw FormatError("snapshot: header length mismatch");
  std::array<int, 2> sizes{1, 1};
  std::array<double, 2> period{1.0, 1.0};
  for (int a = 0; a < n; ++a) {
    sizes[a] = parse_int(head[2 + a]);
    period[a] = parse_double(head[2 + n + a]) * sizes[a];
  }
  if (sizes[0] < 8 || sizes[1] < (n == 2 ? 8 : 1) || !(period[0] > 0.0) || !(period[1] > 0.0)) {
    throw FormatError("snapshot: bad grid");
  }
  grid::PeriodicGrid grid(n, sizes, period);
  rrfs::RRFSState s;
  s.n = n;
  s.N = N;
  const int per_node = n * n + n * N + N * N;
  for (int k = 0; k < grid.nodes(); ++k) {
    if (!std::getline(is, line)) throw FormatError("snapshot: missing node line " + std::to_string(k));
    std::istringstream ls(line);
    std::vector<double> vals;
    for (std::string tok; ls >> tok;) vals.push_back(parse_double(tok));
    if (static_cast<int>(vals.size()) != per_node) throw FormatError("snapshot: wrong entry count at node " + std::to_string(k));
    std::size_t p = 0;
    grid::Matrix g(n, n), A(n, N), G(N, N);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) g(i, j) = vals[p++];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < N; ++j) A(i, j) = vals[p++];
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) G(i, j) = vals[p++];
    s.g.push_back(g);
    s.A.push_back(A);
    s.G.push_back(G);
  }
  return {grid, s};
}

}  // namespace geoflow::io
