#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "ridemix/error.hpp"
#include "ridemix/format.hpp"
#include "ridemix/grid.hpp"

namespace ridemix {

struct ReplayEntry {
  std::int64_t round;
  Location origin;
  Location dest;
  double weight;
  bool operator==(const ReplayEntry&) const = default;
};

/// Per-second request sequence; rounds are non-decreasing and several entries may
/// share a round (they are served one after another within it).
struct ReplayTrace {
  std::vector<ReplayEntry> entries;
  std::int64_t rounds = 0;  // length of the window in rounds

  void validate(const Grid& grid) const {
    std::int64_t prev = 0;
    for (const auto& e : entries) {
      if (e.round < prev) throw InvalidArgument("replay rounds must be non-decreasing");
      if (e.round >= rounds) throw InvalidArgument("replay entry beyond the window");
      if (e.origin < 0 || e.origin >= grid.size() || e.dest < 0 || e.dest >= grid.size())
        throw InvalidArgument("replay cell outside grid");
      prev = e.round;
    }
  }
};

// Columns round,origin,dest,weight. The window length is carried in a leading
// comment line `# rounds=N`; without it the window ends after the last entry.
inline void save_replay(const ReplayTrace& trace, std::ostream& out) {
  out << "# rounds=" << trace.rounds << '\n';
  out << "round,origin,dest,weight\n";
  for (const auto& e : trace.entries)
    out << e.round << ',' << e.origin << ',' << e.dest << ',' << fmt_real(e.weight) << '\n';
}

inline ReplayTrace load_replay(std::istream& in) {
  ReplayTrace trace;
  std::string line;
  bool header = false;
  std::int64_t declared = -1;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      auto pos = t.find("rounds=");
      if (pos != std::string::npos) declared = std::stoll(t.substr(pos + 7));
      continue;
    }
    if (!header) {
      if (split(t) != std::vector<std::string>{"round", "origin", "dest", "weight"})
        throw SchemaError("replay CSV header must be round,origin,dest,weight");
      header = true;
      continue;
    }
    auto f = split(t);
    if (f.size() != 4) throw SchemaError("replay line " + std::to_string(lineno) + ": expected 4 fields");
    try {
      trace.entries.push_back({std::stoll(f[0]), std::stoi(f[1]), std::stoi(f[2]), std::stod(f[3])});
    } catch (const std::logic_error&) {
      throw SchemaError("replay line " + std::to_string(lineno) + ": malformed number");
    }
  }
  if (!header) throw SchemaError("replay CSV is missing its header");
  trace.rounds = declared >= 0 ? declared : (trace.entries.empty() ? 0 : trace.entries.back().round + 1);
  return trace;
}

}  // namespace ridemix
