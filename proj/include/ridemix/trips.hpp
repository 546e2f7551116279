#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ridemix/error.hpp"
#include "ridemix/format.hpp"
#include "ridemix/grid.hpp"
#include "ridemix/policy.hpp"
#include "ridemix/replay.hpp"
#include "ridemix/rng.hpp"

namespace ridemix {

using Seconds = std::int64_t;  // since 1970-01-01 00:00:00, no time zone
using Day = std::int64_t;      // days since 1970-01-01

inline constexpr Seconds kSecondsPerDay = 86400;

inline Day day_of(Seconds s) { return s >= 0 ? s / kSecondsPerDay : (s - kSecondsPerDay + 1) / kSecondsPerDay; }
inline Seconds second_of_day(Seconds s) { return s - day_of(s) * kSecondsPerDay; }

namespace detail {
inline bool parse_int(std::string_view s, int& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}
}  // namespace detail

/// "YYYY-MM-DD".
inline std::optional<Day> parse_date(std::string_view s) {
  int y, mo, d;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-' || !detail::parse_int(s.substr(0, 4), y) ||
      !detail::parse_int(s.substr(5, 2), mo) || !detail::parse_int(s.substr(8, 2), d))
    return std::nullopt;
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd}.time_since_epoch().count();
}

/// "YYYY-MM-DD HH:MM:SS".
inline std::optional<Seconds> parse_timestamp(std::string_view s) {
  if (s.size() != 19 || s[10] != ' ' || s[13] != ':' || s[16] != ':') return std::nullopt;
  auto day = parse_date(s.substr(0, 10));
  int h, mi, se;
  if (!day || !detail::parse_int(s.substr(11, 2), h) || !detail::parse_int(s.substr(14, 2), mi) ||
      !detail::parse_int(s.substr(17, 2), se) || h > 23 || mi > 59 || se > 59 || h < 0 || mi < 0 || se < 0)
    return std::nullopt;
  return *day * kSecondsPerDay + h * 3600 + mi * 60 + se;
}

inline std::string format_date(Day d) {
  using namespace std::chrono;
  year_month_day ymd{sys_days{days{d}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

inline std::string format_timestamp(Seconds s) {
  const Seconds sod = second_of_day(s);
  char buf[16];
  std::snprintf(buf, sizeof buf, " %02d:%02d:%02d", static_cast<int>(sod / 3600), static_cast<int>(sod / 60 % 60),
                static_cast<int>(sod % 60));
  return format_date(day_of(s)) + buf;
}

struct TripRecord {
  std::string car_id;
  Seconds pickup_time = 0;
  Seconds dropoff_time = 0;
  double pickup_lat = 0, pickup_lon = 0, dropoff_lat = 0, dropoff_lon = 0;
  bool operator==(const TripRecord&) const = default;
};

struct ColumnMapping {
  std::string car_id = "medallion";
  std::string pickup_time = "pickup_datetime";
  std::string dropoff_time = "dropoff_datetime";
  std::string pickup_lat = "pickup_latitude";
  std::string pickup_lon = "pickup_longitude";
  std::string dropoff_lat = "dropoff_latitude";
  std::string dropoff_lon = "dropoff_longitude";
};

struct ParsedTrips {
  std::vector<TripRecord> records;
  std::size_t skipped = 0;
};

/// Reads a headed CSV, keeping rows whose seven mapped fields parse and whose
/// pickup precedes the dropoff; everything else is skipped and counted.
inline ParsedTrips parse_trips(std::istream& in, const ColumnMapping& cols = {}) {
  ParsedTrips out;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("trip file has no header");
  auto header = split(line);
  for (auto& h : header) h = trim(h);
  auto find = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("trip file lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t id = find(cols.car_id), pt = find(cols.pickup_time), dt = find(cols.dropoff_time),
                    plat = find(cols.pickup_lat), plon = find(cols.pickup_lon), dlat = find(cols.dropoff_lat),
                    dlon = find(cols.dropoff_lon);
  const std::size_t need = std::max({id, pt, dt, plat, plon, dlat, dlon});
  auto number = [](const std::string& s, double& v) {
    auto t = trim(s);
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    return ec == std::errc() && p == t.data() + t.size() && std::isfinite(v);
  };
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto f = split(line);
    TripRecord r;
    std::optional<Seconds> p, d;
    bool ok = f.size() > need;
    if (ok) {
      r.car_id = trim(f[id]);
      p = parse_timestamp(trim(f[pt]));
      d = parse_timestamp(trim(f[dt]));
      ok = !r.car_id.empty() && p && d && *p <= *d && number(f[plat], r.pickup_lat) && number(f[plon], r.pickup_lon) &&
           number(f[dlat], r.dropoff_lat) && number(f[dlon], r.dropoff_lon);
    }
    if (!ok) {
      ++out.skipped;
      continue;
    }
    r.pickup_time = *p;
    r.dropoff_time = *d;
    out.records.push_back(std::move(r));
  }
  return out;
}

/// Half-open latitude/longitude box [lat_min, lat_max) x [lon_min, lon_max).
struct BoundingBox {
  double lat_min = 40.7014;
  double lat_max = 40.8024;
  double lon_min = -74.0041;
  double lon_max = -73.9552;

  bool contains(double lat, double lon) const {
    return lat >= lat_min && lat < lat_max && lon >= lon_min && lon < lon_max;
  }
};

inline std::vector<TripRecord> filter_bbox(const std::vector<TripRecord>& records, const BoundingBox& box = {}) {
  std::vector<TripRecord> out;
  for (const auto& r : records)
    if (box.contains(r.pickup_lat, r.pickup_lon) && box.contains(r.dropoff_lat, r.dropoff_lon)) out.push_back(r);
  return out;
}

/// Equal-width bin: rows split latitude, columns split longitude; the top edge clamps.
inline Location bin_point(double lat, double lon, const Grid& grid, const BoundingBox& box) {
  if (!box.contains(lat, lon)) throw InvalidArgument("point outside the bounding box");
  auto bin = [](double v, double lo, double hi, int count) {
    auto k = static_cast<int>(std::floor((v - lo) / (hi - lo) * count));
    return std::clamp(k, 0, count - 1);
  };
  return grid.index(bin(lat, box.lat_min, box.lat_max, grid.rows()), bin(lon, box.lon_min, box.lon_max, grid.cols()));
}

inline Request bin_to_grid(const TripRecord& r, const Grid& grid, const BoundingBox& box = {}) {
  return {bin_point(r.pickup_lat, r.pickup_lon, grid, box), bin_point(r.dropoff_lat, r.dropoff_lon, grid, box)};
}

enum class Segment { Morning, Afternoon, Evening };

inline constexpr Seconds kSegmentLength = 4 * 3600;

inline Seconds segment_start(Segment s) {
  switch (s) {
    case Segment::Morning: return 7 * 3600;
    case Segment::Afternoon: return 11 * 3600;
    case Segment::Evening: return 15 * 3600;
  }
  return 0;
}

inline std::optional<Segment> segment_of(Seconds t) {
  const Seconds sod = second_of_day(t);
  for (auto s : {Segment::Morning, Segment::Afternoon, Segment::Evening})
    if (sod >= segment_start(s) && sod < segment_start(s) + kSegmentLength) return s;
  return std::nullopt;
}

inline Segment parse_segment(const std::string& s) {
  if (s == "morning") return Segment::Morning;
  if (s == "afternoon") return Segment::Afternoon;
  if (s == "evening") return Segment::Evening;
  throw InvalidArgument("segment must be morning, afternoon or evening");
}

inline std::string segment_name(Segment s) {
  switch (s) {
    case Segment::Morning: return "morning";
    case Segment::Afternoon: return "afternoon";
    case Segment::Evening: return "evening";
  }
  return {};
}

struct SegmentedTrips {
  // segment -> date -> records in input order
  std::map<Segment, std::map<Day, std::vector<TripRecord>>> parts;
  std::size_t dropped = 0;

  std::vector<TripRecord> all(Segment s) const {
    std::vector<TripRecord> out;
    if (auto it = parts.find(s); it != parts.end())
      for (const auto& [day, recs] : it->second) out.insert(out.end(), recs.begin(), recs.end());
    return out;
  }
};

/// Assigns each record by pickup time to Morning [07,11), Afternoon [11,15) or
/// Evening [15,19), one part per date; other records are dropped and counted.
inline SegmentedTrips segment_by_time(const std::vector<TripRecord>& records) {
  SegmentedTrips out;
  for (const auto& r : records) {
    if (auto s = segment_of(r.pickup_time))
      out.parts[*s][day_of(r.pickup_time)].push_back(r);
    else
      ++out.dropped;
  }
  return out;
}

struct RateEstimate {
  RequestModel model;
  std::int64_t slots = 0;
  double raw_mass = 0.0;  // sum of empirical frequencies before rescaling
  double scale = 1.0;     // divisor applied, max(1, raw_mass)
};

/// p_r = count(r) / slots (per-second empirical frequency), w_r = Manhattan
/// distance. If same-second arrivals push the mass above one, every p_r is
/// divided by the total mass.
inline RateEstimate estimate_rates(const std::vector<Request>& requests, const Grid& grid, std::int64_t slots) {
  if (slots <= 0) throw InvalidArgument("rate estimation needs at least one slot");
  const int n = grid.size();
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n) * n, 0);
  for (const auto& r : requests) {
    (void)grid.row(r.origin);
    (void)grid.row(r.dest);
    ++counts[static_cast<std::size_t>(r.origin) * n + r.dest];
  }
  RateEstimate est{RequestModel(grid), slots, 0.0, 1.0};
  for (auto c : counts) est.raw_mass += static_cast<double>(c) / static_cast<double>(slots);
  est.scale = std::max(1.0, est.raw_mass);
  for (Location u = 0; u < n; ++u)
    for (Location v = 0; v < n; ++v) {
      double p = static_cast<double>(counts[static_cast<std::size_t>(u) * n + v]) / static_cast<double>(slots);
      est.model.set(u, v, std::min(1.0, p / est.scale), grid.manhattan_distance(u, v));
    }
  return est;
}

/// Keeps the trips of k car ids drawn uniformly without replacement (seeded).
inline std::vector<TripRecord> subsample_cars(const std::vector<TripRecord>& records, std::size_t k,
                                              std::uint64_t seed) {
  std::set<std::string> distinct;
  for (const auto& r : records) distinct.insert(r.car_id);
  if (k > distinct.size())
    throw InvalidArgument("cannot sample " + std::to_string(k) + " cars from " + std::to_string(distinct.size()));
  std::vector<std::string> ids(distinct.begin(), distinct.end());
  CounterRng rng(seed, 0);
  for (std::size_t i = 0; i < k; ++i) {
    auto j = i + static_cast<std::size_t>(rng.below(ids.size() - i));
    std::swap(ids[i], ids[j]);
  }
  std::set<std::string> keep(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<TripRecord> out;
  for (const auto& r : records)
    if (keep.count(r.car_id)) out.push_back(r);
  return out;
}

/// One round per second of the segment window on each listed date (dates are
/// concatenated in order). Each trip is a request at its pickup second; same-second
/// trips keep pickup-then-input order. Trips outside the windows are ignored.
inline ReplayTrace build_replay(const std::vector<TripRecord>& records, Segment segment, const std::vector<Day>& dates,
                                const Grid& grid, const BoundingBox& box = {}) {
  ReplayTrace trace;
  trace.rounds = static_cast<std::int64_t>(dates.size()) * kSegmentLength;
  std::map<Day, std::int64_t> offset;
  for (std::size_t i = 0; i < dates.size(); ++i) offset[dates[i]] = static_cast<std::int64_t>(i) * kSegmentLength;
  std::vector<const TripRecord*> chosen;
  for (const auto& r : records) {
    auto it = offset.find(day_of(r.pickup_time));
    if (it == offset.end() || segment_of(r.pickup_time) != segment) continue;
    chosen.push_back(&r);
  }
  std::stable_sort(chosen.begin(), chosen.end(), [&](const TripRecord* a, const TripRecord* b) {
    auto ra = offset[day_of(a->pickup_time)] + second_of_day(a->pickup_time);
    auto rb = offset[day_of(b->pickup_time)] + second_of_day(b->pickup_time);
    return ra < rb;
  });
  for (const TripRecord* r : chosen) {
    auto req = bin_to_grid(*r, grid, box);
    trace.entries.push_back({offset[day_of(r->pickup_time)] + second_of_day(r->pickup_time) - segment_start(segment),
                             req.origin, req.dest, static_cast<double>(grid.manhattan_distance(req.origin, req.dest))});
  }
  return trace;
}

// "YYYY-MM-DD", "YYYY-MM-DD:YYYY-MM-DD" (inclusive) or comma-separated dates.
inline std::vector<Day> parse_dates(const std::string& spec) {
  std::vector<Day> out;
  for (const auto& part : split(spec)) {
    auto colon = part.find(':');
    auto first = parse_date(trim(part.substr(0, colon)));
    auto last = colon == std::string::npos ? first : parse_date(trim(part.substr(colon + 1)));
    if (!first || !last || *last < *first) throw InvalidArgument("malformed date range '" + part + "'");
    for (Day d = *first; d <= *last; ++d) out.push_back(d);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Synthetic trips in the public yellow-cab CSV layout: roughly 85% of trips fall
/// inside the default box, times spread over 2013-01-01..03 from 06:00 to 20:00.
inline std::string generate_fixture(std::size_t trips, std::uint64_t seed, const BoundingBox& box = {}) {
  std::string out =
      "medallion,hack_license,vendor_id,rate_code,store_and_fwd_flag,pickup_datetime,dropoff_datetime,"
      "passenger_count,trip_time_in_secs,trip_distance,pickup_longitude,pickup_latitude,dropoff_longitude,"
      "dropoff_latitude\n";
  const std::size_t cars = std::max<std::size_t>(10, trips / 5);
  const Seconds base = *parse_timestamp("2013-01-01 06:00:00");
  for (std::size_t i = 0; i < trips; ++i) {
    CounterRng rng(seed, i);
    auto coord = [&](bool inside, double lo, double hi) {
      const double span = hi - lo;
      return inside ? lo + rng.uniform() * span : lo + (rng.uniform() * 3.0 - 1.0) * span;
    };
    const bool inside = rng.uniform() < 0.85;
    const auto car = rng.below(cars);
    const Seconds pickup = base + static_cast<Seconds>(rng.below(3)) * kSecondsPerDay +
                           static_cast<Seconds>(rng.below(14 * 3600));
    const Seconds duration = 120 + static_cast<Seconds>(rng.below(1500));
    const double plat = coord(inside, box.lat_min, box.lat_max), plon = coord(inside, box.lon_min, box.lon_max);
    const double dlat = coord(inside, box.lat_min, box.lat_max), dlon = coord(inside, box.lon_min, box.lon_max);
    char buf[512];
    std::snprintf(buf, sizeof buf, "CAR%05llu,HACK%05llu,VTS,1,,%s,%s,1,%lld,%.2f,%.6f,%.6f,%.6f,%.6f\n",
                  static_cast<unsigned long long>(car), static_cast<unsigned long long>(car),
                  format_timestamp(pickup).c_str(), format_timestamp(pickup + duration).c_str(),
                  static_cast<long long>(duration), duration / 300.0, plon, plat, dlon, dlat);
    out += buf;
  }
  return out;
}

}  // namespace ridemix
