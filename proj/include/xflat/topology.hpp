#pragma once

// Rank-level decomposition: weighted apportionment of polar-angle bins over
// CPU-like and accelerator-like ranks, and the worker-wave count within a rank.

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include <boost/rational.hpp>

#include "xflat/error.hpp"
#include "xflat/moments.hpp"

namespace xflat {

using Weight = boost::rational<std::int64_t>;

/// Parses "3", "3/2" or a finite decimal such as "1.25" into an exact rational.
inline Weight parse_weight(const std::string& text, const std::string& field = "weight") {
  const auto bad = [&] { return ConfigError(field, "expected a positive rational, got '" + text + "'"); };
  if (text.empty()) throw bad();
  try {
    const auto slash = text.find('/');
    if (slash != std::string::npos) {
      std::size_t pos_n = 0, pos_d = 0;
      const std::string ns = text.substr(0, slash), ds = text.substr(slash + 1);
      const long long n = std::stoll(ns, &pos_n);
      const long long d = std::stoll(ds, &pos_d);
      if (pos_n != ns.size() || pos_d != ds.size() || d <= 0 || n <= 0) throw bad();
      return Weight(n, d);
    }
    const auto dot = text.find('.');
    std::string digits = text;
    std::int64_t den = 1;
    if (dot != std::string::npos) {
      const std::string frac = text.substr(dot + 1);
      if (frac.size() > 12) throw bad();
      digits = text.substr(0, dot) + frac;
      for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
    }
    std::size_t pos = 0;
    const long long n = std::stoll(digits, &pos);
    if (pos != digits.size() || n <= 0) throw bad();
    return Weight(n, den);
  } catch (const std::logic_error&) {
    throw bad();
  }
}

inline std::string to_string(const Weight& w) {
  std::ostringstream os;
  os << w.numerator();
  if (w.denominator() != 1) os << '/' << w.denominator();
  return os.str();
}

struct DeviceSpec {
  std::string kind = "cpu";
  std::size_t count = 1;
  Weight weight{1};
  std::size_t threads = 1;

  /// Any kind other than "cpu" is treated as an accelerator.
  bool is_accelerator() const noexcept { return kind != "cpu"; }
};

struct RankAssignment {
  std::size_t rank_id = 0;
  std::string kind;
  bool accelerator = false;
  Weight weight{1};
  std::size_t threads = 1;
  std::size_t theta_start = 0;
  std::size_t theta_count = 0;

  ThetaRange range() const noexcept { return {theta_start, theta_count}; }
};

/// ceil(local_theta_count / threads): sequential passes of the worker team.
inline std::size_t thread_iterations(std::size_t local_theta_count, std::size_t threads) {
  if (threads < 1) throw ConfigError("threads", "must be >= 1");
  return (local_theta_count + threads - 1) / threads;
}

struct RankPlan {
  std::vector<RankAssignment> ranks;
  std::size_t total_theta = 0;
  std::size_t chunk_size = kDefaultChunkSize;

  std::size_t size() const noexcept { return ranks.size(); }
  std::size_t n_cpu() const noexcept {
    std::size_t n = 0;
    for (const auto& r : ranks) n += r.accelerator ? 0 : 1;
    return n;
  }
  std::size_t n_accelerator() const noexcept { return size() - n_cpu(); }
  std::size_t waves(std::size_t rank) const { return thread_iterations(ranks.at(rank).theta_count, ranks.at(rank).threads); }
};

/// Contiguous apportionment of n_theta bins. Ranks are ordered CPU kinds first,
/// then accelerator kinds, each in the order given. Every rank receives one bin,
/// then each further bin goes to the rank with the largest weight / count
/// (smallest-divisor method), ties to the lower rank id.
inline RankPlan make_plan(std::size_t n_theta, const std::vector<DeviceSpec>& devices,
                          std::size_t chunk_size = kDefaultChunkSize) {
  if (chunk_size < 1) throw ConfigError("topology.chunk_size", "must be >= 1");
  RankPlan plan;
  plan.total_theta = n_theta;
  plan.chunk_size = chunk_size;

  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& d : devices) {
      if (d.is_accelerator() != (pass == 1)) continue;
      if (d.weight <= Weight(0)) throw ConfigError("devices." + d.kind + ".weight", "must be > 0");
      if (d.threads < 1) throw ConfigError("devices." + d.kind + ".threads", "must be >= 1");
      for (std::size_t i = 0; i < d.count; ++i) {
        RankAssignment a;
        a.rank_id = plan.ranks.size();
        a.kind = d.kind;
        a.accelerator = d.is_accelerator();
        a.weight = d.weight;
        a.threads = d.threads;
        plan.ranks.push_back(std::move(a));
      }
    }
  }
  if (plan.ranks.empty()) throw ConfigError("devices", "no ranks configured");
  if (n_theta < plan.ranks.size()) {
    throw ConfigError("grid.n_theta", std::to_string(n_theta) + " bins cannot cover " +
                                          std::to_string(plan.ranks.size()) + " ranks");
  }

  struct Entry {
    Weight priority;
    std::size_t rank;
  };
  const auto lower = [](const Entry& a, const Entry& b) {
    if (a.priority != b.priority) return a.priority < b.priority;
    return a.rank > b.rank;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(lower)> queue(lower);
  for (auto& r : plan.ranks) {
    r.theta_count = 1;
    queue.push({r.weight, r.rank_id});
  }
  for (std::size_t remaining = n_theta - plan.ranks.size(); remaining > 0; --remaining) {
    const Entry top = queue.top();
    queue.pop();
    auto& r = plan.ranks[top.rank];
    ++r.theta_count;
    queue.push({r.weight / static_cast<std::int64_t>(r.theta_count), r.rank_id});
  }

  std::size_t start = 0;
  for (auto& r : plan.ranks) {
    r.theta_start = start;
    start += r.theta_count;
  }
  return plan;
}

/// `count` equal-weight CPU ranks.
inline RankPlan make_equal_plan(std::size_t n_theta, std::size_t count, std::size_t threads = 1,
                                std::size_t chunk_size = kDefaultChunkSize) {
  return make_plan(n_theta, {DeviceSpec{"cpu", count, Weight(1), threads}}, chunk_size);
}

/// Dry-run table: rank_id, kind, theta_start, theta_count, threads, waves.
inline std::string format_plan(const RankPlan& plan) {
  std::ostringstream os;
  os << "rank  kind    theta_start  theta_count  threads  waves\n";
  for (const auto& r : plan.ranks) {
    char line[128];
    std::snprintf(line, sizeof line, "%4zu  %-6s  %11zu  %11zu  %7zu  %5zu\n", r.rank_id, r.kind.c_str(),
                  r.theta_start, r.theta_count, r.threads, thread_iterations(r.theta_count, r.threads));
    os << line;
  }
  os << "total " << plan.total_theta << " theta bins over " << plan.size() << " ranks (" << plan.n_cpu() << " cpu, "
     << plan.n_accelerator() << " accelerator), chunk size " << plan.chunk_size << '\n';
  return os.str();
}

}  // namespace xflat
