#pragma once

// Flat INI run configuration.
//
//   # comment
//   [grid]
//   n_theta = 10000        ; same as grid.n_theta = 10000 outside a section
//
// Keys are dotted paths; a [section] header prefixes the keys below it.
// Unknown keys are errors. Command-line overrides use the same dotted keys.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/crc.hpp>

#include "xflat/error.hpp"
#include "xflat/grid.hpp"
#include "xflat/integrator.hpp"
#include "xflat/spectra.hpp"
#include "xflat/topology.hpp"

namespace xflat {

enum class IoMode { off, direct, staged };

inline const char* to_string(IoMode m) noexcept {
  switch (m) {
    case IoMode::direct: return "direct";
    case IoMode::staged: return "staged";
    default: return "off";
  }
}

struct IoConfig {
  IoMode mode = IoMode::off;
  /// Steps between snapshots; 0 means steps / 10.
  std::uint64_t interval = 0;
  std::string dir = "xflat_out";
};

enum class TranscendentalKind { sincos, exp };

struct BenchConfig {
  std::size_t width = 8;
  std::uint64_t iterations = 10'000'000;
  std::size_t threads = 1;
  std::vector<std::size_t> widths{8, 16, 32, 64, 128, 256, 512, 1024};
  double duration = 100.0;
  TranscendentalKind transcendental = TranscendentalKind::sincos;
  std::string csv;
};

struct RunConfig {
  GridConfig grid;
  Spectra spectra;
  Physics physics;
  std::string matter_table;
  StepConfig step;
  std::uint64_t steps = 1000;
  std::uint64_t log_interval = 100;
  DeviceSpec cpu{"cpu", 2, Weight(1), 8};
  DeviceSpec phi{"phi", 2, Weight(3), 244};
  std::size_t chunk_size = kDefaultChunkSize;
  IoConfig io;
  BenchConfig bench;
  std::uint64_t seed = 0;

  std::vector<DeviceSpec> devices() const { return {cpu, phi}; }
  std::size_t rank_count() const noexcept { return cpu.count + phi.count; }

  std::uint64_t snapshot_interval() const noexcept {
    if (io.interval > 0) return io.interval;
    return std::max<std::uint64_t>(1, steps / 10);
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    // Accept integral values written in floating notation, e.g. 1e7.
    double d = 0.0;
    const auto [p2, ec2] = std::from_chars(v.data(), v.data() + v.size(), d);
    if (ec2 == std::errc() && p2 == v.data() + v.size() && d >= 0.0 && d == std::floor(d) && d < 1.8e19) {
      return static_cast<T>(d);
    }
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline std::map<std::string, Field> make_fields() {
  std::map<std::string, Field> f;
  const auto size_field = [&f](const std::string& key, auto accessor) {
    f[key] = {[key, accessor](RunConfig& c, const std::string& v) {
                auto& ref = accessor(c);
                ref = parse_integer<std::remove_reference_t<decltype(ref)>>(key, v);
              },
              [accessor](const RunConfig& c) { return std::to_string(accessor(const_cast<RunConfig&>(c))); }};
  };
  const auto double_field = [&f](const std::string& key, auto accessor) {
    f[key] = {[key, accessor](RunConfig& c, const std::string& v) { accessor(c) = parse_double(key, v); },
              [accessor](const RunConfig& c) { return format_double(accessor(const_cast<RunConfig&>(c))); }};
  };

  size_field("grid.n_theta", [](RunConfig& c) -> auto& { return c.grid.n_theta; });
  size_field("grid.n_phi", [](RunConfig& c) -> auto& { return c.grid.n_phi; });
  size_field("grid.n_energy", [](RunConfig& c) -> auto& { return c.grid.n_energy; });
  size_field("grid.n_flavors", [](RunConfig& c) -> auto& { return c.grid.n_flavors; });
  double_field("grid.radius", [](RunConfig& c) -> auto& { return c.grid.radius_ns; });
  double_field("grid.e_min", [](RunConfig& c) -> auto& { return c.grid.e_min; });
  double_field("grid.e_max", [](RunConfig& c) -> auto& { return c.grid.e_max; });

  for (auto s : kAllSpecies) {
    for (std::size_t fl = 0; fl < kEmissionFlavorCount; ++fl) {
      const std::string base = std::string("spectra.") + (s == Species::neutrino ? "nu" : "nubar") +
                               (fl == 0 ? "_e" : "_x") + ".";
      const std::size_t si = index_of(s);
      double_field(base + "luminosity", [si, fl](RunConfig& c) -> auto& { return c.spectra.table[si][fl].luminosity; });
      double_field(base + "mean_energy",
                   [si, fl](RunConfig& c) -> auto& { return c.spectra.table[si][fl].mean_energy; });
      double_field(base + "pinching", [si, fl](RunConfig& c) -> auto& { return c.spectra.table[si][fl].pinching; });
    }
  }

  double_field("vacuum.delta_m2", [](RunConfig& c) -> auto& { return c.physics.vacuum.delta_m2; });
  double_field("vacuum.theta_v", [](RunConfig& c) -> auto& { return c.physics.vacuum.theta_v; });
  f["vacuum.matter_potential"] = {
      [](RunConfig& c, const std::string& v) {
        c.physics.vacuum.matter = MatterProfile::constant(parse_double("vacuum.matter_potential", v));
      },
      [](const RunConfig& c) {
        return c.physics.vacuum.matter.is_tabulated() ? std::string("table")
                                                      : format_double(c.physics.vacuum.matter(0.0));
      }};
  f["vacuum.matter_table"] = {[](RunConfig& c, const std::string& v) { c.matter_table = v; },
                              [](const RunConfig& c) { return c.matter_table; }};
  double_field("coupling.mu0", [](RunConfig& c) -> auto& { return c.physics.mu0; });

  double_field("step.h", [](RunConfig& c) -> auto& { return c.step.h; });
  size_field("step.n_substeps", [](RunConfig& c) -> auto& { return c.step.n_substeps; });
  size_field("step.renormalize_every", [](RunConfig& c) -> auto& { return c.step.renormalize_every; });
  double_field("step.cos_theta_floor", [](RunConfig& c) -> auto& { return c.step.cos_theta_floor; });
  size_field("run.steps", [](RunConfig& c) -> auto& { return c.steps; });
  size_field("run.log_interval", [](RunConfig& c) -> auto& { return c.log_interval; });

  for (const std::string kind : {"cpu", "phi"}) {
    const auto dev = [kind](RunConfig& c) -> DeviceSpec& { return kind == "cpu" ? c.cpu : c.phi; };
    const std::string base = "devices." + kind + ".";
    size_field(base + "count", [dev](RunConfig& c) -> auto& { return dev(c).count; });
    size_field(base + "threads", [dev](RunConfig& c) -> auto& { return dev(c).threads; });
    f[base + "weight"] = {
        [dev, base](RunConfig& c, const std::string& v) { dev(c).weight = parse_weight(v, base + "weight"); },
        [dev](const RunConfig& c) { return to_string(dev(const_cast<RunConfig&>(c)).weight); }};
  }
  size_field("topology.chunk_size", [](RunConfig& c) -> auto& { return c.chunk_size; });

  f["io.mode"] = {[](RunConfig& c, const std::string& v) {
                    if (v == "off") c.io.mode = IoMode::off;
                    else if (v == "direct") c.io.mode = IoMode::direct;
                    else if (v == "staged") c.io.mode = IoMode::staged;
                    else throw ConfigError("io.mode", "expected off, direct or staged, got '" + v + "'");
                  },
                  [](const RunConfig& c) { return std::string(to_string(c.io.mode)); }};
  size_field("io.interval", [](RunConfig& c) -> auto& { return c.io.interval; });
  f["io.dir"] = {[](RunConfig& c, const std::string& v) { c.io.dir = v; },
                 [](const RunConfig& c) { return c.io.dir; }};

  size_field("bench.width", [](RunConfig& c) -> auto& { return c.bench.width; });
  size_field("bench.iterations", [](RunConfig& c) -> auto& { return c.bench.iterations; });
  size_field("bench.threads", [](RunConfig& c) -> auto& { return c.bench.threads; });
  double_field("bench.duration", [](RunConfig& c) -> auto& { return c.bench.duration; });
  f["bench.widths"] = {[](RunConfig& c, const std::string& v) {
                         std::vector<std::size_t> widths;
                         std::stringstream ss(v);
                         std::string item;
                         while (std::getline(ss, item, ',')) {
                           widths.push_back(parse_integer<std::size_t>("bench.widths", trim(item)));
                         }
                         if (widths.empty()) throw ConfigError("bench.widths", "empty list");
                         c.bench.widths = std::move(widths);
                       },
                       [](const RunConfig& c) {
                         std::string out;
                         for (std::size_t i = 0; i < c.bench.widths.size(); ++i) {
                           out += (i ? "," : "") + std::to_string(c.bench.widths[i]);
                         }
                         return out;
                       }};
  f["bench.transcendental"] = {
      [](RunConfig& c, const std::string& v) {
        if (v == "sincos") c.bench.transcendental = TranscendentalKind::sincos;
        else if (v == "exp") c.bench.transcendental = TranscendentalKind::exp;
        else throw ConfigError("bench.transcendental", "expected sincos or exp, got '" + v + "'");
      },
      [](const RunConfig& c) {
        return std::string(c.bench.transcendental == TranscendentalKind::sincos ? "sincos" : "exp");
      }};
  f["bench.csv"] = {[](RunConfig& c, const std::string& v) { c.bench.csv = v; },
                    [](const RunConfig& c) { return c.bench.csv; }};
  size_field("seed", [](RunConfig& c) -> auto& { return c.seed; });
  return f;
}

inline const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = make_fields();
  return table;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : detail::fields()) keys.push_back(k);
  return keys;
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  const auto& table = detail::fields();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError(key, "unknown configuration key");
  it->second.set(c, value);
}

inline std::string get_config_value(const RunConfig& c, const std::string& key) {
  const auto& table = detail::fields();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError(key, "unknown configuration key");
  return it->second.get(c);
}

/// Sorted "key = value" lines of every setting.
inline std::string canonical_config(const RunConfig& c) {
  std::string out;
  for (const auto& [key, field] : detail::fields()) out += key + " = " + field.get(c) + "\n";
  return out;
}

/// CRC-64/XZ of the canonical form: independent of key order in the source file.
inline std::uint64_t config_hash(const RunConfig& c) {
  boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, ~0ULL, ~0ULL, true, true> crc;
  const std::string text = canonical_config(c);
  crc.process_bytes(text.data(), text.size());
  return crc.checksum();
}

inline std::string config_hash_hex(const RunConfig& c) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_hash(c)));
  return buf;
}

/// Two whitespace-separated columns: radius and potential. '#' starts a comment.
inline MatterProfile load_matter_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("vacuum.matter_table", "cannot open " + path.string());
  std::vector<double> radii, values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (detail::trim(line).empty()) continue;
    std::istringstream ss(line);
    double r = 0.0, v = 0.0;
    if (!(ss >> r >> v)) {
      throw ConfigError("vacuum.matter_table", path.string() + ":" + std::to_string(line_no) + ": expected two numbers");
    }
    radii.push_back(r);
    values.push_back(v);
  }
  return MatterProfile::table(std::move(radii), std::move(values));
}

/// Cross-field checks. Loads the matter table if one is named.
inline void validate(RunConfig& c) {
  const Grid grid = Grid::build(c.grid);
  (void)grid;
  c.spectra.validate();
  if (!c.matter_table.empty()) c.physics.vacuum.matter = load_matter_table(c.matter_table);
  c.physics.validate();
  c.step.validate();
  if (c.chunk_size < 1) throw ConfigError("topology.chunk_size", "must be >= 1");
  for (const auto* d : {&c.cpu, &c.phi}) {
    if (d->threads < 1) throw ConfigError("devices." + d->kind + ".threads", "must be >= 1");
    if (d->weight <= Weight(0)) throw ConfigError("devices." + d->kind + ".weight", "must be > 0");
  }
  if (c.rank_count() == 0) throw ConfigError("devices.cpu.count", "no ranks configured (devices.phi.count is 0 too)");
  if (c.grid.n_theta < c.rank_count()) {
    throw ConfigError("grid.n_theta", std::to_string(c.grid.n_theta) + " bins cannot cover " +
                                          std::to_string(c.rank_count()) + " ranks (devices.*.count)");
  }
  if (c.io.mode == IoMode::staged && c.phi.count > 0 && c.cpu.count == 0) {
    throw ConfigError("io.mode", "staged I/O requires devices.cpu.count >= 1 to write for accelerator ranks");
  }
  if (c.log_interval == 0) throw ConfigError("run.log_interval", "must be >= 1");
  if (c.bench.width < 1) throw ConfigError("bench.width", "must be >= 1");
  if (c.bench.iterations < 1) throw ConfigError("bench.iterations", "must be >= 1");
  if (c.bench.threads < 1) throw ConfigError("bench.threads", "must be >= 1");
  if (!(c.bench.duration > 0.0)) throw ConfigError("bench.duration", "must be > 0");
}

/// Parses INI text. `source` names the input in error messages.
inline void apply_config_text(RunConfig& c, const std::string& text, const std::string& source = "config") {
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    for (const char* marker : {" #", "\t#", " ;", "\t;"}) {
      const auto pos = line.find(marker);
      if (pos != std::string::npos) line = detail::trim(line.substr(0, pos));
    }
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", where + ": unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError("", where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("", where + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("", where + ": missing key");
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      set_config_value(c, full, value);
    } catch (const ConfigError& e) {
      const std::string field = e.field().empty() ? full : e.field();
      const std::size_t skip = e.field().empty() ? 0 : e.field().size() + 2;
      throw ConfigError(field, where + ": " + std::string(e.what()).substr(skip));
    }
  }
}

/// Defaults, then the file (if any), then overrides in order; validated.
inline RunConfig parse_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  RunConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(c, ss.str(), path);
  }
  for (const auto& [key, value] : overrides) set_config_value(c, key, value);
  validate(c);
  return c;
}

inline RunConfig parse_config_text(const std::string& text,
                                   const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  RunConfig c;
  apply_config_text(c, text);
  for (const auto& [key, value] : overrides) set_config_value(c, key, value);
  validate(c);
  return c;
}

}  // namespace xflat
