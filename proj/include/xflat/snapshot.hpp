#pragma once

// Binary snapshots of a rank's ensemble slice.
//
//   offset  size  field
//        0     4  magic "XFLT"
//        4     4  format version (1)
//        8     4  n_flavors
//       12     4  n_phi
//       16     4  n_energy
//       20     8  n_theta_local
//       28     8  global theta offset
//       36     8  step index
//       44     8  radius (IEEE double)
//       52     4  writer rank
//       56     4  owner rank
//       60     -  payload: the amplitude buffer as little-endian doubles
//      end     4  CRC-32 of the payload
//
// All integers are little-endian.

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <system_error>
#include <vector>

#include <boost/crc.hpp>

#include "xflat/error.hpp"
#include "xflat/exchange.hpp"
#include "xflat/state.hpp"
#include "xflat/topology.hpp"

namespace xflat {

inline constexpr std::array<std::uint8_t, 4> kSnapshotMagic{'X', 'F', 'L', 'T'};
inline constexpr std::uint32_t kSnapshotVersion = 1;
inline constexpr std::size_t kSnapshotHeaderSize = 60;
inline constexpr int kStagedSnapshotTag = 1;

class SnapshotError : public IntegrityError {
 public:
  enum class Reason { magic, version, truncated, crc, dims };

  SnapshotError(Reason reason, const std::string& what) : IntegrityError(what), reason_(reason) {}
  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

struct SnapshotHeader {
  std::uint32_t version = kSnapshotVersion;
  std::uint32_t n_flavors = 2;
  std::uint32_t n_phi = 0;
  std::uint32_t n_energy = 0;
  std::uint64_t n_theta_local = 0;
  std::uint64_t theta_offset = 0;
  std::uint64_t step = 0;
  double radius = 0.0;
  std::uint32_t writer_rank = 0;
  std::uint32_t owner_rank = 0;

  std::uint64_t value_count() const noexcept {
    return std::uint64_t{kSpeciesCount} * n_theta_local * n_phi * n_flavors * 2 * n_energy;
  }
  std::uint64_t payload_bytes() const noexcept { return value_count() * 8; }

  AmplitudeLayout layout() const noexcept {
    return {static_cast<std::size_t>(n_theta_local) * n_phi, n_flavors, n_energy};
  }

  friend bool operator==(const SnapshotHeader&, const SnapshotHeader&) = default;
};

struct Snapshot {
  SnapshotHeader header;
  AmplitudeBuffer amplitudes;
  std::uint32_t crc = 0;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{p[i]} << (8 * i);
  return v;
}
inline std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw IntegrityError(std::string("snapshot: ") + what + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline std::uint32_t payload_crc(std::span<const std::uint8_t> payload) {
  boost::crc_32_type crc;
  crc.process_bytes(payload.data(), payload.size());
  return crc.checksum();
}

inline SnapshotHeader make_header(const Ensemble& e, std::uint64_t step, std::size_t owner_rank,
                                  std::size_t writer_rank) {
  SnapshotHeader h;
  h.n_flavors = detail::checked_u32(e.n_flavors(), "n_flavors");
  h.n_phi = detail::checked_u32(e.grid().n_phi(), "n_phi");
  h.n_energy = detail::checked_u32(e.n_energy(), "n_energy");
  h.n_theta_local = e.n_theta_local();
  h.theta_offset = e.slice().begin;
  h.step = step;
  h.radius = e.radius();
  h.owner_rank = detail::checked_u32(owner_rank, "owner rank");
  h.writer_rank = detail::checked_u32(writer_rank, "writer rank");
  return h;
}

inline Bytes encode_snapshot(const SnapshotHeader& h, const AmplitudeBuffer& amplitudes) {
  const auto data = amplitudes.data();
  if (data.size() != h.value_count() || !(amplitudes.layout() == h.layout())) {
    throw IntegrityError("encode_snapshot: amplitude buffer does not match header dimensions");
  }
  Bytes out(kSnapshotMagic.begin(), kSnapshotMagic.end());
  out.reserve(kSnapshotHeaderSize + h.payload_bytes() + 4);
  detail::put_u32(out, h.version);
  detail::put_u32(out, h.n_flavors);
  detail::put_u32(out, h.n_phi);
  detail::put_u32(out, h.n_energy);
  detail::put_u64(out, h.n_theta_local);
  detail::put_u64(out, h.theta_offset);
  detail::put_u64(out, h.step);
  detail::put_u64(out, std::bit_cast<std::uint64_t>(h.radius));
  detail::put_u32(out, h.writer_rank);
  detail::put_u32(out, h.owner_rank);
  for (double v : data) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  const std::uint32_t crc = payload_crc(std::span<const std::uint8_t>(out).subspan(kSnapshotHeaderSize));
  detail::put_u32(out, crc);
  return out;
}

/// Snapshot of the ensemble's slice, written by its owner.
inline Bytes encode_snapshot(const Ensemble& e, std::uint64_t step, std::size_t owner_rank = 0) {
  return encode_snapshot(make_header(e, step, owner_rank, owner_rank), e.amplitudes());
}

inline SnapshotHeader decode_header(std::span<const std::uint8_t> bytes, const std::string& context = "snapshot") {
  if (bytes.size() < kSnapshotHeaderSize) {
    throw SnapshotError(SnapshotError::Reason::truncated,
                        context + ": truncated header (" + std::to_string(bytes.size()) + " bytes)");
  }
  if (!std::equal(kSnapshotMagic.begin(), kSnapshotMagic.end(), bytes.begin())) {
    throw SnapshotError(SnapshotError::Reason::magic, context + ": bad magic (not an XFLT snapshot)");
  }
  const std::uint8_t* p = bytes.data();
  SnapshotHeader h;
  h.version = detail::get_u32(p + 4);
  if (h.version != kSnapshotVersion) {
    throw SnapshotError(SnapshotError::Reason::version,
                        context + ": unsupported format version " + std::to_string(h.version));
  }
  h.n_flavors = detail::get_u32(p + 8);
  h.n_phi = detail::get_u32(p + 12);
  h.n_energy = detail::get_u32(p + 16);
  h.n_theta_local = detail::get_u64(p + 20);
  h.theta_offset = detail::get_u64(p + 28);
  h.step = detail::get_u64(p + 36);
  h.radius = std::bit_cast<double>(detail::get_u64(p + 44));
  h.writer_rank = detail::get_u32(p + 52);
  h.owner_rank = detail::get_u32(p + 56);
  return h;
}

inline Snapshot decode_snapshot(std::span<const std::uint8_t> bytes, const std::string& context = "snapshot") {
  Snapshot s;
  s.header = decode_header(bytes, context);
  const SnapshotHeader& h = s.header;
  if (h.n_flavors < 2 || h.n_phi < 1 || h.n_energy < 1) {
    throw SnapshotError(SnapshotError::Reason::dims, context + ": invalid dimensions in header");
  }
  // Guard the multiplication against absurd header values before trusting it.
  const long double expected_ld = static_cast<long double>(kSnapshotHeaderSize) + 4.0L +
                                  16.0L * static_cast<long double>(h.n_theta_local) * h.n_phi * h.n_flavors * 2.0L *
                                      h.n_energy;
  if (expected_ld != static_cast<long double>(bytes.size())) {
    const bool short_file = static_cast<long double>(bytes.size()) < expected_ld;
    char msg[160];
    std::snprintf(msg, sizeof msg, ": %s: header dimensions imply %.0Lf bytes, file has %zu",
                  short_file ? "truncated" : "trailing bytes", expected_ld, bytes.size());
    throw SnapshotError(short_file ? SnapshotError::Reason::truncated : SnapshotError::Reason::dims, context + msg);
  }
  const auto payload = bytes.subspan(kSnapshotHeaderSize, h.payload_bytes());
  s.crc = detail::get_u32(bytes.data() + kSnapshotHeaderSize + h.payload_bytes());
  const std::uint32_t actual = payload_crc(payload);
  if (actual != s.crc) {
    char msg[96];
    std::snprintf(msg, sizeof msg, ": CRC mismatch (stored %08x, computed %08x)", s.crc, actual);
    throw SnapshotError(SnapshotError::Reason::crc, context + msg);
  }
  s.amplitudes = AmplitudeBuffer(h.layout());
  auto data = s.amplitudes.data();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::bit_cast<double>(detail::get_u64(payload.data() + 8 * i));
  return s;
}

/// Payload followed by its CRC: the part that is identical across I/O modes.
inline std::span<const std::uint8_t> payload_and_crc(std::span<const std::uint8_t> encoded) {
  if (encoded.size() < kSnapshotHeaderSize + 4) {
    throw SnapshotError(SnapshotError::Reason::truncated, "snapshot shorter than header + CRC");
  }
  return encoded.subspan(kSnapshotHeaderSize);
}

inline std::string snapshot_file_name(std::uint64_t step, std::size_t owner_rank) {
  char name[64];
  std::snprintf(name, sizeof name, "snap_%08llu_%04zu.xflt", static_cast<unsigned long long>(step), owner_rank);
  return name;
}

/// Writes `bytes` to dir/name through a temporary file and a rename, so a
/// failed write never leaves a file under the final name.
inline std::filesystem::path write_file_atomic(const std::filesystem::path& dir, const std::string& name,
                                               std::span<const std::uint8_t> bytes) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  const fs::path final_path = dir / name;
  const fs::path tmp_path = dir / (name + ".tmp");
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp_path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp_path, ec);
      throw IoError("write failed: " + tmp_path.string());
    }
  }
  fs::rename(tmp_path, final_path, ec);
  if (ec) {
    std::error_code ignored;
    fs::remove(tmp_path, ignored);
    throw IoError("cannot rename " + tmp_path.string() + " to " + final_path.string() + ": " + ec.message());
  }
  return final_path;
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

inline Snapshot read_snapshot(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  return decode_snapshot(bytes, path.string());
}

inline std::filesystem::path write_direct(const Ensemble& e, std::uint64_t step, std::size_t rank,
                                          const std::filesystem::path& dir) {
  const Bytes bytes = encode_snapshot(e, step, rank);
  return write_file_atomic(dir, snapshot_file_name(step, rank), bytes);
}

/// CPU rank that writes on behalf of an accelerator rank: accelerator i of
/// n_acc is served by CPU rank floor(i * n_cpu / n_acc). Empty for CPU ranks.
inline std::optional<std::size_t> stager_for(const RankPlan& plan, std::size_t rank) {
  const auto& r = plan.ranks.at(rank);
  if (!r.accelerator) return std::nullopt;
  std::vector<std::size_t> cpus, accs;
  for (const auto& x : plan.ranks) (x.accelerator ? accs : cpus).push_back(x.rank_id);
  if (cpus.empty()) throw StagingError("rank " + std::to_string(rank) + ": staged I/O needs a CPU rank as stager");
  const std::size_t i = static_cast<std::size_t>(std::find(accs.begin(), accs.end(), rank) - accs.begin());
  return cpus[i * cpus.size() / accs.size()];
}

/// Accelerator ranks served by `stager`, ascending.
inline std::vector<std::size_t> staged_owners(const RankPlan& plan, std::size_t stager) {
  std::vector<std::size_t> out;
  for (const auto& r : plan.ranks) {
    if (r.accelerator && stager_for(plan, r.rank_id) == stager) out.push_back(r.rank_id);
  }
  return out;
}

/// Owner side of a staged write: ships the encoded snapshot to the stager.
inline void send_staged(Exchange& ex, const Ensemble& e, std::uint64_t step, std::size_t owner,
                        std::optional<std::size_t> stager) {
  if (!stager) throw StagingError("rank " + std::to_string(owner) + ": no stager rank configured");
  ex.send(owner, *stager, kStagedSnapshotTag, encode_snapshot(make_header(e, step, owner, *stager), e.amplitudes()));
}

/// Stager side: receives one snapshot from `owner`, verifies it and writes it
/// under the owner's name.
inline std::filesystem::path receive_staged(Exchange& ex, std::size_t stager, std::size_t owner,
                                            const std::filesystem::path& dir) {
  const Bytes bytes = ex.receive(stager, owner, kStagedSnapshotTag);
  const SnapshotHeader h = decode_snapshot(bytes, "staged snapshot from rank " + std::to_string(owner)).header;
  if (h.owner_rank != owner || h.writer_rank != stager) {
    throw StagingError("staged snapshot routing mismatch: owner " + std::to_string(h.owner_rank) + ", writer " +
                       std::to_string(h.writer_rank));
  }
  return write_file_atomic(dir, snapshot_file_name(h.step, owner), bytes);
}

/// Single-process staged write: the stager path without a second thread.
inline std::filesystem::path write_staged(const Ensemble& e, std::uint64_t step, std::size_t owner,
                                          std::optional<std::size_t> stager, const std::filesystem::path& dir) {
  if (!stager) throw StagingError("rank " + std::to_string(owner) + ": no stager rank configured");
  InProcessExchange ex(std::max(owner, *stager) + 1, kDefaultChunkSize, 0);
  send_staged(ex, e, step, owner, stager);
  return receive_staged(ex, *stager, owner, dir);
}

/// Concatenates per-rank snapshots of one step (any order) into the global
/// amplitude buffer. Slices must tile [0, n_theta) exactly.
inline AmplitudeBuffer assemble_snapshots(std::vector<Snapshot> parts) {
  if (parts.empty()) throw IntegrityError("assemble_snapshots: nothing to assemble");
  std::sort(parts.begin(), parts.end(),
            [](const Snapshot& a, const Snapshot& b) { return a.header.theta_offset < b.header.theta_offset; });
  const SnapshotHeader& first = parts.front().header;
  std::uint64_t n_theta = 0;
  for (const auto& p : parts) {
    const auto& h = p.header;
    if (h.theta_offset != n_theta) throw IntegrityError("snapshot slices do not tile the theta axis");
    if (h.n_phi != first.n_phi || h.n_flavors != first.n_flavors || h.n_energy != first.n_energy ||
        h.step != first.step) {
      throw IntegrityError("snapshot slices disagree on dimensions or step");
    }
    n_theta += h.n_theta_local;
  }
  const AmplitudeLayout L{static_cast<std::size_t>(n_theta) * first.n_phi, first.n_flavors, first.n_energy};
  AmplitudeBuffer out(L);
  const std::size_t per_beam = std::size_t{first.n_flavors} * 2 * first.n_energy;
  for (const auto& p : parts) {
    const std::size_t beams = p.amplitudes.layout().n_beams;
    const std::size_t beam0 = static_cast<std::size_t>(p.header.theta_offset) * first.n_phi;
    for (auto s : kAllSpecies) {
      const auto src = p.amplitudes.data().subspan(p.amplitudes.layout().offset(s, 0, 0), beams * per_beam);
      std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(L.offset(s, beam0, 0)));
    }
  }
  return out;
}

}  // namespace xflat
