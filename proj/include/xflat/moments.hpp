#pragma once

// Angular moments of the ambient neutrino gas and the self-coupling potential.
//
// The forward-scattering kernel (1 - v_i . v_j) separates, so
//   H_nu(v_i) = mu0 (R/r)^2 [ M0 - sum_c v_i[c] M1[c] ]
// with M0 = sum_j C_j and M1[c] = sum_j v_j[c] C_j, where C_j is the
// flux-weighted density contribution of bin j (antineutrinos enter as
// -conj). Sums run energy -> phi -> theta in ascending order and are carried
// in double-double; theta rows fold into fixed chunks, chunks fold in chunk
// order. The fold order never depends on rank or thread counts.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "xflat/double_double.hpp"
#include "xflat/error.hpp"
#include "xflat/grid.hpp"
#include "xflat/hamiltonian.hpp"
#include "xflat/hermitian.hpp"
#include "xflat/state.hpp"

namespace xflat {

inline constexpr std::size_t kDefaultChunkSize = 8;

/// Packed 2x2 Hermitian accumulator in double-double.
struct PackedSum {
  std::array<DoubleDouble, 4> e{};  // H00, H11, Re H01, Im H01

  PackedSum& operator+=(const PackedSum& o) noexcept {
    for (std::size_t i = 0; i < 4; ++i) e[i] += o.e[i];
    return *this;
  }
  PackedSum& operator+=(const Packed2& p) noexcept {
    e[0] += p.d0;
    e[1] += p.d1;
    e[2] += p.re01;
    e[3] += p.im01;
    return *this;
  }
  PackedSum scaled(double s) const noexcept {
    PackedSum out;
    for (std::size_t i = 0; i < 4; ++i) out.e[i] = e[i] * s;
    return out;
  }
  bool is_zero() const noexcept {
    for (const auto& x : e) {
      if (x.hi != 0.0 || x.lo != 0.0) return false;
    }
    return true;
  }
  Packed2 rounded() const noexcept { return {e[0].value(), e[1].value(), e[2].value(), e[3].value()}; }

  friend bool operator==(const PackedSum&, const PackedSum&) = default;
};

struct SpeciesMoments {
  PackedSum m0;
  std::array<PackedSum, 3> m1;

  SpeciesMoments& operator+=(const SpeciesMoments& o) noexcept {
    m0 += o.m0;
    for (std::size_t c = 0; c < 3; ++c) m1[c] += o.m1[c];
    return *this;
  }
  friend bool operator==(const SpeciesMoments&, const SpeciesMoments&) = default;
};

struct MomentSet {
  double radius = 0.0;
  std::array<SpeciesMoments, kSpeciesCount> species{};

  SpeciesMoments& operator[](Species s) noexcept { return species[index_of(s)]; }
  const SpeciesMoments& operator[](Species s) const noexcept { return species[index_of(s)]; }

  MomentSet& operator+=(const MomentSet& o) {
    if (o.radius != radius) {
      throw IntegrityError("moment radius mismatch: " + std::to_string(radius) + " vs " + std::to_string(o.radius));
    }
    for (std::size_t s = 0; s < kSpeciesCount; ++s) species[s] += o.species[s];
    return *this;
  }

  bool is_zero() const noexcept {
    for (const auto& sm : species) {
      if (!sm.m0.is_zero()) return false;
      for (const auto& m : sm.m1) {
        if (!m.is_zero()) return false;
      }
    }
    return true;
  }

  friend MomentSet operator+(MomentSet a, const MomentSet& b) { return a += b; }
  friend bool operator==(const MomentSet&, const MomentSet&) = default;
};

/// Flux-weighted density contribution of one bin for the evolved state psi
/// (born electron flavor) and its orthogonal complement (born heavy flavor):
///   C = w_e rho + w_x (tr(rho) I - rho),
/// negated and conjugated for antineutrinos.
inline Packed2 density_contribution(double re0, double im0, double re1, double im1, double w_e, double w_x,
                                    Species s) noexcept {
  const double rho00 = re0 * re0 + im0 * im0;
  const double rho11 = re1 * re1 + im1 * im1;
  const double rho01_re = re0 * re1 + im0 * im1;
  const double rho01_im = im0 * re1 - re0 * im1;
  const double dw = w_e - w_x;
  Packed2 c{w_e * rho00 + w_x * rho11, w_e * rho11 + w_x * rho00, dw * rho01_re, dw * rho01_im};
  if (s == Species::antineutrino) c = {-c.d0, -c.d1, -c.re01, c.im01};
  return c;
}

inline HermitianMatrix density_contribution(const Ensemble& e, Species s, std::size_t beam, std::size_t k) {
  check_two_flavors(e.n_flavors(), "density_contribution");
  detail::check_indices(e, beam, k);
  return to_matrix(density_contribution(e.re(s, beam, 0)[k], e.im(s, beam, 0)[k], e.re(s, beam, 1)[k],
                                        e.im(s, beam, 1)[k], e.weight(s, EmissionFlavor::electron, beam, k),
                                        e.weight(s, EmissionFlavor::heavy, beam, k), s));
}

namespace detail {

/// Energy sum of one beam of one species, read from `state` (laid out like `e`).
inline PackedSum beam_energy_sum(const AmplitudeBuffer& state, const Ensemble& e, Species s, std::size_t beam) {
  const auto re0 = state.re(s, beam, 0);
  const auto im0 = state.im(s, beam, 0);
  const auto re1 = state.re(s, beam, 1);
  const auto im1 = state.im(s, beam, 1);
  const auto spec_e = e.spectral_weights(s, EmissionFlavor::electron);
  const auto spec_x = e.spectral_weights(s, EmissionFlavor::heavy);
  const double measure = e.beam_measure(beam);
  PackedSum sum;
  for (std::size_t k = 0; k < re0.size(); ++k) {
    sum += density_contribution(re0[k], im0[k], re1[k], im1[k], spec_e[k] * measure, spec_x[k] * measure, s);
  }
  return sum;
}

}  // namespace detail

/// Moments of one local theta row (all phi, both species) at radius r.
inline MomentSet accumulate_row(const AmplitudeBuffer& state, const Ensemble& e, std::size_t theta_local, double r) {
  MomentSet row;
  row.radius = r;
  const Grid& g = e.grid();
  const std::size_t theta = e.slice().begin + theta_local;
  for (std::size_t p = 0; p < g.n_phi(); ++p) {
    const std::size_t b = e.beam(theta_local, p);
    const Direction v = g.direction(theta, p, r);
    for (auto s : kAllSpecies) {
      const PackedSum sum = detail::beam_energy_sum(state, e, s, b);
      auto& sm = row[s];
      sm.m0 += sum;
      for (std::size_t c = 0; c < 3; ++c) sm.m1[c] += sum.scaled(v[c]);
    }
  }
  return row;
}

/// Contribution of one rank to one reduction chunk: either the complete chunk
/// sum, or its individual theta rows when the chunk straddles ranks.
struct ChunkPiece {
  std::size_t chunk = 0;
  bool complete = false;
  MomentSet sum;
  std::size_t theta_begin = 0;
  std::vector<MomentSet> rows;
};

struct RankMoments {
  std::size_t rank = 0;
  double radius = 0.0;
  std::vector<ChunkPiece> pieces;
};

/// Chunks overlapping a global theta range, as (chunk, begin, end) triples.
struct ChunkSpan {
  std::size_t chunk;
  std::size_t begin;
  std::size_t end;
};

inline std::vector<ChunkSpan> chunk_spans(ThetaRange range, std::size_t chunk_size) {
  if (chunk_size == 0) throw ConfigError("topology.chunk_size", "must be >= 1");
  std::vector<ChunkSpan> out;
  std::size_t t = range.begin;
  while (t < range.end()) {
    const std::size_t c = t / chunk_size;
    const std::size_t stop = std::min(range.end(), (c + 1) * chunk_size);
    out.push_back({c, t, stop});
    t = stop;
  }
  return out;
}

inline void check_accumulation_radius(const Ensemble& e, double r) {
  check_two_flavors(e.n_flavors(), "moment accumulation");
  if (!(r >= e.grid().radius_ns())) {
    throw DomainError("moment accumulation at r = " + std::to_string(r) + " inside the neutrinosphere");
  }
}

/// Chunk pieces for the global theta range `range` (inside the ensemble's
/// slice), computed from `state`. Chunks lying entirely inside the grid range
/// [chunk * size, min((chunk + 1) * size, n_theta)) and inside `range` are
/// summed; the others are returned row by row.
inline RankMoments local_chunk_pieces(const AmplitudeBuffer& state, const Ensemble& e, ThetaRange range, double r,
                                      std::size_t chunk_size, int threads = 1) {
  check_accumulation_radius(e, r);
  if (range.begin < e.slice().begin || range.end() > e.slice().end()) {
    throw DomainError("theta range [" + std::to_string(range.begin) + ", " + std::to_string(range.end()) +
                      ") outside local slice");
  }
  const auto spans = chunk_spans(range, chunk_size);
  const std::size_t n_theta = e.grid().n_theta();

  RankMoments out;
  out.radius = r;
  out.pieces.resize(spans.size());

#pragma omp parallel for schedule(static) num_threads(threads)
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const ChunkSpan& sp = spans[i];
    const std::size_t full_begin = sp.chunk * chunk_size;
    const std::size_t full_end = std::min(full_begin + chunk_size, n_theta);
    ChunkPiece& piece = out.pieces[i];
    piece.chunk = sp.chunk;
    piece.theta_begin = sp.begin;
    piece.complete = sp.begin == full_begin && sp.end == full_end;
    piece.sum.radius = r;
    for (std::size_t t = sp.begin; t < sp.end; ++t) {
      MomentSet row = accumulate_row(state, e, t - e.slice().begin, r);
      if (piece.complete) {
        piece.sum += row;
      } else {
        piece.rows.push_back(std::move(row));
      }
    }
  }
  return out;
}

/// Deterministic global sum of per-rank contributions: chunks in ascending
/// index, split chunks reassembled row by row in ascending theta. The result
/// does not depend on how theta bins were distributed among contributors.
/// With `n_theta` > 0 the chunks must tile [0, n_theta) exactly.
inline MomentSet reduce_moments(std::span<const RankMoments> contributions, std::size_t chunk_size,
                                std::size_t n_theta = 0) {
  if (contributions.empty()) throw IntegrityError("moment reduction with no contributions");
  const double r = contributions.front().radius;

  struct Parts {
    const ChunkPiece* complete = nullptr;
    std::vector<const ChunkPiece*> partial;
  };
  std::map<std::size_t, Parts> by_chunk;
  for (const auto& rm : contributions) {
    if (rm.radius != r) {
      throw IntegrityError("moment exchange radius mismatch: rank " + std::to_string(rm.rank) + " at r = " +
                           std::to_string(rm.radius) + ", expected " + std::to_string(r));
    }
    for (const auto& piece : rm.pieces) {
      auto& parts = by_chunk[piece.chunk];
      if (piece.complete) {
        if (parts.complete) throw IntegrityError("chunk " + std::to_string(piece.chunk) + " contributed twice");
        parts.complete = &piece;
      } else {
        parts.partial.push_back(&piece);
      }
    }
  }

  MomentSet total;
  total.radius = r;
  std::size_t expected_next = 0;
  for (auto& [chunk, parts] : by_chunk) {
    const std::size_t full_begin = chunk * chunk_size;
    const std::size_t full_end = n_theta > 0 ? std::min(full_begin + chunk_size, n_theta) : 0;
    if (n_theta > 0 && chunk != expected_next) {
      throw IntegrityError("missing moment contribution for chunk " + std::to_string(expected_next));
    }
    expected_next = chunk + 1;

    if (parts.complete) {
      if (!parts.partial.empty()) {
        throw IntegrityError("chunk " + std::to_string(chunk) + " contributed both whole and split");
      }
      total += parts.complete->sum;
      continue;
    }
    std::sort(parts.partial.begin(), parts.partial.end(),
              [](const ChunkPiece* a, const ChunkPiece* b) { return a->theta_begin < b->theta_begin; });
    MomentSet chunk_sum;
    chunk_sum.radius = r;
    std::size_t next_theta = full_begin;
    for (const ChunkPiece* piece : parts.partial) {
      if (piece->theta_begin != next_theta) {
        throw IntegrityError("chunk " + std::to_string(chunk) + ": rows from theta " + std::to_string(next_theta) +
                             " missing or duplicated");
      }
      for (const auto& row : piece->rows) chunk_sum += row;
      next_theta += piece->rows.size();
    }
    if (n_theta > 0 && next_theta != full_end) {
      throw IntegrityError("chunk " + std::to_string(chunk) + " incomplete: rows end at theta " +
                           std::to_string(next_theta));
    }
    total += chunk_sum;
  }
  if (n_theta > 0 && expected_next * chunk_size < n_theta) {
    throw IntegrityError("missing moment contribution for chunk " + std::to_string(expected_next));
  }
  return total;
}

/// Moments of a theta range of the ensemble at its current radius.
inline MomentSet accumulate_moments(const Ensemble& e, ThetaRange range, double r,
                                    std::size_t chunk_size = kDefaultChunkSize) {
  if (r != e.radius()) {
    throw IntegrityError("accumulate_moments: r = " + std::to_string(r) + " but ensemble is at r = " +
                         std::to_string(e.radius()));
  }
  const RankMoments rm = local_chunk_pieces(e.amplitudes(), e, range, r, chunk_size);
  // A sub-range may cut chunks at both ends; fold those rows locally.
  return reduce_moments(std::span<const RankMoments>(&rm, 1), chunk_size);
}

inline MomentSet accumulate_moments(const Ensemble& e, std::size_t chunk_size = kDefaultChunkSize) {
  return accumulate_moments(e, e.slice(), e.radius(), chunk_size);
}

/// Bracket [M0 - v . M1] summed over species, in double-double.
inline std::array<DoubleDouble, 4> moment_bracket(const MomentSet& m, const Direction& v) noexcept {
  const auto& nu = m[Species::neutrino];
  const auto& nubar = m[Species::antineutrino];
  std::array<DoubleDouble, 4> out;
  for (std::size_t i = 0; i < 4; ++i) {
    DoubleDouble t = nu.m0.e[i] + nubar.m0.e[i];
    for (std::size_t c = 0; c < 3; ++c) t = t - (nu.m1[c].e[i] + nubar.m1[c].e[i]) * v[c];
    out[i] = t;
  }
  return out;
}

/// mu0 (R / r)^2 in double-double.
inline DoubleDouble coupling_at(double mu0, double radius_ns, double r) noexcept {
  const DoubleDouble g = divide(radius_ns, r);
  return (g * g) * mu0;
}

/// mu0 (R/r)^2 [M0 - v . M1], rounded once per entry.
inline Packed2 neutrino_potential_packed(const MomentSet& m, const Direction& v, double mu0,
                                         double radius_ns) noexcept {
  const auto b = moment_bracket(m, v);
  const DoubleDouble f = coupling_at(mu0, radius_ns, m.radius);
  return {(b[0] * f).value(), (b[1] * f).value(), (b[2] * f).value(), (b[3] * f).value()};
}

/// H_nu for a beam moving along v at radius r.
inline HermitianMatrix neutrino_potential(const MomentSet& m, const Direction& v, double r, double mu0,
                                          double radius_ns) {
  if (m.radius != r) {
    throw IntegrityError("neutrino_potential: moments computed at r = " + std::to_string(m.radius) +
                         ", requested r = " + std::to_string(r));
  }
  return to_matrix(neutrino_potential_packed(m, v, mu0, radius_ns));
}

}  // namespace xflat
