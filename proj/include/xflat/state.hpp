#pragma once

// Structure-of-arrays flavor amplitudes.
//
// One contiguous buffer holds every amplitude of a rank's slice, ordered
//   species, local theta, phi, flavor component, {re, im}, energy
// so that each (species, beam, component) owns one contiguous real array and
// one contiguous imaginary array over energy bins. The snapshot payload is
// this buffer verbatim.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xflat/error.hpp"
#include "xflat/grid.hpp"
#include "xflat/hermitian.hpp"
#include "xflat/spectra.hpp"

namespace xflat {

struct AmplitudeLayout {
  std::size_t n_beams = 0;
  std::size_t n_flavors = 2;
  std::size_t n_energy = 0;

  std::size_t size() const noexcept { return kSpeciesCount * n_beams * n_flavors * 2 * n_energy; }

  /// Offset of the real array of (species, beam, component); the imaginary
  /// array follows immediately.
  std::size_t offset(Species s, std::size_t beam, std::size_t component) const noexcept {
    return ((index_of(s) * n_beams + beam) * n_flavors + component) * 2 * n_energy;
  }

  friend bool operator==(const AmplitudeLayout&, const AmplitudeLayout&) = default;
};

/// Amplitude-shaped storage (ensemble state, substep states, derivatives).
class AmplitudeBuffer {
 public:
  AmplitudeBuffer() = default;
  explicit AmplitudeBuffer(const AmplitudeLayout& layout) : layout_(layout), data_(layout.size(), 0.0) {}

  const AmplitudeLayout& layout() const noexcept { return layout_; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::span<double> re(Species s, std::size_t beam, std::size_t c) noexcept {
    return {data_.data() + layout_.offset(s, beam, c), layout_.n_energy};
  }
  std::span<double> im(Species s, std::size_t beam, std::size_t c) noexcept {
    return {data_.data() + layout_.offset(s, beam, c) + layout_.n_energy, layout_.n_energy};
  }
  std::span<const double> re(Species s, std::size_t beam, std::size_t c) const noexcept {
    return {data_.data() + layout_.offset(s, beam, c), layout_.n_energy};
  }
  std::span<const double> im(Species s, std::size_t beam, std::size_t c) const noexcept {
    return {data_.data() + layout_.offset(s, beam, c) + layout_.n_energy, layout_.n_energy};
  }

  friend bool operator==(const AmplitudeBuffer&, const AmplitudeBuffer&) = default;

 private:
  AmplitudeLayout layout_;
  std::vector<double> data_;
};

struct ThetaRange {
  std::size_t begin = 0;
  std::size_t count = 0;

  std::size_t end() const noexcept { return begin + count; }
  friend bool operator==(const ThetaRange&, const ThetaRange&) = default;
};

/// Flavor amplitudes and emission weights of a contiguous polar-angle slice.
class Ensemble {
 public:
  Ensemble(std::shared_ptr<const Grid> grid, const Spectra& spectra, ThetaRange slice)
      : grid_(std::move(grid)), slice_(slice) {
    if (!grid_) throw ConfigError("grid", "ensemble requires a grid");
    if (slice_.end() > grid_->n_theta()) {
      throw ConfigError("theta range", "slice [" + std::to_string(slice_.begin) + ", " +
                                           std::to_string(slice_.end()) + ") exceeds n_theta = " +
                                           std::to_string(grid_->n_theta()));
    }
    spectra.validate();
    amplitudes_ = AmplitudeBuffer(AmplitudeLayout{slice_.count * grid_->n_phi(), grid_->n_flavors(),
                                                  grid_->n_energy()});
    for (auto s : kAllSpecies) {
      for (std::size_t f = 0; f < kEmissionFlavorCount; ++f) {
        spectral_[index_of(s)][f] = xflat::spectral_weights(*grid_, spectra.table[index_of(s)][f]);
      }
    }
    beam_measure_.resize(n_beams());
    for (std::size_t t = 0; t < slice_.count; ++t) {
      for (std::size_t p = 0; p < grid_->n_phi(); ++p) {
        beam_measure_[t * grid_->n_phi() + p] =
            grid_->u_weights()[slice_.begin + t] * grid_->phi_weights()[p];
      }
    }
    reset_to_emission_state();
  }

  const Grid& grid() const noexcept { return *grid_; }
  const std::shared_ptr<const Grid>& grid_ptr() const noexcept { return grid_; }
  ThetaRange slice() const noexcept { return slice_; }
  std::size_t n_theta_local() const noexcept { return slice_.count; }
  std::size_t n_beams() const noexcept { return slice_.count * grid_->n_phi(); }
  std::size_t n_flavors() const noexcept { return grid_->n_flavors(); }
  std::size_t n_energy() const noexcept { return grid_->n_energy(); }

  /// Local beam index of (local theta, phi).
  std::size_t beam(std::size_t theta_local, std::size_t phi) const noexcept {
    return theta_local * grid_->n_phi() + phi;
  }
  std::size_t global_theta(std::size_t beam) const noexcept { return slice_.begin + beam / grid_->n_phi(); }
  std::size_t phi_index(std::size_t beam) const noexcept { return beam % grid_->n_phi(); }

  double radius() const noexcept { return r_; }
  void set_radius(double r) noexcept { r_ = r; }

  AmplitudeBuffer& amplitudes() noexcept { return amplitudes_; }
  const AmplitudeBuffer& amplitudes() const noexcept { return amplitudes_; }

  std::span<double> re(Species s, std::size_t beam, std::size_t c) { return amplitudes_.re(s, beam, c); }
  std::span<double> im(Species s, std::size_t beam, std::size_t c) { return amplitudes_.im(s, beam, c); }
  std::span<const double> re(Species s, std::size_t beam, std::size_t c) const { return amplitudes_.re(s, beam, c); }
  std::span<const double> im(Species s, std::size_t beam, std::size_t c) const { return amplitudes_.im(s, beam, c); }

  /// Spectral part of the weight: f_hat(E_k) dE_k L / <E>.
  std::span<const double> spectral_weights(Species s, EmissionFlavor f) const noexcept {
    return spectral_[index_of(s)][static_cast<std::size_t>(f)];
  }

  /// du * dphi of a local beam.
  double beam_measure(std::size_t beam) const noexcept { return beam_measure_[beam]; }

  /// Number-flux quadrature weight of one (species, initial flavor, beam, energy) bin.
  double weight(Species s, EmissionFlavor f, std::size_t beam, std::size_t k) const noexcept {
    return spectral_[index_of(s)][static_cast<std::size_t>(f)][k] * beam_measure_[beam];
  }

  /// Every amplitude becomes the electron-flavor basis vector at r = R.
  void reset_to_emission_state() {
    auto data = amplitudes_.data();
    std::fill(data.begin(), data.end(), 0.0);
    for (auto s : kAllSpecies) {
      for (std::size_t b = 0; b < n_beams(); ++b) {
        auto re0 = amplitudes_.re(s, b, 0);
        std::fill(re0.begin(), re0.end(), 1.0);
      }
    }
    r_ = grid_->radius_ns();
  }

 private:
  std::shared_ptr<const Grid> grid_;
  ThetaRange slice_;
  AmplitudeBuffer amplitudes_;
  std::array<std::array<std::vector<double>, kEmissionFlavorCount>, kSpeciesCount> spectral_;
  std::vector<double> beam_measure_;
  double r_ = 0.0;
};

inline Ensemble init_ensemble(std::shared_ptr<const Grid> grid, const Spectra& spectra) {
  const std::size_t n = grid ? grid->n_theta() : 0;
  return Ensemble(std::move(grid), spectra, ThetaRange{0, n});
}

inline Ensemble init_ensemble(std::shared_ptr<const Grid> grid, const Spectra& spectra, ThetaRange slice) {
  return Ensemble(std::move(grid), spectra, slice);
}

namespace detail {
inline void check_indices(const Ensemble& e, std::size_t beam, std::size_t k) {
  if (beam >= e.n_beams()) {
    throw DomainError("beam index " + std::to_string(beam) + " out of range (" + std::to_string(e.n_beams()) + ")");
  }
  if (k >= e.n_energy()) {
    throw DomainError("energy index " + std::to_string(k) + " out of range (" + std::to_string(e.n_energy()) + ")");
  }
}
}  // namespace detail

/// rho = psi psi^dagger.
inline HermitianMatrix density_matrix(const Ensemble& e, Species s, std::size_t beam, std::size_t k) {
  detail::check_indices(e, beam, k);
  const std::size_t n = e.n_flavors();
  HermitianMatrix m(n);
  for (std::size_t a = 0; a < n; ++a) {
    const std::complex<double> pa(e.re(s, beam, a)[k], e.im(s, beam, a)[k]);
    m.set_diag(a, pa.real() * pa.real() + pa.imag() * pa.imag());
    for (std::size_t b = a + 1; b < n; ++b) {
      const std::complex<double> pb(e.re(s, beam, b)[k], e.im(s, beam, b)[k]);
      m.set(a, b, pa * std::conj(pb));
    }
  }
  return m;
}

inline double survival_probability(const Ensemble& e, Species s, std::size_t beam, std::size_t k,
                                   std::size_t flavor) {
  detail::check_indices(e, beam, k);
  if (flavor >= e.n_flavors()) throw DomainError("flavor index " + std::to_string(flavor) + " out of range");
  const double re = e.re(s, beam, flavor)[k];
  const double im = e.im(s, beam, flavor)[k];
  return re * re + im * im;
}

/// Largest |norm - 1| over all amplitude vectors; NaN if any is non-finite.
inline double max_norm_deviation(const AmplitudeBuffer& buf) {
  const auto& L = buf.layout();
  double worst = 0.0;
  for (auto s : kAllSpecies) {
    for (std::size_t b = 0; b < L.n_beams; ++b) {
      for (std::size_t k = 0; k < L.n_energy; ++k) {
        double n2 = 0.0;
        for (std::size_t c = 0; c < L.n_flavors; ++c) {
          const double re = buf.re(s, b, c)[k];
          const double im = buf.im(s, b, c)[k];
          n2 += re * re + im * im;
        }
        const double dev = std::abs(std::sqrt(n2) - 1.0);
        if (!std::isfinite(dev)) return dev;
        worst = std::max(worst, dev);
      }
    }
  }
  return worst;
}

inline double max_norm_deviation(const Ensemble& e) { return max_norm_deviation(e.amplitudes()); }

/// Rescales every amplitude vector to unit norm. Returns the largest |norm - 1|
/// seen before rescaling.
inline double renormalize(Ensemble& e) {
  auto& buf = e.amplitudes();
  const auto& L = buf.layout();
  double worst = 0.0;
  for (auto s : kAllSpecies) {
    for (std::size_t b = 0; b < L.n_beams; ++b) {
      for (std::size_t k = 0; k < L.n_energy; ++k) {
        double n2 = 0.0;
        for (std::size_t c = 0; c < L.n_flavors; ++c) {
          const double re = buf.re(s, b, c)[k];
          const double im = buf.im(s, b, c)[k];
          n2 += re * re + im * im;
        }
        const double norm = std::sqrt(n2);
        if (!(norm > 0.0) || !std::isfinite(norm)) {
          throw IntegrityError("renormalize: amplitude vector with norm " + std::to_string(norm) + " (" +
                               to_string(s) + ", beam " + std::to_string(b) + ", energy " + std::to_string(k) +
                               ")");
        }
        worst = std::max(worst, std::abs(norm - 1.0));
        if (norm == 1.0) continue;
        const double inv = 1.0 / norm;
        for (std::size_t c = 0; c < L.n_flavors; ++c) {
          buf.re(s, b, c)[k] *= inv;
          buf.im(s, b, c)[k] *= inv;
        }
      }
    }
  }
  return worst;
}

}  // namespace xflat
