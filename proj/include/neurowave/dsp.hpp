#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neurowave/corpus.hpp"

namespace neurowave {

enum class Band { delta = 0, theta = 1, alpha = 2, beta = 3, gamma = 4 };

struct BandDef {
  Band band{Band::delta};
  double lo_hz{0.0};
  double hi_hz{0.0};
  const char* name() const;
};

// delta 0.5-4, theta 4-8, alpha 8-13, beta 13-30, gamma 30-45 Hz.
const std::array<BandDef, 5>& canonical_bands();

// Arithmetic band midpoints (2.25, 6, 10.5, 21.5, 37.5 Hz); the synthetic
// generator places its sinusoids here.
double band_center_hz(Band band);

// One second-order section; denominator normalized to (1, a1, a2).
struct Biquad {
  double b0{0.0}, b1{0.0}, b2{0.0};
  double a1{0.0}, a2{0.0};
  bool stable() const;  // poles strictly inside the unit circle
};

struct FilterCoeffs {
  std::vector<Biquad> sections;
  BandDef band;
  int order{0};  // analog prototype order; the band-pass has 2x this
  double sample_rate_hz{0.0};

  int cascade_order() const { return 2 * static_cast<int>(sections.size()); }
  bool stable() const;
};

// Butterworth band-pass realized as second-order sections via the bilinear
// transform with edge pre-warping. `order` is the analog prototype order.
FilterCoeffs design_bandpass(const BandDef& band, double fs_hz, int order = 4);

// Forward-backward filtering: zero net phase, attenuation doubled in dB.
// Ends are extended by odd reflection over 3x the cascade order to absorb
// startup transients; output length equals input length.
Eigen::VectorXd apply_zero_phase(const Eigen::VectorXd& signal,
                                 const FilterCoeffs& coeffs);

// Consecutive non-overlapping one-second windows; the trailing remainder
// shorter than one window is dropped.
std::vector<Eigen::VectorXd> epoch_signal(const Eigen::VectorXd& signal,
                                          int sample_rate_hz);

// DE of a Gaussian-modeled segment: 0.5 * ln(2*pi*e * max(variance, floor)).
double differential_entropy(double variance, double variance_floor = 1e-12);

// Per-trial DE features, shape T x 5 bands x 5 channels stored row-major as
// a T x 25 matrix (column index = band * 5 + channel). Band axis runs
// delta..gamma; channel axis follows kTargetChannels.
struct FeatureTensor {
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values;
  std::string trial_id;
  Label label{Label::negative};

  int n_windows() const { return static_cast<int>(values.rows()); }
  float at(int t, int band, int channel) const {
    return values(t, band * 5 + channel);
  }
};

struct FeaturizeOptions {
  std::vector<std::string> channels{kTargetChannels.begin(),
                                    kTargetChannels.end()};
  int filter_order{4};
  double variance_floor{1e-12};
  double window_s{1.0};
};

// Filter (zero-phase), epoch, per-epoch population variance, DE. The trial
// must carry exactly the expected channels in order. DSP runs at 64-bit;
// features are stored at 32-bit.
FeatureTensor featurize_trial(const RawTrial& trial,
                              const FeaturizeOptions& options = {});

// Feature container format ("EFTR"): magic, version u16, T u32, n_bands u16,
// n_channels u16, label u8, trial-id length u8 + bytes, then T*5*5 float32
// little-endian values in (time, band, channel) row-major order.
void write_features(const FeatureTensor& features, const std::string& path);
FeatureTensor read_features(const std::string& path);

}  // namespace neurowave
