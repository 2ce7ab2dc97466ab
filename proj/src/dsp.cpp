#include "neurowave/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace neurowave {

namespace {
using cplx = std::complex<double>;
}

const char* BandDef::name() const {
  switch (band) {
    case Band::delta: return "delta";
    case Band::theta: return "theta";
    case Band::alpha: return "alpha";
    case Band::beta: return "beta";
    case Band::gamma: return "gamma";
  }
  return "?";
}

const std::array<BandDef, 5>& canonical_bands() {
  static const std::array<BandDef, 5> bands = {{{Band::delta, 0.5, 4.0},
                                                {Band::theta, 4.0, 8.0},
                                                {Band::alpha, 8.0, 13.0},
                                                {Band::beta, 13.0, 30.0},
                                                {Band::gamma, 30.0, 45.0}}};
  return bands;
}

double band_center_hz(Band band) {
  const auto& def = canonical_bands()[static_cast<int>(band)];
  return 0.5 * (def.lo_hz + def.hi_hz);
}

bool Biquad::stable() const {
  // z^2 + a1 z + a2: both roots strictly inside the unit circle iff
  // |a2| < 1 and |a1| < 1 + a2 (Schur-Cohn for a monic quadratic).
  return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
}

bool FilterCoeffs::stable() const {
  return std::all_of(sections.begin(), sections.end(),
                     [](const Biquad& s) { return s.stable(); });
}

// ---------------------------------------------------------------------------
// Design: analog Butterworth prototype -> band-pass -> bilinear -> sections
// ---------------------------------------------------------------------------

FilterCoeffs design_bandpass(const BandDef& band, double fs_hz, int order) {
  if (order < 2) throw std::runtime_error("filter order must be at least 2");
  if (!(fs_hz > 0.0)) throw std::runtime_error("sample rate must be positive");
  if (!(band.lo_hz > 0.0))
    throw std::runtime_error("low band edge must be positive");
  if (!(band.lo_hz < band.hi_hz))
    throw std::runtime_error("band edges must satisfy lo < hi");
  if (band.hi_hz >= fs_hz / 2.0)
    throw std::runtime_error("band edge exceeds Nyquist frequency");

  // Pre-warp the edges so the bilinear transform lands them exactly.
  const double fs2 = 2.0 * fs_hz;
  const double w1 = fs2 * std::tan(M_PI * band.lo_hz / fs_hz);
  const double w2 = fs2 * std::tan(M_PI * band.hi_hz / fs_hz);
  const double w0 = std::sqrt(w1 * w2);
  const double bw = w2 - w1;

  // Unit-cutoff lowpass prototype poles, all in the left half-plane.
  std::vector<cplx> lp_poles;
  for (int m = -order + 1; m <= order - 1; m += 2)
    lp_poles.push_back(-std::exp(cplx(0.0, M_PI * m / (2.0 * order))));

  // Lowpass -> bandpass: every prototype pole splits in two; the prototype's
  // N zeros at infinity become N at the origin and N more at infinity.
  std::vector<cplx> poles;
  for (const cplx& p : lp_poles) {
    const cplx q = p * (bw / 2.0);
    const cplx d = std::sqrt(q * q - w0 * w0);
    poles.push_back(q + d);
    poles.push_back(q - d);
  }
  const double k_analog = std::pow(bw, order);

  // Bilinear transform. Analog zeros (N at s=0) map to z=+1; the N zeros at
  // infinity map to z=-1. Gain picks up prod(fs2 - s_z) / prod(fs2 - s_p),
  // where the zero product is fs2^N.
  cplx pole_prod(1.0, 0.0);
  std::vector<cplx> zpoles;
  zpoles.reserve(poles.size());
  for (const cplx& p : poles) {
    pole_prod *= fs2 - p;
    zpoles.push_back((fs2 + p) / (fs2 - p));
  }
  const double k_digital =
      k_analog * (std::pow(fs2, order) / pole_prod).real();

  // Pair conjugate poles into biquads; every section takes one zero at +1 and
  // one at -1, so each numerator is g * (z^2 - 1).
  std::vector<cplx> upper, lower, reals;
  const double imag_tol = 1e-10;
  for (const cplx& p : zpoles) {
    if (p.imag() > imag_tol) upper.push_back(p);
    else if (p.imag() < -imag_tol) lower.push_back(p);
    else reals.push_back(p);
  }
  std::vector<std::pair<cplx, cplx>> pairs;
  for (const cplx& p : upper) {
    auto best = lower.end();
    double best_dist = 0.0;
    for (auto it = lower.begin(); it != lower.end(); ++it) {
      const double dist = std::abs(std::conj(p) - *it);
      if (best == lower.end() || dist < best_dist) {
        best = it;
        best_dist = dist;
      }
    }
    if (best == lower.end())
      throw std::runtime_error("pole pairing failed (unmatched conjugate)");
    pairs.emplace_back(p, *best);
    lower.erase(best);
  }
  if (!lower.empty())
    throw std::runtime_error("pole pairing failed (unmatched conjugate)");
  std::sort(reals.begin(), reals.end(),
            [](const cplx& a, const cplx& b) { return a.real() < b.real(); });
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2)
    pairs.emplace_back(reals[i], reals[i + 1]);
  if (reals.size() % 2 != 0)
    throw std::runtime_error("pole pairing failed (odd real pole count)");

  if (k_digital <= 0.0)
    throw std::runtime_error("non-positive design gain");
  const double g =
      std::pow(k_digital, 1.0 / static_cast<double>(pairs.size()));

  FilterCoeffs coeffs;
  coeffs.band = band;
  coeffs.order = order;
  coeffs.sample_rate_hz = fs_hz;
  for (const auto& [p1, p2] : pairs) {
    Biquad s;
    s.b0 = g;
    s.b1 = 0.0;
    s.b2 = -g;
    s.a1 = -(p1 + p2).real();
    s.a2 = (p1 * p2).real();
    if (!s.stable())
      throw std::runtime_error(std::string("unstable section in ") +
                               band.name() + " design");
    coeffs.sections.push_back(s);
  }
  return coeffs;
}

// ---------------------------------------------------------------------------
// Zero-phase application
// ---------------------------------------------------------------------------

namespace {

// Direct form II transposed, zero initial state.
void run_cascade(Eigen::VectorXd& x, const FilterCoeffs& coeffs) {
  for (const Biquad& s : coeffs.sections) {
    double z1 = 0.0, z2 = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double in = x[i];
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      x[i] = out;
    }
  }
}

}  // namespace

Eigen::VectorXd apply_zero_phase(const Eigen::VectorXd& signal,
                                 const FilterCoeffs& coeffs) {
  if (coeffs.sections.empty()) throw std::runtime_error("empty filter cascade");
  const Eigen::Index n = signal.size();
  const Eigen::Index pad = 3 * coeffs.cascade_order();
  if (n <= pad)
    throw std::runtime_error("signal too short for zero-phase filtering");

  // Odd reflection about each endpoint keeps the extension continuous in
  // value, which suppresses edge transients; the extension is linear in the
  // signal, so filtering stays exactly linear.
  Eigen::VectorXd ext(n + 2 * pad);
  for (Eigen::Index i = 0; i < pad; ++i)
    ext[i] = 2.0 * signal[0] - signal[pad - i];
  ext.segment(pad, n) = signal;
  for (Eigen::Index i = 0; i < pad; ++i)
    ext[pad + n + i] = 2.0 * signal[n - 1] - signal[n - 2 - i];

  run_cascade(ext, coeffs);
  ext.reverseInPlace();
  run_cascade(ext, coeffs);
  ext.reverseInPlace();
  return ext.segment(pad, n);
}

std::vector<Eigen::VectorXd> epoch_signal(const Eigen::VectorXd& signal,
                                          int sample_rate_hz) {
  if (sample_rate_hz < 1)
    throw std::runtime_error("sample rate must be positive");
  const Eigen::Index window = sample_rate_hz;
  if (signal.size() < window)
    throw std::runtime_error("signal shorter than one window");
  const Eigen::Index count = signal.size() / window;
  std::vector<Eigen::VectorXd> epochs;
  epochs.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index t = 0; t < count; ++t)
    epochs.push_back(signal.segment(t * window, window));
  return epochs;
}

double differential_entropy(double variance, double variance_floor) {
  if (variance < 0.0)
    throw std::runtime_error("negative variance passed to differential_entropy");
  if (!(variance_floor > 0.0))
    throw std::runtime_error("variance floor must be positive");
  const double v = std::max(variance, variance_floor);
  return 0.5 * std::log(2.0 * M_PI * M_E * v);
}

// ---------------------------------------------------------------------------
// Featurization
// ---------------------------------------------------------------------------

FeatureTensor featurize_trial(const RawTrial& trial,
                              const FeaturizeOptions& options) {
  trial.validate();
  if (options.channels.size() != 5)
    throw std::runtime_error("featurization expects exactly 5 channels");
  if (trial.channel_names.size() != options.channels.size() ||
      !std::equal(options.channels.begin(), options.channels.end(),
                  trial.channel_names.begin()))
    throw std::runtime_error(
        "trial channels do not match the expected channel set/order");
  if (trial.sample_rate_hz < 90)
    throw std::runtime_error("sample rate below 90 Hz cannot cover gamma");
  if (!(options.window_s > 0.0))
    throw std::runtime_error("window length must be positive");

  const double fs = trial.sample_rate_hz;
  const Eigen::Index window = static_cast<Eigen::Index>(
      std::llround(options.window_s * fs));
  const Eigen::Index n = trial.n_samples();
  const Eigen::Index t_count = n / window;
  if (t_count < 1) throw std::runtime_error("trial shorter than one window");

  std::array<FilterCoeffs, 5> bank;
  for (int b = 0; b < 5; ++b)
    bank[b] = design_bandpass(canonical_bands()[b], fs, options.filter_order);

  FeatureTensor out;
  out.trial_id = trial.trial_id;
  out.label = trial.label;
  out.values.resize(t_count, 25);

  for (int ch = 0; ch < 5; ++ch) {
    const Eigen::VectorXd channel =
        trial.samples.row(ch).transpose().cast<double>();
    for (int b = 0; b < 5; ++b) {
      const Eigen::VectorXd filtered = apply_zero_phase(channel, bank[b]);
      for (Eigen::Index t = 0; t < t_count; ++t) {
        const auto seg = filtered.segment(t * window, window);
        const double mean = seg.mean();
        const double variance =
            (seg.array() - mean).matrix().squaredNorm() /
            static_cast<double>(window);
        out.values(t, b * 5 + ch) = static_cast<float>(
            differential_entropy(variance, options.variance_floor));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature file IO ("EFTR", version 1)
// ---------------------------------------------------------------------------

namespace {

constexpr char kFeatureMagic[4] = {'E', 'F', 'T', 'R'};

void append_le(std::string& buf, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

void write_features(const FeatureTensor& features, const std::string& path) {
  if (features.n_windows() < 1)
    throw std::runtime_error("feature tensor must have at least one window");
  if (features.values.cols() != 25)
    throw std::runtime_error("feature tensor must be T x 5 x 5");
  if (!features.values.allFinite())
    throw std::runtime_error("non-finite feature value");
  if (features.trial_id.size() > 0xFF)
    throw std::runtime_error("trial id longer than 255 bytes");

  std::string buf;
  buf.append(kFeatureMagic, 4);
  append_le(buf, 1, 2);  // version
  append_le(buf, static_cast<std::uint64_t>(features.n_windows()), 4);
  append_le(buf, 5, 2);  // bands
  append_le(buf, 5, 2);  // channels
  buf.push_back(static_cast<char>(features.label));
  buf.push_back(static_cast<char>(features.trial_id.size()));
  buf.append(features.trial_id);
  for (int t = 0; t < features.n_windows(); ++t)
    for (int col = 0; col < 25; ++col)
      append_le(buf, std::bit_cast<std::uint32_t>(features.values(t, col)), 4);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write feature file: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("I/O failure writing " + path);
}

FeatureTensor read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open feature file: " + path);

  auto read_exact = [&](char* dst, std::size_t count) {
    in.read(dst, static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count)
      throw std::runtime_error("truncated feature file: " + path);
  };
  auto read_le = [&](int bytes) {
    unsigned char b[8];
    read_exact(reinterpret_cast<char*>(b), static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  };

  char magic[4];
  read_exact(magic, 4);
  if (std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw std::runtime_error("bad magic in " + path);
  const auto version = read_le(2);
  if (version != 1)
    throw std::runtime_error("unsupported feature file version");
  const auto t_count = static_cast<Eigen::Index>(read_le(4));
  const auto n_bands = read_le(2);
  const auto n_channels = read_le(2);
  if (n_bands != 5 || n_channels != 5)
    throw std::runtime_error("unexpected feature tensor axes in " + path);
  if (t_count < 1) throw std::runtime_error("empty feature tensor in " + path);

  FeatureTensor features;
  features.label = label_from_int(static_cast<int>(read_le(1)));
  const auto id_len = read_le(1);
  features.trial_id.resize(id_len);
  read_exact(features.trial_id.data(), id_len);

  features.values.resize(t_count, 25);
  for (Eigen::Index t = 0; t < t_count; ++t)
    for (int col = 0; col < 25; ++col)
      features.values(t, col) =
          std::bit_cast<float>(static_cast<std::uint32_t>(read_le(4)));
  if (!features.values.allFinite())
    throw std::runtime_error("non-finite feature value in " + path);
  return features;
}

}  // namespace neurowave
