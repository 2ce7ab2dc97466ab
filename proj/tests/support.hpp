// Shared test helpers: temp directories, tone synthesis, and the measurement
// oracles (direct transfer-function evaluation, projection-based amplitude
// estimates, cross-correlation lag). These are written against definitions,
// not against the library's filtering path.
#pragma once

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neurowave/dsp.hpp"

namespace testsupport {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto stamp =
        std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("neurowave-" + tag + "-" + std::to_string(stamp) + "-" +
             std::to_string(counter_++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

inline Eigen::VectorXd sine(double freq_hz, double fs, int n,
                            double amplitude = 1.0, double phase = 0.0) {
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i)
    x[i] = amplitude * std::sin(2.0 * M_PI * freq_hz * i / fs + phase);
  return x;
}

// |H(e^{j 2 pi f / fs})| evaluated directly on the unit circle, section by
// section.
inline double sos_magnitude(const neurowave::FilterCoeffs& coeffs, double f_hz) {
  const double w = 2.0 * M_PI * f_hz / coeffs.sample_rate_hz;
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h(1.0, 0.0);
  for (const auto& s : coeffs.sections)
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return std::abs(h);
}

// Roots of z^2 + a1 z + a2 via the quadratic formula; stability is judged
// from the actual root magnitudes.
inline bool section_roots_inside_unit_circle(const neurowave::Biquad& s) {
  const std::complex<double> disc =
      std::sqrt(std::complex<double>(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
  const std::complex<double> r1 = (-s.a1 + disc) / 2.0;
  const std::complex<double> r2 = (-s.a1 - disc) / 2.0;
  return std::abs(r1) < 1.0 && std::abs(r2) < 1.0;
}

// Amplitude of the component at freq_hz over [first, first+count), estimated
// by projection onto the complex exponential.
inline double tone_amplitude(const Eigen::VectorXd& x, double freq_hz,
                             double fs, int first, int count) {
  std::complex<double> acc(0.0, 0.0);
  for (int i = 0; i < count; ++i) {
    const int t = first + i;
    acc += x[t] * std::polar(1.0, -2.0 * M_PI * freq_hz * t / fs);
  }
  return 2.0 * std::abs(acc) / count;
}

inline double to_db(double ratio) { return 20.0 * std::log10(ratio); }

// Largest meaningful lag search radius for a tone: under half its period,
// since a sinusoid correlates with itself at every whole period.
inline int lag_bound(double freq_hz, double fs) {
  return std::max(2, static_cast<int>(std::floor(fs / freq_hz / 2.0)) - 1);
}

// Lag of the cross-correlation peak between a and b over [-max_lag, max_lag],
// computed on the middle stretch so edges stay out of the estimate.
inline int xcorr_peak_lag(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                          int max_lag) {
  const int n = static_cast<int>(a.size());
  const int lo = n / 4;
  const int hi = 3 * n / 4;
  int best_lag = 0;
  double best = -1.0;
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    double acc = 0.0;
    for (int t = lo; t < hi; ++t) {
      const int u = t + lag;
      if (u >= 0 && u < n) acc += a[t] * b[u];
    }
    if (std::abs(acc) > best) {
      best = std::abs(acc);
      best_lag = lag;
    }
  }
  return best_lag;
}

// Population variance, written out directly.
inline double population_variance(const Eigen::VectorXd& x) {
  const double mean = x.mean();
  double acc = 0.0;
  for (int i = 0; i < x.size(); ++i)
    acc += (x[i] - mean) * (x[i] - mean);
  return acc / static_cast<double>(x.size());
}

}  // namespace testsupport
