#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace neurowave {

// Ordinal label encoding is fixed for the lifetime of every file format.
enum class Label : std::uint8_t { negative = 0, neutral = 1, positive = 2 };

constexpr int kNumClasses = 3;

const char* to_string(Label label);
Label label_from_int(int value);  // throws on values outside {0, 1, 2}

// The five target electrodes, in the canonical channel-axis order used by
// every feature tensor and model input.
extern const std::array<const char*, 5> kTargetChannels;

// One multichannel EEG recording. Rows of `samples` follow `channel_names`;
// values are microvolts stored at 32-bit precision.
struct RawTrial {
  std::string trial_id;
  std::uint32_t sample_rate_hz{0};
  std::vector<std::string> channel_names;
  Eigen::MatrixXf samples;  // channels x samples
  Label label{Label::negative};
  std::string culture;

  int n_channels() const { return static_cast<int>(samples.rows()); }
  std::int64_t n_samples() const { return samples.cols(); }
  void validate() const;  // throws when an invariant is broken
};

struct ManifestEntry {
  std::string trial_id;
  std::string path;  // relative to the manifest's directory
  Label label{Label::negative};
  std::string culture;
  int n_channels{0};
  std::int64_t n_samples{0};
};

struct LabelCounts {
  std::array<std::int64_t, kNumClasses> per_class{0, 0, 0};

  std::int64_t total() const {
    return per_class[0] + per_class[1] + per_class[2];
  }
  std::int64_t& operator[](Label l) { return per_class[static_cast<int>(l)]; }
  std::int64_t operator[](Label l) const {
    return per_class[static_cast<int>(l)];
  }
  bool operator==(const LabelCounts&) const = default;
};

struct DatasetManifest {
  int version{1};
  std::vector<ManifestEntry> trials;
  LabelCounts counts;
};

struct SplitAssignment {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed{0};
};

// Parameters for the synthetic corpus generator. Each class is a mixture of
// band-centre sinusoids whose per-band, per-channel amplitudes come from
// band_profile[class] (5 bands x 5 channels, delta..gamma by AF3..Pz), plus
// white Gaussian noise scaled by noise_floor.
struct SynthSpec {
  int n_trials_per_class{20};
  double duration_s{4.0};
  std::uint32_t sample_rate_hz{200};
  std::array<Eigen::Matrix<double, 5, 5>, kNumClasses> band_profile;
  double noise_floor{0.1};
  std::uint64_t seed{1};

  void validate() const;
};

// Profiles with one dominant band per class (negative: beta, neutral: theta,
// positive: alpha) so generated classes are separable by band power.
std::array<Eigen::Matrix<double, 5, 5>, kNumClasses> default_band_profiles();

SynthSpec default_synth_spec();

// Trial container format ("ETRL"): 64-byte header, channel-name table,
// channel-major float32 little-endian payload. See write_trial in corpus.cpp
// for the exact layout.
void write_trial(const RawTrial& trial, const std::string& path);
RawTrial read_trial(const std::string& path);

// Recomputes per-label counts and the total; throws when the stored tallies
// disagree, the manifest is empty, a label is out of range, or a trial_id
// repeats.
LabelCounts validate_manifest(const DatasetManifest& manifest);

// Checks that every referenced trial file exists under `root`.
void validate_manifest_files(const DatasetManifest& manifest,
                             const std::string& root);

// Returns the trial reduced (and re-ordered) to `names`. Retained rows are
// bit-identical to the source rows.
RawTrial select_channels(const RawTrial& trial,
                         const std::vector<std::string>& names);

// Writes n_trials_per_class x 3 trial files plus manifest.json into out_dir.
// Byte-identical output for equal (spec, seed).
DatasetManifest synthesize_dataset(const SynthSpec& spec,
                                   const std::string& out_dir);

// Seeded trial-level shuffle, then sizes train = floor(r0*N),
// test = floor(r2*N), validation = remainder.
SplitAssignment partition(const DatasetManifest& manifest,
                          std::array<double, 3> ratios, std::uint64_t seed);

inline SplitAssignment partition(const DatasetManifest& manifest,
                                 std::uint64_t seed) {
  return partition(manifest, {0.70, 0.15, 0.15}, seed);
}

struct ClassStats {
  LabelCounts counts;
  double imbalance_ratio{0.0};  // (max - min) / mean of the class counts
};

ClassStats class_stats(const LabelCounts& counts);

// Manifest and split persistence (JSON).
void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_manifest(const std::string& path);
void write_split(const SplitAssignment& split, const std::string& path);
SplitAssignment read_split(const std::string& path);

// Reads a montage table: one channel label per line, '#' comments allowed.
std::vector<std::string> load_channel_names(const std::string& path);

}  // namespace neurowave
