#include "neurowave/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "neurowave/dsp.hpp"
#include "neurowave/rng.hpp"

namespace neurowave {

namespace fs = std::filesystem;
using nlohmann::json;

const std::array<const char*, 5> kTargetChannels = {"AF3", "AF4", "T7", "T8",
                                                    "Pz"};

const char* to_string(Label label) {
  switch (label) {
    case Label::negative: return "negative";
    case Label::neutral: return "neutral";
    case Label::positive: return "positive";
  }
  throw std::runtime_error("unknown label value");
}

Label label_from_int(int value) {
  if (value < 0 || value >= kNumClasses)
    throw std::runtime_error("unknown label value: " + std::to_string(value));
  return static_cast<Label>(value);
}

void RawTrial::validate() const {
  if (sample_rate_hz == 0)
    throw std::runtime_error("trial " + trial_id + ": sample rate must be positive");
  if (samples.rows() != static_cast<Eigen::Index>(channel_names.size()))
    throw std::runtime_error("trial " + trial_id +
                             ": channel count does not match channel_names");
  if (samples.cols() < 1)
    throw std::runtime_error("trial " + trial_id + ": needs at least one sample");
  if (!samples.allFinite())
    throw std::runtime_error("trial " + trial_id + ": non-finite sample");
  std::set<std::string> seen(channel_names.begin(), channel_names.end());
  if (seen.size() != channel_names.size())
    throw std::runtime_error("trial " + trial_id + ": duplicate channel name");
}

// ---------------------------------------------------------------------------
// Trial binary format ("ETRL", version 1)
//
//   offset  size  field
//   0       4     magic "ETRL"
//   4       2     version u16 = 1
//   6       2     flags u16 = 0
//   8       4     sample_rate_hz u32
//   12      2     n_channels u16
//   14      1     label u8
//   15      1     culture-tag length u8
//   16      k     culture-tag bytes (k <= 40 so the header stays 64 bytes)
//   16+k    8     n_samples u64
//   ..      ..    zero padding to byte 64
//
// Then the channel-name table (per channel: length u8 + bytes), then the
// payload: channel-major float32 little-endian, n_channels * n_samples values.
// All multi-byte integers are little-endian.
// ---------------------------------------------------------------------------

namespace {

constexpr char kTrialMagic[4] = {'E', 'T', 'R', 'L'};
constexpr std::size_t kHeaderSize = 64;
constexpr std::size_t kMaxCultureLen = kHeaderSize - 24;

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xFF));
  buf.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& buf, float v) {
  put_u32(buf, std::bit_cast<std::uint32_t>(v));
}

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open trial file: " + path);
  }

  void read_exact(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw std::runtime_error(std::string("truncated ") + what);
  }

  std::uint16_t u16(const char* what) {
    unsigned char b[2];
    read_exact(reinterpret_cast<char*>(b), 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    read_exact(reinterpret_cast<char*>(b), 4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  std::uint64_t u64(const char* what) {
    unsigned char b[8];
    read_exact(reinterpret_cast<char*>(b), 8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  std::uint8_t u8(const char* what) {
    unsigned char b;
    read_exact(reinterpret_cast<char*>(&b), 1, what);
    return b;
  }

 private:
  std::ifstream in_;
};

}  // namespace

void write_trial(const RawTrial& trial, const std::string& path) {
  trial.validate();
  if (trial.culture.size() > kMaxCultureLen)
    throw std::runtime_error("culture tag longer than " +
                             std::to_string(kMaxCultureLen) + " bytes");
  if (trial.n_channels() > 0xFFFF)
    throw std::runtime_error("too many channels");
  for (const auto& name : trial.channel_names)
    if (name.empty() || name.size() > 0xFF)
      throw std::runtime_error("channel name length must be 1..255 bytes");

  std::string buf;
  buf.reserve(kHeaderSize + trial.channel_names.size() * 8 +
              static_cast<std::size_t>(trial.samples.size()) * 4);
  buf.append(kTrialMagic, 4);
  put_u16(buf, 1);  // version
  put_u16(buf, 0);  // flags
  put_u32(buf, trial.sample_rate_hz);
  put_u16(buf, static_cast<std::uint16_t>(trial.n_channels()));
  buf.push_back(static_cast<char>(trial.label));
  buf.push_back(static_cast<char>(trial.culture.size()));
  buf.append(trial.culture);
  put_u64(buf, static_cast<std::uint64_t>(trial.n_samples()));
  buf.resize(kHeaderSize, '\0');

  for (const auto& name : trial.channel_names) {
    buf.push_back(static_cast<char>(name.size()));
    buf.append(name);
  }
  for (int ch = 0; ch < trial.n_channels(); ++ch)
    for (std::int64_t s = 0; s < trial.n_samples(); ++s)
      put_f32(buf, trial.samples(ch, s));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write trial file: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("I/O failure writing " + path);
}

RawTrial read_trial(const std::string& path) {
  Reader in(path);

  char header[kHeaderSize];
  in.read_exact(header, kHeaderSize, "header");
  if (std::memcmp(header, kTrialMagic, 4) != 0)
    throw std::runtime_error("bad magic in " + path);

  auto u16_at = [&](std::size_t off) {
    return static_cast<std::uint16_t>(
        static_cast<unsigned char>(header[off]) |
        (static_cast<unsigned char>(header[off + 1]) << 8));
  };
  const std::uint16_t version = u16_at(4);
  if (version != 1)
    throw std::runtime_error("unsupported version " + std::to_string(version) +
                             " in " + path);

  std::uint32_t fs = 0;
  for (int i = 3; i >= 0; --i)
    fs = (fs << 8) | static_cast<unsigned char>(header[8 + i]);
  const std::uint16_t n_channels = u16_at(12);
  const std::uint8_t label_raw = static_cast<unsigned char>(header[14]);
  const std::uint8_t culture_len = static_cast<unsigned char>(header[15]);
  if (culture_len > kMaxCultureLen)
    throw std::runtime_error("corrupt header: culture tag overruns header");

  RawTrial trial;
  trial.sample_rate_hz = fs;
  trial.label = label_from_int(label_raw);
  trial.culture.assign(header + 16, header + 16 + culture_len);
  std::uint64_t n_samples = 0;
  for (int i = 7; i >= 0; --i)
    n_samples = (n_samples << 8) |
                static_cast<unsigned char>(header[16 + culture_len + i]);
  if (n_samples == 0) throw std::runtime_error("corrupt header: zero samples");

  trial.channel_names.resize(n_channels);
  for (auto& name : trial.channel_names) {
    const std::uint8_t len = in.u8("channel-name table");
    name.resize(len);
    in.read_exact(name.data(), len, "channel-name table");
  }

  trial.samples.resize(n_channels, static_cast<Eigen::Index>(n_samples));
  std::vector<char> raw(static_cast<std::size_t>(n_samples) * 4);
  for (int ch = 0; ch < n_channels; ++ch) {
    in.read_exact(raw.data(), raw.size(), "payload");
    for (std::uint64_t s = 0; s < n_samples; ++s) {
      std::uint32_t bits = 0;
      for (int i = 3; i >= 0; --i)
        bits = (bits << 8) | static_cast<unsigned char>(raw[s * 4 + i]);
      trial.samples(ch, static_cast<Eigen::Index>(s)) =
          std::bit_cast<float>(bits);
    }
  }

  trial.trial_id = fs::path(path).stem().string();
  trial.validate();
  return trial;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

LabelCounts validate_manifest(const DatasetManifest& manifest) {
  if (manifest.trials.empty()) throw std::runtime_error("empty manifest");

  LabelCounts recomputed;
  std::set<std::string> ids;
  for (const auto& entry : manifest.trials) {
    const int raw = static_cast<int>(entry.label);
    if (raw < 0 || raw >= kNumClasses)
      throw std::runtime_error("unknown label value: " + std::to_string(raw));
    if (!ids.insert(entry.trial_id).second)
      throw std::runtime_error("duplicate trial_id: " + entry.trial_id);
    recomputed[entry.label] += 1;
  }
  if (!(recomputed == manifest.counts))
    throw std::runtime_error("manifest counts disagree with recomputed tallies");
  return recomputed;
}

void validate_manifest_files(const DatasetManifest& manifest,
                             const std::string& root) {
  for (const auto& entry : manifest.trials) {
    const fs::path p = fs::path(root) / entry.path;
    if (!fs::exists(p))
      throw std::runtime_error("missing trial file: " + p.string());
  }
}

RawTrial select_channels(const RawTrial& trial,
                         const std::vector<std::string>& names) {
  std::set<std::string> requested;
  for (const auto& name : names)
    if (!requested.insert(name).second)
      throw std::runtime_error("duplicate channel in selection: " + name);

  RawTrial out;
  out.trial_id = trial.trial_id;
  out.sample_rate_hz = trial.sample_rate_hz;
  out.label = trial.label;
  out.culture = trial.culture;
  out.channel_names = names;
  out.samples.resize(static_cast<Eigen::Index>(names.size()),
                     trial.samples.cols());
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto it = std::find(trial.channel_names.begin(),
                              trial.channel_names.end(), names[i]);
    if (it == trial.channel_names.end())
      throw std::runtime_error("unknown channel name: " + names[i]);
    const auto row = std::distance(trial.channel_names.begin(), it);
    out.samples.row(static_cast<Eigen::Index>(i)) = trial.samples.row(row);
  }
  return out;
}

ClassStats class_stats(const LabelCounts& counts) {
  for (auto c : counts.per_class)
    if (c < 0) throw std::runtime_error("class counts must be non-negative");
  const std::int64_t total = counts.total();
  if (total == 0) throw std::runtime_error("all class counts are zero");

  const auto [mn, mx] =
      std::minmax_element(counts.per_class.begin(), counts.per_class.end());
  const double mean = static_cast<double>(total) / kNumClasses;
  return {counts, static_cast<double>(*mx - *mn) / mean};
}

// ---------------------------------------------------------------------------
// Partition
// ---------------------------------------------------------------------------

SplitAssignment partition(const DatasetManifest& manifest,
                          std::array<double, 3> ratios, std::uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::runtime_error("split ratios must sum to 1");
  const std::int64_t n = static_cast<std::int64_t>(manifest.trials.size());
  if (n < 3) throw std::runtime_error("need at least 3 trials to partition");

  std::vector<std::string> ids;
  ids.reserve(manifest.trials.size());
  for (const auto& entry : manifest.trials) ids.push_back(entry.trial_id);

  Rng rng(seed);
  rng.shuffle(ids);

  // floor for train and test; validation takes the remainder.
  const std::int64_t n_train =
      static_cast<std::int64_t>(std::floor(ratios[0] * static_cast<double>(n)));
  const std::int64_t n_test =
      static_cast<std::int64_t>(std::floor(ratios[2] * static_cast<double>(n)));
  const std::int64_t n_val = n - n_train - n_test;
  if (n_train < 0 || n_test < 0 || n_val < 0)
    throw std::runtime_error("degenerate split sizes");

  SplitAssignment split;
  split.seed = seed;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.validation.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  split.test.assign(ids.begin() + n_train + n_val, ids.end());
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

std::array<Eigen::Matrix<double, 5, 5>, kNumClasses> default_band_profiles() {
  // Rows delta..gamma, columns AF3..Pz. One dominant band per class keeps the
  // classes separable by band power; the positive profile puts alpha at four
  // times beta.
  std::array<Eigen::Matrix<double, 5, 5>, kNumClasses> profiles;
  const Eigen::Matrix<double, 1, 5> ones = Eigen::Matrix<double, 1, 5>::Ones();

  auto& negative = profiles[static_cast<int>(Label::negative)];
  negative.row(0) = 0.5 * ones;  // delta
  negative.row(1) = 0.5 * ones;  // theta
  negative.row(2) = 0.5 * ones;  // alpha
  negative.row(3) = 4.0 * ones;  // beta
  negative.row(4) = 1.0 * ones;  // gamma

  auto& neutral = profiles[static_cast<int>(Label::neutral)];
  neutral.row(0) = 0.5 * ones;
  neutral.row(1) = 4.0 * ones;
  neutral.row(2) = 1.0 * ones;
  neutral.row(3) = 0.5 * ones;
  neutral.row(4) = 0.5 * ones;

  auto& positive = profiles[static_cast<int>(Label::positive)];
  positive.row(0) = 0.5 * ones;
  positive.row(1) = 0.5 * ones;
  positive.row(2) = 4.0 * ones;
  positive.row(3) = 1.0 * ones;
  positive.row(4) = 0.5 * ones;

  return profiles;
}

SynthSpec default_synth_spec() {
  SynthSpec spec;
  spec.band_profile = default_band_profiles();
  return spec;
}

void SynthSpec::validate() const {
  if (n_trials_per_class < 1)
    throw std::runtime_error("n_trials_per_class must be positive");
  if (duration_s < 1.0) throw std::runtime_error("duration_s must be >= 1");
  const double highest_edge = canonical_bands().back().hi_hz;
  if (sample_rate_hz < 2.0 * highest_edge)
    throw std::runtime_error("sample rate must be at least " +
                             std::to_string(2.0 * highest_edge) + " Hz");
  if (noise_floor < 0.0) throw std::runtime_error("noise_floor must be >= 0");
  for (const auto& profile : band_profile)
    if ((profile.array() < 0.0).any())
      throw std::runtime_error("band profile weights must be >= 0");
}

namespace {

RawTrial synthesize_trial(const SynthSpec& spec, Label label, int index) {
  const int cls = static_cast<int>(label);
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(cls),
                      static_cast<std::uint64_t>(index)));

  const auto n = static_cast<Eigen::Index>(
      std::llround(spec.duration_s * spec.sample_rate_hz));
  const double fs = spec.sample_rate_hz;
  const auto bands = canonical_bands();

  RawTrial trial;
  {
    std::ostringstream id;
    const char* tags[] = {"neg", "neu", "pos"};
    id << "synth-" << tags[cls] << "-";
    id.width(4);
    id.fill('0');
    id << index;
    trial.trial_id = id.str();
  }
  trial.sample_rate_hz = spec.sample_rate_hz;
  trial.label = label;
  trial.culture = "synthetic";
  trial.channel_names.assign(kTargetChannels.begin(), kTargetChannels.end());
  trial.samples.resize(5, n);

  Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(n, 0.0, double(n - 1)) / fs;
  for (int ch = 0; ch < 5; ++ch) {
    Eigen::ArrayXd x = Eigen::ArrayXd::Zero(n);
    for (int b = 0; b < 5; ++b) {
      const double amp = spec.band_profile[cls](b, ch);
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      const double f = band_center_hz(bands[b].band);
      if (amp > 0.0) x += amp * (2.0 * M_PI * f * t + phase).sin();
    }
    for (Eigen::Index s = 0; s < n; ++s)
      x[s] += spec.noise_floor * rng.normal();
    trial.samples.row(ch) = x.cast<float>();
  }
  return trial;
}

}  // namespace

DatasetManifest synthesize_dataset(const SynthSpec& spec,
                                   const std::string& out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir))
    throw std::runtime_error("cannot create output directory: " + out_dir);

  DatasetManifest manifest;
  for (int cls = 0; cls < kNumClasses; ++cls) {
    for (int i = 0; i < spec.n_trials_per_class; ++i) {
      RawTrial trial = synthesize_trial(spec, static_cast<Label>(cls), i);
      const std::string filename = trial.trial_id + ".etrl";
      write_trial(trial, (fs::path(out_dir) / filename).string());
      manifest.trials.push_back({trial.trial_id, filename, trial.label,
                                 trial.culture, trial.n_channels(),
                                 trial.n_samples()});
      manifest.counts[trial.label] += 1;
    }
  }
  write_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
  return manifest;
}

// ---------------------------------------------------------------------------
// JSON persistence
// ---------------------------------------------------------------------------

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  json j;
  j["version"] = manifest.version;
  j["counts"] = {{"negative", manifest.counts.per_class[0]},
                 {"neutral", manifest.counts.per_class[1]},
                 {"positive", manifest.counts.per_class[2]}};
  j["trials"] = json::array();
  for (const auto& e : manifest.trials) {
    j["trials"].push_back({{"trial_id", e.trial_id},
                           {"path", e.path},
                           {"label", static_cast<int>(e.label)},
                           {"culture", e.culture},
                           {"n_channels", e.n_channels},
                           {"n_samples", e.n_samples}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed manifest " + path + ": " + e.what());
  }

  DatasetManifest manifest;
  manifest.version = j.at("version").get<int>();
  if (manifest.version != 1)
    throw std::runtime_error("unsupported manifest version");
  for (const auto& t : j.at("trials")) {
    ManifestEntry e;
    e.trial_id = t.at("trial_id").get<std::string>();
    e.path = t.at("path").get<std::string>();
    e.label = label_from_int(t.at("label").get<int>());
    e.culture = t.at("culture").get<std::string>();
    e.n_channels = t.at("n_channels").get<int>();
    e.n_samples = t.at("n_samples").get<std::int64_t>();
    manifest.trials.push_back(std::move(e));
  }
  const auto& c = j.at("counts");
  manifest.counts.per_class = {c.at("negative").get<std::int64_t>(),
                               c.at("neutral").get<std::int64_t>(),
                               c.at("positive").get<std::int64_t>()};
  return manifest;
}

void write_split(const SplitAssignment& split, const std::string& path) {
  json j;
  j["seed"] = split.seed;
  j["train"] = split.train;
  j["validation"] = split.validation;
  j["test"] = split.test;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write split: " + path);
  out << j.dump(2) << "\n";
}

SplitAssignment read_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed split " + path + ": " + e.what());
  }
  SplitAssignment split;
  split.seed = j.at("seed").get<std::uint64_t>();
  split.train = j.at("train").get<std::vector<std::string>>();
  split.validation = j.at("validation").get<std::vector<std::string>>();
  split.test = j.at("test").get<std::vector<std::string>>();
  return split;
}

std::vector<std::string> load_channel_names(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open montage file: " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
      line.pop_back();
    std::size_t start = 0;
    while (start < line.size() &&
           std::isspace(static_cast<unsigned char>(line[start])))
      ++start;
    if (start < line.size()) names.push_back(line.substr(start));
  }
  return names;
}

}  // namespace neurowave
