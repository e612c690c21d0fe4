#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qsonn/tensor.hpp"

namespace qsonn {

/// Mono PCM audio scaled to [-1, 1).
struct PcmClip {
  std::vector<float> samples;
  int sample_rate_hz = 16000;
};

/// Every parameter of the feature pipeline. The defaults turn a 1 s, 16 kHz
/// clip into a 20 x 51 coefficient map: 30 ms windows (480 samples) every
/// 20 ms (320 samples) with half-window reflective padding at both ends.
struct FrontendConfig {
  int sample_rate_hz = 16000;
  std::size_t clip_samples = 16000;
  std::size_t window_samples = 480;
  std::size_t hop_samples = 320;
  std::size_t fft_size = 512;
  std::size_t mel_filters = 40;
  std::size_t cepstral_coeffs = 20;
  double mel_low_hz = 0.0;
  double mel_high_hz = 8000.0;
  double log_floor = 1e-10;

  std::size_t frame_count() const;
  void validate() const;
  /// Stable textual form; the feature cache keys on its hash.
  std::string canonical() const;
  std::uint64_t fingerprint() const;

  friend bool operator==(const FrontendConfig&, const FrontendConfig&) = default;
};

/// Decodes a RIFF/WAVE byte stream holding mono 16-bit little-endian PCM.
/// Sample s maps to s / 32768. Throws FormatError for anything else and
/// RateError when the sample rate differs from `expected_rate_hz`.
PcmClip parse_wav(std::span<const std::uint8_t> bytes, int expected_rate_hz = 16000);
PcmClip read_wav(const std::filesystem::path& path, int expected_rate_hz = 16000);

/// Inverse of parse_wav (values clamped to the int16 range).
std::vector<std::uint8_t> encode_wav(std::span<const float> samples, int sample_rate_hz);
void write_wav(const std::filesystem::path& path, std::span<const float> samples,
               int sample_rate_hz);

/// Zero-pads or truncates at the end to exactly `length` samples.
PcmClip pad_or_truncate(PcmClip clip, std::size_t length = 16000);

/// In-place iterative radix-2 FFT; size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& data);

/// Precomputed window, mel filterbank and DCT for one FrontendConfig.
class MfccExtractor {
 public:
  explicit MfccExtractor(FrontendConfig config = {});

  /// [cepstral_coeffs, frames] cepstra of a clip of exactly clip_samples.
  Tensor compute(const PcmClip& clip) const;
  /// Same, kept in double precision.
  TensorD compute_double(const PcmClip& clip) const;

  const FrontendConfig& config() const { return config_; }
  /// Row-major [mel_filters, fft_size / 2 + 1].
  const std::vector<double>& filterbank() const { return filterbank_; }

 private:
  FrontendConfig config_;
  std::vector<double> window_;
  std::vector<double> filterbank_;
  std::vector<double> dct_;  // [cepstral_coeffs, mel_filters]
};

Tensor compute_mfcc(const PcmClip& clip, const FrontendConfig& config = {});

/// Affine map of the whole tensor onto [-1, 1]; a constant tensor maps to 0.
Tensor normalize_minmax(const Tensor& m);

/// Full frontend: pad/truncate, MFCC, normalization. Returns [1, 20, 51].
Tensor extract_features(const PcmClip& clip, const MfccExtractor& extractor);

struct MfccFeature {
  Tensor values;  // [1, cepstral_coeffs, frames]
  std::string source_path;
  int label = -1;
};

MfccFeature load_feature(const std::filesystem::path& wav, int label,
                         const MfccExtractor& extractor);

}  // namespace qsonn
