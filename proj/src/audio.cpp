#include "qsonn/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>

namespace qsonn {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

bool tag_is(const std::uint8_t* p, const char* tag) {
  return std::equal(p, p + 4, reinterpret_cast<const std::uint8_t*>(tag));
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  if (i < 0) i = -i;
  if (i > last) i = 2 * last - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

std::size_t FrontendConfig::frame_count() const {
  const std::size_t padded = clip_samples + 2 * (window_samples / 2);
  return 1 + (padded - window_samples) / hop_samples;
}

void FrontendConfig::validate() const {
  if (sample_rate_hz <= 0 || clip_samples == 0 || window_samples == 0 || hop_samples == 0) {
    throw ConfigError("frontend: rates, lengths and hop must be positive");
  }
  if (!std::has_single_bit(fft_size) || fft_size < window_samples) {
    throw ConfigError("frontend: fft_size must be a power of two >= window_samples");
  }
  if (window_samples / 2 >= clip_samples) {
    throw ConfigError("frontend: window too long for reflective padding");
  }
  if (mel_filters < 1 || cepstral_coeffs < 1 || cepstral_coeffs > mel_filters) {
    throw ConfigError("frontend: need 1 <= cepstral_coeffs <= mel_filters");
  }
  if (!(mel_low_hz >= 0.0 && mel_low_hz < mel_high_hz &&
        mel_high_hz <= sample_rate_hz / 2.0)) {
    throw ConfigError("frontend: mel range must satisfy 0 <= low < high <= Nyquist");
  }
  if (!(log_floor > 0.0)) throw ConfigError("frontend: log_floor must be positive");
}

std::string FrontendConfig::canonical() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "rate=%d;clip=%zu;win=%zu;hop=%zu;fft=%zu;mels=%zu;ceps=%zu;"
                "lo=%.17g;hi=%.17g;floor=%.17g;window=hamming-sym;pad=reflect;"
                "mel=htk;fbnorm=area;dct=ortho2;norm=minmax",
                sample_rate_hz, clip_samples, window_samples, hop_samples, fft_size,
                mel_filters, cepstral_coeffs, mel_low_hz, mel_high_hz, log_floor);
  return buf;
}

std::uint64_t FrontendConfig::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

PcmClip parse_wav(std::span<const std::uint8_t> bytes, int expected_rate_hz) {
  if (bytes.size() < 12 || !tag_is(bytes.data(), "RIFF") || !tag_is(bytes.data() + 8, "WAVE")) {
    throw FormatError("not a RIFF/WAVE stream");
  }
  bool have_fmt = false;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::size_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = bytes.size() - body;
    if (tag_is(chunk, "fmt ")) {
      if (size < 16 || available < 16) throw FormatError("truncated fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      std::uint16_t format = le16(f);
      if (format == kFormatExtensible && size >= 26 && available >= 26) format = le16(f + 24);
      const std::uint16_t channels = le16(f + 2);
      rate = le32(f + 4);
      const std::uint16_t bits = le16(f + 14);
      if (format != kFormatPcm) throw FormatError("WAV is not PCM (format " + std::to_string(format) + ")");
      if (channels != 1) throw FormatError("WAV is not mono (" + std::to_string(channels) + " channels)");
      if (bits != 16) throw FormatError("WAV is not 16-bit (" + std::to_string(bits) + " bits)");
      if (static_cast<int>(rate) != expected_rate_hz) {
        throw RateError("WAV sample rate " + std::to_string(rate) + " Hz, expected " +
                        std::to_string(expected_rate_hz));
      }
      have_fmt = true;
    } else if (tag_is(chunk, "data")) {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk");
      // Some writers leave the size field unset; take what is present.
      const std::size_t usable = std::min(size, available) & ~std::size_t{1};
      PcmClip clip;
      clip.sample_rate_hz = static_cast<int>(rate);
      clip.samples.resize(usable / 2);
      const std::uint8_t* d = bytes.data() + body;
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const auto s = static_cast<std::int16_t>(le16(d + 2 * i));
        clip.samples[i] = static_cast<float>(s) / 32768.0f;
      }
      return clip;
    }
    pos = body + size + (size & 1);
  }
  throw FormatError(have_fmt ? "WAV has no data chunk" : "WAV has no fmt chunk");
}

PcmClip read_wav(const std::filesystem::path& path, int expected_rate_hz) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes, expected_rate_hz);
  } catch (const RateError& e) {
    throw RateError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav(std::span<const float> samples, int sample_rate_hz) {
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, kFormatPcm);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(sample_rate_hz));
  put32(out, static_cast<std::uint32_t>(sample_rate_hz) * 2);
  put16(out, 2);
  put16(out, 16);
  put_tag(out, "data");
  put32(out, data_bytes);
  for (float s : samples) {
    const double scaled = std::round(static_cast<double>(s) * 32768.0);
    put16(out, static_cast<std::uint16_t>(
                   static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0))));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, std::span<const float> samples,
               int sample_rate_hz) {
  const auto bytes = encode_wav(samples, sample_rate_hz);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

PcmClip pad_or_truncate(PcmClip clip, std::size_t length) {
  clip.samples.resize(length, 0.0f);
  return clip;
}

void fft_inplace(std::vector<std::complex<double>>& data) {
  const std::size_t n = data.size();
  if (!std::has_single_bit(n)) throw ShapeError("fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, angle * static_cast<double>(k));
        const auto even = data[start + k];
        const auto odd = data[start + k + len / 2] * w;
        data[start + k] = even + odd;
        data[start + k + len / 2] = even - odd;
      }
    }
  }
}

MfccExtractor::MfccExtractor(FrontendConfig config) : config_(config) {
  config_.validate();
  const std::size_t win = config_.window_samples;
  window_.resize(win);
  for (std::size_t i = 0; i < win; ++i) {
    window_[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                        static_cast<double>(win - 1));
  }

  // Triangular filters between consecutive points equally spaced in mel,
  // each scaled by 2 / (upper edge - lower edge) so its area is constant.
  const std::size_t mels = config_.mel_filters;
  const std::size_t bins = config_.fft_size / 2 + 1;
  const double lo = hz_to_mel(config_.mel_low_hz), hi = hz_to_mel(config_.mel_high_hz);
  std::vector<double> edges(mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(mels + 1));
  }
  filterbank_.assign(mels * bins, 0.0);
  for (std::size_t m = 0; m < mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    const double norm = 2.0 / (right - left);
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config_.sample_rate_hz /
                       static_cast<double>(config_.fft_size);
      const double rising = (f - left) / (centre - left);
      const double falling = (right - f) / (right - centre);
      filterbank_[m * bins + k] = std::max(0.0, std::min(rising, falling)) * norm;
    }
  }

  const std::size_t ceps = config_.cepstral_coeffs;
  dct_.resize(ceps * mels);
  for (std::size_t c = 0; c < ceps; ++c) {
    const double scale = std::sqrt((c == 0 ? 1.0 : 2.0) / static_cast<double>(mels));
    for (std::size_t m = 0; m < mels; ++m) {
      dct_[c * mels + m] = scale * std::cos(std::numbers::pi * static_cast<double>(c) *
                                            (2.0 * static_cast<double>(m) + 1.0) /
                                            (2.0 * static_cast<double>(mels)));
    }
  }
}

TensorD MfccExtractor::compute_double(const PcmClip& clip) const {
  const auto& cfg = config_;
  if (clip.samples.size() != cfg.clip_samples) {
    throw ShapeError("mfcc: clip has " + std::to_string(clip.samples.size()) +
                     " samples, expected " + std::to_string(cfg.clip_samples));
  }
  if (clip.sample_rate_hz != cfg.sample_rate_hz) throw RateError("mfcc: sample rate mismatch");
  const std::size_t frames = cfg.frame_count();
  const std::size_t pad = cfg.window_samples / 2;
  const std::size_t bins = cfg.fft_size / 2 + 1;
  const std::size_t mels = cfg.mel_filters, ceps = cfg.cepstral_coeffs;

  TensorD out({ceps, frames});
  std::vector<std::complex<double>> buf(cfg.fft_size);
  std::vector<double> power(bins), logmel(mels);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t i = 0; i < cfg.window_samples; ++i) {
      const auto src = static_cast<std::ptrdiff_t>(t * cfg.hop_samples + i) -
                       static_cast<std::ptrdiff_t>(pad);
      buf[i] = clip.samples[reflect_index(src, clip.samples.size())] * window_[i];
    }
    fft_inplace(buf);
    for (std::size_t k = 0; k < bins; ++k) power[k] = std::norm(buf[k]);
    for (std::size_t m = 0; m < mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += filterbank_[m * bins + k] * power[k];
      logmel[m] = std::log(std::max(e, cfg.log_floor));
    }
    for (std::size_t c = 0; c < ceps; ++c) {
      double s = 0.0;
      for (std::size_t m = 0; m < mels; ++m) s += dct_[c * mels + m] * logmel[m];
      out.at(c, t) = s;
    }
  }
  return out;
}

Tensor MfccExtractor::compute(const PcmClip& clip) const {
  return compute_double(clip).cast<float>();
}

Tensor compute_mfcc(const PcmClip& clip, const FrontendConfig& config) {
  const MfccExtractor extractor(config);
  Tensor m = extractor.compute(clip);
  if (config == FrontendConfig{} && m.dim(1) != 51) {
    throw ShapeError("mfcc: default geometry produced " + std::to_string(m.dim(1)) + " frames");
  }
  return m;
}

Tensor normalize_minmax(const Tensor& m) {
  if (m.empty()) return m;
  const auto [lo_it, hi_it] = std::minmax_element(m.data().begin(), m.data().end());
  const double lo = *lo_it, hi = *hi_it;
  Tensor y(m.shape());
  if (hi == lo) return y;
  const double range = hi - lo;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double v = 2.0 * (static_cast<double>(m[i]) - lo) / range - 1.0;
    y[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return y;
}

Tensor extract_features(const PcmClip& clip, const MfccExtractor& extractor) {
  const auto& cfg = extractor.config();
  const Tensor m = extractor.compute(pad_or_truncate(clip, cfg.clip_samples));
  if (m.dim(1) != cfg.frame_count()) throw ShapeError("mfcc: unexpected frame count");
  return normalize_minmax(m).reshaped({1, cfg.cepstral_coeffs, cfg.frame_count()});
}

MfccFeature load_feature(const std::filesystem::path& wav, int label,
                         const MfccExtractor& extractor) {
  const PcmClip clip = read_wav(wav, extractor.config().sample_rate_hz);
  return {extract_features(clip, extractor), wav.string(), label};
}

}  // namespace qsonn
