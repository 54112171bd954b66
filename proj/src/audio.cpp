#include "lifas/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace lifas {

namespace {

constexpr std::uint16_t kFormatPcm = 1;

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8 & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 16 & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 24 & 0xff));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8 & 0xff));
}

}  // namespace

void validate(const AudioClip& clip) {
  if (clip.samples.empty())
    throw Error(Error::Code::bad_argument, "AudioClip: samples empty");
  if (clip.sample_rate_hz <= 0)
    throw Error(Error::Code::bad_argument, "AudioClip: sample_rate_hz must be positive");
  for (const float s : clip.samples) {
    if (!std::isfinite(s) || s < -1.0f || s > 1.0f)
      throw Error(Error::Code::bad_argument, "AudioClip: sample outside [-1, 1]");
  }
}

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0)
    throw Error(Error::Code::wav_header, "WAV: missing RIFF magic");
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error(Error::Code::wav_header, "WAV: RIFF form type is not WAVE");

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
  const std::uint8_t* data = nullptr;
  std::uint32_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t chunk_size = read_u32(hdr + 4);
    const std::uint8_t* body = hdr + 8;
    const std::size_t avail = bytes.size() - pos - 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16 || avail < 16)
        throw Error(Error::Code::wav_header, "WAV: fmt chunk too small");
      const std::uint16_t format = read_u16(body);
      if (format != kFormatPcm)
        throw Error(Error::Code::wav_codec,
                    "WAV: fmt audio-format code " + std::to_string(format) +
                        " unsupported (PCM=1 required)");
      channels = read_u16(body + 2);
      if (channels != 1 && channels != 2)
        throw Error(Error::Code::wav_channels,
                    "WAV: fmt channels " + std::to_string(channels) + " unsupported (1 or 2)");
      sample_rate = read_u32(body + 4);
      if (sample_rate == 0)
        throw Error(Error::Code::wav_header, "WAV: fmt sample rate is zero");
      bits = read_u16(body + 14);
      if (bits != 16)
        throw Error(Error::Code::wav_depth,
                    "WAV: fmt bits-per-sample " + std::to_string(bits) + " unsupported (16 required)");
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (chunk_size > avail)
        throw Error(Error::Code::wav_truncated,
                    "WAV: data chunk declares " + std::to_string(chunk_size) + " bytes, only " +
                        std::to_string(avail) + " present");
      data = body;
      data_size = chunk_size;
      pos += 8 + chunk_size + (chunk_size & 1);
      continue;
    }
    pos += 8 + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }

  if (!have_fmt) throw Error(Error::Code::wav_header, "WAV: fmt chunk missing");
  if (!data) throw Error(Error::Code::wav_header, "WAV: data chunk missing");

  const std::size_t bytes_per_frame = 2u * channels;
  if (data_size % bytes_per_frame != 0)
    throw Error(Error::Code::wav_truncated, "WAV: data chunk size not a whole number of frames");
  const std::size_t n_frames = data_size / bytes_per_frame;
  if (n_frames == 0) throw Error(Error::Code::wav_truncated, "WAV: data chunk empty");

  AudioClip clip;
  clip.sample_rate_hz = static_cast<int>(sample_rate);
  clip.samples.resize(n_frames);
  const float scale = 1.0f / 32768.0f;
  for (std::size_t i = 0; i < n_frames; ++i) {
    const std::uint8_t* frame = data + i * bytes_per_frame;
    const auto s0 = static_cast<std::int16_t>(read_u16(frame));
    if (channels == 1) {
      clip.samples[i] = static_cast<float>(s0) * scale;
    } else {
      const auto s1 = static_cast<std::int16_t>(read_u16(frame + 2));
      clip.samples[i] = (static_cast<float>(s0) + static_cast<float>(s1)) * 0.5f * scale;
    }
  }
  return clip;
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  validate(clip);
  const std::uint32_t data_size = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * 2);  // byte rate
  put_u16(out, 2);                                                    // block align
  put_u16(out, 16);                                                   // bits per sample
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_size);
  for (const float f : clip.samples) {
    long q = std::lround(static_cast<double>(f) * 32767.0);
    q = std::clamp(q, -32768l, 32767l);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

AudioClip resample(const AudioClip& clip, int target_rate_hz) {
  validate(clip);
  if (target_rate_hz <= 0)
    throw Error(Error::Code::bad_argument, "resample: target rate must be positive");
  if (target_rate_hz == clip.sample_rate_hz) return clip;

  const std::size_t in_len = clip.samples.size();
  const std::size_t out_len = static_cast<std::size_t>(
      static_cast<std::uint64_t>(in_len) * static_cast<std::uint64_t>(target_rate_hz) /
      static_cast<std::uint64_t>(clip.sample_rate_hz));

  AudioClip out = clip;
  out.sample_rate_hz = target_rate_hz;
  out.samples.assign(out_len, 0.0f);
  const double step = static_cast<double>(clip.sample_rate_hz) / target_rate_hz;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = i * step;
    std::size_t i0 = static_cast<std::size_t>(pos);
    if (i0 >= in_len - 1) {
      out.samples[i] = clip.samples[in_len - 1];
      continue;
    }
    const float frac = static_cast<float>(pos - static_cast<double>(i0));
    const float a = clip.samples[i0];
    const float b = clip.samples[i0 + 1];
    out.samples[i] = a + frac * (b - a);
  }
  return out;
}

std::vector<AudioClip> extract_clips(const AudioClip& clip, std::size_t clip_len_samples,
                                     std::size_t stride_samples) {
  validate(clip);
  if (clip_len_samples == 0 || stride_samples == 0)
    throw Error(Error::Code::bad_argument, "extract_clips: length and stride must be positive");
  std::vector<AudioClip> out;
  const std::size_t n = clip.samples.size();
  for (std::size_t start = 0; start + clip_len_samples <= n; start += stride_samples) {
    AudioClip piece;
    piece.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                         clip.samples.begin() + static_cast<std::ptrdiff_t>(start + clip_len_samples));
    piece.sample_rate_hz = clip.sample_rate_hz;
    piece.language = clip.language;
    piece.speaker_id = clip.speaker_id;
    piece.source_path = clip.source_path;
    out.push_back(std::move(piece));
  }
  return out;
}

AudioClip load_wav(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  AudioClip clip = decode_wav(bytes);
  clip.source_path = path.string();
  return clip;
}

void save_wav(const AudioClip& clip, const std::filesystem::path& path) {
  const auto bytes = encode_wav(clip);
  write_file_atomic(path, bytes.data(), bytes.size());
}

}  // namespace lifas
