#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>

#include "byte_io.hpp"
#include "formeq/features.hpp"

namespace formeq {

using detail::get_u16;
using detail::get_u32;
using detail::put_u16;
using detail::put_u32;

namespace {

std::string read_tag(std::istream& in) {
  std::array<char, 4> tag{};
  if (!in.read(tag.data(), 4)) throw InputError("wav: truncated header");
  return {tag.begin(), tag.end()};
}

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("wav: cannot open " + path.string());
  if (read_tag(in) != "RIFF") throw InputError("wav: missing RIFF tag in " + path.string());
  get_u32(in);
  if (read_tag(in) != "WAVE") throw InputError("wav: missing WAVE tag in " + path.string());

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (true) {
    std::string tag;
    try {
      tag = read_tag(in);
    } catch (const InputError&) {
      throw InputError("wav: no data chunk in " + path.string());
    }
    const std::uint32_t size = get_u32(in);
    if (tag == "fmt ") {
      const std::uint16_t format = get_u16(in);
      channels = get_u16(in);
      rate = get_u32(in);
      get_u32(in);  // byte rate
      get_u16(in);  // block align
      bits = get_u16(in);
      if (size > 16) in.seekg(size - 16 + (size & 1u), std::ios::cur);
      if (format != 1) throw InputError("wav: only PCM is supported: " + path.string());
      if (channels != 1) throw InputError("wav: only mono is supported: " + path.string());
      if (bits != 16) throw InputError("wav: only 16-bit samples are supported: " + path.string());
      if (rate == 0) throw InputError("wav: zero sample rate: " + path.string());
      have_fmt = true;
    } else if (tag == "data") {
      if (!have_fmt) throw InputError("wav: data chunk before fmt chunk: " + path.string());
      AudioClip clip;
      clip.sample_rate = static_cast<double>(rate);
      clip.samples.resize(size / 2);
      for (auto& s : clip.samples) {
        s = static_cast<std::int16_t>(get_u16(in)) / 32768.0;
      }
      return clip;
    } else {
      in.seekg(size + (size & 1u), std::ios::cur);
      if (!in) throw InputError("wav: truncated chunk " + tag + " in " + path.string());
    }
  }
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  if (!(clip.sample_rate > 0)) throw InputError("wav: sample rate must be positive");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("wav: cannot create " + path.string());
  const auto rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (double s : clip.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  if (!out) throw InputError("wav: write failed for " + path.string());
}

}  // namespace formeq
