#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <unistd.h>

namespace formeq::testing {

namespace {

struct Resonator {
  double y1 = 0.0, y2 = 0.0;
  double step(double x, const Resonance& r, double fs) {
    const double radius = std::exp(-std::numbers::pi * r.bandwidth / fs);
    const double c = 2.0 * radius * std::cos(2.0 * std::numbers::pi * r.frequency / fs);
    const double gain = 1.0 - c + radius * radius;
    const double y = gain * x + c * y1 - radius * radius * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

constexpr std::array<FormantSet, 7> kVowels{{
    {{{270, 60}, {2290, 90}, {3010, 120}, {3500, 150}}},
    {{{530, 60}, {1840, 90}, {2480, 120}, {3500, 150}}},
    {{{730, 70}, {1090, 90}, {2440, 120}, {3400, 150}}},
    {{{570, 60}, {840, 80}, {2410, 120}, {3300, 150}}},
    {{{300, 60}, {870, 80}, {2240, 120}, {3300, 150}}},
    {{{660, 70}, {1720, 90}, {2410, 120}, {3400, 150}}},
    {{{640, 70}, {1190, 90}, {2390, 120}, {3350, 150}}},
}};

FormantSet lerp(const FormantSet& a, const FormantSet& b, double t) {
  FormantSet out;
  for (std::size_t k = 0; k < 4; ++k) {
    out[k] = {a[k].frequency + t * (b[k].frequency - a[k].frequency),
              a[k].bandwidth + t * (b[k].bandwidth - a[k].bandwidth)};
  }
  return out;
}

}  // namespace

AudioClip render_voice(const VoiceTrack& track, const VoiceOptions& options) {
  const double fs = options.sample_rate;
  const std::size_t n = track.formants.size() * track.block;
  AudioClip clip;
  clip.sample_rate = fs;
  clip.samples.resize(n);

  std::array<Resonator, 4> cascade{};
  double phase = 1.0;  // fires on the first sample
  double g1 = 0.0, g2 = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = i / track.block;
    phase += track.f0[b] / fs;
    double pulse = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      pulse = 1.0;
    }
    // Glottal shaping (double real pole) followed by lip radiation (1 - z^-1).
    g1 = pulse + options.glottal_pole * g1;
    g2 = g1 + options.glottal_pole * g2;
    double x = g2 - prev;
    prev = g2;
    for (std::size_t k = 0; k < 4; ++k) x = cascade[k].step(x, track.formants[b][k], fs);
    clip.samples[i] = x;
  }

  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0) {
    for (double& s : clip.samples) s *= 0.5 / peak;
  }
  if (options.noise > 0.0) {
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> gauss(0.0, options.noise * 0.5);
    for (double& s : clip.samples) s += gauss(rng);
  }
  return clip;
}

AudioClip steady_vowel(const FormantSet& formants, double f0, double seconds, const VoiceOptions& options) {
  VoiceTrack track;
  const auto blocks = static_cast<std::size_t>(std::ceil(seconds * options.sample_rate / static_cast<double>(track.block)));
  track.formants.assign(blocks, formants);
  track.f0.assign(blocks, f0);
  return render_voice(track, options);
}

AudioClip resonator_impulse_response(const FormantSet& formants, std::size_t samples, double sample_rate) {
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(samples);
  std::array<Resonator, 4> cascade{};
  for (std::size_t i = 0; i < samples; ++i) {
    double x = i == 0 ? 1.0 : 0.0;
    for (std::size_t k = 0; k < 4; ++k) x = cascade[k].step(x, formants[k], sample_rate);
    clip.samples[i] = x;
  }
  return clip;
}

SyntheticCorpus make_corpus(const CorpusOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticCorpus corpus;

  for (int u = 0; u < options.utterances; ++u) {
    const int segments = 4 + static_cast<int>(unit(rng) * 3.0);
    std::vector<std::size_t> vowels;
    std::vector<std::size_t> src_blocks, tgt_blocks;
    for (int s = 0; s < segments; ++s) {
      vowels.push_back(static_cast<std::size_t>(unit(rng) * kVowels.size()) % kVowels.size());
      const auto base = static_cast<std::size_t>(24 + unit(rng) * 24);  // 120-240 ms at 5 ms blocks
      src_blocks.push_back(base);
      const double stretch = options.identical_target ? 1.0 : 0.8 + 0.4 * unit(rng);
      tgt_blocks.push_back(std::max<std::size_t>(8, static_cast<std::size_t>(std::lround(base * stretch))));
    }

    const double warp = options.identical_target
                            ? 1.0
                            : options.min_warp * std::pow(options.max_warp / options.min_warp, unit(rng));
    std::array<double, 4> jitter{};
    for (auto& j : jitter) j = options.identical_target ? 1.0 : 1.0 + options.formant_jitter * (2.0 * unit(rng) - 1.0);

    auto build = [&](const std::vector<std::size_t>& blocks, bool target) {
      VoiceTrack track;
      const double f0 = target && !options.identical_target ? options.target_f0 : options.source_f0;
      for (std::size_t s = 0; s < vowels.size(); ++s) {
        FormantSet here = kVowels[vowels[s]];
        const FormantSet next = kVowels[vowels[std::min(s + 1, vowels.size() - 1)]];
        const std::size_t transition = s + 1 < vowels.size() ? blocks[s] / 3 : 0;
        for (std::size_t b = 0; b < blocks[s]; ++b) {
          const std::size_t steady = blocks[s] - transition;
          FormantSet fs = b < steady ? here : lerp(here, next, static_cast<double>(b - steady + 1) / static_cast<double>(transition + 1));
          if (target) {
            for (std::size_t k = 0; k < 4; ++k) {
              fs[k].frequency *= warp * jitter[k];
              fs[k].bandwidth *= warp;
            }
          }
          track.formants.push_back(fs);
          // Slow declination keeps the pitch from being perfectly flat.
          const double pos = static_cast<double>(track.f0.size());
          track.f0.push_back(f0 * (1.0 + 0.05 * std::sin(0.02 * pos)));
        }
      }
      VoiceOptions vo;
      vo.noise = options.noise;
      vo.glottal_pole = target && !options.identical_target ? options.target_glottal_pole : options.source_glottal_pole;
      vo.seed = options.seed * 1000 + static_cast<std::uint64_t>(u) * 2 + (target ? 1 : 0);
      return render_voice(track, vo);
    };

    corpus.source.push_back(build(src_blocks, false));
    corpus.target.push_back(options.identical_target ? corpus.source.back() : build(tgt_blocks, true));
    corpus.warp.push_back(warp);
  }
  return corpus;
}

std::filesystem::path write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir, std::size_t first,
                                   std::size_t count, const std::string& manifest_name) {
  std::filesystem::create_directories(dir);
  CorpusManifest manifest;
  const std::size_t end = std::min(corpus.source.size(), count == static_cast<std::size_t>(-1) ? corpus.source.size() : first + count);
  for (std::size_t i = first; i < end; ++i) {
    const std::string id = "utt" + std::to_string(i);
    const auto src = dir / (id + "_src.wav");
    const auto tgt = dir / (id + "_tgt.wav");
    write_wav(src, corpus.source[i]);
    write_wav(tgt, corpus.target[i]);
    manifest.entries.push_back({src.filename(), tgt.filename(), id});
  }
  const auto path = dir / manifest_name;
  write_manifest(path, manifest);
  return path;
}

std::filesystem::path scratch_dir(const std::string& tag) {
  static int counter = 0;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("formeq_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace formeq::testing
