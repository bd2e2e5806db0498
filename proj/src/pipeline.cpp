#include "formeq/pipeline.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>

namespace formeq {

using nlohmann::json;

std::size_t AnalysisConfig::fft_size() const {
  return next_pow2(static_cast<std::size_t>(std::lround(frame_length * sample_rate)));
}

json config_to_json(const TrainConfig& c) {
  const auto& a = c.analysis;
  return json{{"sample_rate", a.sample_rate},
              {"frame_shift", a.frame_shift},
              {"frame_length", a.frame_length},
              {"fft_size", a.fft_size()},
              {"order", a.order},
              {"alpha", a.alpha},
              {"lpc_order", a.lpc_order},
              {"pre_emphasis", a.pre_emphasis},
              {"components", c.components},
              {"formant_components", c.formant_components},
              {"seed", c.seed},
              {"max_iter", c.max_iter},
              {"rel_tol", c.rel_tol},
              {"sigma", c.sigma},
              {"invalid_formants", c.invalid_policy == InvalidFormantPolicy::drop ? "drop" : "keep_unwarped"}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  auto& a = c.analysis;
  a.sample_rate = j.at("sample_rate").get<double>();
  a.frame_shift = j.at("frame_shift").get<double>();
  a.frame_length = j.at("frame_length").get<double>();
  a.order = j.at("order").get<int>();
  a.alpha = j.at("alpha").get<double>();
  a.lpc_order = j.at("lpc_order").get<int>();
  a.pre_emphasis = j.at("pre_emphasis").get<double>();
  c.components = j.at("components").get<int>();
  c.formant_components = j.at("formant_components").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.max_iter = j.at("max_iter").get<int>();
  c.rel_tol = j.at("rel_tol").get<double>();
  c.sigma = j.at("sigma").get<double>();
  const auto policy = j.at("invalid_formants").get<std::string>();
  if (policy == "drop") {
    c.invalid_policy = InvalidFormantPolicy::drop;
  } else if (policy == "keep_unwarped") {
    c.invalid_policy = InvalidFormantPolicy::keep_unwarped;
  } else {
    throw InputError("config: unknown invalid_formants policy '" + policy + "'");
  }
  if (j.contains("fft_size") && j.at("fft_size").get<std::size_t>() != a.fft_size()) {
    throw InputError("config: fft_size does not match frame_length and sample_rate");
  }
  return c;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return cells;
}

Eigen::MatrixXd drop_c0(const Eigen::Ref<const Eigen::MatrixXd>& mcep) { return mcep.bottomRows(mcep.rows() - 1); }

}  // namespace

CorpusManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("manifest: cannot open " + path.string());
  const auto base = path.parent_path();
  CorpusManifest manifest;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (lineno == 1 && cells.size() == 3 && cells[0] == "src_wav") continue;
    if (cells.size() != 3 || cells[0].empty() || cells[1].empty() || cells[2].empty()) {
      throw InputError("manifest: line " + std::to_string(lineno) + " needs src_wav,tgt_wav,utt_id");
    }
    ManifestEntry e{cells[0], cells[1], cells[2]};
    if (e.source.is_relative()) e.source = base / e.source;
    if (e.target.is_relative()) e.target = base / e.target;
    if (e.source == e.target) throw InputError("manifest: source and target are the same file for " + e.id);
    manifest.entries.push_back(std::move(e));
  }
  if (manifest.entries.empty()) throw InputError("manifest: no entries in " + path.string());
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw InputError("manifest: cannot create " + path.string());
  out << "src_wav,tgt_wav,utt_id\n";
  for (const auto& e : manifest.entries) out << e.source.string() << ',' << e.target.string() << ',' << e.id << '\n';
}

UtteranceFeatures analyze_utterance(const AudioClip& clip, const AnalysisConfig& config) {
  if (clip.sample_rate != config.sample_rate) {
    throw InputError("sample rate " + std::to_string(clip.sample_rate) + " does not match configured " +
                     std::to_string(config.sample_rate));
  }
  const FeatureSequence spec = stft_analyze(clip, config.frame_shift, config.frame_length);
  const WarpedCepstrum cepstrum(spec.dim(), config.order, config.alpha);
  UtteranceFeatures u;
  u.mcep = cepstrum.analyze_frames(spec.frames);
  u.logspec = cepstrum.synthesize_frames(u.mcep);
  u.formants = track_formants(clip, spec, FormantOptions{config.lpc_order, config.pre_emphasis});
  return u;
}

namespace {

template <typename F>
auto with_utterance_id(const std::string& id, F&& f) {
  try {
    return f();
  } catch (const InputError& e) {
    throw InputError("utterance " + id + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError("utterance " + id + ": " + e.what());
  }
}

std::pair<UtteranceFeatures, UtteranceFeatures> analyze_entry(const ManifestEntry& e, const AnalysisConfig& config) {
  return with_utterance_id(e.id, [&] {
    return std::make_pair(analyze_utterance(read_wav(e.source), config),
                          analyze_utterance(read_wav(e.target), config));
  });
}

}  // namespace

std::vector<AlignedPair> align_corpus(const CorpusManifest& manifest, const AnalysisConfig& config) {
  std::vector<AlignedPair> all;
  for (const auto& e : manifest.entries) {
    const auto [src, tgt] = analyze_entry(e, config);
    auto pairs = pair_frames(dtw_align(src.mcep, tgt.mcep), src, tgt);
    all.insert(all.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
  }
  return all;
}

json report_to_json(const EqualizationReport& r) {
  return json{{"equalized", r.equalized},
              {"identity", r.identity},
              {"rejected", r.rejected},
              {"mean_melcd_before", r.mean_melcd_before},
              {"mean_melcd_after", r.mean_melcd_after}};
}

namespace {

EqualizationReport equalization_report_from_json(const json& j) {
  EqualizationReport r;
  r.equalized = j.at("equalized").get<std::size_t>();
  r.identity = j.at("identity").get<std::size_t>();
  r.rejected = j.at("rejected").get<std::size_t>();
  r.mean_melcd_before = j.at("mean_melcd_before").get<double>();
  r.mean_melcd_after = j.at("mean_melcd_after").get<double>();
  return r;
}

}  // namespace

json bundle_to_json(const ModelBundle& b) {
  return json{{"version", 1},
              {"config", config_to_json(b.config)},
              {"stats", report_to_json(b.stats)},
              {"main_gmm", gmm_to_json(b.main_gmm)},
              {"formant_gmm", gmm_to_json(b.formant_gmm)}};
}

ModelBundle bundle_from_json(const json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw InputError("model: unsupported version");
    ModelBundle b{gmm_from_json(j.at("main_gmm")), gmm_from_json(j.at("formant_gmm")),
                  config_from_json(j.at("config")), equalization_report_from_json(j.at("stats"))};
    const Eigen::Index order = b.config.analysis.order;
    if (b.main_gmm.dx() != order || b.main_gmm.dy() != order) {
      throw InputError("model: main GMM dimensions do not match the configured order");
    }
    if (b.formant_gmm.dx() != order || b.formant_gmm.dy() != 2 * kFormantCount) {
      throw InputError("model: formant GMM dimensions do not match the configured order");
    }
    return b;
  } catch (const json::exception& e) {
    throw InputError(std::string("model: malformed json: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const ModelBundle& bundle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("model: cannot create " + path.string());
  out << bundle_to_json(bundle).dump() << '\n';
  if (!out) throw InputError("model: write failed for " + path.string());
}

ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("model: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError("model: cannot parse " + path.string() + ": " + e.what());
  }
  return bundle_from_json(j);
}

ModelBundle train_from_equalized(const CorpusEqualization& corpus, const TrainConfig& config,
                                 TrainDiagnostics* diagnostics) {
  TrainDiagnostics local;
  TrainDiagnostics& diag = diagnostics ? *diagnostics : local;
  diag.aligned_pairs = corpus.report.total();

  const auto retained = static_cast<Eigen::Index>(corpus.report.retained());
  if (retained < 10 * static_cast<Eigen::Index>(config.components)) {
    throw InputError("train: only " + std::to_string(retained) + " retained pairs for " +
                     std::to_string(config.components) + " components (need 10 per component)");
  }
  const Eigen::MatrixXd x = drop_c0(corpus.source);
  const Eigen::MatrixXd y = drop_c0(corpus.target);

  EmOptions main_opts{config.components, config.seed, config.max_iter, config.rel_tol};
  JointGmm main = train_em(x, y, main_opts, &diag.main_trace);

  EmOptions formant_opts{config.formant_components, config.seed + 1, config.max_iter, config.rel_tol};
  JointGmm formant = train_formant_gmm(x, corpus.target_formants, formant_opts, &diag.formant_trace);

  return ModelBundle{std::move(main), std::move(formant), config, corpus.report};
}

ModelBundle train(const CorpusManifest& manifest, const TrainConfig& config, TrainDiagnostics* diagnostics) {
  if (manifest.entries.size() < 2) throw InputError("train: need at least two utterance pairs");
  const auto& a = config.analysis;
  const auto pairs = align_corpus(manifest, a);
  const WarpedCepstrum cepstrum(a.bins(), a.order, a.alpha);
  const auto corpus = equalize_corpus(pairs, cepstrum, a.nyquist(), config.invalid_policy);
  return train_from_equalized(corpus, config, diagnostics);
}

namespace {

ConvertedUtterance convert_features(const UtteranceFeatures& src, const ModelBundle& model) {
  const auto& a = model.config.analysis;
  const WarpedCepstrum cepstrum(a.bins(), a.order, a.alpha);
  const Eigen::MatrixXd x = drop_c0(src.mcep);
  const ConversionResult mapped = model.main_gmm.convert_frames(x);

  ConvertedUtterance out;
  for (auto* seq : {&out.mcep, &out.logspec}) {
    seq->frame_shift = a.frame_shift;
    seq->frame_length = a.frame_length;
    seq->sample_rate = a.sample_rate;
    seq->alpha = a.alpha;
    seq->order = a.order;
  }
  out.mcep.kind = FeatureKind::mcep;
  out.logspec.kind = FeatureKind::logspec;
  out.mcep.frames.resize(a.order + 1, src.size());
  out.logspec.frames.resize(a.bins(), src.size());

  for (Eigen::Index f = 0; f < src.size(); ++f) {
    Eigen::VectorXd m(a.order + 1);
    m(0) = src.mcep(0, f);
    m.tail(a.order) = mapped.converted.col(f);
    const auto& measured = src.formants[static_cast<std::size_t>(f)];
    if (measured.valid) {
      const FormantFrame predicted = predict_target_formants(model.formant_gmm, x.col(f), a.nyquist());
      const WarpFunction w = build_warp(measured, predicted, a.nyquist());
      if (!w.is_identity()) {
        const double c0 = m(0);
        m = cepstrum.analyze(apply_dfw(cepstrum.synthesize(m), w));
        m(0) = c0;
        ++out.warped_frames;
      }
    }
    out.mcep.frames.col(f) = m;
    out.logspec.frames.col(f) = cepstrum.synthesize(m);
  }
  if (!out.mcep.frames.allFinite()) throw NumericalError("convert: non-finite converted frame");
  return out;
}

}  // namespace

ConvertedUtterance convert_utterance(const AudioClip& source, const ModelBundle& model) {
  return convert_features(analyze_utterance(source, model.config.analysis), model);
}

EvaluationReport evaluate(const ModelBundle& model, const CorpusManifest& manifest, const EvaluationOptions& options) {
  const auto& a = model.config.analysis;
  const WarpedCepstrum cepstrum(a.bins(), a.order, a.alpha);
  EvaluationReport report;
  std::vector<AlignedPair> pairs;
  double sum_src = 0.0, sum_conv = 0.0;
  for (const auto& e : manifest.entries) {
    const auto [src, tgt] = analyze_entry(e, a);
    const AlignmentPath path = dtw_align(src.mcep, tgt.mcep);
    const ConvertedUtterance conv = with_utterance_id(e.id, [&] { return convert_features(src, model); });
    for (const auto& s : path.steps) {
      sum_src += mel_cd(src.mcep.col(s.src), tgt.mcep.col(s.tgt));
      sum_conv += mel_cd(conv.mcep.frames.col(s.src), tgt.mcep.col(s.tgt));
    }
    auto p = pair_frames(path, src, tgt);
    pairs.insert(pairs.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
    ++report.utterances;
  }
  report.aligned_pairs = pairs.size();
  if (pairs.empty()) throw InputError("evaluate: no aligned pairs");
  report.melcd_source_target = sum_src / static_cast<double>(pairs.size());
  report.melcd_converted_target = sum_conv / static_cast<double>(pairs.size());

  const auto corpus = equalize_corpus(pairs, cepstrum, a.nyquist(), model.config.invalid_policy);
  report.equalization = corpus.report;

  Eigen::MatrixXd raw_x(a.order, static_cast<Eigen::Index>(pairs.size()));
  Eigen::MatrixXd raw_y(a.order, static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    raw_x.col(static_cast<Eigen::Index>(i)) = pairs[i].src_mcep.tail(a.order);
    raw_y.col(static_cast<Eigen::Index>(i)) = pairs[i].tgt_mcep.tail(a.order);
  }
  ComplexityOptions grid_opts;
  grid_opts.sigma = model.config.sigma;
  grid_opts.rows = options.grid_rows;
  grid_opts.cols = options.grid_cols;
  report.complexity_raw = complexity_grid(raw_x, raw_y, grid_opts).mean();
  if (corpus.report.retained() > 0) {
    report.complexity_equalized = complexity_grid(drop_c0(corpus.source), drop_c0(corpus.target), grid_opts).mean();
  }
  return report;
}

json report_to_json(const EvaluationReport& r) {
  return json{{"utterances", r.utterances},
              {"aligned_pairs", r.aligned_pairs},
              {"melcd_source_target", r.melcd_source_target},
              {"melcd_converted_target", r.melcd_converted_target},
              {"melcd_equalized_pairs", r.equalization.mean_melcd_after},
              {"equalization", report_to_json(r.equalization)},
              {"complexity", {{"raw_mean", r.complexity_raw}, {"equalized_mean", r.complexity_equalized}}}};
}

FeatureSequence pairs_sequence(const Eigen::Ref<const Eigen::MatrixXd>& source_mcep,
                               const Eigen::Ref<const Eigen::MatrixXd>& target_mcep, const AnalysisConfig& config) {
  if (source_mcep.cols() != target_mcep.cols()) throw InputError("pairs: frame counts differ");
  if (source_mcep.rows() != config.order + 1 || target_mcep.rows() != config.order + 1) {
    throw InputError("pairs: frames do not match the configured order");
  }
  FeatureSequence seq;
  seq.kind = FeatureKind::pairs;
  seq.frame_shift = config.frame_shift;
  seq.frame_length = config.frame_length;
  seq.sample_rate = config.sample_rate;
  seq.alpha = config.alpha;
  seq.order = config.order;
  seq.source_dim = config.order;
  seq.frames.resize(2 * config.order, source_mcep.cols());
  seq.frames.topRows(config.order) = drop_c0(source_mcep);
  seq.frames.bottomRows(config.order) = drop_c0(target_mcep);
  return seq;
}

AudioClip resynthesize(const FeatureSequence& logspecs, int iterations) {
  if (logspecs.kind != FeatureKind::logspec) throw InputError("resynthesize: expected a logspec sequence");
  if (logspecs.empty()) throw InputError("resynthesize: empty sequence");
  const auto bins = static_cast<std::size_t>(logspecs.dim());
  const std::size_t fft_size = 2 * (bins - 1);
  const auto hop = static_cast<std::size_t>(std::lround(logspecs.frame_shift * logspecs.sample_rate));
  const auto length = static_cast<std::size_t>(std::lround(logspecs.frame_length * logspecs.sample_rate));
  if (hop == 0 || length == 0 || length > fft_size) throw InputError("resynthesize: inconsistent frame metadata");
  const auto frames = static_cast<std::size_t>(logspecs.size());
  const std::size_t total = (frames - 1) * hop + length;

  // Magnitudes at the analysis floor are treated as exact silence.
  const double floor_log = std::log(kSpectralFloor);
  Eigen::MatrixXd magnitude(logspecs.dim(), logspecs.size());
  for (Eigen::Index i = 0; i < magnitude.size(); ++i) {
    const double l = logspecs.frames.data()[i];
    magnitude.data()[i] = l <= floor_log + 1e-9 ? 0.0 : std::exp(l);
  }

  const Eigen::VectorXd window = hann_window(length);
  std::vector<double> norm(total, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t n = 0; n < length; ++n) norm[f * hop + n] += window(static_cast<Eigen::Index>(n)) * window(static_cast<Eigen::Index>(n));
  }

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::vector<std::complex<double>>> spectra(frames, std::vector<std::complex<double>>(bins));
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t k = 0; k < bins; ++k) spectra[f][k] = magnitude(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(f));
  }

  std::vector<double> signal(total, 0.0);
  std::vector<double> buffer(fft_size);
  std::vector<std::complex<double>> spec;
  auto overlap_add = [&] {
    std::fill(signal.begin(), signal.end(), 0.0);
    for (std::size_t f = 0; f < frames; ++f) {
      fft.inv(buffer, spectra[f], static_cast<Eigen::Index>(fft_size));
      for (std::size_t n = 0; n < length; ++n) signal[f * hop + n] += buffer[n] * window(static_cast<Eigen::Index>(n));
    }
    for (std::size_t i = 0; i < total; ++i) signal[i] = norm[i] > 1e-8 ? signal[i] / norm[i] : 0.0;
  };

  for (int it = 0; it < iterations; ++it) {
    overlap_add();
    for (std::size_t f = 0; f < frames; ++f) {
      std::fill(buffer.begin(), buffer.end(), 0.0);
      for (std::size_t n = 0; n < length; ++n) buffer[n] = signal[f * hop + n] * window(static_cast<Eigen::Index>(n));
      fft.fwd(spec, buffer);
      for (std::size_t k = 0; k < bins; ++k) {
        const double mag = magnitude(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(f));
        const double a = std::abs(spec[k]);
        spectra[f][k] = a > 0.0 ? spec[k] * (mag / a) : std::complex<double>(mag, 0.0);
      }
    }
  }
  overlap_add();

  AudioClip clip;
  clip.sample_rate = logspecs.sample_rate;
  clip.samples = std::move(signal);
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0) {
    for (double& s : clip.samples) s *= 0.95 / peak;
  }
  return clip;
}

}  // namespace formeq
