#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <regex>
#include <string>

#include "formeq/pipeline.hpp"

namespace fs = std::filesystem;
using namespace formeq;

namespace {

std::ofstream open_output(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw InputError("cannot create " + path.string());
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& j) { open_output(path) << j.dump(2) << '\n'; }

// "<width>x<height>": columns by rows.
std::pair<Eigen::Index, Eigen::Index> parse_resolution(const std::string& text) {
  std::smatch m;
  if (!std::regex_match(text, m, std::regex(R"((\d+)x(\d+))"))) {
    throw InputError("resolution must look like 200x200, got '" + text + "'");
  }
  const auto cols = std::stol(m[1]), rows = std::stol(m[2]);
  if (cols < 1 || rows < 1) throw InputError("resolution must be positive");
  return {rows, cols};
}

InvalidFormantPolicy parse_policy(const std::string& name) {
  if (name == "keep_unwarped") return InvalidFormantPolicy::keep_unwarped;
  if (name == "drop") return InvalidFormantPolicy::drop;
  throw InputError("unknown invalid-formant policy '" + name + "'");
}

void print_report(const EqualizationReport& r) {
  std::printf("pairs %zu: equalized %zu, identity %zu, rejected %zu; melCD %.3f -> %.3f dB\n", r.total(),
              r.equalized, r.identity, r.rejected, r.mean_melcd_before, r.mean_melcd_after);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Formant-equalized GMM voice conversion"};
  app.require_subcommand(1);

  std::string in_a, in_b, out;

  auto* analyze = app.add_subcommand("analyze", "Mel-cepstral analysis of a WAV file to VCF1");
  bool analyze_logspec = false;
  analyze->add_option("wav", in_a, "Input 16-bit mono WAV")->required();
  analyze->add_option("-o,--output", out, "Output VCF1")->required();
  analyze->add_flag("--logspec", analyze_logspec, "Write the STFT log-magnitudes instead of mel-cepstra");

  auto* formants = app.add_subcommand("formants", "Per-frame LPC formant track to CSV");
  formants->add_option("wav", in_a, "Input WAV")->required();
  formants->add_option("-o,--output", out, "Output CSV")->required();

  auto* align = app.add_subcommand("align", "DTW alignment of two mel-cepstral VCF1 files");
  align->add_option("source", in_a, "Source VCF1")->required();
  align->add_option("target", in_b, "Target VCF1")->required();
  align->add_option("-o,--output", out, "Output CSV of frame index pairs")->required();

  std::string policy = "keep_unwarped";
  auto* equalize = app.add_subcommand("equalize", "Align and formant-equalize a parallel corpus");
  equalize->add_option("manifest", in_a, "CSV manifest src_wav,tgt_wav,utt_id")->required();
  equalize->add_option("-o,--output", out, "Output directory")->required();
  equalize->add_option("--invalid-formants", policy, "keep_unwarped or drop")->capture_default_str();

  TrainConfig train_config;
  auto* train_cmd = app.add_subcommand("train", "Train the conversion and formant mixtures");
  train_cmd->add_option("manifest", in_a, "CSV manifest")->required();
  train_cmd->add_option("-o,--output", out, "Output model JSON")->required();
  train_cmd->add_option("--q", train_config.components, "Main mixture components")->capture_default_str();
  train_cmd->add_option("--formant-q", train_config.formant_components, "Formant mixture components")
      ->capture_default_str();
  train_cmd->add_option("--seed", train_config.seed, "Initialisation seed")->capture_default_str();
  train_cmd->add_option("--max-iter", train_config.max_iter, "EM iteration cap")->capture_default_str();
  train_cmd->add_option("--sigma", train_config.sigma, "Complexity kernel width stored with the model")
      ->capture_default_str();
  train_cmd->add_option("--invalid-formants", policy, "keep_unwarped or drop")->capture_default_str();

  std::string wav_out;
  auto* convert = app.add_subcommand("convert", "Convert a source utterance");
  convert->add_option("source", in_a, "Source WAV")->required();
  convert->add_option("model", in_b, "Model JSON")->required();
  convert->add_option("-o,--output", out, "Converted mel-cepstra VCF1")->required();
  convert->add_option("--wav", wav_out, "Also write a magnitude-only resynthesis (listening aid)");

  std::string res = "50x50";
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Objective evaluation on a test manifest");
  evaluate_cmd->add_option("model", in_a, "Model JSON")->required();
  evaluate_cmd->add_option("manifest", in_b, "CSV manifest")->required();
  evaluate_cmd->add_option("-o,--output", out, "Report JSON")->required();
  evaluate_cmd->add_option("--res", res, "Complexity grid resolution WxH")->capture_default_str();

  double sigma = kDefaultSigma;
  std::string grid_res = "200x200", pgm;
  bool full_space = false, standardize_targets = false;
  auto* complexity = app.add_subcommand("complexity", "Complexity map of a pairs VCF1");
  complexity->add_option("pairs", in_a, "Pairs VCF1 (e.g. pairs_equalized.vcf1)")->required();
  complexity->add_option("-o,--output", out, "Grid CSV; a .json summary is written next to it")->required();
  complexity->add_option("--sigma", sigma, "Gaussian kernel width")->capture_default_str();
  complexity->add_option("--res", grid_res, "Grid resolution WxH")->capture_default_str();
  complexity->add_option("--pgm", pgm, "Also write an 8-bit PGM image");
  complexity->add_flag("--full-space", full_space, "Weight in the full standardized source space");
  complexity->add_flag("--standardize-targets", standardize_targets, "z-score target dimensions first");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const AnalysisConfig analysis;
    if (*analyze) {
      const AudioClip clip = read_wav(in_a);
      if (clip.sample_rate != analysis.sample_rate) {
        throw InputError("expected " + std::to_string(static_cast<int>(analysis.sample_rate)) + " Hz audio");
      }
      const FeatureSequence spec = stft_analyze(clip, analysis.frame_shift, analysis.frame_length);
      write_vcf1(out, analyze_logspec ? spec : mcep_sequence(spec, analysis.order, analysis.alpha));
    } else if (*formants) {
      const AudioClip clip = read_wav(in_a);
      const FeatureSequence spec = stft_analyze(clip, analysis.frame_shift, analysis.frame_length);
      auto file = open_output(out);
      write_formant_csv(file, track_formants(clip, spec, {analysis.lpc_order, analysis.pre_emphasis}));
    } else if (*align) {
      const FeatureSequence src = read_vcf1(in_a), tgt = read_vcf1(in_b);
      if (src.kind != FeatureKind::mcep || tgt.kind != FeatureKind::mcep) {
        throw InputError("align expects mcep VCF1 files");
      }
      const AlignmentPath path = dtw_align(src, tgt);
      auto file = open_output(out);
      write_alignment_csv(file, path);
      std::printf("%zu steps, cost %.6f\n", path.size(), path.cost);
    } else if (*equalize) {
      const CorpusManifest manifest = read_manifest(in_a);
      const auto pairs = align_corpus(manifest, analysis);
      const WarpedCepstrum cep(analysis.bins(), analysis.order, analysis.alpha);
      const CorpusEqualization corpus = equalize_corpus(pairs, cep, analysis.nyquist(), parse_policy(policy));
      const fs::path dir = out;
      fs::create_directories(dir);
      Eigen::MatrixXd raw_src(analysis.order + 1, static_cast<Eigen::Index>(pairs.size()));
      Eigen::MatrixXd raw_tgt(analysis.order + 1, raw_src.cols());
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        raw_src.col(static_cast<Eigen::Index>(i)) = pairs[i].src_mcep;
        raw_tgt.col(static_cast<Eigen::Index>(i)) = pairs[i].tgt_mcep;
      }
      write_vcf1(dir / "pairs_raw.vcf1", pairs_sequence(raw_src, raw_tgt, analysis));
      write_vcf1(dir / "pairs_equalized.vcf1", pairs_sequence(corpus.source, corpus.target, analysis));
      auto report = open_output(dir / "report.json");
      write_equalization_report(report, corpus.report);
      print_report(corpus.report);
    } else if (*train_cmd) {
      train_config.invalid_policy = parse_policy(policy);
      TrainDiagnostics diag;
      const ModelBundle model = train(read_manifest(in_a), train_config, &diag);
      save_model(out, model);
      print_report(model.stats);
      std::printf("main mixture: %zu EM iterations, formant mixture: %zu\n", diag.main_trace.log_likelihood.size(),
                  diag.formant_trace.log_likelihood.size());
    } else if (*convert) {
      const ModelBundle model = load_model(in_b);
      const ConvertedUtterance conv = convert_utterance(read_wav(in_a), model);
      write_vcf1(out, conv.mcep);
      if (!wav_out.empty()) write_wav(wav_out, resynthesize(conv.logspec));
      std::printf("%td frames, %zu formant-warped\n", conv.mcep.size(), conv.warped_frames);
    } else if (*evaluate_cmd) {
      const auto [rows, cols] = parse_resolution(res);
      const EvaluationReport report = evaluate(load_model(in_a), read_manifest(in_b), {rows, cols});
      write_json(out, report_to_json(report));
      std::printf("melCD source %.3f dB, converted %.3f dB\n", report.melcd_source_target,
                  report.melcd_converted_target);
    } else if (*complexity) {
      const FeatureSequence pairs = read_vcf1(in_a);
      if (pairs.kind != FeatureKind::pairs || pairs.source_dim < 1 || pairs.source_dim >= pairs.dim()) {
        throw InputError("complexity expects a pairs VCF1 file");
      }
      ComplexityOptions opts;
      opts.sigma = sigma;
      std::tie(opts.rows, opts.cols) = parse_resolution(grid_res);
      opts.space = full_space ? WeightSpace::full : WeightSpace::projected;
      opts.standardize_targets = standardize_targets;
      const Eigen::Index dx = pairs.source_dim;
      const ComplexityGrid grid =
          complexity_grid(pairs.frames.topRows(dx), pairs.frames.bottomRows(pairs.dim() - dx), opts);
      {
        auto file = open_output(out);
        write_grid_csv(file, grid);
      }
      {
        auto file = open_output(fs::path(out).replace_extension(".json"));
        write_grid_json(file, grid);
      }
      if (!pgm.empty()) {
        auto file = open_output(pgm, std::ios::out | std::ios::binary);
        write_grid_pgm(file, grid);
      }
      std::printf("%td of %td cells with data, mean %.4f\n", grid.data_cells(), grid.values.size(), grid.mean());
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
