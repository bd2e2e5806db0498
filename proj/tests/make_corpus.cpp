// Writes a synthetic parallel corpus (WAVs plus train.csv / test.csv) for the CLI smoke test.

#include <CLI11.hpp>

#include <cstdio>

#include "synth.hpp"

using namespace formeq;

int main(int argc, char** argv) {
  CLI::App app{"Synthetic two-speaker corpus"};
  std::string dir;
  int train = 6, test = 2;
  bool silent = false;
  app.add_option("dir", dir, "Output directory")->required();
  app.add_option("--train", train, "Training utterances")->capture_default_str();
  app.add_option("--test", test, "Held-out utterances")->capture_default_str();
  app.add_flag("--silent", silent, "Write all-zero audio instead (degenerate corpus)");
  CLI11_PARSE(app, argc, argv);

  testing::CorpusOptions opts;
  opts.utterances = train + test;
  testing::SyntheticCorpus corpus;
  if (silent) {
    AudioClip zero;
    zero.samples.assign(8000, 0.0);
    corpus.source.assign(static_cast<std::size_t>(opts.utterances), zero);
    corpus.target = corpus.source;
  } else {
    corpus = testing::make_corpus(opts);
  }
  testing::write_corpus(corpus, dir, 0, static_cast<std::size_t>(train), "train.csv");
  testing::write_corpus(corpus, dir, static_cast<std::size_t>(train), static_cast<std::size_t>(test), "test.csv");
  std::printf("%d + %d utterances in %s\n", train, test, dir.c_str());
  return 0;
}
