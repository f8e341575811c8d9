#pragma once

// Synthetic corpus for desk-scale training and evaluation. References are
// toy-synthesizer mels passed through a fixed "speaker rendering" (temporal
// smoothing, gain/offset, additive noise) that the frozen
// synthesizer never applies, so naive splicing leaves a visible seam.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "attnstitch/align.hpp"
#include "attnstitch/melkit.hpp"
#include "attnstitch/synth.hpp"

namespace astitch::toy {

struct ToyCorpusConfig {
  std::size_t n_train = 60;
  std::size_t n_heldout = 24;
  std::size_t n_phonemes = 24;
  std::size_t n_mels = 20;
  std::size_t lexicon_size = 40;
  std::size_t min_words = 4;
  std::size_t max_words = 7;
  std::uint64_t seed = 0;
  double noise = 0.05;
  double gain = 0.85;
  double offset = -0.5;
  double energy_jitter = 0.1;
  std::string speaker = "spk0";

  void validate() const;
};

struct LexiconEntry {
  std::string word;
  std::vector<std::string> phones;
};

/// Per-phone prosody used when rendering a reference (kept so edit targets
/// can reuse it outside the edited span).
struct ToyUtterance {
  std::string id;
  align::Alignment alignment;
  synth::ProsodyFeatures prosody;
  mel::MelSpectrogram reference;
  mel::Matrix noise;
};

struct ToyEdit {
  std::string id;
  std::size_t utterance = 0;  // index into ToyCorpus::heldout
  align::EditRequest request;
  mel::MelSpectrogram target;  // ground-truth rendering of the edited utterance
};

struct ToyCorpus {
  ToyCorpusConfig config;
  mel::MelConfig mel_config;
  std::vector<LexiconEntry> lexicon;
  synth::ToySynthesizer synth;
  std::vector<ToyUtterance> train;
  std::vector<ToyUtterance> heldout;
  std::vector<ToyEdit> edits;
};

/// Mel config used by the toy corpus: defaults with n_mels overridden.
mel::MelConfig toy_mel_config(std::size_t n_mels);

/// smooth_time([0.25, 0.5, 0.25]) then gain * x + offset, edges replicated.
mel::Matrix render_speaker(const mel::Matrix& clean, double gain, double offset);

ToyCorpus make_toy_corpus(const ToyCorpusConfig& cfg);

}  // namespace astitch::toy
