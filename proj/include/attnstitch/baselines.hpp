#pragma once

// Comparison editors sharing the synthesizer interface with the stitcher:
// a hard splice of synthesized word frames and a prosody-switching full
// resynthesis.

#include <string>
#include <vector>

#include "attnstitch/align.hpp"
#include "attnstitch/melkit.hpp"
#include "attnstitch/synth.hpp"

namespace astitch::baselines {

struct BaselineResult {
  std::string method;
  mel::MelSpectrogram mel;
  std::vector<std::size_t> seams;  // splice frame indices, each <= mel.n_frames()
  align::Alignment alignment;      // edited transcript with the durations used
  synth::ProsodyFeatures prosody;  // filled by featswitch only
};

/// Synthesizes the edited transcript and pastes its replacement frames over
/// the edited span; every other frame is copied from `ref`. No crossfade.
BaselineResult complete_synthesis_swap(const mel::MelSpectrogram& ref,
                                       const align::EditRequest& req,
                                       const synth::Synthesizer& synth);

struct FeatSwitchOptions {
  /// Take target-phone energy and pitch from the reference as well; only
  /// valid when the replacement has as many phones as the edited span.
  bool target_from_reference = false;
};

/// Whole-utterance resynthesis: non-target phones keep the reference's
/// durations, energy and pitch; target phones get predicted features.
BaselineResult featswitch(const mel::MelSpectrogram& ref, const align::EditRequest& req,
                          const synth::Synthesizer& synth, const FeatSwitchOptions& opts = {});

}  // namespace astitch::baselines
