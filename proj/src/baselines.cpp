#include "attnstitch/baselines.hpp"

#include <algorithm>

#include "attnstitch/error.hpp"

namespace astitch::baselines {

namespace {

void check_reference(const mel::MelSpectrogram& ref, const align::EditRequest& req) {
  req.validate();
  if (req.reference.total_frames() != ref.n_frames()) {
    throw DataError("reference alignment covers " + std::to_string(req.reference.total_frames()) +
                    " frames but the reference mel has " + std::to_string(ref.n_frames()));
  }
}

}  // namespace

BaselineResult complete_synthesis_swap(const mel::MelSpectrogram& ref,
                                       const align::EditRequest& req,
                                       const synth::Synthesizer& synth) {
  check_reference(ref, req);
  const auto plan = align::resize_for_edit(req.reference, req, synth::replacement_durations(req, synth));
  const auto full = synth.synthesize_aligned(plan.edited, req.speaker);
  if (full.n_mels() != ref.n_mels()) {
    throw ShapeError("synthesizer emits " + std::to_string(full.n_mels()) +
                     " mel bins, reference has " + std::to_string(ref.n_mels()));
  }
  mel::Matrix out = align::splice_reference(ref, plan.old_region, plan.mask.length()).frames();
  const std::size_t m = ref.n_mels();
  const auto& src = full.frames().data;
  std::copy(src.begin() + static_cast<std::ptrdiff_t>(plan.mask.start * m),
            src.begin() + static_cast<std::ptrdiff_t>(plan.mask.end * m),
            out.data.begin() + static_cast<std::ptrdiff_t>(plan.mask.start * m));
  return BaselineResult{"swap",
                        mel::MelSpectrogram(std::move(out), ref.config()),
                        {plan.mask.start, plan.mask.end},
                        plan.edited,
                        {}};
}

BaselineResult featswitch(const mel::MelSpectrogram& ref, const align::EditRequest& req,
                          const synth::Synthesizer& synth, const FeatSwitchOptions& opts) {
  check_reference(ref, req);
  const auto plan = align::resize_for_edit(req.reference, req, synth::replacement_durations(req, synth));
  const auto ref_pro = synth::extract_prosody(ref, req.reference);

  // Reference phones in the edited span.
  const auto& phones = req.reference.phones;
  std::size_t span_lo = 0;
  while (span_lo < phones.size() && phones[span_lo].word < req.word_lo) ++span_lo;
  std::size_t span_hi = span_lo;
  while (span_hi < phones.size() && phones[span_hi].word <= req.word_hi) ++span_hi;
  const std::size_t n_span = span_hi - span_lo;
  const std::size_t n_rep = req.replacement.size();
  if (opts.target_from_reference && n_span != n_rep) {
    throw DataError("featswitch: reference target features need " + std::to_string(n_span) +
                    " replacement phones, got " + std::to_string(n_rep));
  }

  const auto ids = synth.inventory().ids(plan.edited);
  const std::size_t first = plan.first_replacement_phone;
  std::vector<std::size_t> target_ids(ids.begin() + static_cast<std::ptrdiff_t>(first),
                                      ids.begin() + static_cast<std::ptrdiff_t>(first + n_rep));
  std::vector<std::size_t> target_durs;
  for (std::size_t k = 0; k < n_rep; ++k) target_durs.push_back(plan.edited.phones[first + k].duration);
  const auto predicted = synth.predict_prosody(target_ids, target_durs);

  synth::ProsodyFeatures pro;
  for (std::size_t k = 0; k < plan.edited.phones.size(); ++k) {
    pro.duration.push_back(plan.edited.phones[k].duration);
    const bool target = k >= first && k < first + n_rep;
    if (target && !opts.target_from_reference) {
      pro.energy.push_back(predicted.energy[k - first]);
      pro.pitch.push_back(predicted.pitch[k - first]);
    } else {
      const std::size_t src = k < first ? k : k - n_rep + n_span;
      pro.energy.push_back(ref_pro.energy[src]);
      pro.pitch.push_back(ref_pro.pitch[src]);
    }
  }
  auto out = synth.synthesize(ids, pro, req.speaker);
  return BaselineResult{"featswitch", std::move(out), {plan.mask.start, plan.mask.end}, plan.edited,
                        std::move(pro)};
}

}  // namespace astitch::baselines
