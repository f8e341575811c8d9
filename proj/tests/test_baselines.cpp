#include <catch2/catch_amalgamated.hpp>

#include "attnstitch/baselines.hpp"
#include "attnstitch/error.hpp"
#include "attnstitch/toy_corpus.hpp"

using namespace astitch;
using namespace astitch::baselines;
using Catch::Approx;

namespace {

const toy::ToyCorpus& corpus() {
  static const toy::ToyCorpus c = [] {
    toy::ToyCorpusConfig cfg;
    cfg.n_train = 8;
    cfg.n_heldout = 12;
    cfg.seed = 5;
    return toy::make_toy_corpus(cfg);
  }();
  return c;
}

/// Replaces word `w` with its own phones at ground-truth durations.
align::EditRequest identity_request(const align::Alignment& a, std::size_t w) {
  align::EditRequest req;
  req.reference = a;
  req.word_lo = req.word_hi = w;
  req.replacement_words = {a.words[w]};
  std::vector<std::size_t> durs;
  for (const auto& p : a.phones) {
    if (p.word != w) continue;
    req.replacement.push_back({p.phoneme, 0});
    durs.push_back(p.duration);
  }
  req.forced_durations = durs;
  return req;
}

}  // namespace

TEST_CASE("swap of a word with itself returns the synthesizer's own reference") {
  const auto& c = corpus();
  for (const auto& u : c.heldout) {
    const auto ref = c.synth.synthesize_aligned(u.alignment);
    for (std::size_t w = 0; w < u.alignment.words.size(); ++w) {
      const auto res = complete_synthesis_swap(ref, identity_request(u.alignment, w), c.synth);
      CHECK(res.mel == ref);
      CHECK(res.method == "swap");
    }
  }
}

TEST_CASE("swap geometry and purity on the held-out edits") {
  const auto& c = corpus();
  for (const auto& e : c.edits) {
    const auto& ref = c.heldout[e.utterance].reference;
    const auto res = complete_synthesis_swap(ref, e.request, c.synth);
    const auto old = align::word_frame_range(e.request.reference, e.request.word_lo, e.request.word_hi);
    const auto durs = synth::replacement_durations(e.request, c.synth);
    std::size_t L = 0;
    for (auto d : durs) L += d;
    REQUIRE(res.mel.n_frames() == ref.n_frames() - old.length() + L);
    CHECK(res.seams == std::vector<std::size_t>{old.start, old.start + L});
    CHECK(res.alignment.total_frames() == res.mel.n_frames());
    for (std::size_t t = 0; t < res.mel.n_frames(); ++t) {
      if (t >= old.start && t < old.start + L) continue;
      const std::size_t src = t < old.start ? t : t - L + old.length();
      for (std::size_t m = 0; m < ref.n_mels(); ++m) CHECK(res.mel(t, m) == ref(src, m));
    }
    // Inside the slot: the synthesized edited transcript's frames.
    const auto full = c.synth.synthesize_aligned(res.alignment, e.request.speaker);
    for (std::size_t t = old.start; t < old.start + L; ++t)
      for (std::size_t m = 0; m < ref.n_mels(); ++m) CHECK(res.mel(t, m) == full(t, m));
  }
}

TEST_CASE("featswitch with reference features reproduces the resynthesis") {
  const auto& c = corpus();
  FeatSwitchOptions all_ref;
  all_ref.target_from_reference = true;
  for (const auto& u : c.heldout) {
    const auto req = identity_request(u.alignment, 1);
    const auto res = featswitch(u.reference, req, c.synth, all_ref);
    const auto ids = c.synth.inventory().ids(u.alignment);
    const auto want = c.synth.synthesize(ids, synth::extract_prosody(u.reference, u.alignment), std::nullopt);
    CHECK(res.mel == want);
    CHECK(res.method == "featswitch");
  }
}

TEST_CASE("featswitch feature provenance") {
  const auto& c = corpus();
  for (const auto& e : c.edits) {
    const auto& ref = c.heldout[e.utterance].reference;
    const auto res = featswitch(ref, e.request, c.synth);
    const auto ref_pro = synth::extract_prosody(ref, e.request.reference);
    const auto& a = e.request.reference;
    REQUIRE(res.alignment.phones.size() == a.phones.size() - [&] {
      std::size_t n = 0;
      for (const auto& p : a.phones) n += (p.word >= e.request.word_lo && p.word <= e.request.word_hi);
      return n;
    }() + e.request.replacement.size());
    CHECK(res.prosody.size() == res.alignment.phones.size());
    CHECK(res.mel.n_frames() == res.alignment.total_frames());

    // Walk reference phones before and after the span alongside the output.
    std::size_t k = 0, out = 0;
    while (a.phones[k].word < e.request.word_lo) {
      CHECK(res.prosody.duration[out] == a.phones[k].duration);
      CHECK(res.prosody.energy[out] == ref_pro.energy[k]);
      CHECK(res.prosody.pitch[out] == ref_pro.pitch[k]);
      ++k, ++out;
    }
    const std::size_t first = out;
    while (k < a.phones.size() && a.phones[k].word <= e.request.word_hi) ++k;
    out += e.request.replacement.size();
    for (; k < a.phones.size(); ++k, ++out) {
      CHECK(res.prosody.duration[out] == a.phones[k].duration);
      CHECK(res.prosody.energy[out] == ref_pro.energy[k]);
    }
    // Target phones carry predicted features.
    std::vector<std::size_t> ids, durs;
    for (std::size_t j = 0; j < e.request.replacement.size(); ++j) {
      ids.push_back(c.synth.inventory().id(e.request.replacement[j].phoneme));
      durs.push_back(res.prosody.duration[first + j]);
    }
    CHECK(durs == synth::replacement_durations(e.request, c.synth));
    const auto predicted = c.synth.predict_prosody(ids, durs);
    for (std::size_t j = 0; j < ids.size(); ++j) {
      CHECK(res.prosody.energy[first + j] == predicted.energy[j]);
      CHECK(res.prosody.pitch[first + j] == predicted.pitch[j]);
    }
  }
}

TEST_CASE("baselines reject inconsistent input") {
  const auto& c = corpus();
  const auto& u = c.heldout[0];
  auto req = identity_request(u.alignment, 0);
  const mel::MelSpectrogram shorter(mel::Matrix(u.reference.n_frames() - 1, u.reference.n_mels(), -1.0),
                                    u.reference.config());
  CHECK_THROWS_AS(complete_synthesis_swap(shorter, req, c.synth), DataError);
  CHECK_THROWS_AS(featswitch(shorter, req, c.synth), DataError);
  req.replacement.push_back({"AA", 0});
  req.forced_durations->push_back(2);
  FeatSwitchOptions all_ref;
  all_ref.target_from_reference = true;
  CHECK_THROWS_AS(featswitch(u.reference, req, c.synth, all_ref), DataError);
  req.replacement.back().phoneme = "NOPE";
  CHECK_THROWS_AS(complete_synthesis_swap(u.reference, req, c.synth), DataError);
}
