#include "attnstitch/toy_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "attnstitch/error.hpp"

namespace astitch::toy {

namespace {

const char* const kPhonemes[] = {"AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH",
                                 "EH", "ER", "EY", "F",  "G",  "HH", "IH", "IY", "JH", "K",
                                 "L",  "M",  "N",  "NG", "OW", "OY", "P",  "R",  "S",  "SH",
                                 "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH"};
constexpr std::size_t kMaxPhonemes = sizeof(kPhonemes) / sizeof(kPhonemes[0]);

std::vector<LexiconEntry> make_lexicon(std::size_t n_words, std::size_t n_phonemes,
                                       std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(1, 3), ph(0, n_phonemes - 1);
  std::vector<LexiconEntry> lex;
  for (std::size_t w = 0; w < n_words; ++w) {
    LexiconEntry e;
    e.word = "w" + std::to_string(w);
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) e.phones.emplace_back(kPhonemes[ph(rng)]);
    lex.push_back(std::move(e));
  }
  // Every phoneme occurs somewhere in the lexicon.
  for (std::size_t p = 0; p < n_phonemes; ++p) lex[p % n_words].phones.emplace_back(kPhonemes[p]);
  return lex;
}

struct Utterance {
  align::Alignment alignment;
  synth::ProsodyFeatures prosody;
};

Utterance make_utterance(const std::vector<LexiconEntry>& lex, const synth::ToySynthesizer& syn,
                         const ToyCorpusConfig& cfg, const mel::MelConfig& mc,
                         std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> n_words(cfg.min_words, cfg.max_words);
  std::uniform_int_distribution<std::size_t> pick(0, lex.size() - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto& params = syn.params();
  Utterance u;
  u.alignment.hop = mc.hop;
  u.alignment.sample_rate = mc.sample_rate;
  const std::size_t nw = n_words(rng);
  for (std::size_t w = 0; w < nw; ++w) {
    const LexiconEntry& e = lex[pick(rng)];
    u.alignment.words.push_back(e.word);
    for (const auto& p : e.phones) {
      const std::size_t id = syn.inventory().id(p);
      const double d = std::round(params.mean_duration[id] + gauss(rng));
      u.alignment.phones.push_back(align::Phone{p, static_cast<std::size_t>(std::max(1.0, d)), w});
      u.prosody.energy.push_back(std::max(0.0, params.default_energy[id] + cfg.energy_jitter * gauss(rng)));
      u.prosody.pitch.push_back(params.default_pitch[id]);
      u.prosody.duration.push_back(u.alignment.phones.back().duration);
    }
  }
  return u;
}

mel::Matrix draw_noise(std::size_t frames, std::size_t bins, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, sigma);
  mel::Matrix n(frames, bins);
  for (double& v : n.data) v = gauss(rng);
  return n;
}

mel::MelSpectrogram finish(const mel::Matrix& rendered, const mel::Matrix& noise,
                           const mel::MelConfig& mc) {
  const double floor = mc.log_floor_value();
  mel::Matrix out = rendered;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = std::max(out.data[i] + noise.data[i], floor);
  }
  return mel::MelSpectrogram(std::move(out), mc);
}

ToyUtterance render(std::string id, Utterance u, const synth::ToySynthesizer& syn,
                    const ToyCorpusConfig& cfg, std::mt19937_64& rng) {
  const auto ids = syn.inventory().ids(u.alignment);
  const auto clean = syn.synthesize(ids, u.prosody, cfg.speaker);
  const mel::Matrix rendered = render_speaker(clean.frames(), cfg.gain, cfg.offset);
  mel::Matrix noise = draw_noise(rendered.rows, rendered.cols, cfg.noise, rng);
  auto ref = finish(rendered, noise, syn.mel_config());
  return ToyUtterance{std::move(id), std::move(u.alignment), std::move(u.prosody), std::move(ref),
                      std::move(noise)};
}

}  // namespace

void ToyCorpusConfig::validate() const {
  if (n_train == 0) throw UsageError("toy corpus: n_train must be >= 1");
  if (n_phonemes < 2 || n_phonemes > kMaxPhonemes) {
    throw UsageError("toy corpus: n_phonemes must lie in [2, " + std::to_string(kMaxPhonemes) + "]");
  }
  if (n_mels < 2) throw UsageError("toy corpus: n_mels must be >= 2");
  if (lexicon_size < 2) throw UsageError("toy corpus: lexicon needs at least 2 words");
  if (min_words < 1 || max_words < min_words) throw UsageError("toy corpus: bad word count range");
  if (!(noise >= 0.0) || !(energy_jitter >= 0.0)) {
    throw UsageError("toy corpus: noise and jitter must be >= 0");
  }
}

mel::MelConfig toy_mel_config(std::size_t n_mels) {
  mel::MelConfig c;
  c.n_mels = n_mels;
  c.validate();
  return c;
}

mel::Matrix render_speaker(const mel::Matrix& clean, double gain, double offset) {
  mel::Matrix out(clean.rows, clean.cols);
  if (clean.rows == 0) return out;
  for (std::size_t t = 0; t < clean.rows; ++t) {
    const std::size_t prev = t == 0 ? 0 : t - 1;
    const std::size_t next = std::min(t + 1, clean.rows - 1);
    for (std::size_t m = 0; m < clean.cols; ++m) {
      const double s = 0.25 * clean(prev, m) + 0.5 * clean(t, m) + 0.25 * clean(next, m);
      out(t, m) = gain * s + offset;
    }
  }
  return out;
}

ToyCorpus make_toy_corpus(const ToyCorpusConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const mel::MelConfig mc = toy_mel_config(cfg.n_mels);

  std::vector<std::string> tokens(kPhonemes, kPhonemes + cfg.n_phonemes);
  synth::PhonemeInventory inventory(tokens);
  auto params = synth::ToySynthParams::generate(cfg.n_phonemes, cfg.n_mels, rng());
  if (!params.speaker_bias.count(cfg.speaker)) {
    throw UsageError("toy corpus: unknown speaker '" + cfg.speaker + "'");
  }
  auto lexicon = make_lexicon(cfg.lexicon_size, cfg.n_phonemes, rng);

  // Utterances are drawn with a synthesizer whose durations come straight
  // from the generator; the shipped synthesizer re-estimates them from the
  // training alignments.
  synth::DurationTable prior{params.mean_duration};
  synth::ToySynthesizer drawing(inventory, params, prior, mc);

  std::vector<Utterance> raw_train, raw_heldout;
  for (std::size_t i = 0; i < cfg.n_train; ++i) {
    raw_train.push_back(make_utterance(lexicon, drawing, cfg, mc, rng));
  }
  for (std::size_t i = 0; i < cfg.n_heldout; ++i) {
    raw_heldout.push_back(make_utterance(lexicon, drawing, cfg, mc, rng));
  }

  std::vector<align::Alignment> train_aligns;
  for (const auto& u : raw_train) train_aligns.push_back(u.alignment);
  auto table = synth::DurationTable::estimate(train_aligns, inventory);
  for (std::size_t p = 0; p < table.mean.size(); ++p) {
    if (std::isnan(table.mean[p])) table.mean[p] = params.mean_duration[p];
  }

  ToyCorpus corpus{cfg, mc, lexicon, synth::ToySynthesizer(inventory, params, table, mc), {}, {}, {}};
  const auto& syn = corpus.synth;

  for (std::size_t i = 0; i < raw_train.size(); ++i) {
    corpus.train.push_back(render("train" + std::to_string(i), std::move(raw_train[i]), syn, cfg, rng));
  }
  for (std::size_t i = 0; i < raw_heldout.size(); ++i) {
    corpus.heldout.push_back(
        render("heldout" + std::to_string(i), std::move(raw_heldout[i]), syn, cfg, rng));
  }

  // One edit per held-out utterance: the first, the last and a random
  // interior word in rotation; every fourth edit inserts two words.
  std::uniform_int_distribution<std::size_t> pick(0, lexicon.size() - 1);
  for (std::size_t i = 0; i < corpus.heldout.size(); ++i) {
    const ToyUtterance& u = corpus.heldout[i];
    const std::size_t nw = u.alignment.words.size();
    std::size_t w;
    if (i % 3 == 0) {
      w = 0;
    } else if (i % 3 == 1) {
      w = nw - 1;
    } else {
      w = std::uniform_int_distribution<std::size_t>(0, nw - 1)(rng);
    }
    align::EditRequest req;
    req.reference = u.alignment;
    req.word_lo = req.word_hi = w;
    req.speaker = cfg.speaker;
    const std::size_t n_new = i % 4 == 3 ? 2 : 1;
    for (std::size_t k = 0; k < n_new; ++k) {
      const LexiconEntry* e;
      do {
        e = &lexicon[pick(rng)];
      } while (e->word == u.alignment.words[w]);
      req.replacement_words.push_back(e->word);
      for (const auto& p : e->phones) req.replacement.push_back(align::ReplacementPhone{p, k});
    }

    std::vector<std::size_t> rep_ids;
    for (const auto& p : req.replacement) rep_ids.push_back(syn.inventory().id(p.phoneme));
    const auto durs = syn.predict_durations(rep_ids);
    const auto plan = align::resize_for_edit(u.alignment, req, durs);

    // Ground truth: reference prosody outside the span, predicted inside,
    // rendered as a whole; reference noise outside, fresh noise inside.
    const auto target_ids = syn.inventory().ids(plan.edited);
    synth::ProsodyFeatures pro;
    const std::size_t first = plan.first_replacement_phone;
    const std::size_t n_rep = req.replacement.size();
    std::size_t n_before = 0;
    while (n_before < u.alignment.phones.size() && u.alignment.phones[n_before].word < w) ++n_before;
    std::size_t n_span = 0;
    while (n_before + n_span < u.alignment.phones.size() &&
           u.alignment.phones[n_before + n_span].word == w) {
      ++n_span;
    }
    for (std::size_t k = 0; k < plan.edited.phones.size(); ++k) {
      const std::size_t id = target_ids[k];
      pro.duration.push_back(plan.edited.phones[k].duration);
      if (k >= first && k < first + n_rep) {
        pro.energy.push_back(syn.params().default_energy[id]);
        pro.pitch.push_back(syn.params().default_pitch[id]);
      } else {
        const std::size_t src = k < first ? k : k - n_rep + n_span;
        pro.energy.push_back(u.prosody.energy[src]);
        pro.pitch.push_back(u.prosody.pitch[src]);
      }
    }
    const auto clean = syn.synthesize(target_ids, pro, cfg.speaker);
    const mel::Matrix rendered = render_speaker(clean.frames(), cfg.gain, cfg.offset);
    const mel::Matrix fresh = draw_noise(plan.mask.length(), cfg.n_mels, cfg.noise, rng);
    mel::Matrix noise(plan.new_length, cfg.n_mels);
    const std::size_t m = cfg.n_mels;
    auto& nd = noise.data;
    const auto& rd = u.noise.data;
    std::copy(rd.begin(), rd.begin() + static_cast<std::ptrdiff_t>(plan.old_region.start * m), nd.begin());
    std::copy(fresh.data.begin(), fresh.data.end(),
              nd.begin() + static_cast<std::ptrdiff_t>(plan.mask.start * m));
    std::copy(rd.begin() + static_cast<std::ptrdiff_t>(plan.old_region.end * m), rd.end(),
              nd.begin() + static_cast<std::ptrdiff_t>(plan.mask.end * m));

    corpus.edits.push_back(ToyEdit{"edit" + std::to_string(i), i, std::move(req),
                                   finish(rendered, noise, mc)});
  }
  return corpus;
}

}  // namespace astitch::toy
