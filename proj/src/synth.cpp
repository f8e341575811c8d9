#include "attnstitch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <random>

#include "attnstitch/error.hpp"

namespace astitch::synth {

using json = nlohmann::json;

PhonemeInventory::PhonemeInventory(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], i).second) {
      throw DataError("duplicate phoneme '" + tokens_[i] + "' in inventory");
    }
  }
}

std::size_t PhonemeInventory::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) throw DataError("unknown phoneme '" + token + "'");
  return it->second;
}

std::vector<std::size_t> PhonemeInventory::ids(const align::Alignment& a) const {
  std::vector<std::size_t> out;
  out.reserve(a.phones.size());
  for (const auto& p : a.phones) out.push_back(id(p.phoneme));
  return out;
}

PhonemeInventory PhonemeInventory::from_json(const std::string& text) {
  try {
    return PhonemeInventory(json::parse(text).get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("phoneme inventory: ") + e.what());
  }
}

std::string PhonemeInventory::to_json() const { return json(tokens_).dump(); }

void ProsodyFeatures::validate(std::size_t n_phones) const {
  if (energy.size() != n_phones || pitch.size() != n_phones || duration.size() != n_phones) {
    throw DataError("prosody tracks have lengths " + std::to_string(energy.size()) + "/" +
                    std::to_string(pitch.size()) + "/" + std::to_string(duration.size()) +
                    " for " + std::to_string(n_phones) + " phones");
  }
  for (std::size_t i = 0; i < n_phones; ++i) {
    if (!(energy[i] >= 0.0) || !std::isfinite(energy[i]) || !std::isfinite(pitch[i])) {
      throw DataError("invalid prosody value at phone " + std::to_string(i));
    }
  }
}

// ------------------------------------------------------------------ toy params

ToySynthParams ToySynthParams::generate(std::size_t n_phonemes, std::size_t n_mels,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ToySynthParams p;
  p.templates = mel::Matrix(n_phonemes, n_mels);
  const double bands = static_cast<double>(n_mels);
  for (std::size_t ph = 0; ph < n_phonemes; ++ph) {
    // Base level with a downward tilt plus two or three formant-like bumps.
    const int n_bumps = 2 + static_cast<int>(unit(rng) * 2.0);
    std::vector<double> centers, widths, heights;
    for (int b = 0; b < n_bumps; ++b) {
      centers.push_back(unit(rng) * bands);
      widths.push_back(1.0 + unit(rng) * bands / 8.0);
      heights.push_back(2.0 + unit(rng) * 3.0);
    }
    for (std::size_t m = 0; m < n_mels; ++m) {
      double v = -7.0 - 1.5 * static_cast<double>(m) / bands;
      for (int b = 0; b < n_bumps; ++b) {
        const double z = (static_cast<double>(m) - centers[b]) / widths[b];
        v += heights[b] * std::exp(-0.5 * z * z);
      }
      p.templates(ph, m) = std::min(v, -1.0);
    }
    const bool voiced = unit(rng) < 0.7;
    p.default_pitch.push_back(voiced ? 1.0 + 2.0 * unit(rng) : 0.0);
    p.default_energy.push_back(0.5 * unit(rng));
    p.mean_duration.push_back(3.0 + 5.0 * unit(rng));
  }
  for (int s = 0; s < 2; ++s) {
    std::vector<double> bias(n_mels);
    const double tilt = (unit(rng) - 0.5) * 1.0;
    for (std::size_t m = 0; m < n_mels; ++m) {
      bias[m] = tilt * (static_cast<double>(m) / bands - 0.5);
    }
    p.speaker_bias.emplace("spk" + std::to_string(s), std::move(bias));
  }
  return p;
}

DurationTable DurationTable::estimate(std::span<const align::Alignment> corpus,
                                      const PhonemeInventory& inventory) {
  std::vector<double> total(inventory.size(), 0.0);
  std::vector<std::size_t> count(inventory.size(), 0);
  for (const auto& a : corpus) {
    for (const auto& p : a.phones) {
      const std::size_t id = inventory.id(p.phoneme);
      total[id] += static_cast<double>(p.duration);
      count[id] += 1;
    }
  }
  DurationTable t;
  t.mean.resize(inventory.size());
  for (std::size_t i = 0; i < total.size(); ++i) {
    t.mean[i] = count[i] ? total[i] / static_cast<double>(count[i])
                         : std::numeric_limits<double>::quiet_NaN();
  }
  return t;
}

// ------------------------------------------------------------------ operations

mel::MelSpectrogram toy_synthesize(std::span<const std::size_t> phones,
                                   const ProsodyFeatures& prosody,
                                   const std::optional<std::string>& speaker,
                                   const ToySynthParams& params, const mel::MelConfig& cfg) {
  prosody.validate(phones.size());
  const std::size_t m_bins = params.n_mels();
  if (cfg.n_mels != m_bins) {
    throw DataError("toy synthesizer has " + std::to_string(m_bins) +
                    " mel bins but the config asks for " + std::to_string(cfg.n_mels));
  }
  std::vector<double> bias(m_bins, 0.0);
  if (speaker) {
    auto it = params.speaker_bias.find(*speaker);
    if (it == params.speaker_bias.end()) throw DataError("unknown speaker '" + *speaker + "'");
    bias = it->second;
  }
  std::size_t total = 0;
  for (std::size_t i = 0; i < phones.size(); ++i) {
    if (phones[i] >= params.n_phonemes()) {
      throw DataError("phoneme id " + std::to_string(phones[i]) + " is outside the inventory");
    }
    total += prosody.duration[i];
  }
  const double floor = cfg.log_floor_value();
  mel::Matrix out(total, m_bins);
  std::vector<double> frame(m_bins);
  std::size_t t = 0;
  for (std::size_t i = 0; i < phones.size(); ++i) {
    const std::size_t ph = phones[i];
    const double shift = prosody.pitch[i] * params.pitch_shift;
    const double gain = prosody.energy[i] * params.energy_gain;
    for (std::size_t m = 0; m < m_bins; ++m) {
      // Template read at (m - shift), linear interpolation, edge clamped.
      const double pos = std::clamp(static_cast<double>(m) - shift, 0.0,
                                    static_cast<double>(m_bins - 1));
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = std::min(lo + 1, m_bins - 1);
      const double frac = pos - static_cast<double>(lo);
      const double v = (1.0 - frac) * params.templates(ph, lo) + frac * params.templates(ph, hi);
      frame[m] = std::max(v + gain + bias[m], floor);
    }
    for (std::size_t d = 0; d < prosody.duration[i]; ++d, ++t) {
      std::copy(frame.begin(), frame.end(), out.data.begin() + static_cast<std::ptrdiff_t>(t * m_bins));
    }
  }
  return mel::MelSpectrogram(std::move(out), cfg);
}

std::vector<std::size_t> predict_durations(std::span<const std::size_t> phones,
                                           const DurationTable& table) {
  std::vector<std::size_t> out;
  out.reserve(phones.size());
  for (std::size_t ph : phones) {
    if (ph >= table.mean.size() || !std::isfinite(table.mean[ph])) {
      throw DataError("duration table has no entry for phoneme id " + std::to_string(ph));
    }
    const double r = std::nearbyint(table.mean[ph]);
    out.push_back(static_cast<std::size_t>(std::max(1.0, r)));
  }
  return out;
}

ProsodyFeatures extract_prosody(const mel::MelSpectrogram& ref, const align::Alignment& a) {
  if (a.total_frames() != ref.n_frames()) {
    throw DataError("alignment covers " + std::to_string(a.total_frames()) +
                    " frames but the mel has " + std::to_string(ref.n_frames()));
  }
  const std::size_t m_bins = ref.n_mels();
  const double floor_norm = ref.config().log_floor * std::sqrt(static_cast<double>(m_bins));
  ProsodyFeatures p;
  std::size_t t = 0;
  for (const auto& ph : a.phones) {
    double energy = 0.0, centroid = 0.0;
    for (std::size_t d = 0; d < ph.duration; ++d, ++t) {
      double sq = 0.0, mass = 0.0, moment = 0.0;
      for (std::size_t m = 0; m < m_bins; ++m) {
        const double pw = std::exp(ref(t, m));
        sq += pw * pw;
        mass += pw;
        moment += pw * static_cast<double>(m);
      }
      energy += std::sqrt(sq);
      centroid += moment / mass;
    }
    if (ph.duration > 0) {
      p.energy.push_back(energy / static_cast<double>(ph.duration));
      p.pitch.push_back(centroid / static_cast<double>(ph.duration));
    } else {
      p.energy.push_back(floor_norm);
      p.pitch.push_back(0.0);
    }
    p.duration.push_back(ph.duration);
  }
  return p;
}

mel::MelSpectrogram import_external_mel(const std::string& path) { return mel::load_melb(path); }

// ------------------------------------------------------------------ synthesizers

mel::MelSpectrogram Synthesizer::synthesize_aligned(const align::Alignment& a,
                                                    const std::optional<std::string>& speaker) const {
  const auto ids = inventory().ids(a);
  std::vector<std::size_t> durs;
  for (const auto& p : a.phones) durs.push_back(p.duration);
  return synthesize(ids, predict_prosody(ids, std::move(durs)), speaker);
}

ToySynthesizer::ToySynthesizer(PhonemeInventory inventory, ToySynthParams params,
                               DurationTable durations, mel::MelConfig cfg)
    : inventory_(std::move(inventory)),
      params_(std::move(params)),
      durations_(std::move(durations)),
      cfg_(cfg) {
  if (inventory_.size() != params_.n_phonemes() || durations_.mean.size() != inventory_.size()) {
    throw DataError("toy synthesizer: inventory, templates and duration table disagree in size");
  }
  if (params_.default_energy.size() != inventory_.size() ||
      params_.default_pitch.size() != inventory_.size()) {
    throw DataError("toy synthesizer: default prosody tables have the wrong size");
  }
  if (cfg_.n_mels != params_.n_mels()) {
    throw DataError("toy synthesizer: mel config bins differ from template width");
  }
  cfg_.validate();
}

std::vector<std::size_t> ToySynthesizer::predict_durations(std::span<const std::size_t> phones) const {
  return synth::predict_durations(phones, durations_);
}

ProsodyFeatures ToySynthesizer::predict_prosody(std::span<const std::size_t> phones,
                                                std::vector<std::size_t> durations) const {
  ProsodyFeatures p;
  for (std::size_t ph : phones) {
    if (ph >= inventory_.size()) throw DataError("phoneme id out of range");
    p.energy.push_back(params_.default_energy[ph]);
    p.pitch.push_back(params_.default_pitch[ph]);
  }
  p.duration = std::move(durations);
  p.validate(phones.size());
  return p;
}

mel::MelSpectrogram ToySynthesizer::synthesize(std::span<const std::size_t> phones,
                                               const ProsodyFeatures& prosody,
                                               const std::optional<std::string>& speaker) const {
  return toy_synthesize(phones, prosody, speaker, params_, cfg_);
}

std::string ToySynthesizer::to_json() const {
  json j;
  j["inventory"] = inventory_.tokens();
  j["mel"] = {{"sample_rate", cfg_.sample_rate}, {"n_fft", cfg_.n_fft}, {"hop", cfg_.hop},
              {"win", cfg_.win}, {"n_mels", cfg_.n_mels}, {"fmin", cfg_.fmin},
              {"fmax", cfg_.fmax}, {"log_floor", cfg_.log_floor}};
  json rows = json::array();
  for (std::size_t r = 0; r < params_.templates.rows; ++r) {
    rows.push_back(std::vector<double>(
        params_.templates.data.begin() + static_cast<std::ptrdiff_t>(r * params_.templates.cols),
        params_.templates.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * params_.templates.cols)));
  }
  j["templates"] = rows;
  j["speaker_bias"] = params_.speaker_bias;
  j["pitch_shift"] = params_.pitch_shift;
  j["energy_gain"] = params_.energy_gain;
  j["default_energy"] = params_.default_energy;
  j["default_pitch"] = params_.default_pitch;
  j["mean_duration"] = params_.mean_duration;
  json table = json::array();
  for (double v : durations_.mean) table.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  j["duration_table"] = table;
  return j.dump();
}

ToySynthesizer ToySynthesizer::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    mel::MelConfig cfg;
    const json& m = j.at("mel");
    cfg.sample_rate = m.at("sample_rate").get<int>();
    cfg.n_fft = m.at("n_fft").get<std::size_t>();
    cfg.hop = m.at("hop").get<std::size_t>();
    cfg.win = m.at("win").get<std::size_t>();
    cfg.n_mels = m.at("n_mels").get<std::size_t>();
    cfg.fmin = m.at("fmin").get<double>();
    cfg.fmax = m.at("fmax").get<double>();
    cfg.log_floor = m.at("log_floor").get<double>();
    ToySynthParams p;
    const auto rows = j.at("templates").get<std::vector<std::vector<double>>>();
    p.templates = mel::Matrix(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != p.templates.cols) throw FormatError("ragged template matrix");
      std::copy(rows[r].begin(), rows[r].end(),
                p.templates.data.begin() + static_cast<std::ptrdiff_t>(r * p.templates.cols));
    }
    p.speaker_bias = j.at("speaker_bias").get<std::map<std::string, std::vector<double>>>();
    p.pitch_shift = j.at("pitch_shift").get<double>();
    p.energy_gain = j.at("energy_gain").get<double>();
    p.default_energy = j.at("default_energy").get<std::vector<double>>();
    p.default_pitch = j.at("default_pitch").get<std::vector<double>>();
    p.mean_duration = j.at("mean_duration").get<std::vector<double>>();
    DurationTable t;
    for (const auto& v : j.at("duration_table")) {
      t.mean.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    }
    return ToySynthesizer(PhonemeInventory(j.at("inventory").get<std::vector<std::string>>()),
                          std::move(p), std::move(t), cfg);
  } catch (const json::exception& e) {
    throw FormatError(std::string("toy synthesizer description: ") + e.what());
  }
}

ExternalMelSynthesizer::ExternalMelSynthesizer(const Synthesizer& predictor, mel::MelSpectrogram mel)
    : predictor_(predictor), mel_(std::move(mel)) {
  if (mel_.n_mels() != predictor_.mel_config().n_mels) {
    throw DataError("external mel has " + std::to_string(mel_.n_mels()) +
                    " bins; the synthesizer front end expects " +
                    std::to_string(predictor_.mel_config().n_mels));
  }
}

mel::MelSpectrogram ExternalMelSynthesizer::synthesize(std::span<const std::size_t> phones,
                                                       const ProsodyFeatures& prosody,
                                                       const std::optional<std::string>&) const {
  prosody.validate(phones.size());
  std::size_t total = 0;
  for (std::size_t d : prosody.duration) total += d;
  if (total != mel_.n_frames()) {
    throw DataError("external mel has " + std::to_string(mel_.n_frames()) +
                    " frames but the edited transcript needs " + std::to_string(total));
  }
  return mel_;
}

std::vector<std::size_t> replacement_durations(const align::EditRequest& req,
                                               const Synthesizer& synth) {
  if (req.forced_durations) return *req.forced_durations;
  std::vector<std::size_t> ids;
  for (const auto& p : req.replacement) ids.push_back(synth.inventory().id(p.phoneme));
  return synth.predict_durations(ids);
}

}  // namespace astitch::synth
