#pragma once

// Frozen synthesizer interface (phones + prosody -> mel) with a
// deterministic template implementation and an external-mel adapter.
// Nothing here ever touches a gradient tape.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "attnstitch/align.hpp"
#include "attnstitch/melkit.hpp"

namespace astitch::synth {

class PhonemeInventory {
 public:
  PhonemeInventory() = default;
  /// Throws DataError on duplicate tokens.
  explicit PhonemeInventory(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  /// Throws DataError for unknown tokens.
  std::size_t id(const std::string& token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::size_t> ids(const align::Alignment& a) const;

  /// JSON list of tokens; position is the id.
  static PhonemeInventory from_json(const std::string& text);
  std::string to_json() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

struct ProsodyFeatures {
  std::vector<double> energy;
  std::vector<double> pitch;  // 0 = unvoiced
  std::vector<std::size_t> duration;

  std::size_t size() const { return duration.size(); }
  void validate(std::size_t n_phones) const;
};

struct ToySynthParams {
  mel::Matrix templates;  // P x M log-mel template per phoneme
  std::map<std::string, std::vector<double>> speaker_bias;
  double pitch_shift = 0.5;  // mel bands per pitch unit
  double energy_gain = 1.0;  // log-mel offset per energy unit
  std::vector<double> default_energy;
  std::vector<double> default_pitch;
  std::vector<double> mean_duration;

  std::size_t n_phonemes() const { return templates.rows; }
  std::size_t n_mels() const { return templates.cols; }

  static ToySynthParams generate(std::size_t n_phonemes, std::size_t n_mels, std::uint64_t seed);
};

/// Per-phoneme mean duration; NaN marks phonemes never observed.
struct DurationTable {
  std::vector<double> mean;

  static DurationTable estimate(std::span<const align::Alignment> corpus,
                                const PhonemeInventory& inventory);
};

/// Each phone contributes `duration` identical frames:
/// shift(template, pitch * pitch_shift) + energy * energy_gain + speaker bias.
mel::MelSpectrogram toy_synthesize(std::span<const std::size_t> phones,
                                   const ProsodyFeatures& prosody,
                                   const std::optional<std::string>& speaker,
                                   const ToySynthParams& params, const mel::MelConfig& cfg);

/// Round-half-to-even of the table mean, clamped to >= 1.
std::vector<std::size_t> predict_durations(std::span<const std::size_t> phones,
                                           const DurationTable& table);

/// Energy: mean per-frame L2 norm of linear mel power. Pitch proxy: mean
/// mel-band centroid. Duration: copied from the alignment.
ProsodyFeatures extract_prosody(const mel::MelSpectrogram& ref, const align::Alignment& a);

mel::MelSpectrogram import_external_mel(const std::string& path);

class Synthesizer {
 public:
  virtual ~Synthesizer() = default;

  virtual const PhonemeInventory& inventory() const = 0;
  virtual const mel::MelConfig& mel_config() const = 0;
  virtual std::vector<std::size_t> predict_durations(std::span<const std::size_t> phones) const = 0;
  /// Predicted energy/pitch for the phones, paired with the given durations.
  virtual ProsodyFeatures predict_prosody(std::span<const std::size_t> phones,
                                          std::vector<std::size_t> durations) const = 0;
  virtual mel::MelSpectrogram synthesize(std::span<const std::size_t> phones,
                                         const ProsodyFeatures& prosody,
                                         const std::optional<std::string>& speaker) const = 0;

  /// Mel for an alignment's phones at its own durations with predicted
  /// energy and pitch.
  mel::MelSpectrogram synthesize_aligned(const align::Alignment& a,
                                         const std::optional<std::string>& speaker = {}) const;
};

class ToySynthesizer final : public Synthesizer {
 public:
  ToySynthesizer(PhonemeInventory inventory, ToySynthParams params, DurationTable durations,
                 mel::MelConfig cfg);

  const PhonemeInventory& inventory() const override { return inventory_; }
  const mel::MelConfig& mel_config() const override { return cfg_; }
  std::vector<std::size_t> predict_durations(std::span<const std::size_t> phones) const override;
  ProsodyFeatures predict_prosody(std::span<const std::size_t> phones,
                                  std::vector<std::size_t> durations) const override;
  mel::MelSpectrogram synthesize(std::span<const std::size_t> phones,
                                 const ProsodyFeatures& prosody,
                                 const std::optional<std::string>& speaker) const override;

  const ToySynthParams& params() const { return params_; }
  const DurationTable& durations() const { return durations_; }

  std::string to_json() const;
  static ToySynthesizer from_json(const std::string& text);

 private:
  PhonemeInventory inventory_;
  ToySynthParams params_;
  DurationTable durations_;
  mel::MelConfig cfg_;
};

/// Serves a pre-computed mel (e.g. exported from a real FastSpeech 2) for
/// synthesis, delegating duration and prosody prediction to `predictor`.
class ExternalMelSynthesizer final : public Synthesizer {
 public:
  ExternalMelSynthesizer(const Synthesizer& predictor, mel::MelSpectrogram mel);

  const PhonemeInventory& inventory() const override { return predictor_.inventory(); }
  const mel::MelConfig& mel_config() const override { return mel_.config(); }
  std::vector<std::size_t> predict_durations(std::span<const std::size_t> phones) const override {
    return predictor_.predict_durations(phones);
  }
  ProsodyFeatures predict_prosody(std::span<const std::size_t> phones,
                                  std::vector<std::size_t> durations) const override {
    return predictor_.predict_prosody(phones, std::move(durations));
  }
  /// Returns the stored mel; throws DataError if its length differs from
  /// the requested total duration.
  mel::MelSpectrogram synthesize(std::span<const std::size_t> phones,
                                 const ProsodyFeatures& prosody,
                                 const std::optional<std::string>& speaker) const override;

 private:
  const Synthesizer& predictor_;
  mel::MelSpectrogram mel_;
};

/// Durations for an edit's replacement phones: the request's forced
/// durations when present, else the synthesizer's predictor.
std::vector<std::size_t> replacement_durations(const align::EditRequest& req,
                                               const Synthesizer& synth);

}  // namespace astitch::synth
