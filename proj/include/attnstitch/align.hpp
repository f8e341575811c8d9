#pragma once

// Phone/word alignments, edit masks and timeline splicing.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "attnstitch/melkit.hpp"

namespace astitch::align {

struct Phone {
  std::string phoneme;
  std::size_t duration = 0;  // mel frames
  std::size_t word = 0;      // index into Alignment::words

  friend bool operator==(const Phone&, const Phone&) = default;
};

struct Alignment {
  std::vector<std::string> words;
  std::vector<Phone> phones;
  std::size_t hop = 256;
  int sample_rate = 22050;

  std::size_t total_frames() const;
  /// word indices non-decreasing and in range; throws DataError otherwise.
  void validate() const;

  friend bool operator==(const Alignment&, const Alignment&) = default;
};

/// Half-open frame interval [start, end).
struct MaskRegion {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool empty() const { return start == end; }
  bool contains(std::size_t t) const { return t >= start && t < end; }

  friend bool operator==(const MaskRegion&, const MaskRegion&) = default;
};

/// A replacement phone; `word` indexes EditRequest::replacement_words.
struct ReplacementPhone {
  std::string phoneme;
  std::size_t word = 0;
};

struct EditRequest {
  std::string reference_mel_path;
  Alignment reference;
  std::size_t word_lo = 0;  // inclusive
  std::size_t word_hi = 0;  // inclusive
  std::vector<std::string> replacement_words;
  std::vector<ReplacementPhone> replacement;
  std::optional<std::string> speaker;
  /// Overrides the duration predictor for the replacement phones.
  std::optional<std::vector<std::size_t>> forced_durations;

  void validate() const;
};

/// Everything resize_for_edit derives for an edit.
struct EditPlan {
  Alignment edited;
  MaskRegion old_region;  // edited span on the reference timeline
  MaskRegion mask;        // replacement slot on the spliced timeline
  std::size_t new_length = 0;
  std::size_t first_replacement_phone = 0;  // index into edited.phones
};

/// Frames of the phones whose word index lies in [word_lo, word_hi].
MaskRegion word_frame_range(const Alignment& a, std::size_t word_lo, std::size_t word_hi);

/// Contiguous mask of max(1, round(fraction * T)) frames whose center
/// (start + end) / 2 lies in [0.4 T, 0.6 T].
MaskRegion sample_training_mask(std::size_t n_frames, double fraction, std::mt19937_64& rng);

/// Frames in r set to zero across all bins; others untouched.
mel::MelSpectrogram apply_mask(const mel::MelSpectrogram& m, MaskRegion r);

/// Replace the edited span with the replacement phones (predicted
/// durations), keeping reference durations everywhere else.
EditPlan resize_for_edit(const Alignment& ref, const EditRequest& req,
                         const std::vector<std::size_t>& predicted_durations);

/// ref[0:old.start] ++ zeros(new_len) ++ ref[old.end:].
mel::MelSpectrogram splice_reference(const mel::MelSpectrogram& ref, MaskRegion old,
                                     std::size_t new_len);

/// Schema: {"words":[..], "phones":[{"p":..,"d":..,"w":..}], "hop":..,
/// "sample_rate":.., "frames": optional declared total}.
Alignment parse_alignment(const std::string& json_text);
std::string serialize_alignment(const Alignment& a);
Alignment load_alignment(const std::string& path);
void save_alignment(const Alignment& a, const std::string& path);

}  // namespace astitch::align
