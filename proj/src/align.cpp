#include "attnstitch/align.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "attnstitch/byteio.hpp"
#include "attnstitch/error.hpp"

namespace astitch::align {

using json = nlohmann::json;

std::size_t Alignment::total_frames() const {
  std::size_t n = 0;
  for (const auto& p : phones) n += p.duration;
  return n;
}

void Alignment::validate() const {
  for (std::size_t i = 0; i < phones.size(); ++i) {
    const Phone& p = phones[i];
    if (p.word >= words.size()) {
      throw DataError("phone " + std::to_string(i) + " ('" + p.phoneme + "') has word index " +
                      std::to_string(p.word) + " but only " + std::to_string(words.size()) +
                      " words exist");
    }
    if (i > 0 && p.word < phones[i - 1].word) {
      throw DataError("word index decreases at phone " + std::to_string(i) + " (" +
                      std::to_string(phones[i - 1].word) + " -> " + std::to_string(p.word) + ")");
    }
  }
}

void EditRequest::validate() const {
  reference.validate();
  if (word_lo > word_hi || word_hi >= reference.words.size()) {
    throw DataError("edit span [" + std::to_string(word_lo) + ", " + std::to_string(word_hi) +
                    "] is outside the " + std::to_string(reference.words.size()) +
                    " reference words");
  }
  if (replacement.empty()) throw DataError("replacement phone sequence is empty");
  for (std::size_t i = 0; i < replacement.size(); ++i) {
    if (replacement[i].word >= replacement_words.size()) {
      throw DataError("replacement phone " + std::to_string(i) + " refers to missing word " +
                      std::to_string(replacement[i].word));
    }
    if (i > 0 && replacement[i].word < replacement[i - 1].word) {
      throw DataError("replacement word indices must be non-decreasing");
    }
  }
  if (forced_durations && forced_durations->size() != replacement.size()) {
    throw DataError("forced durations do not match the replacement phone count");
  }
}

MaskRegion word_frame_range(const Alignment& a, std::size_t word_lo, std::size_t word_hi) {
  if (word_lo > word_hi || word_hi >= a.words.size()) {
    throw DataError("word range [" + std::to_string(word_lo) + ", " + std::to_string(word_hi) +
                    "] out of range for " + std::to_string(a.words.size()) + " words");
  }
  MaskRegion r;
  std::size_t t = 0;
  bool started = false;
  for (const Phone& p : a.phones) {
    if (p.word < word_lo) {
      t += p.duration;
      continue;
    }
    if (p.word > word_hi) break;
    if (!started) {
      r.start = t;
      started = true;
    }
    t += p.duration;
  }
  if (!started) r.start = t;
  r.end = started ? t : r.start;
  return r;
}

MaskRegion sample_training_mask(std::size_t n_frames, double fraction, std::mt19937_64& rng) {
  if (n_frames < 10) {
    throw DataError("training mask needs at least 10 frames, got " + std::to_string(n_frames));
  }
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw UsageError("mask fraction must lie in (0, 1)");
  }
  const double T = static_cast<double>(n_frames);
  const auto len = static_cast<std::size_t>(std::max(1.0, std::round(fraction * T)));
  // Integer starts s with (2s + len) / 2 in [0.4T, 0.6T].
  const double half = static_cast<double>(len) / 2.0;
  auto lo = static_cast<std::ptrdiff_t>(std::ceil(0.4 * T - half));
  auto hi = static_cast<std::ptrdiff_t>(std::floor(0.6 * T - half));
  const auto max_start = static_cast<std::ptrdiff_t>(n_frames - len);
  lo = std::clamp<std::ptrdiff_t>(lo, 0, max_start);
  hi = std::clamp<std::ptrdiff_t>(hi, lo, max_start);
  std::uniform_int_distribution<std::ptrdiff_t> pick(lo, hi);
  const auto start = static_cast<std::size_t>(pick(rng));
  return MaskRegion{start, start + len};
}

mel::MelSpectrogram apply_mask(const mel::MelSpectrogram& m, MaskRegion r) {
  if (r.start > r.end || r.end > m.n_frames()) {
    throw DataError("mask [" + std::to_string(r.start) + ", " + std::to_string(r.end) +
                    ") exceeds " + std::to_string(m.n_frames()) + " frames");
  }
  mel::Matrix f = m.frames();
  std::fill(f.data.begin() + static_cast<std::ptrdiff_t>(r.start * f.cols),
            f.data.begin() + static_cast<std::ptrdiff_t>(r.end * f.cols), 0.0);
  return mel::MelSpectrogram(std::move(f), m.config());
}

EditPlan resize_for_edit(const Alignment& ref, const EditRequest& req,
                         const std::vector<std::size_t>& predicted_durations) {
  req.validate();
  if (predicted_durations.size() != req.replacement.size()) {
    throw DataError("got " + std::to_string(predicted_durations.size()) +
                    " predicted durations for " + std::to_string(req.replacement.size()) +
                    " replacement phones");
  }
  for (std::size_t d : predicted_durations) {
    if (d == 0) throw DataError("predicted durations must be >= 1 frame");
  }
  const std::size_t lo = req.word_lo, hi = req.word_hi;
  EditPlan plan;
  plan.old_region = word_frame_range(ref, lo, hi);

  Alignment& out = plan.edited;
  out.hop = ref.hop;
  out.sample_rate = ref.sample_rate;
  out.words.assign(ref.words.begin(), ref.words.begin() + static_cast<std::ptrdiff_t>(lo));
  out.words.insert(out.words.end(), req.replacement_words.begin(), req.replacement_words.end());
  out.words.insert(out.words.end(), ref.words.begin() + static_cast<std::ptrdiff_t>(hi + 1),
                   ref.words.end());

  const std::size_t removed = hi - lo + 1;
  const std::size_t added = req.replacement_words.size();
  bool inserted = false;
  std::size_t new_len = 0;
  auto insert_replacement = [&] {
    plan.first_replacement_phone = out.phones.size();
    for (std::size_t i = 0; i < req.replacement.size(); ++i) {
      out.phones.push_back(
          Phone{req.replacement[i].phoneme, predicted_durations[i], lo + req.replacement[i].word});
      new_len += predicted_durations[i];
    }
    inserted = true;
  };
  for (const Phone& p : ref.phones) {
    if (p.word < lo) {
      out.phones.push_back(p);
    } else if (p.word <= hi) {
      if (!inserted) insert_replacement();
    } else {
      if (!inserted) insert_replacement();
      Phone q = p;
      q.word = p.word - removed + added;
      out.phones.push_back(q);
    }
  }
  if (!inserted) insert_replacement();

  plan.mask = MaskRegion{plan.old_region.start, plan.old_region.start + new_len};
  plan.new_length = ref.total_frames() - plan.old_region.length() + new_len;
  out.validate();
  return plan;
}

mel::MelSpectrogram splice_reference(const mel::MelSpectrogram& ref, MaskRegion old,
                                     std::size_t new_len) {
  if (old.start > old.end || old.end > ref.n_frames()) {
    throw DataError("splice region [" + std::to_string(old.start) + ", " +
                    std::to_string(old.end) + ") exceeds " + std::to_string(ref.n_frames()) +
                    " frames");
  }
  const std::size_t m = ref.n_mels();
  const std::size_t out_len = ref.n_frames() - old.length() + new_len;
  mel::Matrix f(out_len, m, 0.0);
  const auto& src = ref.frames().data;
  std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(old.start * m), f.data.begin());
  std::copy(src.begin() + static_cast<std::ptrdiff_t>(old.end * m), src.end(),
            f.data.begin() + static_cast<std::ptrdiff_t>((old.start + new_len) * m));
  return mel::MelSpectrogram(std::move(f), ref.config());
}

Alignment parse_alignment(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("alignment is not valid JSON: ") + e.what());
  }
  auto need = [&](const char* key, json::value_t type) -> const json& {
    if (!j.is_object() || !j.contains(key)) {
      throw FormatError(std::string("alignment: missing field '") + key + "'");
    }
    const json& v = j.at(key);
    const bool ok = type == json::value_t::number_unsigned
                        ? v.is_number_integer() && v.get<std::int64_t>() >= 0
                        : v.type() == type;
    if (!ok) throw FormatError(std::string("alignment: field '") + key + "' has the wrong type");
    return v;
  };
  Alignment a;
  for (const auto& w : need("words", json::value_t::array)) {
    if (!w.is_string()) throw FormatError("alignment: words must be strings");
    a.words.push_back(w.get<std::string>());
  }
  const json& phones = need("phones", json::value_t::array);
  for (std::size_t i = 0; i < phones.size(); ++i) {
    const json& p = phones[i];
    auto bad = [&](const std::string& what) {
      return FormatError("alignment: phone " + std::to_string(i) + ": " + what);
    };
    if (!p.is_object() || !p.contains("p") || !p.contains("d") || !p.contains("w")) {
      throw bad("needs fields p, d, w");
    }
    if (!p["p"].is_string()) throw bad("'p' must be a string");
    if (!p["d"].is_number_integer() || p["d"].get<std::int64_t>() < 0) {
      throw bad("'d' must be a non-negative integer");
    }
    if (!p["w"].is_number_integer() || p["w"].get<std::int64_t>() < 0) {
      throw bad("'w' must be a non-negative integer");
    }
    a.phones.push_back(Phone{p["p"].get<std::string>(), p["d"].get<std::size_t>(),
                             p["w"].get<std::size_t>()});
  }
  a.hop = need("hop", json::value_t::number_unsigned).get<std::size_t>();
  a.sample_rate = need("sample_rate", json::value_t::number_unsigned).get<int>();
  if (a.hop == 0 || a.sample_rate <= 0) throw FormatError("alignment: hop and sample_rate must be positive");
  a.validate();
  if (j.contains("frames")) {
    if (!j["frames"].is_number_integer()) throw FormatError("alignment: 'frames' must be an integer");
    const auto declared = j["frames"].get<std::int64_t>();
    if (declared < 0 || static_cast<std::size_t>(declared) != a.total_frames()) {
      throw DataError("alignment: durations sum to " + std::to_string(a.total_frames()) +
                      " but 'frames' declares " + std::to_string(declared));
    }
  }
  return a;
}

std::string serialize_alignment(const Alignment& a) {
  json j;
  j["words"] = a.words;
  j["phones"] = json::array();
  for (const auto& p : a.phones) {
    j["phones"].push_back({{"p", p.phoneme}, {"d", p.duration}, {"w", p.word}});
  }
  j["hop"] = a.hop;
  j["sample_rate"] = a.sample_rate;
  j["frames"] = a.total_frames();
  return j.dump(2);
}

Alignment load_alignment(const std::string& path) { return parse_alignment(io::read_file(path)); }

void save_alignment(const Alignment& a, const std::string& path) {
  io::write_file(path, serialize_alignment(a) + "\n");
}

}  // namespace astitch::align
