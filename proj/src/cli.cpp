#include "attnstitch/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "attnstitch/baselines.hpp"
#include "attnstitch/byteio.hpp"
#include "attnstitch/checkpoint.hpp"
#include "attnstitch/error.hpp"
#include "attnstitch/image.hpp"
#include "attnstitch/toy_corpus.hpp"

namespace astitch::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ------------------------------------------------------------------ config

void RunConfig::validate() const {
  mel.validate();
  model.validate();
  if (model.n_mels != mel.n_mels) {
    throw UsageError("model n_mels (" + std::to_string(model.n_mels) + ") differs from mel n_mels (" +
                     std::to_string(mel.n_mels) + ")");
  }
  if (!(mask_fraction > 0.0 && mask_fraction < 1.0)) {
    throw UsageError("mask_fraction must lie in (0, 1)");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) throw UsageError("lr must be a positive finite number");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (griffin_lim_iters < 1) throw UsageError("griffin_lim_iters must be >= 1");
  if (method != "all" && std::find(kMethods.begin(), kMethods.end(), method) == kMethods.end()) {
    throw UsageError("unknown method '" + method + "' (expected attentionstitch, swap, featswitch or all)");
  }
}

std::string toml_subset_to_json(const std::string& text) {
  json out = json::object();
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    // Strip comments outside quoted strings.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    auto bad = [&](const std::string& what) {
      return UsageError("config line " + std::to_string(lineno) + ": " + what);
    };
    if (line.front() == '[') {
      if (line.back() != ']') throw bad("unterminated section header");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw bad("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw bad("expected key = value");
    try {
      out[key] = json::parse(value);
    } catch (const json::parse_error&) {
      throw bad("cannot parse value '" + value + "'");
    }
    if (out[key].is_structured()) throw bad("arrays and tables are not supported");
  }
  return out.dump();
}

namespace {

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t> ||
                  std::is_same_v<T, int>) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw UsageError("");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw UsageError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw UsageError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' has an invalid value: " + v.dump());
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, bool toml, RunConfig c) {
  json j;
  try {
    j = json::parse(toml ? toml_subset_to_json(text) : text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("config must be an object of key/value pairs");
  // Nested objects are flattened so {"train": {"steps": 5}} also works.
  json flat = json::object();
  for (auto& [k, v] : j.items()) {
    if (v.is_object()) {
      for (auto& [k2, v2] : v.items()) flat[k2] = v2;
    } else {
      flat[k] = v;
    }
  }
  bool mel_set = false;
  for (auto& [k, v] : flat.items()) {
    if (k == "sample_rate") c.mel.sample_rate = get_as<int>(v, k);
    else if (k == "n_fft") c.mel.n_fft = get_as<std::size_t>(v, k);
    else if (k == "hop") c.mel.hop = get_as<std::size_t>(v, k);
    else if (k == "win") c.mel.win = get_as<std::size_t>(v, k);
    else if (k == "n_mels") { c.mel.n_mels = get_as<std::size_t>(v, k); mel_set = true; }
    else if (k == "fmin") c.mel.fmin = get_as<double>(v, k);
    else if (k == "fmax") c.mel.fmax = get_as<double>(v, k);
    else if (k == "log_floor") c.mel.log_floor = get_as<double>(v, k);
    else if (k == "c_m") c.model.c_m = get_as<std::size_t>(v, k);
    else if (k == "c_n") c.model.c_n = get_as<std::size_t>(v, k);
    else if (k == "postnet_channels") c.model.postnet_channels = get_as<std::size_t>(v, k);
    else if (k == "postnet_kernel") c.model.postnet_kernel = get_as<std::size_t>(v, k);
    else if (k == "steps") c.steps = get_as<std::size_t>(v, k);
    else if (k == "lr") c.lr = get_as<double>(v, k);
    else if (k == "seed") c.seed = get_as<std::uint64_t>(v, k);
    else if (k == "mask_fraction") c.mask_fraction = get_as<double>(v, k);
    else if (k == "batch_size") c.batch_size = get_as<std::size_t>(v, k);
    else if (k == "method") c.method = get_as<std::string>(v, k);
    else if (k == "griffin_lim_iters") c.griffin_lim_iters = get_as<std::size_t>(v, k);
    else throw UsageError("unknown config key '" + k + "'");
  }
  if (mel_set) c.model.n_mels = c.mel.n_mels;
  return c;
}

RunConfig load_run_config(const std::string& path, RunConfig base) {
  const bool toml = fs::path(path).extension() == ".toml";
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const DataError& e) {
    throw UsageError(std::string("cannot read config: ") + e.what());
  }
  return parse_run_config(text, toml, std::move(base));
}

// ------------------------------------------------------------------ shared helpers

namespace {

json read_json(const std::string& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": not valid JSON: " + e.what());
  }
}

void write_json(const std::string& path, const json& j) { io::write_file(path, j.dump(2) + "\n"); }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw DataError(what + " not found: " + path);
}

struct ManifestItem {
  std::string id;
  std::string mel;        // resolved path
  std::string alignment;  // resolved path
  std::size_t frames = 0;
  bool ok = true;
  std::string split = "train";
};

std::vector<ManifestItem> load_manifest(const std::string& path) {
  const json j = read_json(path);
  const fs::path dir = fs::path(path).parent_path();
  if (!j.is_object() || !j.contains("items") || !j["items"].is_array()) {
    throw FormatError(path + ": manifest needs an 'items' array");
  }
  std::vector<ManifestItem> items;
  for (const auto& e : j["items"]) {
    try {
      ManifestItem it;
      it.id = e.at("id").get<std::string>();
      it.mel = (dir / e.at("mel").get<std::string>()).string();
      it.alignment = (dir / e.at("alignment").get<std::string>()).string();
      it.frames = e.value("frames", std::size_t{0});
      it.ok = e.value("ok", true);
      it.split = e.value("split", std::string("train"));
      items.push_back(std::move(it));
    } catch (const json::exception& ex) {
      throw FormatError(path + ": bad manifest entry: " + ex.what());
    }
  }
  return items;
}

const ManifestItem& find_item(const std::vector<ManifestItem>& items, const std::string& id) {
  for (const auto& it : items) {
    if (it.id == id) return it;
  }
  throw DataError("unknown utterance '" + id + "'");
}

synth::ToySynthesizer load_synth(const std::string& path) {
  return synth::ToySynthesizer::from_json(io::read_file(path));
}

json request_json(const align::EditRequest& r, const std::string& id, const std::string& utt) {
  json phones = json::array();
  for (const auto& p : r.replacement) phones.push_back({{"p", p.phoneme}, {"w", p.word}});
  json j = {{"id", id},         {"utt", utt},
            {"word_lo", r.word_lo}, {"word_hi", r.word_hi},
            {"words", r.replacement_words}, {"phones", phones}};
  if (r.speaker) j["speaker"] = *r.speaker;
  if (r.forced_durations) j["forced_durations"] = *r.forced_durations;
  return j;
}

void check_phonemes(const std::vector<align::ReplacementPhone>& phones,
                    const synth::PhonemeInventory& inv) {
  for (const auto& p : phones) {
    if (!inv.contains(p.phoneme)) {
      throw DataError("unknown phoneme '" + p.phoneme + "': not in the synthesizer inventory");
    }
  }
}

std::string relative_to(const fs::path& target, const fs::path& base_dir) {
  return fs::relative(fs::absolute(target), fs::absolute(base_dir)).generic_string();
}

// ------------------------------------------------------------------ toy-corpus

struct ToyOpts {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t n_train = 60;
  std::size_t n_heldout = 24;
  std::size_t n_mels = 20;
};

int cmd_toy_corpus(const ToyOpts& o, std::ostream& out) {
  toy::ToyCorpusConfig cfg;
  cfg.seed = o.seed;
  cfg.n_train = o.n_train;
  cfg.n_heldout = o.n_heldout;
  cfg.n_mels = o.n_mels;
  cfg.validate();
  const auto corpus = toy::make_toy_corpus(cfg);

  const fs::path dir(o.out);
  fs::create_directories(dir / "mels");
  fs::create_directories(dir / "align");
  fs::create_directories(dir / "targets");
  json items = json::array();
  auto emit = [&](const toy::ToyUtterance& u, const char* split) {
    mel::save_melb(u.reference, (dir / "mels" / (u.id + ".melb")).string());
    align::save_alignment(u.alignment, (dir / "align" / (u.id + ".json")).string());
    items.push_back({{"id", u.id},
                     {"mel", "mels/" + u.id + ".melb"},
                     {"alignment", "align/" + u.id + ".json"},
                     {"frames", u.reference.n_frames()},
                     {"ok", true},
                     {"split", split}});
  };
  for (const auto& u : corpus.train) emit(u, "train");
  for (const auto& u : corpus.heldout) emit(u, "heldout");
  write_json((dir / "manifest.json").string(),
             {{"mel_config", corpus.mel_config.fingerprint()}, {"items", items}});

  json edits = json::array();
  for (const auto& e : corpus.edits) {
    json j = request_json(e.request, e.id, corpus.heldout[e.utterance].id);
    mel::save_melb(e.target, (dir / "targets" / (e.id + ".melb")).string());
    j["target"] = "targets/" + e.id + ".melb";
    edits.push_back(std::move(j));
  }
  write_json((dir / "edits.json").string(), {{"edits", edits}});
  io::write_file((dir / "synth.json").string(), corpus.synth.to_json() + "\n");
  out << "wrote " << corpus.train.size() << " training and " << corpus.heldout.size()
      << " held-out utterances, " << corpus.edits.size() << " edits to " << o.out << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ extract

int cmd_extract(const RunConfig& cfg, const std::string& corpus_dir, const std::string& out_dir,
                std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(corpus_dir)) throw DataError("corpus directory not found: " + corpus_dir);
  std::vector<fs::path> wavs;
  for (const auto& e : fs::directory_iterator(corpus_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") wavs.push_back(e.path());
  }
  std::sort(wavs.begin(), wavs.end());

  const fs::path dir(out_dir);
  fs::create_directories(dir / "mels");
  fs::create_directories(dir / "align");
  json items = json::array();
  std::size_t warnings = 0;
  for (const auto& wav : wavs) {
    const std::string id = wav.stem().string();
    json entry = {{"id", id},
                  {"mel", "mels/" + id + ".melb"},
                  {"alignment", "align/" + id + ".json"}};
    try {
      const fs::path ajson = fs::path(wav).replace_extension(".json");
      if (!fs::is_regular_file(ajson)) throw DataError("no alignment file " + ajson.string());
      const auto a = align::load_alignment(ajson.string());
      const auto w = mel::load_wav(wav.string());
      if (w.sample_rate != cfg.mel.sample_rate) {
        throw DataError("sample rate " + std::to_string(w.sample_rate) + " != configured " +
                        std::to_string(cfg.mel.sample_rate));
      }
      if (a.hop != cfg.mel.hop || a.sample_rate != cfg.mel.sample_rate) {
        throw DataError("alignment hop/sample rate disagree with the mel config");
      }
      const auto m = mel::wav_to_mel(w, cfg.mel);
      entry["frames"] = m.n_frames();
      entry["alignment_frames"] = a.total_frames();
      if (a.total_frames() != m.n_frames()) {
        throw DataError("alignment durations sum to " + std::to_string(a.total_frames()) +
                        " but the mel has " + std::to_string(m.n_frames()) + " frames");
      }
      mel::save_melb(m, (dir / "mels" / (id + ".melb")).string());
      align::save_alignment(a, (dir / "align" / (id + ".json")).string());
      entry["ok"] = true;
    } catch (const DataError& e) {
      ++warnings;
      entry["ok"] = false;
      entry["error"] = e.what();
      err << "warning: " << id << ": " << e.what() << "\n";
    }
    entry["split"] = "train";
    items.push_back(std::move(entry));
  }
  // The stored mel keeps only sample rate, hop and band count.
  const auto stored = mel::decode_melb(mel::encode_melb(
      mel::MelSpectrogram(mel::Matrix(1, cfg.mel.n_mels, cfg.mel.log_floor_value()), cfg.mel)));
  write_json((dir / "manifest.json").string(),
             {{"mel_config", stored.config().fingerprint()}, {"items", items}});
  out << items.size() << " items, " << warnings << " warnings\n";
  return kExitOk;
}

// ------------------------------------------------------------------ train

struct TrainOpts {
  std::string manifest, synth, out, loss_csv, resume;
};

int cmd_train(const RunConfig& cfg, const TrainOpts& o, std::ostream& out) {
  require_file(o.manifest, "manifest");
  require_file(o.synth, "synthesizer");
  if (!o.resume.empty()) require_file(o.resume, "checkpoint");
  const auto syn = load_synth(o.synth);
  std::vector<stitch::TrainingItem> corpus;
  for (const auto& it : load_manifest(o.manifest)) {
    if (!it.ok || it.split != "train") continue;
    auto ref = mel::load_melb(it.mel);
    auto a = align::load_alignment(it.alignment);
    corpus.push_back(stitch::make_training_item(it.id, std::move(ref), std::move(a), syn));
  }
  if (corpus.empty()) throw DataError("manifest has no usable training items");
  const auto& mc = corpus.front().reference.config();
  for (const auto& item : corpus) {
    if (item.reference.config().fingerprint() != mc.fingerprint()) {
      throw DataError(item.id + ": mel config differs from the first item");
    }
  }

  stitch::StitchModel model;
  if (o.resume.empty()) {
    stitch::StitchConfig sc = cfg.model;
    sc.n_mels = mc.n_mels;
    model = stitch::StitchModel::initialize(sc, mc.fingerprint(), cfg.seed);
  } else {
    model = ckpt::load_checkpoint(o.resume);
    if (model.mel_fingerprint != mc.fingerprint()) {
      throw DataError("checkpoint mel config does not match the training data");
    }
  }
  stitch::TrainConfig tc;
  tc.steps = cfg.steps;
  tc.batch_size = cfg.batch_size;
  tc.mask_fraction = cfg.mask_fraction;
  tc.seed = cfg.seed;
  tc.adam.lr = cfg.lr;
  model = stitch::train(tc, corpus, std::move(model));

  ckpt::save_checkpoint(model, o.out);
  std::string csv_path = o.loss_csv;
  if (csv_path.empty()) csv_path = fs::path(o.out).replace_extension(".loss.csv").string();
  std::ostringstream csv;
  csv << "step,loss\n" << std::setprecision(17);
  for (std::size_t s = 0; s < model.meta.loss_history.size(); ++s) {
    csv << s << "," << model.meta.loss_history[s] << "\n";
  }
  io::write_file(csv_path, csv.str());
  out << "trained " << model.meta.steps << " steps";
  if (!model.meta.loss_history.empty()) out << ", final loss " << fmt(model.meta.loss_history.back());
  out << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ edit

struct EditOpts {
  std::string checkpoint, synth, manifest, utt, span, phones, words, out, edits, synth_mel, speaker,
      durations;
};

align::EditRequest request_from_flags(const EditOpts& o, const align::Alignment& ref) {
  align::EditRequest r;
  r.reference = ref;
  const auto colon = o.span.find(':');
  try {
    if (colon == std::string::npos) {
      r.word_lo = r.word_hi = std::stoul(o.span);
    } else {
      r.word_lo = std::stoul(o.span.substr(0, colon));
      r.word_hi = std::stoul(o.span.substr(colon + 1));
    }
  } catch (const std::exception&) {
    throw UsageError("--span must look like LO:HI (inclusive word indices), got '" + o.span + "'");
  }
  if (r.word_lo > r.word_hi || r.word_hi >= ref.words.size()) {
    throw DataError("invalid span " + o.span + " for an utterance with " +
                    std::to_string(ref.words.size()) + " words");
  }
  std::vector<std::vector<std::string>> groups(1);
  std::istringstream ps(o.phones);
  for (std::string tok; ps >> tok;) {
    if (tok == "|") {
      groups.emplace_back();
    } else {
      groups.back().push_back(tok);
    }
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw UsageError("--phones: word " + std::to_string(g) + " has no phones");
    for (const auto& p : groups[g]) r.replacement.push_back(align::ReplacementPhone{p, g});
  }
  std::istringstream ws(o.words);
  for (std::string w; ws >> w;) r.replacement_words.push_back(w);
  if (r.replacement_words.empty()) {
    for (const auto& g : groups) {
      std::string label;
      for (const auto& p : g) label += (label.empty() ? "" : "-") + p;
      r.replacement_words.push_back(label);
    }
  }
  if (r.replacement_words.size() != groups.size()) {
    throw UsageError("--words gives " + std::to_string(r.replacement_words.size()) +
                     " words but --phones has " + std::to_string(groups.size()) + " groups");
  }
  if (!o.speaker.empty()) r.speaker = o.speaker;
  if (!o.durations.empty()) {
    std::vector<std::size_t> d;
    std::string s = o.durations;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream ds(s);
    for (std::string tok; ds >> tok;) {
      try {
        d.push_back(std::stoul(tok));
      } catch (const std::exception&) {
        throw UsageError("--durations must be a comma-separated list of frame counts");
      }
    }
    r.forced_durations = std::move(d);
  }
  return r;
}

align::EditRequest request_from_json(const json& e, const align::Alignment& ref) {
  align::EditRequest r;
  r.reference = ref;
  try {
    r.word_lo = e.at("word_lo").get<std::size_t>();
    r.word_hi = e.at("word_hi").get<std::size_t>();
    r.replacement_words = e.at("words").get<std::vector<std::string>>();
    for (const auto& p : e.at("phones")) {
      r.replacement.push_back(align::ReplacementPhone{p.at("p").get<std::string>(),
                                                      p.at("w").get<std::size_t>()});
    }
    if (e.contains("speaker")) r.speaker = e["speaker"].get<std::string>();
    if (e.contains("forced_durations")) {
      r.forced_durations = e["forced_durations"].get<std::vector<std::size_t>>();
    }
  } catch (const json::exception& ex) {
    throw FormatError(std::string("bad edit entry: ") + ex.what());
  }
  return r;
}

std::vector<std::string> methods_for(const RunConfig& cfg) {
  if (cfg.method == "all") return kMethods;
  return {cfg.method};
}

struct Produced {
  std::string method;
  std::string mel_path;
};

std::vector<Produced> run_edit(const RunConfig& cfg, const std::string& id,
                               const align::EditRequest& req, const mel::MelSpectrogram& ref,
                               const stitch::StitchModel* model, const synth::ToySynthesizer& syn,
                               const std::optional<mel::MelSpectrogram>& synth_mel,
                               const fs::path& out_dir) {
  check_phonemes(req.replacement, syn.inventory());
  mel::GriffinLimOptions gl;
  gl.iters = cfg.griffin_lim_iters;
  gl.seed = cfg.seed;
  std::vector<Produced> produced;
  for (const auto& method : methods_for(cfg)) {
    mel::MelSpectrogram result;
    json seams;
    if (method == "attentionstitch") {
      stitch::EditOptions opts;
      opts.render_audio = false;
      stitch::EditResult r;
      if (synth_mel) {
        synth::ExternalMelSynthesizer ext(syn, *synth_mel);
        r = stitch::edit(req, ref, *model, ext, opts);
      } else {
        r = stitch::edit(req, ref, *model, syn, opts);
      }
      result = r.mel;
      seams = {{"mask", {r.plan.mask.start, r.plan.mask.end}},
               {"old_region", {r.plan.old_region.start, r.plan.old_region.end}}};
    } else if (method == "swap") {
      auto r = baselines::complete_synthesis_swap(ref, req, syn);
      result = r.mel;
      seams = {{"seams", r.seams}};
    } else {
      auto r = baselines::featswitch(ref, req, syn);
      result = r.mel;
      seams = {{"seams", r.seams}};
    }
    seams["frames"] = result.n_frames();
    const std::string stem = id + "." + method;
    const auto mel_path = (out_dir / (stem + ".melb")).string();
    mel::save_melb(result, mel_path);
    mel::save_wav(mel::griffin_lim(result, gl), (out_dir / (stem + ".wav")).string());
    write_json((out_dir / (stem + ".seams.json")).string(), seams);
    produced.push_back({method, mel_path});
  }
  return produced;
}

int cmd_edit(const RunConfig& cfg, const EditOpts& o, std::ostream& out) {
  const auto methods = methods_for(cfg);
  const bool need_model =
      std::find(methods.begin(), methods.end(), "attentionstitch") != methods.end();
  if (need_model) require_file(o.checkpoint, "checkpoint");
  require_file(o.synth, "synthesizer");
  require_file(o.manifest, "manifest");
  if (!o.synth_mel.empty()) require_file(o.synth_mel, "synthesized mel");
  if (o.edits.empty() && (o.utt.empty() || o.span.empty() || o.phones.empty())) {
    throw UsageError("edit needs --edits FILE or all of --utt, --span and --phones");
  }
  const auto syn = load_synth(o.synth);
  const auto items = load_manifest(o.manifest);
  std::optional<stitch::StitchModel> model;
  if (need_model) model = ckpt::load_checkpoint(o.checkpoint);
  std::optional<mel::MelSpectrogram> synth_mel;
  if (!o.synth_mel.empty()) synth_mel = mel::load_melb(o.synth_mel);

  struct Job {
    std::string id, utt;
    align::EditRequest req;
    std::string target;
  };
  std::vector<Job> jobs;
  if (!o.edits.empty()) {
    require_file(o.edits, "edit list");
    const json j = read_json(o.edits);
    const fs::path base = fs::path(o.edits).parent_path();
    if (!j.contains("edits") || !j["edits"].is_array()) throw FormatError("edit list needs 'edits'");
    for (const auto& e : j["edits"]) {
      const auto id = e.value("id", std::string());
      const auto utt = e.value("utt", std::string());
      if (id.empty() || utt.empty()) throw FormatError("edit entries need 'id' and 'utt'");
      const auto& it = find_item(items, utt);
      Job job{id, utt, request_from_json(e, align::load_alignment(it.alignment)), ""};
      if (e.contains("target")) job.target = (base / e["target"].get<std::string>()).string();
      jobs.push_back(std::move(job));
    }
  } else {
    const auto& it = find_item(items, o.utt);
    auto req = request_from_flags(o, align::load_alignment(it.alignment));
    jobs.push_back(Job{o.utt + ".edit", o.utt, std::move(req), ""});
  }
  for (const auto& j : jobs) {
    check_phonemes(j.req.replacement, syn.inventory());
    j.req.validate();
  }

  const fs::path out_dir(o.out);
  fs::create_directories(out_dir);
  json eval_items = json::array();
  for (const auto& job : jobs) {
    const auto& it = find_item(items, job.utt);
    auto ref = mel::load_melb(it.mel);
    const auto produced = run_edit(cfg, job.id, job.req, ref, model ? &*model : nullptr, syn,
                                   synth_mel, out_dir);
    for (const auto& p : produced) {
      out << job.id << " " << p.method << " -> " << p.mel_path << "\n";
      if (!job.target.empty()) {
        eval_items.push_back({{"item", job.id},
                              {"method", p.method},
                              {"output", relative_to(p.mel_path, out_dir)},
                              {"reference", relative_to(job.target, out_dir)}});
      }
    }
  }
  if (!eval_items.empty()) write_json((out_dir / "eval.json").string(), {{"items", eval_items}});
  return kExitOk;
}

// ------------------------------------------------------------------ eval

int cmd_eval(const std::string& eval_set, const std::string& out_csv, std::ostream& out,
             std::ostream& err) {
  require_file(eval_set, "eval set");
  const json j = read_json(eval_set);
  if (!j.contains("items") || !j["items"].is_array()) throw FormatError("eval set needs 'items'");
  const fs::path base = fs::path(eval_set).parent_path();

  struct Row {
    std::string item, method;
    double mcd;
  };
  std::vector<Row> rows;
  std::vector<std::string> missing;
  for (const auto& e : j["items"]) {
    std::string item, method, output, reference;
    try {
      item = e.at("item").get<std::string>();
      method = e.at("method").get<std::string>();
      output = (base / e.at("output").get<std::string>()).string();
      reference = (base / e.at("reference").get<std::string>()).string();
    } catch (const json::exception& ex) {
      throw FormatError(std::string("bad eval entry: ") + ex.what());
    }
    bool absent = false;
    for (const auto& p : {output, reference}) {
      if (!fs::is_regular_file(p)) {
        missing.push_back(item + " (" + method + "): " + p);
        absent = true;
      }
    }
    if (absent) continue;
    const auto a = mel::load_melb(output);
    const auto b = mel::load_melb(reference);
    const std::size_t order = std::min<std::size_t>(13, std::min(a.n_mels(), b.n_mels()) - 1);
    rows.push_back({item, method,
                    mel::mcd(mel::mel_to_cepstra(a, order), mel::mel_to_cepstra(b, order),
                             mel::McdAlign::dtw)});
  }
  std::ostringstream csv;
  csv << "item,method,mcd\n";
  std::map<std::string, std::pair<double, std::size_t>> means;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    csv << r.item << "," << r.method << "," << fmt(r.mcd) << "\n";
    if (!means.count(r.method)) order.push_back(r.method);
    means[r.method].first += r.mcd;
    means[r.method].second += 1;
  }
  for (const auto& m : order) {
    const double mean = means[m].first / static_cast<double>(means[m].second);
    csv << "mean," << m << "," << fmt(mean) << "\n";
    out << "mean MCD " << m << ": " << fmt(mean) << " dB over " << means[m].second << " items\n";
  }
  io::write_file(out_csv, csv.str());
  if (!missing.empty()) {
    err << "missing outputs (" << missing.size() << "):\n";
    for (const auto& m : missing) err << "  " << m << "\n";
    return kExitData;
  }
  return kExitOk;
}

// ------------------------------------------------------------------ plot

int cmd_plot(const std::vector<std::string>& inputs, const std::string& out_dir,
             const std::string& mask, const std::string& format, std::size_t scale,
             std::ostream& out) {
  if (format != "png" && format != "ppm") throw UsageError("--format must be png or ppm");
  if (scale < 1) throw UsageError("--scale must be >= 1");
  std::optional<align::MaskRegion> region;
  if (!mask.empty()) {
    const auto colon = mask.find(':');
    if (colon == std::string::npos) throw UsageError("--mask must look like START:END");
    try {
      region = align::MaskRegion{std::stoul(mask.substr(0, colon)), std::stoul(mask.substr(colon + 1))};
    } catch (const std::exception&) {
      throw UsageError("--mask must look like START:END");
    }
    if (region->start > region->end) throw UsageError("--mask start exceeds end");
  }
  for (const auto& in : inputs) require_file(in, "mel file");
  std::vector<mel::MelSpectrogram> mels;
  for (const auto& in : inputs) mels.push_back(mel::load_melb(in));
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto img = image::render_mel(mels[i], region, scale);
    const auto path = (fs::path(out_dir) / (fs::path(inputs[i]).stem().string() + "." + format)).string();
    image::save_image(img, path);
    out << path << " (" << img.width << "x" << img.height << ")\n";
  }
  return kExitOk;
}

}  // namespace

// ------------------------------------------------------------------ entry point

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"astitch: mel-spectrogram speech editing with a double-attention stitcher"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<double> mask_fraction, lr;
  std::optional<std::string> method;
  std::string out_path;

  auto common = [&](CLI::App* sub, bool training, bool with_method) {
    sub->add_option("--config", config_path, "JSON or TOML config file");
    sub->add_option("--seed", seed, "random seed");
    if (training) {
      sub->add_option("--steps", steps, "optimizer steps");
      sub->add_option("--mask-fraction", mask_fraction, "training mask fraction in (0,1)");
      sub->add_option("--lr", lr, "Adam learning rate");
    }
    if (with_method) sub->add_option("--method", method, "attentionstitch, swap, featswitch or all");
  };

  ToyOpts toy_opts;
  auto* toy = app.add_subcommand("toy-corpus", "generate the synthetic training/evaluation corpus");
  common(toy, false, false);
  toy->add_option("--out", toy_opts.out, "output directory")->required();
  toy->add_option("--n-train", toy_opts.n_train, "training utterances");
  toy->add_option("--n-heldout", toy_opts.n_heldout, "held-out utterances (one edit each)");
  toy->add_option("--n-mels", toy_opts.n_mels, "mel bands");

  std::string corpus_dir;
  auto* extract = app.add_subcommand("extract", "wav + alignment pairs -> .melb files and manifest");
  common(extract, false, false);
  extract->add_option("--corpus", corpus_dir, "directory of NAME.wav + NAME.json")->required();
  extract->add_option("--out", out_path, "output directory")->required();

  TrainOpts train_opts;
  auto* train = app.add_subcommand("train", "train the stitcher on a manifest");
  common(train, true, false);
  train->add_option("--manifest", train_opts.manifest, "manifest.json")->required();
  train->add_option("--synth", train_opts.synth, "synthesizer JSON")->required();
  train->add_option("--out", train_opts.out, "checkpoint path (.asck)")->required();
  train->add_option("--loss-csv", train_opts.loss_csv, "loss curve CSV (default: next to --out)");
  train->add_option("--resume", train_opts.resume, "continue from this checkpoint");

  EditOpts edit_opts;
  auto* edit = app.add_subcommand("edit", "replace words in an utterance");
  common(edit, false, true);
  edit->add_option("--checkpoint", edit_opts.checkpoint, "trained .asck");
  edit->add_option("--synth", edit_opts.synth, "synthesizer JSON")->required();
  edit->add_option("--manifest", edit_opts.manifest, "manifest.json")->required();
  edit->add_option("--utt", edit_opts.utt, "utterance id");
  edit->add_option("--span", edit_opts.span, "inclusive word span LO:HI");
  edit->add_option("--phones", edit_opts.phones, "replacement phones, words separated by '|'");
  edit->add_option("--words", edit_opts.words, "replacement words, space separated");
  edit->add_option("--speaker", edit_opts.speaker, "speaker for synthesis");
  edit->add_option("--durations", edit_opts.durations, "forced replacement durations, comma separated");
  edit->add_option("--edits", edit_opts.edits, "batch edit list JSON (writes eval.json)");
  edit->add_option("--synth-mel", edit_opts.synth_mel, "precomputed synthesized mel for the edited transcript");
  edit->add_option("--out", edit_opts.out, "output directory")->required();

  std::string eval_set;
  auto* eval = app.add_subcommand("eval", "MCD table for edited outputs");
  eval->add_option("--eval-set", eval_set, "eval.json from a batch edit")->required();
  eval->add_option("--out", out_path, "CSV output path")->required();

  std::vector<std::string> plot_inputs;
  std::string plot_mask, plot_format = "png";
  std::size_t plot_scale = 4;
  auto* plot = app.add_subcommand("plot", "render .melb files as images");
  plot->add_option("mels", plot_inputs, ".melb inputs")->required();
  plot->add_option("--out", out_path, "output directory")->required();
  plot->add_option("--mask", plot_mask, "frame range START:END to hatch");
  plot->add_option("--format", plot_format, "png or ppm");
  plot->add_option("--scale", plot_scale, "pixels per cell");

  std::vector<std::string> argv_store{"astitch"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_run_config(config_path, cfg);
    if (seed) cfg.seed = *seed;
    if (steps) cfg.steps = *steps;
    if (mask_fraction) cfg.mask_fraction = *mask_fraction;
    if (lr) cfg.lr = *lr;
    if (method) cfg.method = *method;
    cfg.validate();

    if (toy->parsed()) {
      toy_opts.seed = cfg.seed;
      return cmd_toy_corpus(toy_opts, out);
    }
    if (extract->parsed()) return cmd_extract(cfg, corpus_dir, out_path, out, err);
    if (train->parsed()) return cmd_train(cfg, train_opts, out);
    if (edit->parsed()) return cmd_edit(cfg, edit_opts, out);
    if (eval->parsed()) return cmd_eval(eval_set, out_path, out, err);
    if (plot->parsed()) return cmd_plot(plot_inputs, out_path, plot_mask, plot_format, plot_scale, out);
    err << "usage error: no command\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace astitch::cli
