#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "attnstitch/align.hpp"
#include "attnstitch/byteio.hpp"
#include "attnstitch/cli.hpp"
#include "attnstitch/error.hpp"
#include "attnstitch/image.hpp"
#include "attnstitch/melkit.hpp"
#include "test_support.hpp"

using namespace astitch;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) { return io::read_file(p.string()); }

/// Small toy corpus plus a tiny model config, shared by the pipeline tests.
struct Workspace {
  fs::path root, corpus, config;
};

const Workspace& workspace() {
  static const Workspace w = [] {
    Workspace w;
    w.root = testing::temp_dir("cli");
    w.corpus = w.root / "corpus";
    w.config = w.root / "tiny.toml";
    io::write_file(w.config.string(),
                   "# tiny model for tests\n[model]\nc_m = 4\nc_n = 2\npostnet_channels = 8\n"
                   "[train]\nsteps = 4\nlr = 0.001\ngriffin_lim_iters = 2\n");
    const auto r = run({"toy-corpus", "--out", w.corpus.string(), "--n-train", "4", "--n-heldout", "3",
                        "--n-mels", "12", "--seed", "2"});
    REQUIRE(r.code == 0);
    return w;
  }();
  return w;
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::vector<std::string> csv_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) lines.push_back(l);
  return lines;
}

}  // namespace

TEST_CASE("toy-corpus writes a consistent manifest") {
  const auto& w = workspace();
  const auto m = read_json(w.corpus / "manifest.json");
  REQUIRE(m["items"].size() == 7);
  std::size_t train = 0, held = 0;
  for (const auto& it : m["items"]) {
    const auto mel = mel::load_melb((w.corpus / it["mel"].get<std::string>()).string());
    const auto a = align::load_alignment((w.corpus / it["alignment"].get<std::string>()).string());
    CHECK(mel.n_frames() == a.total_frames());
    CHECK(it["frames"].get<std::size_t>() == mel.n_frames());
    CHECK(mel.n_mels() == 12);
    (it["split"] == "train" ? train : held) += 1;
  }
  CHECK(train == 4);
  CHECK(held == 3);
  CHECK(read_json(w.corpus / "edits.json")["edits"].size() == 3);
  CHECK(fs::is_regular_file(w.corpus / "synth.json"));
}

TEST_CASE("train, edit and eval run end to end") {
  const auto& w = workspace();
  const auto dir = testing::temp_dir("cli_pipeline");
  const auto manifest = (w.corpus / "manifest.json").string();
  const auto synth = (w.corpus / "synth.json").string();
  const auto ckpt = (dir / "m.asck").string();

  auto r = run({"train", "--manifest", manifest, "--synth", synth, "--out", ckpt, "--config", w.config.string(),
                "--seed", "3"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto loss = csv_lines(slurp(dir / "m.loss.csv"));
  REQUIRE(loss.size() == 5);
  CHECK(loss[0] == "step,loss");
  CHECK(loss[1].rfind("0,", 0) == 0);

  // Same seed, same bytes.
  r = run({"train", "--manifest", manifest, "--synth", synth, "--out", (dir / "m2.asck").string(), "--config",
           w.config.string(), "--seed", "3"});
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "m.asck") == slurp(dir / "m2.asck"));

  // Resume by two steps extends the history.
  r = run({"train", "--manifest", manifest, "--synth", synth, "--out", (dir / "m3.asck").string(), "--config",
           w.config.string(), "--seed", "3", "--resume", ckpt, "--steps", "2"});
  REQUIRE(r.code == 0);
  CHECK(csv_lines(slurp(dir / "m3.loss.csv")).size() == 7);

  const auto out = dir / "edits";
  r = run({"edit", "--checkpoint", ckpt, "--synth", synth, "--manifest", manifest, "--edits",
           (w.corpus / "edits.json").string(), "--method", "all", "--out", out.string(), "--config",
           w.config.string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto ev = read_json(out / "eval.json");
  CHECK(ev["items"].size() == 9);
  for (const auto& it : ev["items"]) {
    const auto stem = fs::path(it["output"].get<std::string>()).stem().string();
    CHECK(fs::is_regular_file(out / it["output"].get<std::string>()));
    CHECK(fs::is_regular_file(out / (stem + ".wav")));
    CHECK(fs::is_regular_file(out / (stem + ".seams.json")));
  }

  r = run({"eval", "--eval-set", (out / "eval.json").string(), "--out", (dir / "mcd.csv").string()});
  REQUIRE(r.code == 0);
  const auto rows = csv_lines(slurp(dir / "mcd.csv"));
  CHECK(rows[0] == "item,method,mcd");
  REQUIRE(rows.size() == 1 + 9 + 3);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto a = rows[i].find(','), b = rows[i].rfind(',');
    REQUIRE(a != b);
    CHECK(std::stod(rows[i].substr(b + 1)) >= 0.0);
  }
  CHECK(rows.back().rfind("mean,", 0) == 0);
}

TEST_CASE("eval of identical outputs is all zero and lists missing files") {
  const auto& w = workspace();
  const auto dir = testing::temp_dir("cli_eval");
  const auto m = read_json(w.corpus / "manifest.json");
  json items = json::array();
  for (const auto& it : m["items"]) {
    const auto path = (w.corpus / it["mel"].get<std::string>()).string();
    items.push_back({{"item", it["id"]}, {"method", "same"}, {"output", path}, {"reference", path}});
  }
  io::write_file((dir / "eval.json").string(), json{{"items", items}}.dump());
  auto r = run({"eval", "--eval-set", (dir / "eval.json").string(), "--out", (dir / "mcd.csv").string()});
  REQUIRE(r.code == 0);
  const auto rows = csv_lines(slurp(dir / "mcd.csv"));
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].substr(rows[i].rfind(',') + 1) == "0.000000");

  items.push_back({{"item", "ghost"}, {"method", "same"}, {"output", "nope.melb"}, {"reference", "nope.melb"}});
  io::write_file((dir / "eval.json").string(), json{{"items", items}}.dump());
  r = run({"eval", "--eval-set", (dir / "eval.json").string(), "--out", (dir / "mcd.csv").string()});
  CHECK(r.code == cli::kExitData);
  CHECK(r.err.find("ghost") != std::string::npos);
}

TEST_CASE("single edit from flags") {
  const auto& w = workspace();
  const auto dir = testing::temp_dir("cli_edit");
  const auto manifest = (w.corpus / "manifest.json").string();
  const auto synth = (w.corpus / "synth.json").string();
  const auto ckpt = (dir / "m.asck").string();
  REQUIRE(run({"train", "--manifest", manifest, "--synth", synth, "--out", ckpt, "--config", w.config.string(),
               "--steps", "0"})
              .code == 0);
  const auto m = read_json(w.corpus / "manifest.json");
  const auto utt = m["items"][0]["id"].get<std::string>();
  const auto a = align::load_alignment((w.corpus / m["items"][0]["alignment"].get<std::string>()).string());

  auto r = run({"edit", "--checkpoint", ckpt, "--synth", synth, "--manifest", manifest, "--utt", utt, "--span",
                "1:1", "--phones", "AA K | IY D", "--words", "x y", "--out", dir.string(), "--config",
                w.config.string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto out = mel::load_melb((dir / (utt + ".edit.attentionstitch.melb")).string());
  const auto seams = read_json(dir / (utt + ".edit.attentionstitch.seams.json"));
  const auto old = align::word_frame_range(a, 1, 1);
  CHECK(seams["old_region"][0] == old.start);
  CHECK(seams["mask"][0] == old.start);
  CHECK(out.n_frames() == a.total_frames() - old.length() + (seams["mask"][1].get<std::size_t>() - old.start));
  const auto wav = mel::load_wav((dir / (utt + ".edit.attentionstitch.wav")).string());
  CHECK(wav.samples.size() == (out.n_frames() - 1) * 256);

  r = run({"edit", "--checkpoint", ckpt, "--synth", synth, "--manifest", manifest, "--utt", utt, "--span", "1:1",
           "--phones", "AA ZZZ", "--out", dir.string()});
  CHECK(r.code == cli::kExitData);
  CHECK(r.err.find("unknown phoneme 'ZZZ'") != std::string::npos);

  r = run({"edit", "--checkpoint", ckpt, "--synth", synth, "--manifest", manifest, "--utt", "nobody", "--span",
           "0:0", "--phones", "AA", "--out", dir.string()});
  CHECK(r.code == cli::kExitData);
  r = run({"edit", "--checkpoint", ckpt, "--synth", synth, "--manifest", manifest, "--utt", utt, "--span",
           "0:99", "--phones", "AA", "--out", dir.string()});
  CHECK(r.code == cli::kExitData);
}

TEST_CASE("train rejects an empty manifest and bad configs without writing") {
  const auto& w = workspace();
  const auto dir = testing::temp_dir("cli_train_bad");
  io::write_file((dir / "empty.json").string(), R"({"items": []})");
  auto r = run({"train", "--manifest", (dir / "empty.json").string(), "--synth", (w.corpus / "synth.json").string(),
                "--out", (dir / "m.asck").string()});
  CHECK(r.code != 0);
  CHECK(!fs::exists(dir / "m.asck"));

  r = run({"train", "--manifest", (w.corpus / "manifest.json").string(), "--synth",
           (w.corpus / "synth.json").string(), "--out", (dir / "m.asck").string(), "--mask-fraction", "1.5"});
  CHECK(r.code == cli::kExitUsage);
  CHECK(!fs::exists(dir / "m.asck"));
  CHECK(!fs::exists(dir / "m.loss.csv"));

  io::write_file((dir / "bad.toml").string(), "stepz = 3\n");
  r = run({"train", "--manifest", (w.corpus / "manifest.json").string(), "--synth",
           (w.corpus / "synth.json").string(), "--out", (dir / "m.asck").string(), "--config",
           (dir / "bad.toml").string()});
  CHECK(r.code == cli::kExitUsage);
  CHECK(!fs::exists(dir / "m.asck"));

  CHECK(run({"toy-corpus", "--out", (dir / "c").string(), "--n-mels", "0"}).code == cli::kExitUsage);
  CHECK(!fs::exists(dir / "c"));
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({}).code == cli::kExitUsage);
}

TEST_CASE("extract flags bad pairs and keeps going") {
  const auto dir = testing::temp_dir("cli_extract");
  fs::create_directories(dir / "empty");
  auto r = run({"extract", "--corpus", (dir / "empty").string(), "--out", (dir / "o1").string()});
  REQUIRE(r.code == 0);
  CHECK(read_json(dir / "o1" / "manifest.json")["items"].empty());

  mel::MelConfig cfg;
  mel::Waveform wav{std::vector<double>(4000), cfg.sample_rate};
  for (std::size_t i = 0; i < wav.samples.size(); ++i) wav.samples[i] = 0.3 * std::sin(0.05 * i);
  const std::size_t frames = mel::stft_mag(wav, cfg).rows;
  align::Alignment a;
  a.words = {"hi"};
  a.phones = {{"HH", frames / 2, 0}, {"AY", frames - frames / 2, 0}};
  fs::create_directories(dir / "in");
  mel::save_wav(wav, (dir / "in" / "good.wav").string());
  align::save_alignment(a, (dir / "in" / "good.json").string());
  r = run({"extract", "--corpus", (dir / "in").string(), "--out", (dir / "o2").string()});
  REQUIRE(r.code == 0);
  auto m = read_json(dir / "o2" / "manifest.json");
  REQUIRE(m["items"].size() == 1);
  CHECK(m["items"][0]["ok"] == true);
  CHECK(mel::load_melb((dir / "o2" / "mels" / "good.melb").string()).n_frames() == frames);

  a.phones[1].duration += 3;
  mel::save_wav(wav, (dir / "in" / "bad.wav").string());
  align::save_alignment(a, (dir / "in" / "bad.json").string());
  r = run({"extract", "--corpus", (dir / "in").string(), "--out", (dir / "o3").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("2 items, 1 warnings") != std::string::npos);
  m = read_json(dir / "o3" / "manifest.json");
  for (const auto& it : m["items"]) CHECK(it["ok"] == (it["id"] == "good"));
}

TEST_CASE("plot sizes and mask overlay") {
  const auto dir = testing::temp_dir("cli_plot");
  mel::MelConfig cfg;
  cfg.n_mels = 6;
  mel::Matrix f(10, 6);
  for (std::size_t t = 0; t < 10; ++t)
    for (std::size_t m = 0; m < 6; ++m) f(t, m) = -static_cast<double>(t + m);
  mel::save_melb(mel::MelSpectrogram(f, cfg), (dir / "a.melb").string());
  mel::save_melb(mel::MelSpectrogram(mel::Matrix(10, 6, 0.0), cfg), (dir / "z.melb").string());

  auto r = run({"plot", (dir / "a.melb").string(), (dir / "z.melb").string(), "--out", (dir / "img").string(),
                "--format", "ppm", "--scale", "2", "--mask", "3:5"});
  REQUIRE(r.code == 0);
  const std::string ppm = slurp(dir / "img" / "a.ppm");
  const std::string header = "P6\n20 12\n255\n";
  REQUIRE(ppm.rfind(header, 0) == 0);
  REQUIRE(ppm.size() == header.size() + 20 * 12 * 3);
  auto pixel = [&](const std::string& img, std::size_t x, std::size_t y) {
    const std::size_t o = header.size() + 3 * (y * 20 + x);
    return image::Rgb{static_cast<std::uint8_t>(img[o]), static_cast<std::uint8_t>(img[o + 1]),
                      static_cast<std::uint8_t>(img[o + 2])};
  };
  const image::Rgb white{255, 255, 255};
  for (std::size_t y = 0; y < 12; ++y) {
    for (std::size_t x = 0; x < 20; ++x) {
      const bool masked = x / 2 >= 3 && x / 2 < 5;
      if (masked && (x + y) % 6 < 2) CHECK(pixel(ppm, x, y) == white);
      if (!masked) CHECK(!(pixel(ppm, x, y) == white));
    }
  }
  // A constant mel renders as one colour outside the hatching.
  const std::string zero = slurp(dir / "img" / "z.ppm");
  for (std::size_t y = 0; y < 12; ++y)
    for (std::size_t x = 0; x < 4; ++x) CHECK(pixel(zero, x, y) == image::colormap(0.0));

  r = run({"plot", (dir / "a.melb").string(), "--out", (dir / "png").string()});
  REQUIRE(r.code == 0);
  const std::string png = slurp(dir / "png" / "a.png");
  CHECK(png.substr(1, 3) == "PNG");
  CHECK(run({"plot", (dir / "missing.melb").string(), "--out", (dir / "x").string()}).code == cli::kExitData);
}

TEST_CASE("run config parsing") {
  const auto c = cli::parse_run_config("[train]\nsteps = 7 # comment\nlr = 0.5\nmethod = \"swap\"\n[mel]\nn_mels = 40\n",
                                       true);
  CHECK(c.steps == 7);
  CHECK(c.lr == 0.5);
  CHECK(c.method == "swap");
  CHECK(c.mel.n_mels == 40);
  CHECK(c.model.n_mels == 40);
  const auto j = cli::parse_run_config(R"({"train": {"seed": 9}, "c_m": 3})", false);
  CHECK(j.seed == 9);
  CHECK(j.model.c_m == 3);
  CHECK_THROWS_AS(cli::parse_run_config("steps = -1", true), UsageError);
  CHECK_THROWS_AS(cli::parse_run_config("steps = [1]", true), UsageError);
  CHECK_THROWS_AS(cli::parse_run_config("nope = 1", true), UsageError);
  CHECK_THROWS_AS(cli::parse_run_config("{", false), UsageError);
  cli::RunConfig bad;
  bad.mask_fraction = 0.0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = {};
  bad.method = "magic";
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("installed binary reports exit codes") {
  const char* bin = std::getenv("ASTITCH_BIN");
  if (!bin) SKIP("ASTITCH_BIN not set");
  const auto dir = testing::temp_dir("cli_bin");
  const std::string quiet = " > " + (dir / "log").string() + " 2>&1";
  auto code = [&](const std::string& args) {
    const int s = std::system((std::string(bin) + " " + args + quiet).c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  CHECK(code("--help") == 0);
  CHECK(code("frobnicate") == cli::kExitUsage);
  CHECK(code("plot " + (dir / "missing.melb").string() + " --out " + dir.string()) == cli::kExitData);
  CHECK(code("toy-corpus --out " + (dir / "c").string() + " --n-train 2 --n-heldout 1") == 0);
  CHECK(fs::is_regular_file(dir / "c" / "manifest.json"));
}
