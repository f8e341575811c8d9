#include "attnstitch/stitcher.hpp"

#include <cmath>

#include "attnstitch/error.hpp"

namespace astitch::stitch {

void StitchConfig::validate() const {
  if (n_mels < 1 || c_m < 1 || c_n < 1 || postnet_channels < 1) {
    throw UsageError("stitch config: n_mels, c_m, c_n and postnet channels must be >= 1");
  }
  if (postnet_kernel % 2 == 0) throw UsageError("stitch config: postnet kernel must be odd");
}

// ------------------------------------------------------------------ parameters

std::vector<Tensor*> StitchModel::parameters() {
  std::vector<Tensor*> p{&da.w_a, &da.b_a, &da.w_b, &da.b_b, &da.w_v, &da.b_v, &da.w_o, &da.b_o};
  for (std::size_t l = 0; l < kPostnetLayers; ++l) {
    p.push_back(&postnet.weight[l]);
    p.push_back(&postnet.bias[l]);
  }
  return p;
}

std::vector<const Tensor*> StitchModel::parameters() const {
  auto p = const_cast<StitchModel*>(this)->parameters();
  return {p.begin(), p.end()};
}

std::vector<std::string> StitchModel::parameter_names() const {
  std::vector<std::string> n{"da.w_a", "da.b_a", "da.w_b", "da.b_b",
                             "da.w_v", "da.b_v", "da.w_o", "da.b_o"};
  for (std::size_t l = 0; l < kPostnetLayers; ++l) {
    n.push_back("postnet." + std::to_string(l) + ".weight");
    n.push_back("postnet." + std::to_string(l) + ".bias");
  }
  return n;
}

StitchModel StitchModel::zeros(const StitchConfig& cfg, std::string fingerprint) {
  cfg.validate();
  StitchModel m;
  m.config = cfg;
  m.mel_fingerprint = std::move(fingerprint);
  m.da.w_a = Tensor::zeros({cfg.c_m, 2});
  m.da.b_a = Tensor::zeros({cfg.c_m});
  m.da.w_b = Tensor::zeros({cfg.c_n, 2});
  m.da.b_b = Tensor::zeros({cfg.c_n});
  m.da.w_v = Tensor::zeros({cfg.c_n, 2});
  m.da.b_v = Tensor::zeros({cfg.c_n});
  m.da.w_o = Tensor::zeros({1, cfg.c_m});
  m.da.b_o = Tensor::zeros({1});
  for (std::size_t l = 0; l < kPostnetLayers; ++l) {
    const std::size_t cin = l == 0 ? cfg.n_mels : cfg.postnet_channels;
    const std::size_t cout = l + 1 == kPostnetLayers ? cfg.n_mels : cfg.postnet_channels;
    m.postnet.weight[l] = Tensor::zeros({cout, cin, cfg.postnet_kernel});
    m.postnet.bias[l] = Tensor::zeros({cout});
  }
  return m;
}

namespace {

void fill_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.data()) v = u(rng);
}

double fan_in_bound(const Tensor& w) {
  std::size_t fan_in = 1;
  for (std::size_t i = 1; i < w.rank(); ++i) fan_in *= w.dim(i);
  return 1.0 / std::sqrt(static_cast<double>(fan_in));
}

}  // namespace

StitchModel StitchModel::initialize(const StitchConfig& cfg, std::string fingerprint,
                                    std::uint64_t seed) {
  StitchModel m = zeros(cfg, std::move(fingerprint));
  std::mt19937_64 rng(seed);
  for (Tensor* w : {&m.da.w_a, &m.da.w_b, &m.da.w_v}) fill_uniform(*w, fan_in_bound(*w), rng);
  for (std::size_t l = 0; l + 1 < kPostnetLayers; ++l) {
    fill_uniform(m.postnet.weight[l], fan_in_bound(m.postnet.weight[l]), rng);
  }
  m.meta.seed = seed;
  return m;
}

StitchModel StitchModel::randomized(const StitchConfig& cfg, std::string fingerprint,
                                    std::uint64_t seed) {
  StitchModel m = zeros(cfg, std::move(fingerprint));
  std::mt19937_64 rng(seed);
  for (Tensor* t : m.parameters()) {
    fill_uniform(*t, t->rank() > 1 ? fan_in_bound(*t) : 0.5, rng);
  }
  m.meta.seed = seed;
  return m;
}

std::vector<Var> ModelVars::all() const {
  std::vector<Var> v{w_a, b_a, w_b, b_b, w_v, b_v, w_o, b_o};
  for (std::size_t l = 0; l < kPostnetLayers; ++l) {
    v.push_back(pn_w[l]);
    v.push_back(pn_b[l]);
  }
  return v;
}

ModelVars bind(tc::Tape& tape, const StitchModel& model, bool trainable) {
  auto put = [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); };
  ModelVars v;
  v.w_a = put(model.da.w_a);
  v.b_a = put(model.da.b_a);
  v.w_b = put(model.da.w_b);
  v.b_b = put(model.da.b_b);
  v.w_v = put(model.da.w_v);
  v.b_v = put(model.da.b_v);
  v.w_o = put(model.da.w_o);
  v.b_o = put(model.da.b_o);
  for (std::size_t l = 0; l < kPostnetLayers; ++l) {
    v.pn_w[l] = put(model.postnet.weight[l]);
    v.pn_b[l] = put(model.postnet.bias[l]);
  }
  return v;
}

// ------------------------------------------------------------------ double attention

Var gather(Var a, Var b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[1]) {
    throw ShapeError("gather: A and B must be [c x N] with equal N, got " +
                     tc::shape_str(a.shape()) + " and " + tc::shape_str(b.shape()));
  }
  return tc::matmul(a, tc::transpose(tc::softmax(b, 1)));
}

Var distribute(Var g, Var v) {
  if (g.shape().size() != 2 || v.shape().size() != 2 || g.shape()[1] != v.shape()[0]) {
    throw ShapeError("distribute: G [c_m x c_n] and V [c_n x N] disagree: " +
                     tc::shape_str(g.shape()) + " and " + tc::shape_str(v.shape()));
  }
  return tc::matmul(g, tc::softmax(v, 0));
}

Tensor gather(const Tensor& a, const Tensor& b) {
  tc::Tape tape;
  return gather(tape.constant(a), tape.constant(b)).value();
}

Tensor distribute(const Tensor& g, const Tensor& v) {
  tc::Tape tape;
  return distribute(tape.constant(g), tape.constant(v)).value();
}

Var da_forward(Var masked_ref, Var synth, const ModelVars& p) {
  tc::Tape& tape = *masked_ref.tape;
  const Tensor& r = masked_ref.value();
  const Tensor& s = synth.value();
  if (r.rank() != 2 || r.shape() != s.shape()) {
    throw ShapeError("da_forward: masked reference " + tc::shape_str(r.shape()) +
                     " and synthesized mel " + tc::shape_str(s.shape()) + " must match");
  }
  const std::size_t frames = r.dim(0), bins = r.dim(1), n = frames * bins;
  // Both mels are inputs, never trained through: stack them as a constant.
  Tensor stacked({2, n});
  std::copy(r.data().begin(), r.data().end(), stacked.data().begin());
  std::copy(s.data().begin(), s.data().end(), stacked.data().begin() + static_cast<std::ptrdiff_t>(n));
  const Var x = tape.constant(std::move(stacked));

  const Var a = tc::add_bias(tc::matmul(p.w_a, x), p.b_a);
  const Var b = tc::add_bias(tc::matmul(p.w_b, x), p.b_b);
  const Var v = tc::add_bias(tc::matmul(p.w_v, x), p.b_v);
  const Var z = distribute(gather(a, b), v);
  const Var o = tc::add_bias(tc::matmul(p.w_o, z), p.b_o);
  return tc::add(tc::reshape(o, {frames, bins}), masked_ref);
}

Var postnet_forward(Var x, const ModelVars& p) {
  if (x.shape().size() != 2 || x.shape()[1] != p.pn_w[0].shape()[1]) {
    throw ShapeError("postnet: input " + tc::shape_str(x.shape()) + " does not match " +
                     std::to_string(p.pn_w[0].shape()[1]) + " mel channels");
  }
  Var h = tc::transpose(x);
  for (std::size_t l = 0; l < kPostnetLayers; ++l) {
    h = tc::conv1d(h, p.pn_w[l], p.pn_b[l]);
    if (l + 1 < kPostnetLayers) h = tc::tanh(h);
  }
  return tc::add(x, tc::transpose(h));
}

ForwardVars forward(tc::Tape& tape, const Tensor& masked_ref, const Tensor& synth,
                    const ModelVars& p) {
  const Var r = tape.constant(masked_ref);
  const Var s = tape.constant(synth);
  ForwardVars out;
  out.pre_postnet = da_forward(r, s, p);
  out.final = postnet_forward(out.pre_postnet, p);
  return out;
}

Var stitch_loss(const ForwardVars& out, Var target) {
  return tc::add(tc::mae_loss(out.pre_postnet, target), tc::mae_loss(out.final, target));
}

Tensor to_tensor(const mel::MelSpectrogram& m) {
  return Tensor({m.n_frames(), m.n_mels()}, m.frames().data);
}

mel::MelSpectrogram to_mel(const Tensor& t, const mel::MelConfig& cfg) {
  mel::Matrix f(t.dim(0), t.dim(1));
  f.data = t.values();
  return mel::MelSpectrogram(std::move(f), cfg);
}

namespace {

void check_inputs(const mel::MelSpectrogram& masked_ref, const mel::MelSpectrogram& synth,
                  const StitchModel& model) {
  if (masked_ref.n_frames() != synth.n_frames() || masked_ref.n_mels() != synth.n_mels()) {
    throw ShapeError("masked reference is " + std::to_string(masked_ref.n_frames()) + "x" +
                     std::to_string(masked_ref.n_mels()) + " but synthesized mel is " +
                     std::to_string(synth.n_frames()) + "x" + std::to_string(synth.n_mels()));
  }
  if (masked_ref.n_mels() != model.config.n_mels) {
    throw ShapeError("model expects " + std::to_string(model.config.n_mels) + " mel bins, got " +
                     std::to_string(masked_ref.n_mels()));
  }
  if (masked_ref.config().fingerprint() != model.mel_fingerprint) {
    throw DataError("mel config fingerprint mismatch: data '" + masked_ref.config().fingerprint() +
                    "' vs model '" + model.mel_fingerprint + "'");
  }
}

}  // namespace

StitchOutput stitch_forward(const mel::MelSpectrogram& masked_ref,
                            const mel::MelSpectrogram& synth, const StitchModel& model) {
  check_inputs(masked_ref, synth, model);
  tc::Tape tape;
  const ModelVars p = bind(tape, model, false);
  const ForwardVars out = forward(tape, to_tensor(masked_ref), to_tensor(synth), p);
  return {to_mel(out.pre_postnet.value(), masked_ref.config()),
          to_mel(out.final.value(), masked_ref.config())};
}

// ------------------------------------------------------------------ training

TrainingItem make_training_item(std::string id, mel::MelSpectrogram reference,
                                align::Alignment alignment, const synth::Synthesizer& synth) {
  if (alignment.total_frames() != reference.n_frames()) {
    throw DataError(id + ": alignment covers " + std::to_string(alignment.total_frames()) +
                    " frames, reference mel has " + std::to_string(reference.n_frames()));
  }
  auto s = synth.synthesize_aligned(alignment);
  return TrainingItem{std::move(id), std::move(reference), std::move(s), std::move(alignment)};
}

double train_step(std::span<const TrainingItem* const> batch, StitchModel& model,
                  tc::AdamState& opt, double mask_fraction, std::mt19937_64& rng) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  tc::Tape tape;
  const ModelVars p = bind(tape, model, true);
  Var total{};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TrainingItem& item = *batch[i];
    if (item.alignment.total_frames() != item.reference.n_frames() ||
        item.synth.n_frames() != item.reference.n_frames()) {
      throw DataError(item.id + ": reference, alignment and synthesized lengths differ");
    }
    check_inputs(item.reference, item.synth, model);
    const auto region = align::sample_training_mask(item.reference.n_frames(), mask_fraction, rng);
    const auto masked = align::apply_mask(item.reference, region);
    const ForwardVars out = forward(tape, to_tensor(masked), to_tensor(item.synth), p);
    const Var loss = stitch_loss(out, tape.constant(to_tensor(item.reference)));
    total = i == 0 ? loss : tc::add(total, loss);
  }
  total = tc::scale(total, 1.0 / static_cast<double>(batch.size()));
  const double value = total.value().item();

  const tc::Gradients grads = tape.backward(total);
  std::vector<Tensor> g;
  for (const Var& v : p.all()) g.push_back(grads[v]);
  auto params = model.parameters();
  tc::adam_step(params, g, opt);
  return value;
}

std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  return std::mt19937_64(seq);
}

StitchModel train(const TrainConfig& cfg, std::span<const TrainingItem> corpus, StitchModel model,
                  const StepCallback& on_step) {
  if (corpus.empty()) throw DataError("training corpus is empty");
  if (cfg.batch_size < 1) throw UsageError("batch size must be >= 1");
  if (!model.optimizer) {
    auto params = model.parameters();
    model.optimizer = tc::AdamState::init(params, cfg.adam);
  }
  model.optimizer->config = cfg.adam;
  model.meta.seed = cfg.seed;
  std::vector<const TrainingItem*> batch(cfg.batch_size);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const std::uint64_t step = model.meta.steps;
    auto rng = step_rng(cfg.seed, step);
    std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
    for (auto& b : batch) b = &corpus[pick(rng)];
    const double loss = train_step(batch, model, *model.optimizer, cfg.mask_fraction, rng);
    model.meta.loss_history.push_back(loss);
    model.meta.steps = step + 1;
    if (on_step) on_step(step, loss);
  }
  return model;
}

double masked_mae(const mel::MelSpectrogram& a, const mel::MelSpectrogram& b, align::MaskRegion r) {
  if (a.n_frames() != b.n_frames() || a.n_mels() != b.n_mels()) {
    throw ShapeError("masked_mae: shapes differ");
  }
  if (r.end > a.n_frames() || r.empty()) throw DataError("masked_mae: invalid region");
  double acc = 0.0;
  for (std::size_t t = r.start; t < r.end; ++t)
    for (std::size_t m = 0; m < a.n_mels(); ++m) acc += std::abs(a(t, m) - b(t, m));
  return acc / static_cast<double>(r.length() * a.n_mels());
}

// ------------------------------------------------------------------ editing

EditResult edit(const align::EditRequest& req, const mel::MelSpectrogram& reference,
                const StitchModel& model, const synth::Synthesizer& synth,
                const EditOptions& opts) {
  req.validate();
  if (req.reference.total_frames() != reference.n_frames()) {
    throw DataError("reference alignment covers " + std::to_string(req.reference.total_frames()) +
                    " frames but the reference mel has " + std::to_string(reference.n_frames()));
  }
  const auto durs = synth::replacement_durations(req, synth);
  align::EditPlan plan = align::resize_for_edit(req.reference, req, durs);
  auto masked = align::splice_reference(reference, plan.old_region, plan.mask.length());
  auto synthesized = synth.synthesize_aligned(plan.edited, req.speaker);
  if (synthesized.n_frames() != plan.new_length) {
    throw DataError("synthesized mel has " + std::to_string(synthesized.n_frames()) +
                    " frames, expected " + std::to_string(plan.new_length));
  }
  auto out = stitch_forward(masked, synthesized, model);
  auto final_mel = out.final.clamped_to_floor();
  mel::Waveform audio{{}, final_mel.config().sample_rate};
  if (opts.render_audio) audio = mel::griffin_lim(final_mel, opts.vocoder);
  return EditResult{std::move(plan),        std::move(masked),    std::move(synthesized),
                    std::move(out.pre_postnet), std::move(final_mel), std::move(audio)};
}

EditResult edit(const align::EditRequest& req, const StitchModel& model,
                const synth::Synthesizer& synth, const EditOptions& opts) {
  return edit(req, mel::load_melb(req.reference_mel_path), model, synth, opts);
}

}  // namespace astitch::stitch
