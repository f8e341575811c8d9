#pragma once

// Double-attention stitching of a masked reference mel with a synthesized
// mel, followed by a residual convolutional postnet.
//
// The two T x M mels are stacked as a 2-channel map over N = T*M positions.
// 1x1 lifts produce A (c_m x N), B (c_n x N) and V (c_n x N).
//   gather:      G = A . softmax_N(B)^T            (c_m x c_n global descriptors)
//   distribute:  Z = G . softmax_c(V)              (c_m x N, per-position mixture)
// W_O projects Z back to one channel, which is added to the masked
// reference. The postnet refines that result and is itself residual.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "attnstitch/align.hpp"
#include "attnstitch/melkit.hpp"
#include "attnstitch/synth.hpp"
#include "attnstitch/tensor.hpp"

namespace astitch::stitch {

using tc::Tensor;
using tc::Var;

inline constexpr std::size_t kPostnetLayers = 5;

struct StitchConfig {
  std::size_t n_mels = 80;
  std::size_t c_m = 32;
  std::size_t c_n = 16;
  std::size_t postnet_channels = 512;
  std::size_t postnet_kernel = 5;

  void validate() const;
  friend bool operator==(const StitchConfig&, const StitchConfig&) = default;
};

struct DaParams {
  Tensor w_a, b_a;  // c_m x 2, c_m
  Tensor w_b, b_b;  // c_n x 2, c_n
  Tensor w_v, b_v;  // c_n x 2, c_n
  Tensor w_o, b_o;  // 1 x c_m, 1
};

/// Channels M -> C -> C -> C -> C -> M; tanh after layers 1-4.
struct PostnetParams {
  std::array<Tensor, kPostnetLayers> weight;  // C_out x C_in x K
  std::array<Tensor, kPostnetLayers> bias;
};

struct TrainingMeta {
  std::uint64_t steps = 0;
  std::uint64_t seed = 0;
  std::vector<double> loss_history;
};

struct StitchModel {
  StitchConfig config;
  DaParams da;
  PostnetParams postnet;
  std::string mel_fingerprint;
  TrainingMeta meta;
  std::optional<tc::AdamState> optimizer;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;

  /// Every weight and bias zero: the whole model is the identity on the
  /// masked reference.
  static StitchModel zeros(const StitchConfig& cfg, std::string fingerprint);
  /// Fan-in scaled centered uniform weights, zero biases; W_O and the last
  /// postnet layer start at zero so the initial map is the identity.
  static StitchModel initialize(const StitchConfig& cfg, std::string fingerprint,
                                std::uint64_t seed);
  /// Like initialize() but with every tensor random, for gradient checks.
  static StitchModel randomized(const StitchConfig& cfg, std::string fingerprint,
                                std::uint64_t seed);
};

/// Tape handles for every model tensor, in StitchModel::parameters() order.
struct ModelVars {
  Var w_a, b_a, w_b, b_b, w_v, b_v, w_o, b_o;
  std::array<Var, kPostnetLayers> pn_w, pn_b;

  std::vector<Var> all() const;
};

/// Puts the model on the tape, as parameters when `trainable`, else as constants.
ModelVars bind(tc::Tape& tape, const StitchModel& model, bool trainable);

/// G = A . softmax over positions(B)^T.
Var gather(Var a, Var b);
/// Z = G . softmax over channels(V), per position.
Var distribute(Var g, Var v);
Tensor gather(const Tensor& a, const Tensor& b);
Tensor distribute(const Tensor& g, const Tensor& v);

/// masked_ref, synth: T x M constants. Returns T x M.
Var da_forward(Var masked_ref, Var synth, const ModelVars& p);
/// x: T x M. Returns x + convstack(x).
Var postnet_forward(Var x, const ModelVars& p);

struct ForwardVars {
  Var pre_postnet;
  Var final;
};
ForwardVars forward(tc::Tape& tape, const Tensor& masked_ref, const Tensor& synth,
                    const ModelVars& p);
/// mae(pre_postnet, target) + mae(final, target).
Var stitch_loss(const ForwardVars& out, Var target);

Tensor to_tensor(const mel::MelSpectrogram& m);
mel::MelSpectrogram to_mel(const Tensor& t, const mel::MelConfig& cfg);

struct StitchOutput {
  mel::MelSpectrogram pre_postnet;
  mel::MelSpectrogram final;
};

/// Inference. Throws DataError on shape or fingerprint mismatch.
StitchOutput stitch_forward(const mel::MelSpectrogram& masked_ref,
                            const mel::MelSpectrogram& synth, const StitchModel& model);

// ------------------------------------------------------------------ training

struct TrainingItem {
  std::string id;
  mel::MelSpectrogram reference;
  mel::MelSpectrogram synth;  // frozen synthesizer output at ground-truth durations
  align::Alignment alignment;
};

/// Synthesizes the item's frozen-synth mel; throws DataError when the
/// alignment does not cover the reference exactly.
TrainingItem make_training_item(std::string id, mel::MelSpectrogram reference,
                                align::Alignment alignment, const synth::Synthesizer& synth);

struct TrainConfig {
  std::size_t steps = 500;
  std::size_t batch_size = 1;
  double mask_fraction = 0.1;
  std::uint64_t seed = 0;
  tc::AdamConfig adam;
};

/// One optimizer step over `batch`; returns the mean loss before the update.
double train_step(std::span<const TrainingItem* const> batch, StitchModel& model,
                  tc::AdamState& opt, double mask_fraction, std::mt19937_64& rng);

/// Per-step generator derived from (seed, step) so resumed runs replay the
/// same masks and batches.
std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t step);

using StepCallback = std::function<void(std::uint64_t step, double loss)>;

/// Runs cfg.steps further steps starting at model.meta.steps.
StitchModel train(const TrainConfig& cfg, std::span<const TrainingItem> corpus, StitchModel model,
                  const StepCallback& on_step = {});

/// Mean |a - b| over frames in r.
double masked_mae(const mel::MelSpectrogram& a, const mel::MelSpectrogram& b, align::MaskRegion r);

// ------------------------------------------------------------------ editing

struct EditOptions {
  mel::GriffinLimOptions vocoder;
  bool render_audio = true;
};

struct EditResult {
  align::EditPlan plan;
  mel::MelSpectrogram masked_reference;  // spliced timeline, zeros in the slot
  mel::MelSpectrogram synthesized;
  mel::MelSpectrogram pre_postnet;
  mel::MelSpectrogram mel;  // final, clamped to the log floor
  mel::Waveform audio;
};

EditResult edit(const align::EditRequest& req, const mel::MelSpectrogram& reference,
                const StitchModel& model, const synth::Synthesizer& synth,
                const EditOptions& opts = {});
/// Loads req.reference_mel_path.
EditResult edit(const align::EditRequest& req, const StitchModel& model,
                const synth::Synthesizer& synth, const EditOptions& opts = {});

}  // namespace astitch::stitch
