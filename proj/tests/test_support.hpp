#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "attnstitch/stitcher.hpp"
#include "attnstitch/tensor.hpp"

namespace testing {

using astitch::tc::Shape;
using astitch::tc::Tape;
using astitch::tc::Tensor;
using astitch::tc::Var;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Builds a scalar loss from tape variables bound to `inputs`.
using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12)
/// of the gradient w.r.t. inputs[which], with central differences of step h.
inline double grad_rel_error(const LossFn& f, const std::vector<Tensor>& inputs, std::size_t which,
                             double h = 1e-5) {
  auto eval = [&](const std::vector<Tensor>& in) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : in) vars.push_back(tape.constant(t));
    return f(tape, vars).value().item();
  };
  Tape tape;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    vars.push_back(i == which ? tape.parameter(inputs[i]) : tape.constant(inputs[i]));
  }
  const auto grads = tape.backward(f(tape, vars));
  const Tensor analytic = grads[vars[which]];

  std::vector<double> numeric(inputs[which].size()), diff(inputs[which].size());
  auto work = inputs;
  for (std::size_t k = 0; k < numeric.size(); ++k) {
    const double x0 = inputs[which][k];
    work[which][k] = x0 + h;
    const double fp = eval(work);
    work[which][k] = x0 - h;
    const double fm = eval(work);
    work[which][k] = x0;
    numeric[k] = (fp - fm) / (2.0 * h);
    diff[k] = analytic[k] - numeric[k];
  }
  const double scale = std::max({norm(analytic.values()), norm(numeric), 1e-12});
  return norm(diff) / scale;
}

/// Tiny stitcher problem for whole-model gradient checks. The target keeps
/// every element at least 0.05 away from both model outputs so the MAE kinks
/// stay out of reach of the finite-difference step.
struct StitchProblem {
  astitch::stitch::StitchModel model;
  Tensor masked, synth, target;
};

inline StitchProblem tiny_stitch_problem(std::uint64_t seed, std::size_t T = 6, std::size_t M = 4) {
  using namespace astitch::stitch;
  StitchConfig cfg{M, 3, 2, 8, 5};
  std::mt19937_64 rng(seed);
  StitchProblem p{StitchModel::randomized(cfg, "fp", seed), random_tensor({T, M}, rng, -2.0, 0.0),
                  random_tensor({T, M}, rng, -2.0, 0.0), Tensor({T, M})};
  Tape tape;
  const auto out = forward(tape, p.masked, p.synth, bind(tape, p.model, false));
  const Tensor& pre = out.pre_postnet.value();
  const Tensor& fin = out.final.value();
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t k = 0; k < p.target.size(); ++k) {
    double t = 0.0;
    do {
      t = pre[k] + u(rng);
    } while (std::abs(t - pre[k]) < 0.05 || std::abs(t - fin[k]) < 0.05);
    p.target[k] = t;
  }
  return p;
}

inline double stitch_problem_loss(const StitchProblem& p, const astitch::stitch::StitchModel& m) {
  using namespace astitch::stitch;
  Tape tape;
  const auto out = forward(tape, p.masked, p.synth, bind(tape, m, false));
  return stitch_loss(out, tape.constant(p.target)).value().item();
}

/// Norm-relative gradient error of the total loss for every model tensor,
/// in StitchModel::parameters() order. Gradients below 1e-6 in norm are
/// compared absolutely: b_b, for one, shifts every logit of a position
/// softmax equally and has an exactly zero gradient, leaving only rounding
/// noise in both estimates.
inline std::vector<double> stitch_grad_errors(const StitchProblem& p, double h = 1e-5) {
  using namespace astitch::stitch;
  Tape tape;
  const ModelVars vars = bind(tape, p.model, true);
  const auto out = forward(tape, p.masked, p.synth, vars);
  const auto grads = tape.backward(stitch_loss(out, tape.constant(p.target)));
  const auto handles = vars.all();

  std::vector<double> errors;
  auto work = p.model;
  const auto params = work.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor analytic = grads[handles[i]];
    std::vector<double> numeric(params[i]->size()), diff(params[i]->size());
    for (std::size_t k = 0; k < numeric.size(); ++k) {
      const double x0 = (*params[i])[k];
      (*params[i])[k] = x0 + h;
      const double fp = stitch_problem_loss(p, work);
      (*params[i])[k] = x0 - h;
      const double fm = stitch_problem_loss(p, work);
      (*params[i])[k] = x0;
      numeric[k] = (fp - fm) / (2.0 * h);
      diff[k] = analytic[k] - numeric[k];
    }
    const double scale = std::max({norm(analytic.values()), norm(numeric), 1e-6});
    errors.push_back(norm(diff) / scale);
  }
  return errors;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("astitch_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
