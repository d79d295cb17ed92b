#pragma once

#include <string>
#include <vector>

#include "cwm/autograd/features.hpp"
#include "cwm/autograd/ops.hpp"

namespace cwm::toy {

using ag::Tensor;

enum class Role { kDiscriminator, kObserver, kCollaborator };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::kDiscriminator: return "discriminator";
    case Role::kObserver: return "observer";
    case Role::kCollaborator: return "collaborator";
  }
  return "?";
}

inline Role parse_role(const std::string& s) {
  if (s == "discriminator") return Role::kDiscriminator;
  if (s == "observer") return Role::kObserver;
  if (s == "collaborator") return Role::kCollaborator;
  throw Error(ErrorCode::kInvalidArgument, "unknown role '" + s + "'");
}

/// Least-squares objective: real scores pulled to 1, generated to 0.
inline Tensor loss_d(const Tensor& d_real, const Tensor& d_gen) {
  require(d_real.size() == d_gen.size(), ErrorCode::kShapeMismatch, "loss_d needs equal score counts");
  return ag::add(ag::mean(ag::square(ag::add_scalar(d_real, -1.0))), ag::mean(ag::square(d_gen)));
}

inline Tensor loss_g_adv(const Tensor& d_gen) { return ag::mean(ag::square(ag::add_scalar(d_gen, -1.0))); }

/// Sum over layers of the mean squared activation difference.
inline Tensor loss_fm(const std::vector<Tensor>& real, const std::vector<Tensor>& gen) {
  require(real.size() == gen.size() && !real.empty(), ErrorCode::kShapeMismatch, "loss_fm layer count mismatch");
  Tensor total;
  for (std::size_t i = 0; i < real.size(); ++i) {
    auto term = ag::mean(ag::square(ag::sub(real[i], gen[i])));
    total = total.defined() ? ag::add(total, term) : term;
  }
  return total;
}

/// Mean absolute difference of floored log-mel spectrograms.
inline Tensor loss_mel(const Tensor& x_real, const Tensor& x_gen, const ag::LogMel& mel) {
  return ag::mean(ag::abs(ag::sub(mel(x_real), mel(x_gen))));
}

/// Same objective as the discriminator, applied to detector scores.
inline Tensor loss_wm(const Tensor& wm_real, const Tensor& wm_gen) { return loss_d(wm_real, wm_gen); }

struct LossWeights {
  double adv = 1.0;
  double fm = 2.0;
  double mel = 45.0;
  double wm = 1.0;
};

struct GeneratorLossTerms {
  Tensor adv;
  Tensor fm;
  Tensor mel;
  Tensor wm;  // computed on detector scores of the generated signal; may be undefined for an observer
};

/// Weighted generator objective. Only a collaborator adds the detector term;
/// an observer's loss ignores it, and its detector input must be detached by
/// the caller so no gradient reaches G.
inline Tensor generator_total_loss(Role role, const GeneratorLossTerms& t, const LossWeights& w) {
  require(role == Role::kObserver || role == Role::kCollaborator, ErrorCode::kInvalidArgument,
          std::string("generator loss needs an observer or collaborator role, got ") + to_string(role));
  auto total = ag::add(ag::add(ag::scale(t.adv, w.adv), ag::scale(t.fm, w.fm)), ag::scale(t.mel, w.mel));
  if (role == Role::kCollaborator) {
    require(t.wm.defined(), ErrorCode::kInvalidArgument, "collaborator loss needs the detector term");
    total = ag::add(total, ag::scale(t.wm, w.wm));
  }
  return total;
}

}  // namespace cwm::toy
