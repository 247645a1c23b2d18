#ifndef RLL_LOSS_KIND_HPP
#define RLL_LOSS_KIND_HPP

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "rll/gradients.hpp"

namespace rll {

enum class LossKind { kRll, kRllSimpler, kTriplet, kNPairMc, kLiftedStruct, kProxyNca };

inline constexpr std::array<LossKind, 6> kAllLosses = {
    LossKind::kRll,     LossKind::kRllSimpler,   LossKind::kTriplet,
    LossKind::kNPairMc, LossKind::kLiftedStruct, LossKind::kProxyNca};

inline const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kRll: return "rll";
    case LossKind::kRllSimpler: return "rll-simpler";
    case LossKind::kTriplet: return "triplet";
    case LossKind::kNPairMc: return "npair";
    case LossKind::kLiftedStruct: return "lifted";
    case LossKind::kProxyNca: return "proxy-nca";
  }
  return "?";
}

inline std::optional<LossKind> parse_loss_kind(std::string_view name) {
  for (LossKind kind : kAllLosses) {
    if (name == to_string(kind)) return kind;
  }
  return std::nullopt;
}

inline bool is_ranked_list(LossKind kind) {
  return kind == LossKind::kRll || kind == LossKind::kRllSimpler;
}

inline BaselineLoss to_baseline(LossKind kind) {
  switch (kind) {
    case LossKind::kTriplet: return BaselineLoss::kTriplet;
    case LossKind::kNPairMc: return BaselineLoss::kNPairMc;
    case LossKind::kLiftedStruct: return BaselineLoss::kLiftedStruct;
    case LossKind::kProxyNca: return BaselineLoss::kProxyNca;
    default: break;
  }
  fail(ErrorKind::kConfiguration, std::string(to_string(kind)) + " is not a baseline loss");
}

/// Loss selection plus the hyperparameters of every loss. For kRllSimpler,
/// `rll` is expected to come from simpler_params().
struct LossConfig {
  LossKind kind = LossKind::kRllSimpler;
  RllParams rll = simpler_params(0.4, 10.0);
  BaselineParams baseline;
};

}  // namespace rll

#endif  // RLL_LOSS_KIND_HPP
