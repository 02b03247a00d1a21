#include "trb/net.hpp"

namespace trb {

std::string to_string(BranchMode m) {
  switch (m) {
    case BranchMode::SkeletonOnly: return "skeleton-only";
    case BranchMode::ContourOnly: return "contour-only";
    case BranchMode::Multitask: return "multitask";
  }
  return "multitask";
}

std::string to_string(MpMode m) {
  switch (m) {
    case MpMode::None: return "none";
    case MpMode::Xs: return "xs";
    case MpMode::NormalConv: return "normal-conv";
    case MpMode::DcNoAdaptive: return "dc-no-adaptive";
    case MpMode::Dc: return "dc";
    case MpMode::Pm: return "pm";
    case MpMode::DcPm: return "dc+pm";
  }
  return "none";
}

BranchMode branch_mode_from(const std::string& s) {
  if (s == "skeleton-only") return BranchMode::SkeletonOnly;
  if (s == "contour-only") return BranchMode::ContourOnly;
  if (s == "multitask") return BranchMode::Multitask;
  throw std::invalid_argument("unknown branch mode: " + s);
}

MpMode mp_mode_from(const std::string& s) {
  if (s == "none") return MpMode::None;
  if (s == "xs") return MpMode::Xs;
  if (s == "normal-conv") return MpMode::NormalConv;
  if (s == "dc-no-adaptive") return MpMode::DcNoAdaptive;
  if (s == "dc") return MpMode::Dc;
  if (s == "pm") return MpMode::Pm;
  if (s == "dc+pm") return MpMode::DcPm;
  throw std::invalid_argument("unknown message-passing mode: " + s);
}

}  // namespace trb
