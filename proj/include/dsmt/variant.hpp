#pragma once

#include <string>

#include "dsmt/errors.hpp"

namespace dsmt {

// Ablation family. Each step enables one more mechanism on top of the
// previous one: reconstruction, sex classification, deep supervision.
enum class Variant { kBaseline, kAe, kMtlAe, kDsAe, kDsmtAe };

inline bool has_decoder(Variant v) { return v != Variant::kBaseline; }
inline bool has_sex_heads(Variant v) {
  return v == Variant::kMtlAe || v == Variant::kDsmtAe;
}
inline bool has_shallow_heads(Variant v) {
  return v == Variant::kDsAe || v == Variant::kDsmtAe;
}

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "BASELINE";
    case Variant::kAe: return "AE";
    case Variant::kMtlAe: return "MTL_AE";
    case Variant::kDsAe: return "DS_AE";
    case Variant::kDsmtAe: return "DSMT_AE";
  }
  return "?";
}

// Display name used in comparison tables.
inline const char* variant_label(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "Baseline";
    case Variant::kAe: return "AE";
    case Variant::kMtlAe: return "MTL-AE";
    case Variant::kDsAe: return "DS-AE";
    case Variant::kDsmtAe: return "DSMT-AE";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "BASELINE") return Variant::kBaseline;
  if (s == "AE") return Variant::kAe;
  if (s == "MTL_AE") return Variant::kMtlAe;
  if (s == "DS_AE") return Variant::kDsAe;
  if (s == "DSMT_AE") return Variant::kDsmtAe;
  throw ConfigError("unknown model variant: " + s);
}

}  // namespace dsmt
