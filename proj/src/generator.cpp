#include "histex/generator.h"

#include <algorithm>
#include <stdexcept>

namespace histex {

namespace {

constexpr std::string_view kPredicate = "PRED(P, k2=0 and k3=0)";
constexpr std::string_view kPhantom = "(B;k2;k3,0;0)";
// Lands before the first match, so it is inside what a one-row scan has already covered.
constexpr std::string_view kLowPhantom = "(B;reckey;k2;k3,50;0;0)";

bool predicate_class(HistoryClass cls) { return cls == HistoryClass::W_PR || cls == HistoryClass::PR_W; }

std::string body(HistoryClass cls, std::string_view variant) {
  switch (cls) {
    case HistoryClass::W_W:
      return "W1(A,1001) W2(A,2002)";
    case HistoryClass::W_R:
      return "W1(A,1001) R2(A,X)";
    case HistoryClass::R_W:
      return "R1(A,X) W2(A,2002)";
    default:
      break;
  }
  const bool first_writes = cls == HistoryClass::W_PR;
  const std::string w = first_writes ? "1" : "2";
  const std::string r = first_writes ? "2" : "1";
  std::string write;
  std::string read = "PR" + r + "(P;reckey;all)";
  if (variant == "insert") {
    write = "I" + w + std::string(kPhantom);
  } else if (variant == "partial") {
    write = "I" + w + std::string(kLowPhantom);
  } else if (variant == "delete") {
    write = "D" + w + "(A)";
  } else if (variant == "update") {
    write = "SU" + w + "(P)";
  }
  if (variant == "partial") read = "PR" + r + "(P;reckey;1)";
  return first_writes ? write + " " + read : read + " " + write;
}

}  // namespace

HistoryProgram instantiate(HistoryClass cls, IsolationLevel l1, IsolationLevel l2, std::string_view variant) {
  if (predicate_class(cls)) {
    if (variant.empty() || variant == kDefaultVariant) variant = "insert";
    if (std::find(std::begin(kPredicateVariants), std::end(kPredicateVariants), variant) ==
        std::end(kPredicateVariants)) {
      throw std::invalid_argument("unknown variant '" + std::string(variant) + "'");
    }
  } else {
    if (variant.empty()) variant = kDefaultVariant;
    if (variant != kDefaultVariant) {
      throw std::invalid_argument(std::string(class_name(cls)) + " has no variant '" + std::string(variant) + "'");
    }
  }

  std::string text;
  text += "#@ class=" + std::string(class_name(cls)) + "\n";
  text += "#@ l1=" + std::string(level_name(l1)) + "\n";
  text += "#@ l2=" + std::string(level_name(l2)) + "\n";
  text += "#@ variant=" + std::string(variant) + "\n";
  if (predicate_class(cls)) text += std::string(kPredicate) + " ";
  text += "IL1(" + std::string(level_name(l1)) + ") IL2(" + std::string(level_name(l2)) + ") ";
  text += body(cls, variant) + " C1 C2\n";

  std::string name = std::string(class_name(cls)) + "-" + std::string(level_name(l1)) + "-" +
                     std::string(level_name(l2));
  if (predicate_class(cls)) name += "-" + std::string(variant);
  return parse_history(text, name);
}

std::vector<HistoryProgram> generate_matrix(const std::vector<IsolationLevel> &levels,
                                            const std::vector<HistoryClass> &classes,
                                            const std::vector<std::string> &variants) {
  std::vector<HistoryProgram> out;
  for (auto cls : classes) {
    std::vector<std::string> vs;
    if (predicate_class(cls)) {
      for (const auto &v : variants) {
        if (v != kDefaultVariant) vs.push_back(v);
      }
      if (vs.empty()) vs.push_back("insert");
    } else {
      vs.push_back(std::string(kDefaultVariant));
    }
    for (const auto &v : vs) {
      for (auto l1 : levels) {
        for (auto l2 : levels) out.push_back(instantiate(cls, l1, l2, v));
      }
    }
  }
  return out;
}

HistoryProgram ru_scenario() {
  return parse_history(
      "#@ scenario=ru\n"
      "IL1(RU) IL2(RU) IL3(RU) IL4(RU) R1(A) R1(B) C1 W2(A) R3(A,A0) W3(B,A0) C3 A2 R4(A) R4(B) C4\n",
      "ru-scenario");
}

}  // namespace histex
