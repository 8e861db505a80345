#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace flymaster {

enum class SelectionAlgorithm {
  Fixed,
  RandomK,
  RandomN,
  LeastDistanceK,
  LeastDistanceN,
  LeastStressK,
  LeastStressN,
  PowK,
  PowN,
  OptimalK,
  OptimalN,
};

inline constexpr std::array<SelectionAlgorithm, 11> kAllAlgorithms = {
    SelectionAlgorithm::Fixed,          SelectionAlgorithm::RandomK,
    SelectionAlgorithm::RandomN,        SelectionAlgorithm::LeastDistanceK,
    SelectionAlgorithm::LeastDistanceN, SelectionAlgorithm::LeastStressK,
    SelectionAlgorithm::LeastStressN,   SelectionAlgorithm::PowK,
    SelectionAlgorithm::PowN,           SelectionAlgorithm::OptimalK,
    SelectionAlgorithm::OptimalN,
};

constexpr std::string_view to_string(SelectionAlgorithm algo) {
  switch (algo) {
    case SelectionAlgorithm::Fixed: return "fixed";
    case SelectionAlgorithm::RandomK: return "random_k";
    case SelectionAlgorithm::RandomN: return "random_n";
    case SelectionAlgorithm::LeastDistanceK: return "least_distance_k";
    case SelectionAlgorithm::LeastDistanceN: return "least_distance_n";
    case SelectionAlgorithm::LeastStressK: return "least_stress_k";
    case SelectionAlgorithm::LeastStressN: return "least_stress_n";
    case SelectionAlgorithm::PowK: return "pow_k";
    case SelectionAlgorithm::PowN: return "pow_n";
    case SelectionAlgorithm::OptimalK: return "optimal_k";
    case SelectionAlgorithm::OptimalN: return "optimal_n";
  }
  return "?";
}

constexpr std::optional<SelectionAlgorithm> parse_algorithm(std::string_view name) {
  for (auto algo : kAllAlgorithms) {
    if (to_string(algo) == name) return algo;
  }
  return std::nullopt;
}

/// True for the variants that choose among the round's K participants.
constexpr bool selects_among_participants(SelectionAlgorithm algo) {
  switch (algo) {
    case SelectionAlgorithm::RandomK:
    case SelectionAlgorithm::LeastDistanceK:
    case SelectionAlgorithm::LeastStressK:
    case SelectionAlgorithm::PowK:
    case SelectionAlgorithm::OptimalK: return true;
    default: return false;
  }
}

}  // namespace flymaster
