#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "luna/core.hpp"
#include "luna/text.hpp"

namespace luna::metrics {

struct Fragment {
  std::size_t article_start = 0;
  std::size_t summary_start = 0;
  std::size_t length = 0;

  friend bool operator==(const Fragment&, const Fragment&) = default;
};

struct FragmentSet {
  std::vector<Fragment> fragments;
  std::size_t article_len = 0;
  std::size_t summary_len = 0;

  std::size_t covered() const;
  std::size_t squared_lengths() const;
};

/// Greedy left-to-right scan over the summary: at each position take the
/// longest article run matching from there (earliest article start on ties)
/// and jump past it, otherwise advance by one.
FragmentSet extractive_fragments(std::span<const std::string> article, std::span<const std::string> summary);

double coverage(const FragmentSet& f);
double density(const FragmentSet& f);
// Throws EmptyInput for an empty summary.
double compression(const FragmentSet& f);

double novelty(std::span<const std::string> candidate, std::span<const std::string> source, std::size_t n);
double repetition(std::span<const std::string> candidate, std::size_t n);

void register_string_free_metrics(Registry& registry);

}  // namespace luna::metrics
