#include "cagemap/periods.hpp"

#include <string>

#include "cagemap/errors.hpp"

namespace cagemap {

namespace {

struct PeriodSpan {
  Period period;
  std::string_view label;
  int first;
  int last;
};

constexpr PeriodSpan kSpans[] = {
    {Period::p2000_2004, "2000-2004", 2000, 2004}, {Period::p2005_2009, "2005-2009", 2005, 2009},
    {Period::p2010_2012, "2010-2012", 2010, 2012}, {Period::p2013_2015, "2013-2015", 2013, 2015},
    {Period::p2016_2018, "2016-2018", 2016, 2018}, {Period::p2019_2021, "2019-2021", 2019, 2021},
};

}  // namespace

std::string_view label(Period period) noexcept {
  return kSpans[static_cast<std::size_t>(period)].label;
}

std::optional<Period> parse_period(std::string_view text) noexcept {
  for (const auto& span : kSpans) {
    if (span.label == text) return span.period;
  }
  return std::nullopt;
}

PeriodMap PeriodMap::standard() {
  PeriodMap map;
  for (const auto& span : kSpans) {
    for (int year = span.first; year <= span.last; ++year) map.assign(year, span.period);
  }
  return map;
}

std::optional<Period> PeriodMap::find(int year) const {
  const auto it = years_.find(year);
  if (it == years_.end()) return std::nullopt;
  return it->second;
}

Period PeriodMap::at(int year) const {
  if (auto p = find(year)) return *p;
  throw ValidationError("year " + std::to_string(year) + " is not covered by the period map");
}

}  // namespace cagemap
