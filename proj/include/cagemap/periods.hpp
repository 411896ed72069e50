#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string_view>

namespace cagemap {

/// The six multi-year imagery windows.
enum class Period : std::uint8_t {
  p2000_2004,
  p2005_2009,
  p2010_2012,
  p2013_2015,
  p2016_2018,
  p2019_2021,
};

inline constexpr std::array<Period, 6> kAllPeriods = {
    Period::p2000_2004, Period::p2005_2009, Period::p2010_2012,
    Period::p2013_2015, Period::p2016_2018, Period::p2019_2021,
};

/// "2000-2004" style label.
std::string_view label(Period period) noexcept;
std::optional<Period> parse_period(std::string_view text) noexcept;

/// Year -> period assignment. The standard map covers 2000..2021.
class PeriodMap {
 public:
  static PeriodMap standard();

  void assign(int year, Period period) { years_[year] = period; }
  std::optional<Period> find(int year) const;
  /// Throws ValidationError when the year is not covered.
  Period at(int year) const;
  const std::map<int, Period>& years() const noexcept { return years_; }

 private:
  std::map<int, Period> years_;
};

}  // namespace cagemap
