#pragma once

// Frequency-ranked value tables for the synthetic person generator. The heads
// are common US names and North Carolina places; the tails are synthesized.

#include <string>
#include <vector>

namespace pprl::tables {

struct City {
  std::string name;
  int zip_base;   // first zip code of the city
  int zip_count;  // zips base .. base + count - 1
};

const std::vector<std::string>& first_names();
const std::vector<std::string>& last_names();
const std::vector<City>& cities();
const std::vector<std::string>& states();

}  // namespace pprl::tables
