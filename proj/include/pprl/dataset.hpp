#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pprl/encoding.hpp"

namespace pprl {

enum class ErrorClass : std::uint8_t { E1, E2 };

std::string_view error_class_name(ErrorClass e) noexcept;
std::optional<ErrorClass> error_class_from_name(std::string_view name) noexcept;

struct DatasetSpec {
  std::size_t n_per_source = 5000;
  double overlap = 0.2;
  ErrorClass error_class = ErrorClass::E1;
  std::uint64_t seed = 1;
  // Probability that a sampled household has more than one member (shared
  // surname and residence).
  double household_rate = 0.45;
};

using TruthPair = std::pair<std::string, std::string>;  // (id_a, id_b)

struct LinkageDataset {
  std::vector<PlainRecord> a;
  std::vector<PlainRecord> b;
  std::set<TruthPair> truth;
};

/// Key attribute groups whose disagreement defines E1/E2; CITY and ZIP count
/// as one group.
inline constexpr std::size_t kKeyGroupCount = 5;

/// Number of key groups (FN, MN, LN, POB, CITY+ZIP) on which two records differ.
std::size_t differing_key_groups(const PlainRecord& a, const PlainRecord& b);

/// Synthetic two-source person data. Throws std::invalid_argument on an
/// infeasible spec.
LinkageDataset generate_dataset(const DatasetSpec& spec);

// CSV: header id,first_name,middle_name,last_name,yob,city,zip,pob; empty = missing.
std::vector<PlainRecord> read_records_csv(const std::filesystem::path& path, Source source);
void write_records_csv(const std::filesystem::path& path, std::span<const PlainRecord> records);
std::vector<PlainRecord> parse_records_csv(std::istream& in, Source source);

// CSV: header id_a,id_b.
std::set<TruthPair> read_truth_csv(const std::filesystem::path& path);
void write_truth_csv(const std::filesystem::path& path, const std::set<TruthPair>& truth);

/// Splits one CSV line honouring double quotes.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace pprl
