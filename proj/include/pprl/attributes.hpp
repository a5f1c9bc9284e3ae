#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace pprl {

/// Linkage attributes of a person record, in schema order.
enum class Attr : std::uint8_t { FN, MN, LN, YOB, CITY, ZIP, POB };

inline constexpr std::size_t kAttrCount = 7;

inline constexpr std::array<Attr, kAttrCount> kAllAttrs{
    Attr::FN, Attr::MN, Attr::LN, Attr::YOB, Attr::CITY, Attr::ZIP, Attr::POB};

template <typename T>
using PerAttr = std::array<T, kAttrCount>;

constexpr std::size_t idx(Attr a) noexcept { return static_cast<std::size_t>(a); }

std::string_view attr_name(Attr a) noexcept;
std::optional<Attr> attr_from_name(std::string_view name) noexcept;

enum class Source : std::uint8_t { A, B };

inline constexpr std::array<Source, 2> kAllSources{Source::A, Source::B};

constexpr std::size_t idx(Source s) noexcept { return static_cast<std::size_t>(s); }
std::string_view source_name(Source s) noexcept;

template <typename T>
using PerSource = std::array<T, 2>;

/// Uppercase, trim, collapse internal whitespace runs to a single space.
std::string normalize(std::string_view value);

}  // namespace pprl
