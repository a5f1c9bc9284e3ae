#include "pprl/attributes.hpp"

#include <cctype>

namespace pprl {

namespace {
constexpr std::array<std::string_view, kAttrCount> kNames{"FN", "MN", "LN", "YOB",
                                                          "CITY", "ZIP", "POB"};
}

std::string_view attr_name(Attr a) noexcept { return kNames[idx(a)]; }

std::optional<Attr> attr_from_name(std::string_view name) noexcept {
  for (Attr a : kAllAttrs) {
    if (kNames[idx(a)] == name) return a;
  }
  return std::nullopt;
}

std::string_view source_name(Source s) noexcept { return s == Source::A ? "A" : "B"; }

std::string normalize(std::string_view value) {
  std::string out;
  out.reserve(value.size());
  bool pending_space = false;
  for (char ch : value) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::toupper(c)));
  }
  return out;
}

}  // namespace pprl
