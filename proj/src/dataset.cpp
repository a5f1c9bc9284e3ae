#include "pprl/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "name_tables.hpp"

namespace pprl {

namespace {

constexpr std::array<std::string_view, 8> kCsvHeader{"id",   "first_name", "middle_name", "last_name",
                                                     "yob",  "city",       "zip",         "pob"};
constexpr std::array<Attr, 7> kCsvAttrs{Attr::FN, Attr::MN, Attr::LN, Attr::YOB,
                                        Attr::CITY, Attr::ZIP, Attr::POB};

constexpr double kMiddleMissing = 0.08;
constexpr double kBirthplaceMissing = 0.19;
constexpr double kYobPerturb = 0.08;
constexpr double kJuniorRate = 0.2;
constexpr double kTwinRate = 0.05;

enum class Group : std::uint8_t { FN, MN, LN, POB, Residence };

using Rng = std::mt19937_64;

std::discrete_distribution<std::size_t> zipf(std::size_t n, double s) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), s);
  return {w.begin(), w.end()};
}

struct Sampler {
  std::discrete_distribution<std::size_t> first = zipf(tables::first_names().size(), 1.0);
  std::discrete_distribution<std::size_t> last = zipf(tables::last_names().size(), 0.95);
  std::discrete_distribution<std::size_t> city = zipf(tables::cities().size(), 1.1);
  std::discrete_distribution<std::size_t> state = zipf(tables::states().size(), 1.6);
  std::normal_distribution<double> yob{1965.0, 16.0};

  std::string first_name(Rng& rng) { return tables::first_names()[first(rng)]; }
  std::string last_name(Rng& rng) { return tables::last_names()[last(rng)]; }
  std::string birth_state(Rng& rng) { return tables::states()[state(rng)]; }
  int birth_year(Rng& rng) {
    return std::clamp(static_cast<int>(std::lround(yob(rng))), 1920, 2004);
  }
  std::pair<std::string, std::string> residence(Rng& rng) {
    const auto& c = tables::cities()[city(rng)];
    std::uniform_int_distribution<int> z(0, c.zip_count - 1);
    return {c.name, std::to_string(c.zip_base + z(rng))};
  }
};

bool chance(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

char random_letter(Rng& rng) {
  return static_cast<char>('A' + std::uniform_int_distribution<int>(0, 25)(rng));
}

// One insert, delete, substitute or adjacent transposition on a letter.
std::string typo(const std::string& value, Rng& rng) {
  if (value.empty()) return value;
  for (int attempt = 0; attempt < 16; ++attempt) {
    std::string s = value;
    std::uniform_int_distribution<std::size_t> pos(0, s.size() - 1);
    const std::size_t i = pos(rng);
    if (s[i] == ' ') continue;
    switch (std::uniform_int_distribution<int>(s.size() > 2 ? 0 : 2, 3)(rng)) {
      case 0:
        s.erase(i, 1);
        break;
      case 1:
        if (i + 1 < s.size() && s[i + 1] != ' ') std::swap(s[i], s[i + 1]);
        break;
      case 2:
        s[i] = random_letter(rng);
        break;
      default:
        s.insert(s.begin() + static_cast<std::ptrdiff_t>(i), random_letter(rng));
        break;
    }
    if (s != value && !s.empty()) return s;
  }
  return value + random_letter(rng);
}

std::string other(const std::string& current, Rng& rng, auto&& draw) {
  for (;;) {
    std::string v = draw(rng);
    if (v != current) return v;
  }
}

// Members of one household share surname and address. Partners are close in
// age; children are 20-38 years younger and some carry the parent's first name.
void add_household(Sampler& sm, Rng& rng, std::size_t size, std::vector<PlainRecord>& out) {
  PlainRecord head;
  head[Attr::FN] = sm.first_name(rng);
  if (!chance(rng, kMiddleMissing)) head[Attr::MN] = sm.first_name(rng);
  if (!chance(rng, kBirthplaceMissing)) head[Attr::POB] = sm.birth_state(rng);
  head[Attr::LN] = sm.last_name(rng);
  auto [city, zip] = sm.residence(rng);
  head[Attr::CITY] = std::move(city);
  head[Attr::ZIP] = std::move(zip);
  const int head_yob = std::min(sm.birth_year(rng), 1986);
  head[Attr::YOB] = std::to_string(head_yob);
  out.push_back(head);

  std::optional<int> last_child_yob;
  for (std::size_t m = 1; m < size; ++m) {
    PlainRecord p = head;
    p[Attr::MN].reset();
    p[Attr::POB].reset();
    if (!chance(rng, kMiddleMissing)) p[Attr::MN] = sm.first_name(rng);
    if (!chance(rng, kBirthplaceMissing)) {
      p[Attr::POB] = chance(rng, 0.5) && head.has(Attr::POB) ? *head[Attr::POB] : sm.birth_state(rng);
    }
    int yob = head_yob;
    if (m == 1) {
      p[Attr::FN] = other(*head[Attr::FN], rng, [&](Rng& x) { return sm.first_name(x); });
      if (chance(rng, 0.15)) p[Attr::LN] = sm.last_name(rng);
      yob += static_cast<int>(std::lround(std::normal_distribution<double>(0.0, 3.0)(rng)));
    } else {
      if (last_child_yob && chance(rng, kTwinRate)) {
        yob = *last_child_yob;
      } else {
        yob += std::uniform_int_distribution<int>(20, 38)(rng);
      }
      last_child_yob = yob;
      if (chance(rng, kJuniorRate)) {
        p[Attr::FN] = head[Attr::FN];
        if (chance(rng, 0.5)) p[Attr::MN] = head[Attr::MN];
      } else {
        p[Attr::FN] = sm.first_name(rng);
      }
    }
    p[Attr::YOB] = std::to_string(std::clamp(yob, 1920, 2004));
    out.push_back(std::move(p));
  }
}

void corrupt_group(PlainRecord& r, Group g, Sampler& sm, Rng& rng) {
  switch (g) {
    case Group::FN:
      r[Attr::FN] = chance(rng, 0.75) ? typo(*r[Attr::FN], rng)
                                      : other(*r[Attr::FN], rng, [&](Rng& x) { return sm.first_name(x); });
      break;
    case Group::MN:
      if (!r.has(Attr::MN)) {
        r[Attr::MN] = sm.first_name(rng);
      } else {
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        if (u < 0.4) {
          r[Attr::MN] = typo(*r[Attr::MN], rng);
        } else if (u < 0.7) {
          r[Attr::MN].reset();
        } else {
          r[Attr::MN] = other(*r[Attr::MN], rng, [&](Rng& x) { return sm.first_name(x); });
        }
      }
      break;
    case Group::LN:
      r[Attr::LN] = chance(rng, 0.7) ? typo(*r[Attr::LN], rng)
                                     : other(*r[Attr::LN], rng, [&](Rng& x) { return sm.last_name(x); });
      break;
    case Group::POB:
      if (!r.has(Attr::POB)) {
        r[Attr::POB] = sm.birth_state(rng);
      } else if (chance(rng, 0.7)) {
        r[Attr::POB] = other(*r[Attr::POB], rng, [&](Rng& x) { return sm.birth_state(x); });
      } else {
        r[Attr::POB].reset();
      }
      break;
    case Group::Residence: {
      const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      if (u < 0.5) {
        auto [city, zip] = sm.residence(rng);
        r[Attr::CITY] = std::move(city);
        r[Attr::ZIP] = std::move(zip);
      } else if (u < 0.75) {
        std::string zip = *r[Attr::ZIP];
        const std::size_t i = std::uniform_int_distribution<std::size_t>(2, zip.size() - 1)(rng);
        const char old = zip[i];
        while (zip[i] == old) zip[i] = static_cast<char>('0' + std::uniform_int_distribution<int>(0, 9)(rng));
        r[Attr::ZIP] = std::move(zip);
      } else {
        r[Attr::CITY] = typo(*r[Attr::CITY], rng);
      }
      break;
    }
  }
}

PlainRecord make_duplicate(const PlainRecord& original, ErrorClass ec, Sampler& sm, Rng& rng) {
  const std::size_t min_groups = ec == ErrorClass::E1 ? 1 : 2;
  const std::vector<double> weights =
      ec == ErrorClass::E1 ? std::vector<double>{0.55, 0.30, 0.15} : std::vector<double>{0.6, 0.3, 0.1};
  std::discrete_distribution<std::size_t> extra(weights.begin(), weights.end());
  for (;;) {
    PlainRecord dup = original;
    std::array<Group, kKeyGroupCount> groups{Group::FN, Group::MN, Group::LN, Group::POB,
                                             Group::Residence};
    std::shuffle(groups.begin(), groups.end(), rng);
    const std::size_t k = min_groups + extra(rng);
    for (std::size_t i = 0; i < k && i < groups.size(); ++i) corrupt_group(dup, groups[i], sm, rng);
    if (chance(rng, kYobPerturb)) {
      const int yob = std::stoi(*dup[Attr::YOB]);
      dup[Attr::YOB] = std::to_string(yob + (chance(rng, 0.5) ? 1 : -1));
    }
    // Rejection keeps the error class exact even when a corruption is a no-op.
    if (differing_key_groups(original, dup) >= min_groups) return dup;
  }
}

std::string format_id(char prefix, std::size_t n) {
  std::string digits = std::to_string(n);
  return std::string(1, prefix) + std::string(digits.size() < 6 ? 6 - digits.size() : 0, '0') + digits;
}

std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string_view error_class_name(ErrorClass e) noexcept { return e == ErrorClass::E1 ? "E1" : "E2"; }

std::optional<ErrorClass> error_class_from_name(std::string_view name) noexcept {
  if (name == "E1" || name == "e1") return ErrorClass::E1;
  if (name == "E2" || name == "e2") return ErrorClass::E2;
  return std::nullopt;
}

std::size_t differing_key_groups(const PlainRecord& a, const PlainRecord& b) {
  std::size_t n = 0;
  for (Attr attr : {Attr::FN, Attr::MN, Attr::LN, Attr::POB}) n += a[attr] != b[attr] ? 1 : 0;
  n += (a[Attr::CITY] != b[Attr::CITY] || a[Attr::ZIP] != b[Attr::ZIP]) ? 1 : 0;
  return n;
}

LinkageDataset generate_dataset(const DatasetSpec& spec) {
  if (spec.n_per_source == 0) throw std::invalid_argument("n_per_source must be positive");
  if (!(spec.overlap >= 0.0 && spec.overlap <= 1.0)) throw std::invalid_argument("overlap must lie in [0, 1]");
  if (!(spec.household_rate >= 0.0 && spec.household_rate < 1.0)) {
    throw std::invalid_argument("household_rate must lie in [0, 1)");
  }
  const std::size_t n = spec.n_per_source;
  const auto dup = static_cast<std::size_t>(std::llround(spec.overlap * static_cast<double>(n)));
  const std::size_t fresh_b = n - dup;

  Rng rng(spec.seed);
  Sampler sm;
  std::vector<PlainRecord> people;
  people.reserve(n + fresh_b);
  std::discrete_distribution<std::size_t> household_size{0.0, 0.0, 0.55, 0.25, 0.13, 0.07};
  while (people.size() < n + fresh_b) {
    const std::size_t size = chance(rng, spec.household_rate) ? household_size(rng) : 1;
    add_household(sm, rng, std::min(size, n + fresh_b - people.size()), people);
  }
  // Interleave so households span both sources.
  std::shuffle(people.begin(), people.end(), rng);

  LinkageDataset data;
  for (std::size_t i = 0; i < n; ++i) {
    PlainRecord r = people[i];
    r.id = format_id('A', i + 1);
    r.source = Source::A;
    data.a.push_back(std::move(r));
  }
  std::vector<std::size_t> picks(n);
  for (std::size_t i = 0; i < n; ++i) picks[i] = i;
  std::shuffle(picks.begin(), picks.end(), rng);
  picks.resize(dup);
  std::sort(picks.begin(), picks.end());

  std::vector<std::pair<PlainRecord, std::optional<std::size_t>>> b;
  for (std::size_t i : picks) b.emplace_back(make_duplicate(data.a[i], spec.error_class, sm, rng), i);
  for (std::size_t i = n; i < n + fresh_b; ++i) b.emplace_back(people[i], std::nullopt);
  std::shuffle(b.begin(), b.end(), rng);
  for (std::size_t i = 0; i < b.size(); ++i) {
    PlainRecord r = std::move(b[i].first);
    r.id = format_id('B', i + 1);
    r.source = Source::B;
    if (b[i].second) data.truth.emplace(data.a[*b[i].second].id, r.id);
    data.b.push_back(std::move(r));
  }
  return data;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted) throw std::invalid_argument("unterminated quote in CSV line");
  out.push_back(std::move(cur));
  return out;
}

std::vector<PlainRecord> parse_records_csv(std::istream& in, Source source) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty records CSV");
  const auto header = split_csv_line(line);
  if (header.size() != kCsvHeader.size() || !std::equal(header.begin(), header.end(), kCsvHeader.begin())) {
    throw std::invalid_argument("records CSV header must be id,first_name,middle_name,last_name,yob,city,zip,pob");
  }
  std::vector<PlainRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != kCsvHeader.size()) {
      throw std::invalid_argument("records CSV line " + std::to_string(line_no) + ": expected 8 fields");
    }
    PlainRecord r;
    r.id = fields[0];
    r.source = source;
    for (std::size_t k = 0; k < kCsvAttrs.size(); ++k) {
      std::string v = normalize(fields[k + 1]);
      if (!v.empty()) r[kCsvAttrs[k]] = std::move(v);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<PlainRecord> read_records_csv(const std::filesystem::path& path, Source source) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_records_csv(in, source);
}

void write_records_csv(const std::filesystem::path& path, std::span<const PlainRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < kCsvHeader.size(); ++i) out << (i ? "," : "") << kCsvHeader[i];
  out << '\n';
  for (const auto& r : records) {
    out << csv_field(r.id);
    for (Attr a : kCsvAttrs) out << ',' << csv_field(r[a].value_or(""));
    out << '\n';
  }
}

std::set<TruthPair> read_truth_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"id_a", "id_b"}) {
    throw std::invalid_argument("truth CSV header must be id_a,id_b");
  }
  std::set<TruthPair> out;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != 2) throw std::invalid_argument("truth CSV: expected 2 fields");
    out.emplace(std::move(f[0]), std::move(f[1]));
  }
  return out;
}

void write_truth_csv(const std::filesystem::path& path, const std::set<TruthPair>& truth) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "id_a,id_b\n";
  for (const auto& [a, b] : truth) out << csv_field(a) << ',' << csv_field(b) << '\n';
}

}  // namespace pprl
