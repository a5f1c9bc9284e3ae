#include "name_tables.hpp"

#include <random>
#include <set>

namespace pprl::tables {

namespace {

const char* const kFirstHead[] = {
    "JAMES",   "MARY",     "JOHN",     "PATRICIA", "ROBERT",  "JENNIFER", "MICHAEL",  "LINDA",
    "WILLIAM", "ELIZABETH", "DAVID",   "BARBARA",  "RICHARD", "SUSAN",    "JOSEPH",   "JESSICA",
    "THOMAS",  "SARAH",    "CHARLES",  "KAREN",    "CHRISTOPHER", "NANCY", "DANIEL",  "LISA",
    "MATTHEW", "BETTY",    "ANTHONY",  "MARGARET", "MARK",    "SANDRA",   "DONALD",   "ASHLEY",
    "STEVEN",  "KIMBERLY", "PAUL",     "EMILY",    "ANDREW",  "DONNA",    "JOSHUA",   "MICHELLE",
    "KENNETH", "DOROTHY",  "KEVIN",    "CAROL",    "BRIAN",   "AMANDA",   "GEORGE",   "MELISSA",
    "EDWARD",  "DEBORAH",  "RONALD",   "STEPHANIE", "TIMOTHY", "REBECCA", "JASON",    "SHARON",
    "JEFFREY", "LAURA",    "RYAN",     "CYNTHIA",  "JACOB",   "KATHLEEN", "GARY",     "AMY",
    "NICHOLAS", "SHIRLEY", "ERIC",     "ANGELA",   "JONATHAN", "HELEN",   "STEPHEN",  "ANNA",
    "LARRY",   "BRENDA",   "JUSTIN",   "PAMELA",   "SCOTT",   "NICOLE",   "BRANDON",  "EMMA",
    "BENJAMIN", "SAMANTHA", "SAMUEL",  "KATHERINE", "GREGORY", "CHRISTINE", "FRANK",  "DEBRA",
    "ALEXANDER", "RACHEL", "RAYMOND",  "CAROLYN",  "PATRICK", "JANET",    "JACK",     "CATHERINE",
    "DENNIS",  "MARIA",    "JERRY",    "HEATHER",  "TYLER",   "DIANE",    "AARON",    "RUTH",
    "JOSE",    "JULIE",    "ADAM",     "OLIVIA",   "HENRY",   "JOYCE",    "NATHAN",   "VIRGINIA",
    "DOUGLAS", "VICTORIA", "ZACHARY",  "KELLY",    "PETER",   "LAUREN",   "KYLE",     "CHRISTINA",
    "PAULA",   "PAUL",     "LELAND",   "CARL",     "CARLA",   "JEAN",     "JOAN",     "JANE",
};

const char* const kLastHead[] = {
    "SMITH",    "JOHNSON",  "WILLIAMS", "BROWN",    "JONES",    "GARCIA",   "MILLER",   "DAVIS",
    "RODRIGUEZ", "MARTINEZ", "HERNANDEZ", "LOPEZ",  "GONZALEZ", "WILSON",   "ANDERSON", "THOMAS",
    "TAYLOR",   "MOORE",    "JACKSON",  "MARTIN",   "LEE",      "PEREZ",    "THOMPSON", "WHITE",
    "HARRIS",   "SANCHEZ",  "CLARK",    "RAMIREZ",  "LEWIS",    "ROBINSON", "WALKER",   "YOUNG",
    "ALLEN",    "KING",     "WRIGHT",   "SCOTT",    "TORRES",   "NGUYEN",   "HILL",     "FLORES",
    "GREEN",    "ADAMS",    "NELSON",   "BAKER",    "HALL",     "RIVERA",   "CAMPBELL", "MITCHELL",
    "CARTER",   "ROBERTS",  "GOMEZ",    "PHILLIPS", "EVANS",    "TURNER",   "DIAZ",     "PARKER",
    "CRUZ",     "EDWARDS",  "COLLINS",  "REYES",    "STEWART",  "MORRIS",   "MORALES",  "MURPHY",
    "COOK",     "ROGERS",   "GUTIERREZ", "ORTIZ",   "MORGAN",   "COOPER",   "PETERSON", "BAILEY",
    "REED",     "KELLY",    "HOWARD",   "RAMOS",    "KIM",      "COX",      "WARD",     "RICHARDSON",
    "WATSON",   "BROOKS",   "CHAVEZ",   "WOOD",     "JAMES",    "BENNETT",  "GRAY",     "MENDOZA",
    "RUIZ",     "HUGHES",   "PRICE",    "ALVAREZ",  "CASTILLO", "SANDERS",  "PATEL",    "MYERS",
    "LONG",     "ROSS",     "FOSTER",   "JIMENEZ",  "RALEIGH",  "LELAND",   "POWELL",   "JENKINS",
};

struct CityHead {
  const char* name;
  int zip;
  int zips;
};

const CityHead kCityHead[] = {
    {"CHARLOTTE", 28202, 40},   {"RALEIGH", 27601, 25},       {"GREENSBORO", 27401, 12},
    {"DURHAM", 27701, 10},      {"WINSTON SALEM", 27101, 10}, {"FAYETTEVILLE", 28301, 10},
    {"CARY", 27511, 5},         {"WILMINGTON", 28401, 6},     {"HIGH POINT", 27260, 4},
    {"CONCORD", 28025, 3},      {"ASHEVILLE", 28801, 6},      {"GREENVILLE", 27834, 3},
    {"GASTONIA", 28052, 3},     {"JACKSONVILLE", 28540, 4},   {"CHAPEL HILL", 27514, 3},
    {"ROCKY MOUNT", 27801, 3},  {"BURLINGTON", 27215, 3},     {"HUNTERSVILLE", 28078, 1},
    {"WILSON", 27893, 2},       {"KANNAPOLIS", 28081, 2},     {"APEX", 27502, 2},
    {"HICKORY", 28601, 2},      {"GOLDSBORO", 27530, 2},      {"INDIAN TRAIL", 28079, 1},
    {"MOORESVILLE", 28115, 2},  {"WAKE FOREST", 27587, 1},    {"MONROE", 28110, 2},
    {"SALISBURY", 28144, 2},    {"NEW BERN", 28560, 2},       {"SANFORD", 27330, 2},
    {"MATTHEWS", 28104, 2},     {"HOLLY SPRINGS", 27540, 1},  {"THOMASVILLE", 27360, 1},
    {"CORNELIUS", 28031, 1},    {"GARNER", 27529, 1},         {"ASHEBORO", 27203, 2},
    {"STATESVILLE", 28625, 2},  {"MINT HILL", 28227, 1},      {"KERNERSVILLE", 27284, 1},
    {"MORRISVILLE", 27560, 1},  {"LUMBERTON", 28358, 1},      {"KINSTON", 28501, 2},
    {"FUQUAY VARINA", 27526, 1}, {"HAVELOCK", 28532, 1},      {"CARRBORO", 27510, 1},
    {"SHELBY", 28150, 2},       {"CLEMMONS", 27012, 1},       {"LEXINGTON", 27292, 2},
    {"ELIZABETH CITY", 27909, 1}, {"BOONE", 28607, 1},
};

const char* const kStates[] = {
    "NC", "VA", "NY", "SC", "PA", "FL", "OH", "NJ", "GA", "MD", "CA", "TX", "MI", "IL",
    "TN", "MA", "WV", "KY", "AL", "IN", "CT", "DC", "MS", "LA", "MO", "WI", "MN", "IA",
    "OK", "AR", "CO", "WA", "AZ", "KS", "ME", "NH", "OR", "DE", "RI", "VT", "NE", "UT",
    "NM", "HI", "MT", "ID", "SD", "ND", "NV", "WY", "AK", "PR"};

const char* const kOnsets[] = {"B",  "C",  "D",  "F",  "G",  "H",  "J",  "K",  "L",  "M",
                               "N",  "P",  "R",  "S",  "T",  "V",  "W",  "BR", "CH", "CR",
                               "DR", "GR", "SH", "ST", "TH", "TR", "KL", "PR", "SL", "ZH"};
const char* const kVowels[] = {"A", "E", "I", "O", "U", "EA", "OU", "AI", "IE", "Y"};
const char* const kCodas[] = {"",  "",  "",  "N", "R", "L",  "S",   "T",  "M",
                              "RD", "NS", "LL", "TT", "CK", "RT", "ND", "SON", "TON"};

// Deterministic pseudo-words appended after the head, so the tables do not
// depend on any run seed.
std::vector<std::string> with_tail(std::vector<std::string> head, std::size_t total,
                                   std::uint64_t table_seed, int syllables_min, int syllables_max) {
  std::set<std::string> seen(head.begin(), head.end());
  std::mt19937_64 rng(table_seed);
  std::uniform_int_distribution<std::size_t> onset(0, std::size(kOnsets) - 1);
  std::uniform_int_distribution<std::size_t> vowel(0, std::size(kVowels) - 1);
  std::uniform_int_distribution<std::size_t> coda(0, std::size(kCodas) - 1);
  std::uniform_int_distribution<int> count(syllables_min, syllables_max);
  while (head.size() < total) {
    std::string w;
    const int n = count(rng);
    for (int s = 0; s < n; ++s) {
      w += kOnsets[onset(rng)];
      w += kVowels[vowel(rng)];
    }
    w += kCodas[coda(rng)];
    if (w.size() >= 3 && seen.insert(w).second) head.push_back(std::move(w));
  }
  return head;
}

}  // namespace

const std::vector<std::string>& first_names() {
  static const auto names = with_tail({std::begin(kFirstHead), std::end(kFirstHead)}, 1500,
                                      0x4649525354ULL, 2, 3);
  return names;
}

const std::vector<std::string>& last_names() {
  static const auto names = with_tail({std::begin(kLastHead), std::end(kLastHead)}, 4000,
                                      0x4c415354ULL, 2, 3);
  return names;
}

const std::vector<City>& cities() {
  static const auto list = [] {
    std::vector<City> out;
    for (const auto& c : kCityHead) out.push_back({c.name, c.zip, c.zips});
    std::vector<std::string> names;
    for (const auto& c : out) names.push_back(c.name);
    const auto all = with_tail(names, 300, 0x43495459ULL, 2, 3);
    std::set<int> used;
    for (const auto& c : out) {
      for (int z = 0; z < c.zip_count; ++z) used.insert(c.zip_base + z);
    }
    int zip = 27006;
    for (std::size_t i = out.size(); i < all.size(); ++i) {
      // Small towns get one unused zip each.
      while (used.contains(zip)) ++zip;
      out.push_back({all[i], zip, 1});
      zip += 5;
    }
    return out;
  }();
  return list;
}

const std::vector<std::string>& states() {
  static const std::vector<std::string> list(std::begin(kStates), std::end(kStates));
  return list;
}

}  // namespace pprl::tables
