// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "rescore/synthetic.hpp"

#include <array>
#include <filesystem>

#include "json.hpp"
#include "rescore/io.hpp"
#include "rescore/rng.hpp"
#include "rescore/utf8.hpp"

namespace rescore {

namespace {

// {N} protagonist, {P} place, {K} number, {A}/{B} per-template alternatives.
struct Template {
  const char* text;
  std::array<const char*, 3> a;
};

constexpr std::array<Template, 8> kStorm = {{
    {"{N} looked at the sky above {P} and saw {A} clouds.", {"heavy grey", "dark low", "thick black"}},
    {"By noon a {A} wind from the north had reached the valley.", {"cold", "sharp", "bitter"}},
    {"Rain began to fall and {N} counted {K} puddles on the road.", {"", "", ""}},
    {"The river near {P} rose {A} through the afternoon.", {"quickly", "steadily", "alarmingly"}},
    {"{N} carried the young plants inside before the storm grew worse.", {"", "", ""}},
    {"Thunder rolled over the {A} for {K} long minutes.", {"hills", "fields", "rooftops"}},
    {"Late in the evening the clouds {A} broke apart.", {"finally", "slowly", "suddenly"}},
    {"{N} wrote in a notebook that the storm had left {P}.", {"", "", ""}},
}};

constexpr std::array<Template, 8> kMarket = {{
    {"{N} opened the {A} shop in {P} at dawn.", {"small", "old", "narrow"}},
    {"The first customers asked about the price of fresh {A}.", {"bread", "cheese", "apples"}},
    {"{N} sold {K} baskets before the church bell rang.", {"", "", ""}},
    {"A trader from {P} offered cheap flour in {A} sacks.", {"large", "heavy", "paper"}},
    {"After some bargaining {N} bought {K} sacks for the week.", {"", "", ""}},
    {"In the afternoon the market square grew {A}.", {"crowded and loud", "busy and warm", "noisy"}},
    {"{N} counted the coins and found a {A} profit.", {"good", "modest", "surprising"}},
    {"At night the shop in {P} was locked and {A}.", {"quiet", "dark", "still"}},
}};

constexpr std::array<const char*, 16> kFirst = {"Anna",  "Boris", "Clara", "Dmitri", "Elena", "Felix",
                                                "Greta", "Hugo",  "Irena", "Jonas",  "Kira",  "Lukas",
                                                "Marta", "Nikos", "Olga",  "Pavel"};
constexpr std::array<const char*, 12> kLast = {"Novak", "Berg",  "Costa", "Dumas", "Engel",  "Farkas",
                                               "Gallo", "Horak", "Ivers", "Janda", "Kowal",  "Lind"};
constexpr std::array<const char*, 10> kPlaces = {"Ashford", "Brenna", "Corvale", "Dunmore", "Elsby",
                                                 "Fairholt", "Glenrow", "Harwick", "Ilmar", "Jessup"};

std::string fill(const Template& t, const std::string& name, const std::string& place, Rng& rng) {
  std::string out;
  for (const char* p = t.text; *p; ++p) {
    if (*p == '{' && p[1] && p[2] == '}') {
      switch (p[1]) {
        case 'N': out += name; break;
        case 'P': out += place; break;
        case 'K': out += std::to_string(2 + rng.uniform_index(40)); break;
        case 'A': out += t.a[rng.uniform_index(3)]; break;
        default: break;
      }
      p += 2;
    } else {
      out += *p;
    }
  }
  return out;
}

}  // namespace

std::vector<Document> generate_corpus(const SyntheticOptions& options) {
  Rng rng(mix_seed(options.seed, "synthetic"));
  std::vector<Document> docs;
  std::size_t bytes = 0;
  const std::size_t span = options.max_sentences - options.min_sentences + 1;
  while (bytes < options.target_bytes) {
    const bool storm = rng.bernoulli(0.5);
    const std::string name = std::string(kFirst[rng.uniform_index(kFirst.size())]) + " " +
                             kLast[rng.uniform_index(kLast.size())];
    const std::string place = kPlaces[rng.uniform_index(kPlaces.size())];
    const std::size_t n = options.min_sentences + rng.uniform_index(span);
    std::size_t t = rng.uniform_index(8);
    std::string text;
    for (std::size_t i = 0; i < n; ++i, t = (t + 1) % 8) {
      if (!text.empty()) text += ' ';
      text += fill(storm ? kStorm[t] : kMarket[t], name, place, rng);
    }
    Document d;
    d.id = "synthetic:" + std::to_string(docs.size());
    d.source = rng.bernoulli(options.wiki_fraction) ? Source::kWiki : Source::kNews;
    d.chars = utf8::length(text);
    bytes += text.size();
    d.text = std::move(text);
    docs.push_back(std::move(d));
  }
  return docs;
}

std::string to_jsonl(const std::vector<Document>& docs) {
  std::string out;
  for (const auto& d : docs) {
    out += nlohmann::json{{"id", d.id}, {"text", d.text}}.dump();
    out += '\n';
  }
  return out;
}

void write_synthetic_corpus(const std::vector<Document>& docs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<Document> wiki, news;
  for (const auto& d : docs) (d.source == Source::kWiki ? wiki : news).push_back(d);
  io::atomic_write(dir / "wiki.jsonl", to_jsonl(wiki));
  io::atomic_write(dir / "news.jsonl", to_jsonl(news));
}

}  // namespace rescore
