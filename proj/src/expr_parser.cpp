#include "sgdn/expr_parser.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "sgdn/errors.hpp"

namespace sgdn {
namespace {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  // A single trailing period is tolerated.
  if (!tokens.empty() && tokens.back().ends_with('.')) {
    tokens.back().pop_back();
    if (tokens.back().empty()) tokens.pop_back();
  }
  return tokens;
}

bool is_article(const std::string& w) { return w == "a" || w == "an" || w == "the"; }

std::string join(const std::vector<std::string>& words, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (!out.empty()) out.push_back(' ');
    out += words[i];
  }
  return out;
}

}  // namespace

RelationLexicon::RelationLexicon(std::vector<std::string> phrases) {
  for (const std::string& p : phrases) {
    auto toks = tokenize(p);
    if (toks.empty()) throw ConfigInvalid("empty relation phrase");
    std::string normalized = join(toks, 0, toks.size());
    if (contains(normalized)) continue;
    phrases_.push_back(normalized);
    tokens_.push_back(std::move(toks));
  }
  std::vector<std::size_t> order(phrases_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return tokens_[a].size() > tokens_[b].size(); });
  std::vector<std::vector<std::string>> sorted_tokens;
  for (std::size_t i : order) sorted_tokens.push_back(tokens_[i]);
  tokens_ = std::move(sorted_tokens);
}

const RelationLexicon& RelationLexicon::defaults() {
  static const RelationLexicon lexicon(
      {"above", "below", "left of", "right of", "near", "inside", "holding"});
  return lexicon;
}

RelationLexicon RelationLexicon::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IOFailure("cannot open relation lexicon: " + path.string());
  std::vector<std::string> phrases;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (tokenize(line).empty()) continue;
    phrases.push_back(line);
  }
  return RelationLexicon(std::move(phrases));
}

bool RelationLexicon::contains(std::string_view phrase) const {
  return std::find(phrases_.begin(), phrases_.end(), phrase) != phrases_.end();
}

ParsedExpression parse_expression(std::string_view text, const RelationLexicon& lexicon) {
  const std::vector<std::string> tokens = tokenize(text);
  if (tokens.empty()) throw EmptyExpression("expression is blank");

  ParsedExpression out;
  std::vector<std::string> relations;
  std::size_t np_start = 0;

  auto close_np = [&](std::size_t end) {
    std::size_t begin = np_start;
    if (begin < end && is_article(tokens[begin])) ++begin;
    if (begin == end) {
      throw UngrammaticalExpression("expected a noun phrase at token " + std::to_string(np_start) +
                                    " in \"" + std::string(text) + "\"");
    }
    out.nouns.push_back(join(tokens, begin, end));
  };

  std::size_t i = 0;
  while (i < tokens.size()) {
    const std::vector<std::string>* matched = nullptr;
    for (const auto& rel : lexicon.tokens_) {
      if (i + rel.size() <= tokens.size() && std::equal(rel.begin(), rel.end(), tokens.begin() + i)) {
        matched = &rel;
        break;
      }
    }
    if (matched == nullptr) {
      ++i;
      continue;
    }
    close_np(i);
    relations.push_back(join(*matched, 0, matched->size()));
    i += matched->size();
    np_start = i;
  }
  close_np(tokens.size());

  for (std::size_t r = 0; r < relations.size(); ++r) {
    out.triplets.push_back({static_cast<int>(r), relations[r], static_cast<int>(r + 1)});
  }
  return out;
}

TrainingVocab build_training_vocab(const ParsedExpression& parsed) {
  TrainingVocab v;
  for (const std::string& n : parsed.nouns) {
    if (std::find(v.object_categories.begin(), v.object_categories.end(), n) == v.object_categories.end()) {
      v.object_categories.push_back(n);
    }
  }
  for (const Triplet& t : parsed.triplets) {
    if (std::find(v.relation_categories.begin(), v.relation_categories.end(), t.predicate) ==
        v.relation_categories.end()) {
      v.relation_categories.push_back(t.predicate);
    }
  }
  v.object_categories.emplace_back(kNoObject);
  v.relation_categories.emplace_back(kNoRelation);
  return v;
}

std::string render_expression(const std::vector<std::string>& phrases_in_order,
                              const std::vector<std::string>& relations_between) {
  if (phrases_in_order.empty() || relations_between.size() + 1 != phrases_in_order.size()) {
    throw Error("render_expression: need one relation between each pair of adjacent phrases");
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < phrases_in_order.size(); ++i) {
    if (i > 0) os << ' ' << relations_between[i - 1] << ' ';
    os << phrases_in_order[i];
  }
  return os.str();
}

}  // namespace sgdn
