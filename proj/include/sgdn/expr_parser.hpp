#pragma once

// Template-grammar parser for grounding expressions:
//
//   expression := NP (REL NP)*
//   NP         := ("a" | "an" | "the")? attr* noun
//   REL        := phrase from a closed relation lexicon
//
// Attributes fold into the category string ("a red circle" -> "red circle").

#include <compare>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sgdn {

inline constexpr std::string_view kNoObject = "no object";
inline constexpr std::string_view kNoRelation = "no relation";

struct Triplet {
  int subject = 0;
  std::string predicate;
  int object = 0;

  auto operator<=>(const Triplet&) const = default;
};

struct ParsedExpression {
  std::vector<std::string> nouns;
  std::vector<Triplet> triplets;

  bool operator==(const ParsedExpression&) const = default;
};

class RelationLexicon {
 public:
  RelationLexicon() = default;
  explicit RelationLexicon(std::vector<std::string> phrases);

  static const RelationLexicon& defaults();
  // One phrase per line; blank lines and '#' comments are skipped.
  static RelationLexicon from_file(const std::filesystem::path& path);

  const std::vector<std::string>& phrases() const { return phrases_; }
  bool contains(std::string_view phrase) const;

 private:
  // Token lists sorted longest-first so matching is greedy.
  std::vector<std::string> phrases_;
  std::vector<std::vector<std::string>> tokens_;

  friend ParsedExpression parse_expression(std::string_view, const RelationLexicon&);
};

// Throws EmptyExpression or UngrammaticalExpression.
ParsedExpression parse_expression(std::string_view text,
                                  const RelationLexicon& lexicon = RelationLexicon::defaults());

struct TrainingVocab {
  std::vector<std::string> object_categories;    // deduplicated nouns, then "no object"
  std::vector<std::string> relation_categories;  // deduplicated predicates, then "no relation"
};

TrainingVocab build_training_vocab(const ParsedExpression& parsed);

// Inverse of parse_expression for generator output.
std::string render_expression(const std::vector<std::string>& phrases_in_order,
                              const std::vector<std::string>& relations_between);

}  // namespace sgdn
