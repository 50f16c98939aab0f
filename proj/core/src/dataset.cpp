#include "annoloop/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "annoloop/errors.hpp"
#include "annoloop/rng.hpp"
#include "text_util.hpp"

namespace annoloop::dataset {

namespace {

// Characters that can appear inside an operator name: anything printable
// that is not structural punctuation or whitespace.
bool is_op_char(char c) {
  return !detail::is_space(c) && c != '(' && c != ')' && c != '{' &&
         c != '}' && c != ',';
}

class CellParser {
 public:
  explicit CellParser(std::string_view text) : text_(text) {}

  CellGraph parse(std::vector<std::string> vocabulary) {
    const bool lenient = vocabulary.empty();
    std::sort(vocabulary.begin(), vocabulary.end());
    vocabulary.erase(std::unique(vocabulary.begin(), vocabulary.end()),
                     vocabulary.end());

    CellGraph g;
    std::set<std::string> seen_ops;
    int expected_target = 2;

    skip_ws();
    if (eof()) throw SyntaxError(pos_, "node block 'n<target>{...}'");
    while (!eof()) {
      expect('n', "'n'");
      const int target = parse_int();
      if (target != expected_target) {
        throw SemanticError("expected node block n" +
                            std::to_string(expected_target) + ", found n" +
                            std::to_string(target));
      }
      skip_ws();
      expect('{', "'{'");
      int edges_in_block = 0;
      for (;;) {
        skip_ws();
        expect('(', "'('");
        skip_ws();
        std::string op = parse_op();
        skip_ws();
        expect(',', "','");
        skip_ws();
        const int source = parse_int();
        skip_ws();
        expect(')', "')'");
        if (source >= target) {
          throw SemanticError("backward edge: source " +
                              std::to_string(source) + " >= target " +
                              std::to_string(target));
        }
        if (!lenient &&
            !std::binary_search(vocabulary.begin(), vocabulary.end(), op)) {
          throw SemanticError("unknown operator '" + op + "'");
        }
        seen_ops.insert(op);
        g.edges.push_back({target, source, std::move(op)});
        ++edges_in_block;
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        break;
      }
      expect('}', "'}' or ','");
      if (edges_in_block != 2) {
        throw SemanticError("node " + std::to_string(target) + " has " +
                            std::to_string(edges_in_block) +
                            " incoming edges, expected 2");
      }
      ++expected_target;
      skip_ws();
    }

    g.num_intermediate_nodes = expected_target - 2;
    g.vocabulary = lenient
                       ? std::vector<std::string>(seen_ops.begin(), seen_ops.end())
                       : std::move(vocabulary);
    std::sort(g.edges.begin(), g.edges.end());
    return g;
  }

 private:
  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return eof() ? '\0' : text_[pos_]; }
  void skip_ws() {
    while (!eof() && detail::is_space(text_[pos_])) ++pos_;
  }

  void expect(char c, const char* what) {
    if (peek() != c) throw SyntaxError(pos_, what);
    ++pos_;
  }

  int parse_int() {
    if (eof() || peek() < '0' || peek() > '9') {
      throw SyntaxError(pos_, "digit");
    }
    long value = 0;
    while (!eof() && peek() >= '0' && peek() <= '9') {
      value = value * 10 + (text_[pos_] - '0');
      if (value > 1'000'000) throw SyntaxError(pos_, "smaller number");
      ++pos_;
    }
    return static_cast<int>(value);
  }

  std::string parse_op() {
    const std::size_t begin = pos_;
    while (!eof() && is_op_char(text_[pos_])) ++pos_;
    if (pos_ == begin) throw SyntaxError(pos_, "operator name");
    return std::string(text_.substr(begin, pos_ - begin));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

CellGraph parse_cell_graph(std::string_view text,
                           std::vector<std::string> vocabulary) {
  return CellParser(text).parse(std::move(vocabulary));
}

std::string serialize_cell_graph(const CellGraph& g) {
  std::string out;
  int current_target = -1;
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const CellEdge& e = g.edges[i];
    if (e.target != current_target) {
      if (current_target != -1) out += "} ";
      out += 'n';
      out += std::to_string(e.target);
      out += '{';
      current_target = e.target;
    } else {
      out += ',';
    }
    out += '(';
    out += e.op;
    out += ',';
    out += std::to_string(e.source);
    out += ')';
  }
  if (current_target != -1) out += '}';
  return out;
}

void validate_cell_graph(const CellGraph& g) {
  if (g.num_intermediate_nodes < 1) {
    throw SemanticError("cell must have at least one intermediate node");
  }
  if (g.vocabulary.empty()) throw SemanticError("vocabulary must not be empty");
  if (!std::is_sorted(g.vocabulary.begin(), g.vocabulary.end()) ||
      std::adjacent_find(g.vocabulary.begin(), g.vocabulary.end()) !=
          g.vocabulary.end()) {
    throw SemanticError("vocabulary must be sorted and unique");
  }
  if (!std::is_sorted(g.edges.begin(), g.edges.end())) {
    throw SemanticError("edges must be sorted by (target, source, operator)");
  }
  std::map<int, int> in_degree;
  for (const CellEdge& e : g.edges) {
    if (e.target < 2 || e.target > g.num_intermediate_nodes + 1) {
      throw SemanticError("edge target " + std::to_string(e.target) +
                          " outside intermediate node range");
    }
    if (e.source < 0 || e.source >= e.target) {
      throw SemanticError("backward edge: source " + std::to_string(e.source) +
                          " >= target " + std::to_string(e.target));
    }
    if (!std::binary_search(g.vocabulary.begin(), g.vocabulary.end(), e.op)) {
      throw SemanticError("unknown operator '" + e.op + "'");
    }
    ++in_degree[e.target];
  }
  for (int t = 2; t <= g.num_intermediate_nodes + 1; ++t) {
    if (in_degree[t] != 2) {
      throw SemanticError("node " + std::to_string(t) + " has " +
                          std::to_string(in_degree[t]) +
                          " incoming edges, expected 2");
    }
  }
}

std::vector<std::string> default_operator_vocabulary(int size) {
  if (size < 1 || size > 7) {
    throw SemanticError("operator vocabulary size must be in [1, 7], got " +
                        std::to_string(size));
  }
  static const char* const names[] = {"op_a", "op_b", "op_c", "op_d",
                                      "op_e", "op_f", "op_g"};
  return {names, names + size};
}

CellGraph random_cell_graph(std::uint64_t seed, int vocab_size, int num_nodes) {
  if (num_nodes < 1) {
    throw SemanticError("cell must have at least one intermediate node");
  }
  CellGraph g;
  g.num_intermediate_nodes = num_nodes;
  g.vocabulary = default_operator_vocabulary(vocab_size);
  Rng rng(seed);
  for (int target = 2; target <= num_nodes + 1; ++target) {
    // Two distinct sources among nodes 0..target-1.
    const auto s1 = static_cast<int>(rng.uniform_below(target));
    auto s2 = static_cast<int>(rng.uniform_below(target - 1));
    if (s2 >= s1) ++s2;
    const std::string& op1 = g.vocabulary[rng.uniform_below(g.vocabulary.size())];
    const std::string& op2 = g.vocabulary[rng.uniform_below(g.vocabulary.size())];
    g.edges.push_back({target, s1, op1});
    g.edges.push_back({target, s2, op2});
  }
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

TokenSequence tokenize_smiles(std::string_view text) {
  TokenSequence seq;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '[') {
      const std::size_t close = text.find(']', i);
      if (close == std::string_view::npos) throw UnclosedBracket(i);
      seq.tokens.emplace_back(text.substr(i, close - i + 1));
      i = close + 1;
    } else if (c == 'C' && i + 1 < text.size() && text[i + 1] == 'l') {
      seq.tokens.emplace_back("Cl");
      i += 2;
    } else if (c == 'B' && i + 1 < text.size() && text[i + 1] == 'r') {
      seq.tokens.emplace_back("Br");
      i += 2;
    } else {
      seq.tokens.emplace_back(1, c);
      ++i;
    }
  }
  return seq;
}

RecordFormat parse_record_format(std::string_view name) {
  if (name == "cellgraph") return RecordFormat::cellgraph;
  if (name == "smiles") return RecordFormat::smiles;
  if (name == "text") return RecordFormat::text;
  throw ConfigError("unknown record format '" + std::string(name) +
                    "' (expected cellgraph, smiles, or text)");
}

std::string_view record_format_name(RecordFormat f) {
  switch (f) {
    case RecordFormat::cellgraph:
      return "cellgraph";
    case RecordFormat::smiles:
      return "smiles";
    case RecordFormat::text:
      return "text";
  }
  return "unknown";
}

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace

Record make_record(std::string id, std::string_view payload_text,
                   RecordFormat format,
                   const std::vector<std::string>& vocabulary) {
  Record r;
  r.id = std::move(id);
  switch (format) {
    case RecordFormat::cellgraph: {
      CellGraph g = parse_cell_graph(payload_text, vocabulary);
      r.canonical_text = serialize_cell_graph(g);
      r.payload = std::move(g);
      break;
    }
    case RecordFormat::smiles: {
      TokenSequence seq = tokenize_smiles(detail::trim_view(payload_text));
      r.canonical_text = join_tokens(seq.tokens);
      r.payload = std::move(seq);
      break;
    }
    case RecordFormat::text: {
      RawText t{detail::normalize_whitespace(payload_text)};
      r.canonical_text = t.text;
      r.payload = std::move(t);
      break;
    }
  }
  return r;
}

Payload parse_record_payload(std::string_view canonical, RecordFormat format,
                             const std::vector<std::string>& vocabulary) {
  switch (format) {
    case RecordFormat::cellgraph:
      return parse_cell_graph(canonical, vocabulary);
    case RecordFormat::smiles:
      return TokenSequence{detail::split_whitespace(canonical)};
    case RecordFormat::text:
      return RawText{std::string(canonical)};
  }
  throw SemanticError("unknown record format");
}

std::vector<Record> load_records(const std::string& path, RecordFormat format,
                                 const std::vector<std::string>& vocabulary) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open record file: " + path);

  std::vector<Record> records;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(line_no, "missing TAB between id and payload");
    }
    std::string id = line.substr(0, tab);
    const std::string_view payload = std::string_view(line).substr(tab + 1);
    if (id.empty()) throw ParseError(line_no, "empty record id");
    if (detail::trim_view(payload).empty()) {
      throw ParseError(line_no, "empty payload");
    }
    if (!seen.insert(id).second) throw DuplicateId(line_no, id);
    try {
      records.push_back(make_record(std::move(id), payload, format, vocabulary));
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return records;
}

DatasetSplit split_dataset(std::vector<Record> records, std::size_t support_n,
                           std::size_t validation_n, std::uint64_t seed) {
  if (support_n + validation_n > records.size()) {
    throw InsufficientRecords(
        "dataset has " + std::to_string(records.size()) +
        " records, need " + std::to_string(support_n + validation_n) +
        " for support + validation");
  }
  Rng rng(seed);
  rng.shuffle(records);

  DatasetSplit split;
  auto it = records.begin();
  split.support.assign(std::make_move_iterator(it),
                       std::make_move_iterator(it + support_n));
  it += support_n;
  split.validation.assign(std::make_move_iterator(it),
                          std::make_move_iterator(it + validation_n));
  it += validation_n;
  split.generation.assign(std::make_move_iterator(it),
                          std::make_move_iterator(records.end()));
  return split;
}

FoldAssignment kfold_split(const std::vector<std::string>& ids, int k,
                           std::uint64_t seed) {
  if (k < 2) {
    throw TooFewRecords("fold count must be at least 2, got " +
                        std::to_string(k));
  }
  if (ids.size() < static_cast<std::size_t>(k)) {
    throw TooFewRecords("cannot split " + std::to_string(ids.size()) +
                        " records into " + std::to_string(k) + " folds");
  }
  std::vector<std::string> shuffled = ids;
  Rng rng(seed);
  rng.shuffle(shuffled);

  FoldAssignment folds;
  folds.k = k;
  for (std::size_t i = 0; i < shuffled.size(); ++i) {
    auto [_, inserted] =
        folds.fold_of.emplace(shuffled[i], static_cast<int>(i % k));
    if (!inserted) {
      throw SemanticError("duplicate id in fold split: '" + shuffled[i] + "'");
    }
  }
  return folds;
}

}  // namespace annoloop::dataset
