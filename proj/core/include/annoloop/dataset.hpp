#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace annoloop::dataset {

// --- cell graphs -------------------------------------------------------------
//
// A cell is a small DAG over nodes 0..N+1: nodes 0 and 1 are inputs, nodes
// 2..N+1 are intermediate nodes, each with exactly two incoming edges from
// strictly earlier nodes.  Surface form, one block per intermediate node in
// ascending order:
//
//   n2{(op_a,0),(op_b,1)} n3{(op_c,0),(op_a,2)}
//
// Whitespace between tokens is insignificant; the serializer emits the
// canonical single-space form with edges sorted by (target, source, operator).

struct CellEdge {
  int target = 0;
  int source = 0;
  std::string op;

  auto operator<=>(const CellEdge&) const = default;
};

struct CellGraph {
  int num_intermediate_nodes = 0;
  std::vector<CellEdge> edges;          // sorted by (target, source, op)
  std::vector<std::string> vocabulary;  // sorted, unique, non-empty

  bool operator==(const CellGraph&) const = default;
};

// Parse surface text into a graph.  `vocabulary` is the set of legal
// operators; passing an empty vocabulary accepts any operator and the result
// carries the distinct operators actually seen.  Throws SyntaxError for
// malformed text, SemanticError for structural violations (backward edge,
// unknown operator, wrong in-degree, out-of-order blocks).
CellGraph parse_cell_graph(std::string_view text,
                           std::vector<std::string> vocabulary);

// Canonical surface form.  Assumes `g` satisfies the invariants above.
std::string serialize_cell_graph(const CellGraph& g);

// Throws SemanticError when `g` violates its invariants.  Parsing and random
// construction already guarantee them; this is for graphs built by hand.
void validate_cell_graph(const CellGraph& g);

// The stock operator alphabet op_a, op_b, ... of the given size (1..7).
std::vector<std::string> default_operator_vocabulary(int size);

// Uniformly random well-formed cell: each intermediate node draws two
// distinct source nodes from those before it and an operator per edge.
// Identical arguments give identical graphs.
CellGraph random_cell_graph(std::uint64_t seed, int vocab_size, int num_nodes);

// --- token sequences ----------------------------------------------------------

struct TokenSequence {
  std::vector<std::string> tokens;

  bool operator==(const TokenSequence&) const = default;
};

// SMILES-style tokenizer: a bracket group [..] is one token, two-letter
// elements Cl and Br are one token, every other character is its own token.
// Empty text gives an empty sequence.  Throws UnclosedBracket.
TokenSequence tokenize_smiles(std::string_view text);

// --- records -----------------------------------------------------------------

struct RawText {
  std::string text;  // whitespace-normalized: single spaces, trimmed

  bool operator==(const RawText&) const = default;
};

enum class RecordFormat { cellgraph, smiles, text };

RecordFormat parse_record_format(std::string_view name);
std::string_view record_format_name(RecordFormat f);

using Payload = std::variant<CellGraph, TokenSequence, RawText>;

struct Record {
  std::string id;
  Payload payload;
  std::string canonical_text;  // serialized payload, no leading/trailing space

  bool operator==(const Record&) const = default;
};

// Build a record from raw payload text.  `vocabulary` only matters for
// cellgraph records (empty = lenient, see parse_cell_graph).
Record make_record(std::string id, std::string_view payload_text,
                   RecordFormat format,
                   const std::vector<std::string>& vocabulary = {});

// Parse a canonical payload string back into a payload; the round trip
// make_record(...).canonical_text -> parse_record_payload is the identity.
Payload parse_record_payload(std::string_view canonical, RecordFormat format,
                             const std::vector<std::string>& vocabulary = {});

// Load `id<TAB>payload` lines.  Blank lines are skipped; trailing \r is
// tolerated.  Throws IoError, ParseError (with line number), DuplicateId.
std::vector<Record> load_records(const std::string& path, RecordFormat format,
                                 const std::vector<std::string>& vocabulary = {});

// --- splits --------------------------------------------------------------------

struct DatasetSplit {
  std::vector<Record> support;
  std::vector<Record> validation;
  std::vector<Record> generation;  // everything not support or validation
};

// Shuffle with `seed`, then deal: first support_n records to support, next
// validation_n to validation, rest to generation.  The three parts are
// disjoint and cover the input.  Throws InsufficientRecords when
// support_n + validation_n exceeds the dataset.
DatasetSplit split_dataset(std::vector<Record> records, std::size_t support_n,
                           std::size_t validation_n, std::uint64_t seed);

struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> fold_of;  // record id -> fold in [0, k)
};

// Assign ids round-robin after a seeded shuffle; fold sizes differ by at
// most one.  Throws TooFewRecords when |ids| < k or k < 2.
FoldAssignment kfold_split(const std::vector<std::string>& ids, int k,
                           std::uint64_t seed);

}  // namespace annoloop::dataset
