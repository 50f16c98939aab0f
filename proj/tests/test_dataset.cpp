#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"

#include "annoloop/dataset.hpp"
#include "annoloop/errors.hpp"
#include "annoloop/rng.hpp"
#include "fixture.hpp"

using namespace annoloop;
using namespace annoloop::dataset;

TEST_CASE("cell graph parse/serialize round trip on random graphs") {
  for (int vocab_size = 1; vocab_size <= 7; ++vocab_size) {
    for (int num_nodes = 1; num_nodes <= 8; ++num_nodes) {
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const CellGraph g = random_cell_graph(
            seed * 131 + vocab_size * 7 + num_nodes, vocab_size, num_nodes);
        CHECK_NOTHROW(validate_cell_graph(g));
        const std::string text = serialize_cell_graph(g);
        const CellGraph back = parse_cell_graph(text, g.vocabulary);
        CHECK(back == g);
        CHECK(serialize_cell_graph(back) == text);
      }
    }
  }
}

TEST_CASE("cell graph parser accepts messy spacing") {
  const CellGraph g =
      parse_cell_graph("  n2{(op_a,0),(op_b,1)}   n3{(op_a,2),(op_b,0)}  ",
                       {"op_a", "op_b"});
  CHECK(g.num_intermediate_nodes == 2);
  CHECK(g.edges.size() == 4);
  CHECK(serialize_cell_graph(g) ==
        "n2{(op_a,0),(op_b,1)} n3{(op_b,0),(op_a,2)}");
}

TEST_CASE("cell graph parser rejects bad input with positioned errors") {
  const std::vector<std::string> vocab = {"op_a", "op_b"};

  CHECK_THROWS_AS(parse_cell_graph("", vocab), SyntaxError);
  CHECK_THROWS_AS(parse_cell_graph("x2{(op_a,0),(op_b,1)}", vocab),
                  SyntaxError);
  CHECK_THROWS_WITH_AS(parse_cell_graph("n3{(op_a,0),(op_b,1)}", vocab),
                       doctest::Contains("expected node block n2"),
                       SemanticError);
  CHECK_THROWS_WITH_AS(parse_cell_graph("n2{(op_a,2),(op_b,1)}", vocab),
                       doctest::Contains("backward edge"), SemanticError);
  CHECK_THROWS_WITH_AS(parse_cell_graph("n2{(op_z,0),(op_b,1)}", vocab),
                       doctest::Contains("unknown operator 'op_z'"),
                       SemanticError);
  CHECK_THROWS_WITH_AS(parse_cell_graph("n2{(op_a,0)}", vocab),
                       doctest::Contains("incoming edges"), SemanticError);
  CHECK_THROWS_WITH_AS(
      parse_cell_graph("n2{(op_a,0),(op_b,1),(op_a,1)}", vocab),
      doctest::Contains("incoming edges"), SemanticError);
  CHECK_THROWS_AS(parse_cell_graph("n2{(op_a,0),(op_b,1)", vocab),
                  SyntaxError);
  // The backward-edge check fires before the vocabulary check.
  CHECK_THROWS_WITH_AS(parse_cell_graph("n2{(op_z,5),(op_b,1)}", vocab),
                       doctest::Contains("backward edge"), SemanticError);
}

TEST_CASE("lenient parse collects operators when no vocabulary is given") {
  const CellGraph g = parse_cell_graph("n2{(mul,0),(add,1)}", {});
  CHECK(g.vocabulary == std::vector<std::string>{"add", "mul"});
}

TEST_CASE("syntax error carries the byte position") {
  try {
    parse_cell_graph("n2{(op_a,0);(op_b,1)}", {"op_a", "op_b"});
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& e) {
    CHECK(e.position == 11);
    CHECK(std::string(e.what()).find("syntax error at position 11") !=
          std::string::npos);
  }
}

TEST_CASE("random cell graphs draw two distinct sources per node") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const CellGraph g = random_cell_graph(seed, 5, 6);
    for (int target = 2; target <= g.num_intermediate_nodes + 1; ++target) {
      std::vector<int> sources;
      for (const CellEdge& e : g.edges) {
        if (e.target == target) sources.push_back(e.source);
      }
      REQUIRE(sources.size() == 2);
      CHECK(sources[0] != sources[1]);
    }
  }
}

TEST_CASE("smiles tokenizer splits bracket groups and two-letter atoms") {
  CHECK(tokenize_smiles("CCl").tokens == std::vector<std::string>{"C", "Cl"});
  CHECK(tokenize_smiles("CBr2").tokens ==
        std::vector<std::string>{"C", "Br", "2"});
  CHECK(tokenize_smiles("C[NH4+]O").tokens ==
        std::vector<std::string>{"C", "[NH4+]", "O"});
  CHECK(tokenize_smiles("c1ccccc1").tokens ==
        std::vector<std::string>{"c", "1", "c", "c", "c", "c", "c", "1"});
  try {
    tokenize_smiles("C[NH4");
    FAIL("expected UnclosedBracket");
  } catch (const UnclosedBracket& e) {
    CHECK(e.position == 1);
  }
}

TEST_CASE("make_record canonicalizes each format") {
  const Record cell =
      make_record("a", "  n2{(op_b,1),(op_a,0)} ", RecordFormat::cellgraph,
                  {"op_a", "op_b"});
  CHECK(cell.canonical_text == "n2{(op_a,0),(op_b,1)}");

  const Record smiles = make_record("b", " CCl ", RecordFormat::smiles, {});
  CHECK(smiles.canonical_text == "C Cl");

  const Record text =
      make_record("c", "  hello \t world\n", RecordFormat::text, {});
  CHECK(text.canonical_text == "hello world");
}

TEST_CASE("record canonical text parses back to the same payload") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const CellGraph g = random_cell_graph(seed, 4, 3);
    const Record r = make_record("id", serialize_cell_graph(g),
                                 RecordFormat::cellgraph, g.vocabulary);
    const Payload p =
        parse_record_payload(r.canonical_text, RecordFormat::cellgraph,
                             g.vocabulary);
    CHECK(std::get<CellGraph>(p) == g);
  }
}

TEST_CASE("load_records parses id TAB payload lines") {
  const auto dir = fixture::fresh_dir("load_records");
  fixture::write_file(dir / "ok.tsv",
                      "a\tn2{(op_a,0),(op_b,1)}\r\n"
                      "\n"
                      "b\tn2{(op_b,0),(op_a,1)}\n");
  const auto records =
      load_records((dir / "ok.tsv").string(), RecordFormat::cellgraph,
                   {"op_a", "op_b"});
  REQUIRE(records.size() == 2);
  CHECK(records[0].id == "a");
  CHECK(records[1].canonical_text == "n2{(op_b,0),(op_a,1)}");

  fixture::write_file(dir / "no_tab.tsv", "a n2{(op_a,0),(op_b,1)}\n");
  CHECK_THROWS_WITH_AS(load_records((dir / "no_tab.tsv").string(),
                                    RecordFormat::cellgraph, {"op_a", "op_b"}),
                       doctest::Contains("missing TAB"), ParseError);

  fixture::write_file(dir / "dup.tsv",
                      "a\tn2{(op_a,0),(op_b,1)}\na\tn2{(op_a,0),(op_b,1)}\n");
  try {
    load_records((dir / "dup.tsv").string(), RecordFormat::cellgraph,
                 {"op_a", "op_b"});
    FAIL("expected DuplicateId");
  } catch (const DuplicateId& e) {
    CHECK(e.line == 2);
    CHECK(e.id == "a");
  }

  fixture::write_file(dir / "bad_payload.tsv", "a\tn2{(op_a,0)\n");
  try {
    load_records((dir / "bad_payload.tsv").string(), RecordFormat::cellgraph,
                 {"op_a", "op_b"});
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 1);
  }

  CHECK_THROWS_AS(load_records((dir / "missing.tsv").string(),
                               RecordFormat::cellgraph, {}),
                  IoError);
  std::filesystem::remove_all(dir);
}

namespace {

std::vector<Record> make_records(int n) {
  std::vector<Record> records;
  for (int i = 0; i < n; ++i) {
    const CellGraph g = random_cell_graph(9000 + i, 5, 3);
    records.push_back(make_record("id" + std::to_string(i),
                                  serialize_cell_graph(g),
                                  RecordFormat::cellgraph, g.vocabulary));
  }
  return records;
}

}  // namespace

TEST_CASE("split_dataset deals shuffled records into three disjoint parts") {
  const auto records = make_records(20);
  const DatasetSplit split = split_dataset(records, 8, 7, 3);
  CHECK(split.support.size() == 8);
  CHECK(split.validation.size() == 7);
  CHECK(split.generation.size() == 5);

  std::set<std::string> ids;
  for (const auto* part : {&split.support, &split.validation, &split.generation}) {
    for (const Record& r : *part) ids.insert(r.id);
  }
  CHECK(ids.size() == 20);

  const DatasetSplit again = split_dataset(records, 8, 7, 3);
  CHECK(again.support == split.support);
  CHECK(again.validation == split.validation);
  CHECK(again.generation == split.generation);

  const DatasetSplit other = split_dataset(records, 8, 7, 4);
  CHECK(other.support != split.support);  // different seed, different deal

  CHECK_THROWS_AS(split_dataset(records, 15, 6, 0), InsufficientRecords);
}

TEST_CASE("kfold_split covers all ids with balanced disjoint folds") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_below(60));
    const int k = 2 + static_cast<int>(rng.uniform_below(7));
    if (n < k) continue;
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("x" + std::to_string(i));
    const FoldAssignment folds = kfold_split(ids, k, trial);
    CHECK(folds.k == k);
    CHECK(folds.fold_of.size() == ids.size());
    std::vector<int> sizes(k, 0);
    for (const auto& [id, fold] : folds.fold_of) {
      REQUIRE(fold >= 0);
      REQUIRE(fold < k);
      sizes[fold] += 1;
    }
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    CHECK(*hi - *lo <= 1);
  }

  CHECK_THROWS_AS(kfold_split({"a", "b"}, 1, 0), TooFewRecords);
  CHECK_THROWS_AS(kfold_split({"a", "b"}, 3, 0), TooFewRecords);

  const FoldAssignment a = kfold_split({"a", "b", "c", "d", "e"}, 2, 9);
  const FoldAssignment b = kfold_split({"a", "b", "c", "d", "e"}, 2, 9);
  CHECK(a.fold_of == b.fold_of);
}
