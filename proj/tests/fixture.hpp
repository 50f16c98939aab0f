#pragma once

// Temp-dir workspace builder shared by the command-level tests and the
// acceptance checks.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "annoloop/backend.hpp"
#include "annoloop/dataset.hpp"
#include "annoloop/rng.hpp"

namespace fixture {

namespace fs = std::filesystem;

inline fs::path fresh_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const fs::path dir =
      fs::temp_directory_path() /
      ("annoloop_" + tag + "_" + std::to_string(counter.fetch_add(1)));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline std::string make_dataset_tsv(int count, int vocab_size, int num_nodes,
                                    std::uint64_t seed0) {
  std::string out;
  for (int i = 0; i < count; ++i) {
    const auto g = annoloop::dataset::random_cell_graph(
        seed0 + static_cast<std::uint64_t>(i), vocab_size, num_nodes);
    char id[32];
    std::snprintf(id, sizeof(id), "r%04d", i);
    out += id;
    out += '\t';
    out += annoloop::dataset::serialize_cell_graph(g);
    out += '\n';
  }
  return out;
}

struct WorkspaceOptions {
  int records = 120;
  int vocab_size = 5;
  int num_nodes = 4;
  std::uint64_t data_seed = 1000;
  std::size_t support_n = 50;
  std::size_t validation_n = 50;
  std::uint64_t split_seed = 0;
  double fidelity = 1.0;
  double template_bonus = 0.0;
  std::uint64_t mock_seed = 0;
  std::string backend_kind = "mock";
  std::string cache_file;  // relative to the workspace; empty = no cache
  int max_iterations = 10;
  double tuning_temperature = 1.0;
  std::uint64_t tuning_seed = 42;
  int folds = 5;
  int concurrency = 2;
  std::string output_subdir = "out";
};

struct Workspace {
  fs::path dir;
  fs::path config_path;
  fs::path out_dir;
};

inline Workspace make_workspace(const std::string& tag,
                                const WorkspaceOptions& opt = {}) {
  namespace ds = annoloop::dataset;
  Workspace w;
  w.dir = fresh_dir(tag);
  w.out_dir = w.dir / opt.output_subdir;
  w.config_path = w.dir / "config.json";

  write_file(w.dir / "dataset.tsv",
             make_dataset_tsv(opt.records, opt.vocab_size, opt.num_nodes,
                              opt.data_seed));
  write_file(w.dir / "encode.txt",
             "Summarize the cell: start with 'Cell with N intermediate "
             "nodes: ' and describe every edge as 'node t applies operation "
             "to node s', clauses joined by '; '.\n");
  write_file(w.dir / "decode.txt",
             "Rebuild the cell description from the summary: one "
             "nt{(op,src),(op,src)} block per intermediate node, blocks "
             "joined by single spaces.\n");

  const auto vocabulary = ds::default_operator_vocabulary(opt.vocab_size);
  const auto seed_graph =
      ds::random_cell_graph(7, opt.vocab_size, opt.num_nodes);
  const std::string seed_text = ds::serialize_cell_graph(seed_graph);
  annoloop::Rng rng(0);
  const std::string seed_summary = annoloop::backend::mock_summarize(
      seed_text, vocabulary, 1.0, 0.0, false, rng);
  write_file(w.dir / "template_record.txt", seed_text + "\n");
  write_file(w.dir / "template_summary.txt", seed_summary + "\n");

  nlohmann::json cfg = {
      {"dataset",
       {{"path", "dataset.tsv"},
        {"format", "cellgraph"},
        {"operator_vocabulary", vocabulary},
        {"split",
         {{"support_n", opt.support_n},
          {"validation_n", opt.validation_n},
          {"seed", opt.split_seed}}}}},
      {"instructions",
       {{"encode_path", "encode.txt"}, {"decode_path", "decode.txt"}}},
      {"backend",
       {{"kind", opt.backend_kind},
        {"model", "mock-cell"},
        {"mock",
         {{"fidelity", opt.fidelity},
          {"template_bonus", opt.template_bonus},
          {"seed", opt.mock_seed}}}}},
      {"tuning",
       {{"max_iterations", opt.max_iterations},
        {"tuning_temperature", opt.tuning_temperature},
        {"seed", opt.tuning_seed}}},
      {"generation",
       {{"temperature", 0.0},
        {"max_tokens", 350},
        {"folds", opt.folds},
        {"concurrency", opt.concurrency}}},
      {"metrics", {{"enabled", {"bleu", "rouge_l"}}}},
      {"initial_template",
       {{"record_path", "template_record.txt"},
        {"summary_path", "template_summary.txt"}}},
      {"output_dir", opt.output_subdir}};
  if (!opt.cache_file.empty()) {
    cfg["backend"]["cache_path"] = opt.cache_file;
  }
  write_file(w.config_path, cfg.dump(2));
  return w;
}

}  // namespace fixture
