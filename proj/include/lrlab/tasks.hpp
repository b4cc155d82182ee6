#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lrlab {

// Fixed 32-symbol character vocabulary. The ordering is part of the external
// interface (checkpoints and JSONL corpora reference these ids).
namespace vocab {
constexpr int kPad = 0;
constexpr int kBos = 1;
constexpr int kUnk = 2;
constexpr int kSize = 32;

int char_to_id(char c);       // kUnk for unknown characters
char id_to_char(int id);      // '?' for UNK, '\0' for PAD/BOS
std::vector<int> encode(const std::string& s);
std::string decode(const std::vector<int>& ids);
const std::string& alphabet();  // the 32 symbols in id order (control ids as placeholders)
}  // namespace vocab

struct Example {
  std::vector<int> prompt;
  std::vector<int> response;
};

enum class Split { train, eval };

struct Corpus {
  std::vector<Example> examples;
  Split split = Split::train;

  std::size_t size() const { return examples.size(); }
};

enum class TaskKind { modular_add, sequence_copy };

// Deterministic synthetic corpora. modular_add: "a+b=" -> digits of
// (a+b) mod 23 with a, b < 23. sequence_copy: a random letter string to be
// echoed after the separator.
Corpus generate_synthetic_task(TaskKind kind, std::size_t count, std::uint64_t seed,
                               Split split = Split::train);

// One JSON object per line with string fields "instruction" and "response".
Corpus load_jsonl(const std::string& path);
void save_jsonl(const Corpus& corpus, const std::string& path);

// A packed training batch: ids and supervision mask, row-major B x T.
struct Batch {
  std::size_t batch = 0;
  std::size_t seqlen = 0;
  std::vector<int> ids;            // batch * seqlen
  std::vector<std::uint8_t> mask;  // true on response positions

  int id_at(std::size_t b, std::size_t t) const { return ids[b * seqlen + t]; }
  bool mask_at(std::size_t b, std::size_t t) const { return mask[b * seqlen + t] != 0; }
};

struct BatchPlan {
  std::vector<Batch> batches;
  std::size_t dropped = 0;           // prompts longer than max_seq_len
  std::size_t supervised_tokens = 0; // total mask-true positions
};

// Shuffles by seed, packs [prompt || response] right-padded to max_seq_len,
// keeps the final partial batch. Responses are truncated to fit; examples
// whose prompt alone exceeds the limit are dropped and counted.
BatchPlan build_batches(const Corpus& corpus, std::size_t batch_size,
                        std::size_t max_seq_len, std::uint64_t seed);

}  // namespace lrlab
