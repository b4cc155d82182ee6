#include "lrlab/tasks.hpp"

#include <array>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "lrlab/random.hpp"

namespace lrlab {

namespace vocab {

namespace {
// id 0..2 are PAD/BOS/UNK; 3..12 digits; 13 '+'; 14 '='; 15..31 'a'..'q'.
constexpr std::array<char, kSize> kTable = {
    '\0', '\0', '?',  '0', '1', '2', '3', '4', '5', '6', '7',
    '8',  '9',  '+',  '=', 'a', 'b', 'c', 'd', 'e', 'f', 'g',
    'h',  'i',  'j',  'k', 'l', 'm', 'n', 'o', 'p', 'q'};
}  // namespace

int char_to_id(char c) {
  if (c >= '0' && c <= '9') return 3 + (c - '0');
  if (c == '+') return 13;
  if (c == '=') return 14;
  if (c >= 'a' && c <= 'q') return 15 + (c - 'a');
  return kUnk;
}

char id_to_char(int id) {
  if (id < 0 || id >= kSize) return '?';
  return kTable[static_cast<std::size_t>(id)];
}

std::vector<int> encode(const std::string& s) {
  std::vector<int> out;
  out.reserve(s.size());
  for (char c : s) out.push_back(char_to_id(c));
  return out;
}

std::string decode(const std::vector<int>& ids) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    const char c = id_to_char(id);
    if (c != '\0') out.push_back(c);
  }
  return out;
}

const std::string& alphabet() {
  static const std::string a(kTable.begin(), kTable.end());
  return a;
}

}  // namespace vocab

namespace {

constexpr int kModulus = 23;

Example make_modular_add(RandomStream& rs) {
  const int a = static_cast<int>(rs.uniform_int(kModulus));
  const int b = static_cast<int>(rs.uniform_int(kModulus));
  Example e;
  e.prompt = vocab::encode(std::to_string(a) + "+" + std::to_string(b) + "=");
  e.response = vocab::encode(std::to_string((a + b) % kModulus));
  return e;
}

Example make_sequence_copy(RandomStream& rs) {
  const std::size_t len = 3 + rs.uniform_int(8);  // 3..10 letters
  std::string s;
  for (std::size_t i = 0; i < len; ++i)
    s.push_back(static_cast<char>('a' + rs.uniform_int(17)));
  Example e;
  e.prompt = vocab::encode(s + "=");
  e.response = vocab::encode(s);
  return e;
}

}  // namespace

Corpus generate_synthetic_task(TaskKind kind, std::size_t count, std::uint64_t seed,
                               Split split) {
  if (count < 1) throw std::invalid_argument("generate_synthetic_task: count < 1");
  RandomStream rs(seed);
  Corpus c;
  c.split = split;
  c.examples.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    c.examples.push_back(kind == TaskKind::modular_add ? make_modular_add(rs)
                                                       : make_sequence_copy(rs));
  return c;
}

Corpus load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_jsonl: cannot open " + path);
  Corpus c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("load_jsonl: line " + std::to_string(lineno) +
                               ": invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("instruction") || !j["instruction"].is_string())
      throw std::runtime_error("load_jsonl: line " + std::to_string(lineno) +
                               ": missing string field \"instruction\"");
    if (!j.contains("response") || !j["response"].is_string())
      throw std::runtime_error("load_jsonl: line " + std::to_string(lineno) +
                               ": missing string field \"response\"");
    Example e;
    e.prompt = vocab::encode(j["instruction"].get<std::string>());
    e.response = vocab::encode(j["response"].get<std::string>());
    if (e.prompt.empty() || e.response.empty())
      throw std::runtime_error("load_jsonl: line " + std::to_string(lineno) +
                               ": empty instruction or response");
    c.examples.push_back(std::move(e));
  }
  return c;
}

void save_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_jsonl: cannot open " + path);
  for (const Example& e : corpus.examples) {
    nlohmann::ordered_json j;
    j["instruction"] = vocab::decode(e.prompt);
    j["response"] = vocab::decode(e.response);
    out << j.dump() << "\n";
  }
}

BatchPlan build_batches(const Corpus& corpus, std::size_t batch_size,
                        std::size_t max_seq_len, std::uint64_t seed) {
  if (batch_size < 1) throw std::invalid_argument("build_batches: batch_size < 1");
  if (max_seq_len < 2) throw std::invalid_argument("build_batches: max_seq_len < 2");

  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  RandomStream rs(seed);
  rs.shuffle(order.begin(), order.end());

  BatchPlan plan;
  std::vector<const Example*> kept;
  kept.reserve(order.size());
  for (std::size_t idx : order) {
    const Example& e = corpus.examples[idx];
    if (e.prompt.size() > max_seq_len) {
      ++plan.dropped;
      continue;
    }
    kept.push_back(&e);
  }

  for (std::size_t start = 0; start < kept.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, kept.size() - start);
    Batch b;
    b.batch = n;
    b.seqlen = max_seq_len;
    b.ids.assign(n * max_seq_len, vocab::kPad);
    b.mask.assign(n * max_seq_len, 0);
    for (std::size_t r = 0; r < n; ++r) {
      const Example& e = *kept[start + r];
      std::size_t t = 0;
      for (int id : e.prompt) b.ids[r * max_seq_len + t++] = id;
      // truncate the response, never the prompt
      for (int id : e.response) {
        if (t >= max_seq_len) break;
        b.ids[r * max_seq_len + t] = id;
        b.mask[r * max_seq_len + t] = 1;
        ++t;
        ++plan.supervised_tokens;
      }
    }
    plan.batches.push_back(std::move(b));
  }
  return plan;
}

}  // namespace lrlab
