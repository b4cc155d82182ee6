#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <map>

#include "lrlab/tasks.hpp"

using namespace lrlab;

TEST_CASE("modular_add arithmetic and encoding") {
  // 5+7=12 (12 < 23), 20+10=7 (30 mod 23)
  CHECK(vocab::decode(vocab::encode("12")) == "12");
  Corpus c = generate_synthetic_task(TaskKind::modular_add, 2000, 3);
  bool saw_five_seven = false, saw_twenty_ten = false;
  for (const Example& e : c.examples) {
    const std::string p = vocab::decode(e.prompt);
    const std::string r = vocab::decode(e.response);
    REQUIRE(!e.prompt.empty());
    REQUIRE(!e.response.empty());
    const int a = std::stoi(p.substr(0, p.find('+')));
    const int b = std::stoi(p.substr(p.find('+') + 1, p.find('=') - p.find('+') - 1));
    CHECK(r == std::to_string((a + b) % 23));
    if (a == 5 && b == 7) {
      saw_five_seven = true;
      CHECK(r == "12");
    }
    if (a == 20 && b == 10) {
      saw_twenty_ten = true;
      CHECK(r == "7");
    }
  }
  CHECK(saw_five_seven);
  CHECK(saw_twenty_ten);
}

TEST_CASE("synthetic corpora are deterministic per seed") {
  for (TaskKind kind : {TaskKind::modular_add, TaskKind::sequence_copy}) {
    Corpus a = generate_synthetic_task(kind, 50, 9);
    Corpus b = generate_synthetic_task(kind, 50, 9);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.examples[i].prompt == b.examples[i].prompt);
      CHECK(a.examples[i].response == b.examples[i].response);
    }
  }
}

TEST_CASE("sequence_copy echoes the prompt body") {
  Corpus c = generate_synthetic_task(TaskKind::sequence_copy, 20, 4);
  for (const Example& e : c.examples) {
    std::string p = vocab::decode(e.prompt);
    REQUIRE(p.back() == '=');
    CHECK(p.substr(0, p.size() - 1) == vocab::decode(e.response));
  }
}

TEST_CASE("jsonl loading") {
  const char* path = "test_tasks_corpus.jsonl";
  {
    std::ofstream f(path);
    f << R"({"instruction":"1+2=","response":"3"})" << "\n";
    f << R"({"instruction":"ab=","response":"ab"})" << "\n";
  }
  Corpus c = load_jsonl(path);
  REQUIRE(c.size() == 2);
  CHECK(vocab::decode(c.examples[0].prompt) == "1+2=");
  CHECK(vocab::decode(c.examples[1].response) == "ab");

  {
    std::ofstream f(path);
  }
  CHECK(load_jsonl(path).size() == 0);

  {
    std::ofstream f(path);
    f << R"({"instruction":"1+2="})" << "\n";
  }
  CHECK_THROWS_WITH_AS(load_jsonl(path),
                       doctest::Contains("line 1"), std::runtime_error);

  {
    std::ofstream f(path);
    f << R"({"instruction":"ok=","response":"ok"})" << "\n";
    f << "{not json" << "\n";
  }
  CHECK_THROWS_WITH_AS(load_jsonl(path),
                       doctest::Contains("line 2"), std::runtime_error);

  // unknown characters map to UNK
  {
    std::ofstream f(path);
    f << R"({"instruction":"X*Z=","response":"y"})" << "\n";
  }
  Corpus u = load_jsonl(path);
  for (std::size_t i = 0; i + 1 < u.examples[0].prompt.size(); ++i)
    CHECK(u.examples[0].prompt[i] == vocab::kUnk);

  std::remove(path);
}

TEST_CASE("jsonl round-trips through save") {
  const char* path = "test_tasks_roundtrip.jsonl";
  Corpus c = generate_synthetic_task(TaskKind::modular_add, 25, 5);
  save_jsonl(c, path);
  Corpus back = load_jsonl(path);
  REQUIRE(back.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(back.examples[i].prompt == c.examples[i].prompt);
    CHECK(back.examples[i].response == c.examples[i].response);
  }
  std::remove(path);
}

TEST_CASE("batch packing: mask layout matches the construction") {
  Corpus c;
  Example e;
  e.prompt = {5, 6, 7, 8};
  e.response = {9, 10, 11};
  c.examples.push_back(e);
  BatchPlan plan = build_batches(c, 1, 10, 0);
  REQUIRE(plan.batches.size() == 1);
  const Batch& b = plan.batches[0];
  REQUIRE(b.seqlen == 10);
  const std::vector<int> expect_mask = {0, 0, 0, 0, 1, 1, 1, 0, 0, 0};
  for (std::size_t t = 0; t < 10; ++t) CHECK(int(b.mask[t]) == expect_mask[t]);
  CHECK(b.id_at(0, 4) == 9);
  CHECK(b.id_at(0, 8) == 0);  // padding
  CHECK(plan.supervised_tokens == 3);
}

TEST_CASE("batch packing: shuffle preserves the multiset; masks avoid prompt and pad") {
  Corpus c = generate_synthetic_task(TaskKind::modular_add, 103, 8);
  BatchPlan plan = build_batches(c, 16, 12, 42);

  // single batch when batch_size = corpus size
  CHECK(build_batches(c, 103, 12, 1).batches.size() == 1);

  std::size_t total_rows = 0;
  std::map<std::vector<int>, int> seen;
  std::size_t supervised = 0;
  for (const Batch& b : plan.batches) {
    total_rows += b.batch;
    for (std::size_t r = 0; r < b.batch; ++r) {
      std::vector<int> row;
      for (std::size_t t = 0; t < b.seqlen; ++t) {
        row.push_back(b.id_at(r, t));
        if (b.mask_at(r, t)) {
          ++supervised;
          CHECK(b.id_at(r, t) != vocab::kPad);
        }
      }
      seen[row]++;
    }
  }
  CHECK(total_rows == c.size());
  CHECK(supervised == plan.supervised_tokens);

  // supervised token count equals the sum of response lengths (no truncation)
  std::size_t expect = 0;
  std::map<std::vector<int>, int> original;
  for (const Example& e : c.examples) {
    expect += e.response.size();
    std::vector<int> row(12, vocab::kPad);
    std::size_t t = 0;
    for (int id : e.prompt) row[t++] = id;
    for (int id : e.response) row[t++] = id;
    original[row]++;
  }
  CHECK(plan.supervised_tokens == expect);
  CHECK(seen == original);

  // mask never covers prompt positions
  for (const Batch& b : plan.batches)
    for (std::size_t r = 0; r < b.batch; ++r) {
      bool in_response = false;
      for (std::size_t t = 0; t < b.seqlen; ++t) {
        if (b.mask_at(r, t)) in_response = true;
        if (in_response && !b.mask_at(r, t))
          for (std::size_t t2 = t; t2 < b.seqlen; ++t2) CHECK(!b.mask_at(r, t2));
      }
    }
}

TEST_CASE("batch packing: truncation rules") {
  Corpus c;
  Example long_resp;
  long_resp.prompt = {3, 4, 5};
  long_resp.response = {6, 7, 8, 9, 10, 11};
  c.examples.push_back(long_resp);
  Example long_prompt;
  long_prompt.prompt = {3, 4, 5, 6, 7, 8, 9};
  long_prompt.response = {10};
  c.examples.push_back(long_prompt);

  BatchPlan plan = build_batches(c, 4, 5, 0);
  CHECK(plan.dropped == 1);  // prompt alone exceeds the limit
  REQUIRE(plan.batches.size() == 1);
  const Batch& b = plan.batches[0];
  REQUIRE(b.batch == 1);
  // prompt kept whole, response truncated to the remaining 2 slots
  CHECK(b.id_at(0, 0) == 3);
  CHECK(b.id_at(0, 2) == 5);
  CHECK(b.id_at(0, 3) == 6);
  CHECK(b.id_at(0, 4) == 7);
  CHECK(plan.supervised_tokens == 2);
}
