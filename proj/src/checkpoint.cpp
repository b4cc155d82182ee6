#include "lrlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lrlab/random.hpp"

namespace lrlab {

namespace {

constexpr char kMagic[5] = {'L', 'L', 'A', 'B', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

std::string serialize(const Checkpoint& ckpt) {
  std::string out;
  out.append(kMagic, 5);
  put_u32(out, static_cast<std::uint32_t>(ckpt.config_json.size()));
  out.append(ckpt.config_json);
  for (const auto& b : ckpt.blocks) {
    put_u32(out, static_cast<std::uint32_t>(b.id.size()));
    out.append(b.id);
    put_u32(out, static_cast<std::uint32_t>(b.values.rows()));
    put_u32(out, static_cast<std::uint32_t>(b.values.cols()));
    out.append(reinterpret_cast<const char*>(b.values.data()),
               b.values.size() * sizeof(double));
  }
  return out;
}

class Reader {
 public:
  Reader(const char* data, std::size_t n) : p_(data), end_(data + n) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, p_, 4);
    p_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(p_, n);
    p_ += n;
    return s;
  }
  void doubles(double* out, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(out, p_, n * sizeof(double));
    p_ += n * sizeof(double);
  }
  bool done() const { return p_ == end_; }

 private:
  void need(std::size_t n) {
    if (static_cast<std::size_t>(end_ - p_) < n)
      throw std::runtime_error("checkpoint: truncated file");
  }
  const char* p_;
  const char* end_;
};

}  // namespace

void write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_checkpoint: cannot open " + path);
  const std::string bytes = serialize(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write_checkpoint: write failed for " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_checkpoint: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, 5) != 0)
    throw std::runtime_error("read_checkpoint: bad magic in " + path);

  Reader r(bytes.data() + 5, bytes.size() - 5);
  Checkpoint ckpt;
  ckpt.config_json = r.str(r.u32());
  while (!r.done()) {
    CheckpointBlock b;
    b.id = r.str(r.u32());
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    b.values = DenseMatrix(rows, cols);
    r.doubles(b.values.data(), b.values.size());
    ckpt.blocks.push_back(std::move(b));
  }
  return ckpt;
}

std::uint64_t checkpoint_hash(const Checkpoint& ckpt) {
  const std::string bytes = serialize(ckpt);
  return fnv1a64(bytes.data(), bytes.size());
}

namespace {

nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["num_layers"] = c.num_layers;
  j["d_model"] = c.d_model;
  j["num_heads"] = c.num_heads;
  j["d_ff"] = c.d_ff;
  j["vocab_size"] = c.vocab_size;
  j["max_seq_len"] = c.max_seq_len;
  std::vector<std::string> placed;
  for (int t = 0; t < kNumMatrixTypes; ++t)
    if (c.placement[t]) placed.push_back(matrix_type_name(t));
  j["placement"] = placed;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
  c.placement.fill(false);
  for (const auto& name : j.at("placement"))
    c.placement[matrix_type_from_name(name.get<std::string>())] = true;
  c.validate();
  return c;
}

}  // namespace

Checkpoint model_to_checkpoint(const BaseModel<double>& model) {
  Checkpoint ckpt;
  nlohmann::ordered_json j;
  j["kind"] = "base_model";
  j["model"] = config_to_json(model.config);
  ckpt.config_json = j.dump();
  ckpt.blocks.push_back({"embed", model.embed});
  ckpt.blocks.push_back({"pos", model.pos});
  ckpt.blocks.push_back({"head", model.head});
  ckpt.blocks.push_back({"final_norm", model.final_norm});
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const std::string lp = "L" + std::to_string(l) + ".";
    ckpt.blocks.push_back({lp + "attn_norm", model.layers[l].attn_norm});
    ckpt.blocks.push_back({lp + "mlp_norm", model.layers[l].mlp_norm});
    for (int t = 0; t < kNumMatrixTypes; ++t)
      ckpt.blocks.push_back({lp + matrix_type_name(t), model.layers[l].proj[t]});
  }
  return ckpt;
}

BaseModel<double> model_from_checkpoint(const Checkpoint& ckpt) {
  const auto j = nlohmann::json::parse(ckpt.config_json);
  if (j.at("kind") != "base_model")
    throw std::runtime_error("model_from_checkpoint: not a base model checkpoint");
  BaseModel<double> m;
  m.config = config_from_json(j.at("model"));

  auto take = [&](const std::string& id) {
    const CheckpointBlock* b = ckpt.find(id);
    if (!b) throw std::runtime_error("model_from_checkpoint: missing block " + id);
    return b->values;
  };
  m.embed = take("embed");
  m.pos = take("pos");
  m.head = take("head");
  m.final_norm = take("final_norm");
  m.layers.resize(m.config.num_layers);
  for (std::size_t l = 0; l < m.config.num_layers; ++l) {
    const std::string lp = "L" + std::to_string(l) + ".";
    m.layers[l].attn_norm = take(lp + "attn_norm");
    m.layers[l].mlp_norm = take(lp + "mlp_norm");
    for (int t = 0; t < kNumMatrixTypes; ++t)
      m.layers[l].proj[t] = take(lp + matrix_type_name(t));
  }
  return m;
}

Checkpoint adapters_to_checkpoint(const AdapterSet<double>& set,
                                  const ModelConfig& model_cfg) {
  Checkpoint ckpt;
  nlohmann::ordered_json j;
  j["kind"] = "adapters";
  j["variant"] = variant_name(set.config.variant);
  j["rank"] = set.config.rank;
  j["alpha"] = set.config.alpha;
  j["seed"] = set.config.seed;
  j["model"] = config_to_json(model_cfg);
  ckpt.config_json = j.dump();
  set.for_each([&](std::size_t l, int t, const AdapterState<double>& st) {
    const std::string base = AdapterSet<double>::block_id(l, t) + ".";
    ckpt.blocks.push_back({base + "B", st.b});
    ckpt.blocks.push_back({base + "A", st.a});
    if (!st.magnitude.empty()) ckpt.blocks.push_back({base + "mag", st.magnitude});
    ckpt.blocks.push_back({base + "ref", st.reference});
  });
  return ckpt;
}

AdapterSet<double> adapters_from_checkpoint(const Checkpoint& ckpt,
                                            const BaseModel<double>& model) {
  const auto j = nlohmann::json::parse(ckpt.config_json);
  if (j.at("kind") != "adapters")
    throw std::runtime_error("adapters_from_checkpoint: not an adapter checkpoint");
  AdapterSet<double> set;
  set.config.variant = variant_from_name(j.at("variant").get<std::string>());
  set.config.rank = j.at("rank").get<int>();
  set.config.alpha = j.at("alpha").get<double>();
  set.config.seed = j.at("seed").get<std::uint64_t>();
  set.states.resize(model.config.num_layers);
  for (std::size_t l = 0; l < model.config.num_layers; ++l) {
    for (int t = 0; t < kNumMatrixTypes; ++t) {
      const std::string base = AdapterSet<double>::block_id(l, t) + ".";
      const CheckpointBlock* b = ckpt.find(base + "B");
      if (!b) continue;
      AdapterState<double> st;
      st.variant = set.config.variant;
      st.gamma = set.config.alpha / double(set.config.rank);
      st.b = b->values;
      const CheckpointBlock* a = ckpt.find(base + "A");
      const CheckpointBlock* ref = ckpt.find(base + "ref");
      if (!a || !ref)
        throw std::runtime_error("adapters_from_checkpoint: incomplete block " + base);
      st.a = a->values;
      st.reference = ref->values;
      if (const CheckpointBlock* mag = ckpt.find(base + "mag")) st.magnitude = mag->values;
      set.states[l][t] = std::move(st);
    }
  }
  return set;
}

}  // namespace lrlab
