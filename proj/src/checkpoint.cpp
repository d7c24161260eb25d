#include "diva/error.hpp"
#include "diva/trainer.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace diva {

namespace {

constexpr char kMagic[8] = {'D', 'I', 'V', 'A', 'C', 'K', 'P', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  std::memcpy(&v, in.data() + pos, 8);
  pos += 8;
  return v;
}

}  // namespace

std::string Checkpoint::serialize() const {
  nlohmann::json header;
  header["config"] = to_json(config);
  header["model"] = model;
  header["vocabulary"] = vocabulary;
  header["epoch"] = epoch;
  header["dev_score_bits"] = std::bit_cast<std::uint64_t>(dev_score);
  header["rng_state"] = rng_state;
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& [name, m] : tensors) shapes.push_back({name, m.rows(), m.cols()});
  header["tensors"] = shapes;

  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, text.size());
  out += text;
  for (const auto& [name, m] : tensors) {
    // column-major
    out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  std::size_t pos = sizeof(kMagic);
  const std::uint64_t len = get_u64(bytes, pos);
  if (pos + len > bytes.size()) throw DataError("checkpoint truncated");
  Checkpoint c;
  try {
    const auto header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                              bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
    c.config = train_config_from_json(header.at("config"));
    c.model = header.at("model").get<ModelConfig>();
    c.vocabulary = header.at("vocabulary").get<std::vector<std::string>>();
    c.epoch = header.at("epoch").get<int>();
    c.dev_score = std::bit_cast<double>(header.at("dev_score_bits").get<std::uint64_t>());
    c.rng_state = header.at("rng_state").get<std::string>();
    for (const auto& t : header.at("tensors")) {
      const auto name = t.at(0).get<std::string>();
      const auto rows = t.at(1).get<ag::Index>();
      const auto cols = t.at(2).get<ag::Index>();
      ag::Matrix m(rows, cols);
      const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(double);
      if (pos + n > bytes.size()) throw DataError("checkpoint truncated in tensor " + name);
      std::memcpy(m.data(), bytes.data() + pos, n);
      pos += n;
      c.tensors.emplace(name, std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (pos != bytes.size()) throw DataError("checkpoint has trailing bytes");
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

DivaModel Checkpoint::build_model() const {
  DivaModel m(model, config.seed);
  m.parameters().restore(tensors);
  return m;
}

Vocabulary Checkpoint::build_vocabulary() const { return Vocabulary::from_tokens(vocabulary); }

}  // namespace diva
