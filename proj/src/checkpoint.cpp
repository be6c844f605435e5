#include <cstring>
#include <json.hpp>
#include <sstream>

#include "kgan/error.hpp"
#include "kgan/io.hpp"
#include "kgan/network.hpp"

namespace kgan::network {

namespace {

constexpr char kMagic[8] = {'K', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint64_t kVersion = 1;

}  // namespace

std::string checkpoint_bytes(const KganModel& model, const corpus::Vocabulary& vocab,
                             const std::string& metadata_json) {
  nlohmann::json header;
  header["config"] = nlohmann::json::parse(model.config().to_json());
  header["vocabulary"] = vocab.tokens();
  auto& tensors = header["tensors"] = nlohmann::json::array();
  for (const auto& p : model.parameters())
    tensors.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  tensors.push_back({{"name", "knowledge.table"},
                     {"rows", model.knowledge().rows()},
                     {"cols", model.knowledge().cols()}});
  header["metadata"] = nlohmann::json::parse(metadata_json);
  const std::string text = header.dump();

  std::ostringstream out(std::ios::binary);
  out.write(kMagic, sizeof kMagic);
  io::write_u64(out, kVersion);
  io::write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : model.parameters()) io::write_matrix(out, p.value);
  io::write_matrix(out, model.knowledge());
  return out.str();
}

void save_checkpoint(const std::filesystem::path& path, const KganModel& model,
                     const corpus::Vocabulary& vocab, const std::string& metadata_json) {
  io::write_file(path, checkpoint_bytes(model, vocab, metadata_json));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path), std::ios::binary);
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw FormatError(path.string() + " is not a checkpoint file");
  const auto version = io::read_u64(in);
  if (version != kVersion)
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const auto len = io::read_u64(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len)))
    throw FormatError(path.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad header: " + e.what());
  }
  const auto config = KganConfig::from_json(header.at("config").dump());
  corpus::Vocabulary vocab;
  const auto tokens = header.at("vocabulary").get<std::vector<std::string>>();
  for (std::size_t i = 2; i < tokens.size(); ++i) vocab.add(tokens[i]);

  const auto& tensors = header.at("tensors");
  std::vector<Matrix> values;
  for (const auto& t : tensors) {
    Matrix m = io::read_matrix(in);
    if (m.rows() != t.at("rows").get<Eigen::Index>() || m.cols() != t.at("cols").get<Eigen::Index>())
      throw FormatError(path.string() + ": tensor " + t.at("name").get<std::string>() +
                        " has the wrong shape");
    values.push_back(std::move(m));
  }
  if (values.size() < 2) throw FormatError(path.string() + ": no tensors");

  KganModel model(config, values.front(), values.back());
  auto& params = model.parameters();
  if (params.size() + 1 != values.size())
    throw FormatError(path.string() + ": tensor list does not match the model configuration");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != tensors[i].at("name").get<std::string>() ||
        params[i].value.rows() != values[i].rows() || params[i].value.cols() != values[i].cols())
      throw FormatError(path.string() + ": unexpected tensor " + tensors[i].at("name").get<std::string>());
    params[i].value = std::move(values[i]);
  }
  return LoadedCheckpoint{std::move(model), std::move(vocab), header.at("metadata").dump()};
}

}  // namespace kgan::network
