#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "xlcw/classifier.hpp"
#include "xlcw/errors.hpp"

namespace xlcw {
namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "XLCW-CHECKPOINT";
constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written as native little-endian float64");

json describe(const std::vector<TensorBlob>& blobs, std::string_view group, std::size_t& offset) {
  json out = json::array();
  for (const auto& blob : blobs) {
    out.push_back({{"group", group},
                   {"name", blob.name},
                   {"rows", blob.rows},
                   {"cols", blob.cols},
                   {"offset", offset}});
    offset += blob.data.size();
  }
  return out;
}

void write_payload(std::ostream& out, const std::vector<TensorBlob>& blobs) {
  for (const auto& blob : blobs) {
    out.write(reinterpret_cast<const char*>(blob.data.data()),
              static_cast<std::streamsize>(blob.data.size() * sizeof(double)));
  }
}

std::vector<TensorBlob> read_group(const json& tensors, std::string_view group,
                                   const std::vector<double>& payload) {
  std::vector<TensorBlob> blobs;
  for (const auto& t : tensors) {
    if (t.at("group").get<std::string>() != group) continue;
    TensorBlob blob{t.at("name").get<std::string>(), t.at("rows").get<Eigen::Index>(),
                    t.at("cols").get<Eigen::Index>(), {}};
    const auto offset = t.at("offset").get<std::size_t>();
    const auto count = static_cast<std::size_t>(blob.rows * blob.cols);
    if (offset + count > payload.size()) throw Error("checkpoint payload truncated");
    blob.data.assign(payload.begin() + static_cast<std::ptrdiff_t>(offset),
                     payload.begin() + static_cast<std::ptrdiff_t>(offset + count));
    blobs.push_back(std::move(blob));
  }
  return blobs;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  std::size_t offset = 0;
  json tensors = describe(ckpt.encoder_weights, "encoder", offset);
  for (auto& t : describe(ckpt.head_weights, "head", offset)) tensors.push_back(std::move(t));

  json lineage = json::array();
  for (const auto& l : ckpt.lineage) {
    lineage.push_back({{"stage", l.stage}, {"manifest_id", l.manifest_id}, {"seed", l.seed}});
  }
  json audit = json::array();
  for (const auto& a : ckpt.audit) {
    audit.push_back({{"stage", a.stage},
                     {"id", a.id},
                     {"language", a.language},
                     {"origin", to_string(a.origin)},
                     {"labeled", a.labeled}});
  }
  const json header{{"format_version", kFormatVersion},
                    {"backend", ckpt.backend_name},
                    {"pool_special_tokens", ckpt.pooling.include_special_tokens},
                    {"hyperparams", ckpt.hyperparams},
                    {"lineage", lineage},
                    {"audit", audit},
                    {"manifest", ckpt.manifest_snapshot},
                    {"tensors", tensors},
                    {"payload_values", offset}};
  const std::string text = header.dump();
  out << kMagic << '\n' << text.size() << '\n' << text;
  write_payload(out, ckpt.encoder_weights);
  write_payload(out, ckpt.head_weights);
  if (!out) throw Error("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string magic;
  std::getline(in, magic);
  if (magic != kMagic) throw Error("not a checkpoint file");
  std::string size_line;
  std::getline(in, size_line);
  const auto header_size = std::stoull(size_line);
  std::string text(header_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw Error("checkpoint header truncated");
  const json header = json::parse(text);
  if (header.at("format_version").get<int>() != kFormatVersion) {
    throw Error("unsupported checkpoint format version");
  }

  std::vector<double> payload(header.at("payload_values").get<std::size_t>());
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!in) throw Error("checkpoint payload truncated");

  Checkpoint ckpt;
  ckpt.backend_name = header.at("backend").get<std::string>();
  ckpt.pooling.include_special_tokens = header.at("pool_special_tokens").get<bool>();
  ckpt.hyperparams = header.at("hyperparams").get<Hyperparams>();
  for (const auto& l : header.at("lineage")) {
    ckpt.lineage.push_back({l.at("stage").get<std::string>(),
                            l.at("manifest_id").get<std::string>(),
                            l.at("seed").get<std::uint64_t>()});
  }
  for (const auto& a : header.at("audit")) {
    ckpt.audit.push_back({a.at("stage").get<std::string>(), a.at("id").get<std::string>(),
                          a.at("language").get<std::string>(),
                          origin_from_string(a.at("origin").get<std::string>()),
                          a.at("labeled").get<bool>()});
  }
  ckpt.manifest_snapshot = header.at("manifest").get<std::string>();
  ckpt.encoder_weights = read_group(header.at("tensors"), "encoder", payload);
  ckpt.head_weights = read_group(header.at("tensors"), "head", payload);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  return read_checkpoint(in);
}

}  // namespace xlcw
