#include "lifas/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <limits>
#include <set>
#include <string>

#include "lifas/config.hpp"

namespace lifas {

namespace {

constexpr char kMagic[] = {'L', 'I', 'F', 'A', 'S', 'C', 'K', 'P', 'T'};
constexpr std::size_t kMagicLen = sizeof kMagic;
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint64_t v) {
  if (v > std::numeric_limits<std::uint32_t>::max())
    throw Error(Error::Code::checkpoint, "checkpoint: field too large for 32-bit length");
  const char bytes[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                         char((v >> 24) & 0xff)};
  out.append(bytes, 4);
}

struct Reader {
  const std::uint8_t* bytes;
  std::size_t size;
  std::size_t pos = 0;

  bool done() const { return pos == size; }

  void need(std::size_t k, const char* what) {
    if (size - pos < k)
      throw Error(Error::Code::checkpoint,
                  std::string("checkpoint truncated while reading ") + what);
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[pos + std::size_t(i)];
    pos += 4;
    return v;
  }

  std::string str(std::size_t len, const char* what) {
    need(len, what);
    std::string s(reinterpret_cast<const char*>(bytes + pos), len);
    pos += len;
    return s;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
};

}  // namespace

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  std::string out;
  out.append(kMagic, kMagicLen);
  put_u32(out, kVersion);

  const std::string spec_json = to_json_text(model.spec);
  put_u32(out, spec_json.size());
  out += spec_json;

  for (const auto& [name, tensor] : named_parameters(model)) {
    put_u32(out, name.size());
    out += name;
    put_u32(out, std::uint64_t(tensor->rank()));
    for (const Index dim : tensor->dims) put_u32(out, std::uint64_t(dim));
    for (const float v : tensor->values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  write_file_atomic(path, out);
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  Reader r{bytes.data(), bytes.size()};

  r.need(kMagicLen, "magic");
  if (std::memcmp(bytes.data(), kMagic, kMagicLen) != 0)
    throw Error(Error::Code::checkpoint,
                "'" + path.string() + "' is not a checkpoint file (bad magic)");
  r.pos += kMagicLen;

  const std::uint32_t version = r.u32("format version");
  if (version != kVersion)
    throw Error(Error::Code::checkpoint, "unsupported checkpoint format version " +
                                             std::to_string(version) + " (expected " +
                                             std::to_string(kVersion) + ")");

  const std::uint32_t spec_len = r.u32("architecture length");
  const std::string spec_json = r.str(spec_len, "architecture");
  ModelSpec spec;
  try {
    spec = model_spec_from_json(spec_json);
  } catch (const Error& e) {
    throw Error(Error::Code::checkpoint, std::string("checkpoint architecture: ") + e.what());
  }

  Model<float> model = make_model<float>(spec);
  auto params = named_parameters(model);
  std::set<std::string> seen;
  while (!r.done()) {
    const std::uint32_t name_len = r.u32("parameter name length");
    const std::string name = r.str(name_len, "parameter name");
    const auto it = params.find(name);
    if (it == params.end())
      throw Error(Error::Code::checkpoint,
                  "checkpoint has unknown parameter '" + name + "' for this architecture");
    if (!seen.insert(name).second)
      throw Error(Error::Code::checkpoint, "checkpoint repeats parameter '" + name + "'");
    Tensor<float>& tensor = *it->second;
    const std::uint32_t rank = r.u32("parameter rank");
    if (int(rank) != tensor.rank())
      throw Error(Error::Code::checkpoint, "parameter '" + name + "' has rank " +
                                               std::to_string(rank) + ", expected " +
                                               std::to_string(tensor.rank()));
    for (int d = 0; d < tensor.rank(); ++d) {
      const std::uint32_t dim = r.u32("parameter dimension");
      if (Index(dim) != tensor.dim(d))
        throw Error(Error::Code::checkpoint,
                    "parameter '" + name + "' has unexpected shape (dim " + std::to_string(d) +
                        " is " + std::to_string(dim) + ", expected " +
                        std::to_string(tensor.dim(d)) + ")");
    }
    for (float& v : tensor.values) v = r.f32("parameter values");
  }
  if (seen.size() != params.size())
    for (const auto& [name, tensor] : params)
      if (!seen.count(name))
        throw Error(Error::Code::checkpoint, "checkpoint is missing parameter '" + name + "'");
  return model;
}

}  // namespace lifas
