#include "voxbuild/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "voxbuild/error.hpp"

namespace voxbuild {

namespace {

constexpr char kMagic[8] = {'V', 'X', 'B', 'C', 'K', 'P', 'T', '\0'};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw DataError("truncated checkpoint file");
  }
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw DataError("truncated checkpoint file");
  }
  return v;
}

double read_f64(std::istream& in) {
  double v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw DataError("truncated checkpoint file");
  }
  return v;
}

}  // namespace

void save_raw_checkpoint(const std::string& path, const RawCheckpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint file: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kCheckpointVersion);
  write_u32(out, ckpt.kind);
  write_u32(out, static_cast<std::uint32_t>(ckpt.config.n_layers));
  write_u32(out, static_cast<std::uint32_t>(ckpt.config.d_model));
  write_u32(out, static_cast<std::uint32_t>(ckpt.config.n_heads));
  write_u32(out, static_cast<std::uint32_t>(ckpt.config.d_ff));
  write_u32(out, static_cast<std::uint32_t>(ckpt.config.max_seq_len));
  write_u32(out, static_cast<std::uint32_t>(ckpt.config.vocab_size));
  write_f64(out, ckpt.config.dropout_rate);
  write_u32(out, ckpt.config.tied_output ? 1 : 0);
  write_u32(out, static_cast<std::uint32_t>(ckpt.extra.size()));
  for (std::uint32_t v : ckpt.extra) write_u32(out, v);
  write_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(tensor.shape.size()));
    for (std::size_t d : tensor.shape) {
      write_u64(out, static_cast<std::uint64_t>(d));
    }
    out.write(reinterpret_cast<const char*>(tensor.data.data()),
              static_cast<std::streamsize>(tensor.data.size() *
                                           sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint file: " + path);
}

RawCheckpoint load_raw_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint file: " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint file: " + path);
  }
  const std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint format version mismatch: found " +
                    std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  RawCheckpoint ckpt;
  ckpt.kind = read_u32(in);
  ckpt.config.n_layers = static_cast<int>(read_u32(in));
  ckpt.config.d_model = static_cast<int>(read_u32(in));
  ckpt.config.n_heads = static_cast<int>(read_u32(in));
  ckpt.config.d_ff = static_cast<int>(read_u32(in));
  ckpt.config.max_seq_len = static_cast<int>(read_u32(in));
  ckpt.config.vocab_size = static_cast<int>(read_u32(in));
  ckpt.config.dropout_rate = read_f64(in);
  ckpt.config.tied_output = read_u32(in) != 0;
  const std::uint32_t n_extra = read_u32(in);
  for (std::uint32_t i = 0; i < n_extra; ++i) {
    ckpt.extra.push_back(read_u32(in));
  }
  const std::uint32_t n_tensors = read_u32(in);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw DataError("truncated checkpoint file");
    }
    const std::uint32_t ndim = read_u32(in);
    Tensor t;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      std::size_t dim = static_cast<std::size_t>(read_u64(in));
      t.shape.push_back(dim);
      numel *= dim;
    }
    t.data.resize(numel);
    if (!in.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(numel * sizeof(double)))) {
      throw DataError("truncated checkpoint file");
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void save_checkpoint(const EncoderState& state, const std::string& path) {
  RawCheckpoint ckpt;
  ckpt.kind = kKindEncoder;
  ckpt.config = state.config;
  for (const auto& p : named_params(const_cast<EncoderState&>(state))) {
    ckpt.tensors.emplace_back(p.name, *p.tensor);
  }
  save_raw_checkpoint(path, ckpt);
}

EncoderState load_checkpoint(const std::string& path) {
  RawCheckpoint ckpt = load_raw_checkpoint(path);
  if (ckpt.kind != kKindEncoder) {
    throw DataError("checkpoint is not an encoder checkpoint: " + path);
  }
  EncoderState st = make_encoder_state(ckpt.config);
  auto params = named_params(st);
  if (params.size() != ckpt.tensors.size()) {
    throw DataError("checkpoint tensor count mismatch: " + path);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, tensor] = ckpt.tensors[i];
    if (name != params[i].name) {
      throw DataError("checkpoint tensor name mismatch: expected " +
                      params[i].name + ", found " + name);
    }
    if (tensor.shape != params[i].tensor->shape) {
      throw DataError("checkpoint shape mismatch for tensor " + name);
    }
    params[i].tensor->data = tensor.data;
  }
  return st;
}

std::size_t encoder_checkpoint_size(const EncoderConfig& config) {
  // Header: magic + version + kind + six u32 config counts + dropout f64 +
  // tied flag + extra count + tensor count.
  std::size_t n = 8 + 4 + 4 + 6 * 4 + 8 + 4 + 4 + 4;
  EncoderState st = make_encoder_state(config);
  for (const auto& p : named_params(st)) {
    n += 4 + p.name.size() + 4 + 8 * p.tensor->shape.size() +
         8 * p.tensor->numel();
  }
  return n;
}

}  // namespace voxbuild
