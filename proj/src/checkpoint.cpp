#include "fedcl/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "fedcl/errors.hpp"

namespace fedcl {

namespace {

constexpr char kMagic[8] = {'F', 'E', 'D', 'C', 'L', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t x) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t x) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  put_u64(out, bits);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return x;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return x;
}

double get_f64(std::istream& in) {
  const std::uint64_t bits = get_u64(in);
  double x;
  std::memcpy(&x, &bits, 8);
  return x;
}

void put_params(std::ostream& out, const ParamVector& v) {
  put_u64(out, v.size());
  for (double x : v) put_f64(out, x);
}

ParamVector get_params(std::istream& in) {
  const std::uint64_t len = get_u64(in);
  ParamVector v(len);
  for (auto& x : v) x = get_f64(in);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<ClientState>& clients,
                     const std::string& blob) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("checkpoint: cannot open for writing: " + path);

  out.write(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(clients.size()));

  for (const ClientState& client : clients) {
    put_u32(out, static_cast<std::uint32_t>(client.client_id));
    put_u64(out, client.seed);
    put_u32(out, static_cast<std::uint32_t>(client.task_cursor));
    put_f64(out, client.rho);
    put_u32(out, static_cast<std::uint32_t>(client.k));
    put_u32(out, client.shape.activation == Activation::Relu ? 0 : 1);
    put_u32(out, static_cast<std::uint32_t>(client.shape.layer_sizes.size()));
    for (int s : client.shape.layer_sizes) put_u32(out, static_cast<std::uint32_t>(s));
    put_params(out, client.params);

    put_u64(out, client.store.size());
    for (const TaskKnowledge& knowledge : client.store.tasks()) {
      put_u64(out, static_cast<std::uint64_t>(knowledge.task_id));
      put_f64(out, knowledge.rho);
      put_u64(out, knowledge.entries.size());
      for (const auto& [idx, value] : knowledge.entries) {
        put_u64(out, idx);
        put_f64(out, value);
      }
      put_params(out, knowledge.frozen_full);
    }
  }

  put_u64(out, blob.size());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw ConfigError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open: " + path);

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError("checkpoint: bad magic: " + path);
  }
  const std::uint32_t version = get_u32(in);
  if (version != kVersion) {
    throw ConfigError("checkpoint: unsupported version");
  }

  Checkpoint checkpoint;
  const std::uint32_t num_clients = get_u32(in);
  checkpoint.clients.resize(num_clients);
  for (auto& client : checkpoint.clients) {
    client.client_id = static_cast<int>(get_u32(in));
    client.seed = get_u64(in);
    client.task_cursor = static_cast<int>(get_u32(in));
    client.rho = get_f64(in);
    client.k = static_cast<int>(get_u32(in));
    client.shape.activation = get_u32(in) == 0 ? Activation::Relu : Activation::Tanh;
    const std::uint32_t layers = get_u32(in);
    client.shape.layer_sizes.resize(layers);
    for (auto& s : client.shape.layer_sizes) s = static_cast<int>(get_u32(in));
    client.params = get_params(in);
    client.mask = head_partition(client.shape);

    const std::uint64_t store_size = get_u64(in);
    for (std::uint64_t t = 0; t < store_size; ++t) {
      TaskKnowledge knowledge;
      knowledge.task_id = static_cast<int>(get_u64(in));
      knowledge.rho = get_f64(in);
      const std::uint64_t entries = get_u64(in);
      knowledge.entries.resize(entries);
      for (auto& [idx, value] : knowledge.entries) {
        idx = get_u64(in);
        value = get_f64(in);
      }
      knowledge.frozen_full = get_params(in);
      client.store.add(std::move(knowledge));
    }
  }

  const std::uint64_t blob_len = get_u64(in);
  checkpoint.blob.resize(blob_len);
  in.read(checkpoint.blob.data(), static_cast<std::streamsize>(blob_len));
  if (!in) throw ConfigError("checkpoint: truncated file: " + path);
  return checkpoint;
}

}  // namespace fedcl
