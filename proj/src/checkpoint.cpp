#include "mcclk/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace mcclk {

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_doubles(std::ofstream& out, const double* p, std::size_t n) {
  out.write(reinterpret_cast<const char*>(p),
            std::streamsize(n * sizeof(double)));
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void read_doubles(std::ifstream& in, double* p, std::size_t n) {
  in.read(reinterpret_cast<char*>(p), std::streamsize(n * sizeof(double)));
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelState& state,
                     std::uint64_t config_hash) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DiskWriteError("cannot write checkpoint: " + tmp);
    write_u32(out, kCheckpointMagic);
    write_u32(out, kCheckpointVersion);
    write_u64(out, std::uint64_t(state.d));
    write_u64(out, std::uint64_t(state.n_users));
    write_u64(out, std::uint64_t(state.n_items));
    write_u64(out, std::uint64_t(state.n_entities));
    write_u64(out, std::uint64_t(state.n_relations));
    write_u64(out, config_hash);
    write_doubles(out, state.user.a.data(), state.user.a.size());
    write_doubles(out, state.item.a.data(), state.item.a.size());
    write_doubles(out, state.entity.a.data(), state.entity.a.size());
    write_doubles(out, state.relation.a.data(), state.relation.a.size());
    for (const ProjectionHead* h : {&state.local_head, &state.global_head}) {
      write_doubles(out, h->W1.a.data(), h->W1.a.size());
      write_doubles(out, h->b1.data(), h->b1.size());
      write_doubles(out, h->W2.a.data(), h->W2.a.size());
      write_doubles(out, h->b2.data(), h->b2.size());
    }
    if (!out) throw DiskWriteError("failed writing checkpoint: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DiskWriteError("cannot move checkpoint into place: " + path);
}

ModelState load_checkpoint(const std::string& path,
                           std::uint64_t* config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  if (read_u32(in) != kCheckpointMagic)
    throw Error("not a checkpoint file: " + path);
  const std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version));
  ModelState s;
  s.d = idx(read_u64(in));
  s.n_users = idx(read_u64(in));
  s.n_items = idx(read_u64(in));
  s.n_entities = idx(read_u64(in));
  s.n_relations = idx(read_u64(in));
  const std::uint64_t hash = read_u64(in);
  if (config_hash != nullptr) *config_hash = hash;
  s.user.resize(s.n_users, s.d);
  s.item.resize(s.n_items, s.d);
  s.entity.resize(s.n_entities, s.d);
  s.relation.resize(s.n_relations + 1, s.d);
  s.local_head.resize(s.d);
  s.global_head.resize(s.d);
  read_doubles(in, s.user.a.data(), s.user.a.size());
  read_doubles(in, s.item.a.data(), s.item.a.size());
  read_doubles(in, s.entity.a.data(), s.entity.a.size());
  read_doubles(in, s.relation.a.data(), s.relation.a.size());
  for (ProjectionHead* h : {&s.local_head, &s.global_head}) {
    read_doubles(in, h->W1.a.data(), h->W1.a.size());
    read_doubles(in, h->b1.data(), h->b1.size());
    read_doubles(in, h->W2.a.data(), h->W2.a.size());
    read_doubles(in, h->b2.data(), h->b2.size());
  }
  if (!in) throw Error("checkpoint truncated: " + path);
  return s;
}

void check_checkpoint_dims(const ModelState& state, idx n_users, idx n_items,
                           idx n_entities, idx n_relations) {
  const idx expect_entities = std::max(n_entities, n_items);
  if (state.n_users != n_users || state.n_items != n_items ||
      state.n_entities != expect_entities ||
      state.n_relations != n_relations) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "checkpoint shape (M=%lld,N=%lld,E=%lld,R=%lld) does not "
                  "match dataset (M=%lld,N=%lld,E=%lld,R=%lld)",
                  (long long)state.n_users, (long long)state.n_items,
                  (long long)state.n_entities, (long long)state.n_relations,
                  (long long)n_users, (long long)n_items,
                  (long long)expect_entities, (long long)n_relations);
    throw CheckpointMismatch(buf);
  }
}

}  // namespace mcclk
