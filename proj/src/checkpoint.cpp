#include "mmt/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

namespace mmt {

namespace {

constexpr char kMagic[8] = {'M', 'M', 'T', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError("checkpoint truncated: " + path);
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw DataError("checkpoint truncated: " + path);
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::ifstream& in, const std::string& path) {
  std::uint64_t bits = get_u64(in, path);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

const Mat* NamedRecords::find(const std::string& name) const {
  for (const auto& [n, m] : items) {
    if (n == name) return &m;
  }
  return nullptr;
}

void write_records(const std::string& path, const NamedRecords& recs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(kMagic, 8);
  put_u32(out, kVersion);
  put_u64(out, recs.items.size());
  for (const auto& [name, m] : recs.items) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      put_f64(out, static_cast<double>(m(i)));
    }
  }
  if (!out) throw DataError("write failed: " + path);
}

NamedRecords read_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError("not a checkpoint file: " + path);
  }
  std::uint32_t version = get_u32(in, path);
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " +
                    std::to_string(version) + " in " + path);
  }
  std::uint64_t count = get_u64(in, path);
  NamedRecords recs;
  for (std::uint64_t k = 0; k < count; ++k) {
    std::uint32_t len = get_u32(in, path);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) {
      throw DataError("checkpoint truncated: " + path);
    }
    std::uint64_t rows = get_u64(in, path);
    std::uint64_t cols = get_u64(in, path);
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m(i) = static_cast<Real>(get_f64(in, path));
    }
    recs.add(name, std::move(m));
  }
  return recs;
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::map<std::string, double>& meta) {
  NamedRecords recs;
  auto scalar = [](double v) {
    Mat m(1, 1);
    m(0, 0) = static_cast<Real>(v);
    return m;
  };
  const ModelDims& d = params.dims;
  recs.add("meta.src_vocab", scalar(d.src_vocab));
  recs.add("meta.tgt_vocab", scalar(d.tgt_vocab));
  recs.add("meta.embed", scalar(d.embed));
  recs.add("meta.hidden", scalar(d.hidden));
  recs.add("meta.att", scalar(d.att));
  recs.add("meta.img_dim", scalar(d.img_dim));
  recs.add("meta.regions", scalar(d.regions));
  static const std::set<std::string> kDimKeys = {
      "src_vocab", "tgt_vocab", "embed", "hidden",
      "att",       "img_dim",   "regions"};
  for (const auto& [k, v] : meta) {
    if (!kDimKeys.count(k)) recs.add("meta." + k, scalar(v));
  }
  params.visit([&](const char* name, const Mat& m, bool) {
    recs.add(name, m);
  });
  write_records(path, recs);
}

ModelParams load_checkpoint(const std::string& path,
                            std::map<std::string, double>* meta) {
  NamedRecords recs = read_records(path);
  auto scalar = [&](const std::string& name) {
    const Mat* m = recs.find(name);
    if (!m || m->size() != 1) {
      throw DataError("checkpoint " + path + ": missing scalar " + name);
    }
    return static_cast<double>((*m)(0, 0));
  };
  ModelDims d;
  d.src_vocab = static_cast<int>(scalar("meta.src_vocab"));
  d.tgt_vocab = static_cast<int>(scalar("meta.tgt_vocab"));
  d.embed = static_cast<int>(scalar("meta.embed"));
  d.hidden = static_cast<int>(scalar("meta.hidden"));
  d.att = static_cast<int>(scalar("meta.att"));
  d.img_dim = static_cast<int>(scalar("meta.img_dim"));
  d.regions = static_cast<int>(scalar("meta.regions"));
  if (meta) {
    meta->clear();
    for (const auto& [name, m] : recs.items) {
      if (name.rfind("meta.", 0) == 0 && m.size() == 1) {
        (*meta)[name.substr(5)] = static_cast<double>(m(0, 0));
      }
    }
  }
  ModelParams p = ModelParams::zeros(d);
  p.visit([&](const char* name, Mat& m, bool) {
    const Mat* rec = recs.find(name);
    if (!rec) throw DataError("checkpoint " + path + ": missing " + name);
    if (rec->rows() != m.rows() || rec->cols() != m.cols()) {
      throw DataError("checkpoint " + path + ": " + name + " has shape " +
                      shape_str(*rec) + ", expected " + shape_str(m));
    }
    m = *rec;
  });
  return p;
}

}  // namespace mmt
