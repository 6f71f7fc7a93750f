// SPDX-License-Identifier: Apache-2.0
#include "ld3m/io.hpp"

#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ld3m/errors.hpp"

namespace ld3m {

namespace fs = std::filesystem;

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      fs::remove(tmp);
      throw ConfigError("short write to " + tmp);
    }
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t pos) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

void put_f32(std::string& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_le(out, bits);
}

double get_f32(const std::string& in, std::size_t pos) {
  const std::uint32_t bits = get_le<std::uint32_t>(in, pos);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_le(out, bits);
}

double get_f64(const std::string& in, std::size_t pos) {
  const std::uint64_t bits = get_le<std::uint64_t>(in, pos);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

json shape_json(const Shape& s) { return json(std::vector<std::size_t>(s.begin(), s.end())); }

Shape shape_from(const json& j, const std::string& what) {
  if (!j.is_array()) throw CorruptFileError(what + ": shape is not an array");
  Shape s;
  for (const auto& d : j) {
    if (!d.is_number_unsigned() || d.get<std::size_t>() == 0) throw CorruptFileError(what + ": bad dimension");
    s.push_back(d.get<std::size_t>());
  }
  return s;
}

// Arrays in order as f64; shapes go to meta["arrays"].
void put_arrays(std::string& payload, json& shapes, const std::vector<Array>& arrays) {
  for (const auto& a : arrays) {
    shapes.push_back(shape_json(a.shape()));
    for (double v : a.data()) put_f64(payload, v);
  }
}

std::vector<Array> get_arrays(const Container& c, const std::string& what) {
  if (!c.meta.contains("arrays")) throw CorruptFileError(what + ": metadata lacks the array table");
  std::vector<Shape> shapes;
  std::size_t total = 0;
  for (const auto& j : c.meta["arrays"]) {
    shapes.push_back(shape_from(j, what));
    total += shape_size(shapes.back());
  }
  if (c.payload.size() != 8 * total) {
    throw CorruptFileError(what + ": payload has " + std::to_string(c.payload.size()) + " bytes, expected " +
                           std::to_string(8 * total));
  }
  std::vector<Array> out;
  std::size_t pos = 0;
  for (const auto& s : shapes) {
    Array a(s);
    for (auto& v : a.data()) {
      v = get_f64(c.payload, pos);
      pos += 8;
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Array> take(std::vector<Array>& from, std::size_t& pos, std::size_t n, const std::string& what) {
  if (pos + n > from.size()) throw CorruptFileError(what + ": too few arrays");
  std::vector<Array> out(from.begin() + static_cast<long>(pos), from.begin() + static_cast<long>(pos + n));
  pos += n;
  return out;
}

Activation activation_from(const std::string& s) {
  if (s == "none") return Activation::none;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw CorruptFileError("unknown activation '" + s + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "none";
}

Mlp mlp_from(const json& widths, const json& act, std::vector<Array> values) {
  Rng dummy(0);
  Mlp m(widths.get<std::vector<std::size_t>>(), activation_from(act.get<std::string>()), dummy);
  m.set_trainable(false);
  m.load(values);
  return m;
}

}  // namespace

std::string encode_container(const char magic[4], std::uint16_t version, const json& meta, const std::string& payload) {
  const std::string m = meta.dump();
  std::string out(magic, 4);
  put_le(out, version);
  put_le(out, static_cast<std::uint32_t>(m.size()));
  out += m;
  out += payload;
  return out;
}

Container decode_container(const std::string& bytes, const char magic[4], const std::string& what) {
  if (bytes.size() < 10 || bytes.compare(0, 4, magic, 4) != 0) throw CorruptFileError(what + ": bad magic");
  Container c;
  c.version = get_le<std::uint16_t>(bytes, 4);
  const std::uint32_t len = get_le<std::uint32_t>(bytes, 6);
  if (bytes.size() < 10 + static_cast<std::size_t>(len)) throw CorruptFileError(what + ": truncated metadata");
  try {
    c.meta = json::parse(bytes.substr(10, len));
  } catch (const json::exception& e) {
    throw CorruptFileError(what + ": metadata is not valid JSON (" + e.what() + ")");
  }
  if (!c.meta.is_object()) throw CorruptFileError(what + ": metadata is not an object");
  c.payload = bytes.substr(10 + len);
  return c;
}

std::string encode_distilled_set(const DistilledSet& ds, const json& extra_meta) {
  const std::size_t M = ds.size();
  if (ds.Z.shape().size() != 2 || ds.c.shape().size() != 2 || ds.Z.shape()[0] != M || ds.c.shape()[0] != M) {
    throw DimensionError("distilled set: Z and c must have one row per label");
  }
  json meta = extra_meta.is_object() ? extra_meta : json::object();
  meta["Z_shape"] = shape_json(ds.Z.shape());
  meta["c_shape"] = shape_json(ds.c.shape());
  meta["num_labels"] = M;
  meta["ipc"] = ds.ipc;
  meta["num_classes"] = ds.num_classes;
  std::string payload;
  for (double v : ds.Z.value().data()) put_f32(payload, v);
  for (double v : ds.c.value().data()) put_f32(payload, v);
  for (int l : ds.labels) put_le(payload, static_cast<std::uint16_t>(l));
  return encode_container("LD3M", kSetVersion, meta, payload);
}

DistilledSet decode_distilled_set(const std::string& bytes, json* meta_out) {
  const Container c = decode_container(bytes, "LD3M", "distilled set");
  if (c.version != kSetVersion) throw CorruptFileError("distilled set: unsupported version " + std::to_string(c.version));
  const json& m = c.meta;
  for (const char* key : {"Z_shape", "c_shape", "num_labels", "ipc", "num_classes"}) {
    if (!m.contains(key)) throw CorruptFileError(std::string("distilled set: metadata lacks ") + key);
  }
  const Shape zs = shape_from(m["Z_shape"], "distilled set");
  const Shape cs = shape_from(m["c_shape"], "distilled set");
  const auto M = m["num_labels"].get<std::size_t>();
  if (zs.size() != 2 || cs.size() != 2 || zs[0] != M || cs[0] != M) {
    throw CorruptFileError("distilled set: shapes disagree with the label count");
  }
  const std::size_t expected = 4 * (shape_size(zs) + shape_size(cs)) + 2 * M;
  if (c.payload.size() != expected) {
    throw CorruptFileError("distilled set: payload has " + std::to_string(c.payload.size()) + " bytes, expected " +
                           std::to_string(expected));
  }
  DistilledSet ds;
  ds.ipc = m["ipc"].get<std::size_t>();
  ds.num_classes = m["num_classes"].get<std::size_t>();
  std::size_t pos = 0;
  Array Z(zs), cc(cs);
  for (auto& v : Z.data()) {
    v = get_f32(c.payload, pos);
    pos += 4;
  }
  for (auto& v : cc.data()) {
    v = get_f32(c.payload, pos);
    pos += 4;
  }
  for (std::size_t i = 0; i < M; ++i, pos += 2) {
    const auto l = get_le<std::uint16_t>(c.payload, pos);
    if (l >= ds.num_classes) throw CorruptFileError("distilled set: label out of range");
    ds.labels.push_back(l);
  }
  if (!Z.all_finite() || !cc.all_finite()) throw CorruptFileError("distilled set: non-finite payload");
  ds.Z = Var(std::move(Z), true);
  ds.c = Var(std::move(cc), true);
  if (meta_out) *meta_out = m;
  return ds;
}

void save_distilled_set(const std::string& path, const DistilledSet& ds, const json& extra_meta) {
  write_file_atomic(path, encode_distilled_set(ds, extra_meta));
}

DistilledSet load_distilled_set(const std::string& path, json* meta) {
  return decode_distilled_set(read_file(path), meta);
}

void save_bundle(const std::string& path, const ModelBundle& b) {
  json meta;
  meta["format"] = "ld3m-bundle";
  meta["num_classes"] = b.num_classes;
  meta["side"] = b.side;
  meta["latent_scale"] = b.ae.latent_scale;
  meta["recon_mse"] = b.recon_mse;
  meta["encoder"] = {{"widths", b.ae.encoder.widths()}, {"activation", activation_name(b.ae.encoder.activation())}};
  meta["decoder"] = {{"widths", b.ae.decoder.widths()}, {"activation", activation_name(b.ae.decoder.activation())}};
  meta["denoiser"] = {{"widths", b.denoiser.net().widths()}, {"d_embed", b.denoiser.d_embed()}};
  meta["arrays"] = json::array();
  std::string payload;
  std::vector<Array> arrays = b.ae.encoder.snapshot();
  for (auto& a : b.ae.decoder.snapshot()) arrays.push_back(std::move(a));
  for (auto& a : b.denoiser.net().snapshot()) arrays.push_back(std::move(a));
  arrays.push_back(b.embedder.table.value());
  arrays.push_back(Array::vector({b.ae.latent_scale, b.recon_mse}));
  put_arrays(payload, meta["arrays"], arrays);
  write_file_atomic(path, encode_container("LD3B", 1, meta, payload));
}

ModelBundle load_bundle(const std::string& path) {
  const Container c = decode_container(read_file(path), "LD3B", "bundle");
  if (c.version != 1) throw CorruptFileError("bundle: unsupported version");
  std::vector<Array> arrays = get_arrays(c, "bundle");
  try {
    const json& m = c.meta;
    ModelBundle b;
    std::size_t pos = 0;
    const std::size_t ne = m["encoder"]["widths"].size() - 1, nd = m["decoder"]["widths"].size() - 1;
    const std::size_t nf = m["denoiser"]["widths"].size() - 1;
    b.ae.encoder = mlp_from(m["encoder"]["widths"], m["encoder"]["activation"], take(arrays, pos, 2 * ne, "bundle"));
    b.ae.decoder = mlp_from(m["decoder"]["widths"], m["decoder"]["activation"], take(arrays, pos, 2 * nd, "bundle"));
    const auto fw = m["denoiser"]["widths"].get<std::vector<std::size_t>>();
    const auto d_embed = m["denoiser"]["d_embed"].get<std::size_t>();
    const std::size_t d_latent = fw.back();
    Rng dummy(0);
    b.denoiser = Denoiser(d_latent, d_embed, std::vector<std::size_t>(fw.begin() + 1, fw.end() - 1), dummy);
    b.denoiser.net().set_trainable(false);
    b.denoiser.net().load(take(arrays, pos, 2 * nf, "bundle"));
    b.embedder.table = Var(take(arrays, pos, 1, "bundle")[0], false);
    const Array scal = take(arrays, pos, 1, "bundle")[0];
    if (pos != arrays.size() || scal.size() != 2) throw CorruptFileError("bundle: unexpected array count");
    b.ae.latent_scale = scal[0];
    b.recon_mse = scal[1];
    b.num_classes = m["num_classes"].get<std::size_t>();
    b.side = m["side"].get<std::size_t>();
    if (b.embedder.num_classes() != b.num_classes || b.side * b.side != b.ae.encoder.in_dim()) {
      throw CorruptFileError("bundle: metadata disagrees with the stored arrays");
    }
    b.frozen = true;
    return b;
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("bundle: malformed metadata (") + e.what() + ")");
  } catch (const DimensionError& e) {
    throw CorruptFileError(std::string("bundle: ") + e.what());
  } catch (const ContractError& e) {
    throw CorruptFileError(std::string("bundle: ") + e.what());
  }
}

void save_experts(const std::string& path, const ExpertBuffer& buffer) {
  json meta;
  meta["format"] = "ld3m-experts";
  meta["arch"] = buffer.arch;
  meta["side"] = buffer.side;
  meta["num_classes"] = buffer.num_classes;
  meta["num_experts"] = buffer.num_experts();
  meta["num_snapshots"] = buffer.num_snapshots();
  meta["arrays"] = json::array();
  std::string payload;
  for (const auto& traj : buffer.trajectories) {
    for (const auto& snap : traj) put_arrays(payload, meta["arrays"], snap);
  }
  write_file_atomic(path, encode_container("LD3E", 1, meta, payload));
}

ExpertBuffer load_experts(const std::string& path) {
  const Container c = decode_container(read_file(path), "LD3E", "expert buffer");
  std::vector<Array> arrays = get_arrays(c, "expert buffer");
  try {
    ExpertBuffer b;
    b.arch = c.meta["arch"].get<std::string>();
    b.side = c.meta["side"].get<std::size_t>();
    b.num_classes = c.meta["num_classes"].get<std::size_t>();
    const auto E = c.meta["num_experts"].get<std::size_t>();
    const auto S = c.meta["num_snapshots"].get<std::size_t>();
    const std::size_t per = WitnessNet::build(b.arch, b.side, b.num_classes, 0).params().size();
    if (arrays.size() != E * S * per) throw CorruptFileError("expert buffer: array count mismatch");
    std::size_t pos = 0;
    for (std::size_t e = 0; e < E; ++e) {
      std::vector<std::vector<Array>> traj;
      for (std::size_t s = 0; s < S; ++s) traj.push_back(take(arrays, pos, per, "expert buffer"));
      b.trajectories.push_back(std::move(traj));
    }
    return b;
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("expert buffer: malformed metadata (") + e.what() + ")");
  } catch (const ConfigError& e) {
    throw CorruptFileError(std::string("expert buffer: ") + e.what());
  }
}

std::string encode_pgm(std::span<const double> pixels, std::size_t side) {
  if (pixels.size() != side * side) throw DimensionError("encode_pgm: pixel count is not side^2");
  std::string out = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
  for (double v : pixels) out.push_back(static_cast<char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace ld3m
