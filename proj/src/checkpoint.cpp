#include "stvg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>

#include "stvg/errors.hpp"

namespace stvg::ckpt {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string basename_of(const std::string& path) {
  const auto pos = path.find_last_of('/');
  return pos == std::string::npos ? path : path.substr(pos + 1);
}

}  // namespace

void save(const std::string& prefix, std::span<const NamedParam> params,
          const std::string& config_json) {
  std::set<std::string> seen;
  ordered_json manifest;
  manifest["format"] = "stvg-checkpoint-v1";
  manifest["payload"] = basename_of(prefix) + ".bin";
  manifest["config"] = ordered_json::parse(config_json);

  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw IoError("cannot open " + prefix + ".bin for writing");

  ordered_json tensors = ordered_json::array();
  std::size_t offset = 0;
  for (const auto& p : params) {
    if (!seen.insert(p.name).second) {
      throw IoError("checkpoint: duplicate tensor name '" + p.name + "'");
    }
    ordered_json e;
    e["name"] = p.name;
    e["group"] = p.trainable ? "trainable/" : "frozen/";
    e["shape"] = p.tensor.shape();
    e["offset"] = offset;
    e["numel"] = p.tensor.numel();
    tensors.push_back(std::move(e));
    const auto v = p.tensor.value();
    bin.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
    offset += v.size() * sizeof(double);
  }
  if (!bin) throw IoError("failed writing " + prefix + ".bin");
  manifest["tensors"] = std::move(tensors);

  std::ofstream js(prefix + ".json", std::ios::binary);
  if (!js) throw IoError("cannot open " + prefix + ".json for writing");
  js << manifest.dump(2) << "\n";
  if (!js) throw IoError("failed writing " + prefix + ".json");
}

LoadedCheckpoint load(const std::string& prefix) {
  std::ifstream js(prefix + ".json", std::ios::binary);
  if (!js) throw IoError("cannot open checkpoint manifest " + prefix + ".json");
  ordered_json manifest;
  try {
    js >> manifest;
  } catch (const std::exception& e) {
    throw IoError(std::string("checkpoint manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "stvg-checkpoint-v1") {
    throw IoError("checkpoint: unknown format tag");
  }

  LoadedCheckpoint out;
  out.config_json = manifest.at("config").dump();

  std::size_t expected_offset = 0;
  std::set<std::string> seen;
  for (const auto& e : manifest.at("tensors")) {
    TensorEntry entry;
    entry.name = e.at("name").get<std::string>();
    entry.group = e.at("group").get<std::string>();
    entry.shape = e.at("shape").get<Shape>();
    entry.offset = e.at("offset").get<std::size_t>();
    entry.numel = e.at("numel").get<std::size_t>();
    if (!seen.insert(entry.name).second) {
      throw IoError("checkpoint: duplicate tensor name '" + entry.name + "'");
    }
    if (entry.offset != expected_offset || entry.numel != shape_numel(entry.shape)) {
      throw IoError("checkpoint: corrupt layout at tensor '" + entry.name + "'");
    }
    expected_offset += entry.numel * sizeof(double);
    out.entries.push_back(std::move(entry));
  }

  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw IoError("cannot open checkpoint payload " + prefix + ".bin");
  out.payload.resize(expected_offset / sizeof(double));
  bin.read(reinterpret_cast<char*>(out.payload.data()),
           static_cast<std::streamsize>(expected_offset));
  if (bin.gcount() != static_cast<std::streamsize>(expected_offset)) {
    throw IoError("checkpoint: payload shorter than the manifest promises");
  }
  return out;
}

void LoadedCheckpoint::load_into(std::span<const NamedParam> params) const {
  std::map<std::string, const TensorEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  for (const auto& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      throw IoError("checkpoint: missing tensor '" + p.name + "'");
    }
    const TensorEntry& e = *it->second;
    if (e.shape != p.tensor.shape()) {
      throw IoError("checkpoint: tensor '" + p.name + "' has shape " + shape_str(e.shape) +
                    " but the model expects " + shape_str(p.tensor.shape()));
    }
    const std::string group = p.trainable ? "trainable/" : "frozen/";
    if (e.group != group) {
      throw IoError("checkpoint: tensor '" + p.name + "' is in group " + e.group +
                    " but the model expects " + group);
    }
    auto dst = p.tensor.mutable_value();
    std::memcpy(dst.data(), payload.data() + e.offset / sizeof(double),
                e.numel * sizeof(double));
  }
}

std::size_t LoadedCheckpoint::group_numel(const std::string& group) const {
  std::size_t n = 0;
  for (const auto& e : entries) {
    if (e.group == group) n += e.numel;
  }
  return n;
}

}  // namespace stvg::ckpt
