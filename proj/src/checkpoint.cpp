// Copyright 2026 The liquidbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "liquidbench/checkpoint.hpp"

#include "liquidbench/io.hpp"

#include <cstring>

namespace lqb {

using nlohmann::json;

std::string serialize_checkpoint(const Checkpoint& c) {
  json m = c.meta;
  m["format"] = "liquidbench-checkpoint-v1";
  m["precision"] = "f32";
  json entries = json::array();
  std::string blob;
  std::size_t offset = 0;
  for (const auto& [name, t] : c.tensors) {
    const std::size_t n = static_cast<std::size_t>(t.size());
    entries.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"offset", offset}, {"length", n}});
    // Row-major on disk.
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = t;
    append_floats(blob, rm.data(), n);
    offset += n;
  }
  m["entries"] = entries;
  m["blob_floats"] = offset;
  return m.dump() + "\n" + blob;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw CheckpointError("checkpoint: missing manifest line");
  json m;
  try {
    m = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad manifest: ") + e.what());
  }
  if (m.value("format", "") != "liquidbench-checkpoint-v1") throw CheckpointError("checkpoint: unknown format");
  const std::size_t blob_bytes = bytes.size() - nl - 1;
  if (blob_bytes % sizeof(float) != 0) throw CheckpointError("checkpoint: blob is not a whole number of floats");
  const std::size_t total = blob_bytes / sizeof(float);
  if (m.at("blob_floats").get<std::size_t>() != total) throw CheckpointError("checkpoint: blob length mismatch");
  const char* blob = bytes.data() + nl + 1;
  Checkpoint c;
  std::size_t sum = 0;
  for (const auto& e : m.at("entries")) {
    const auto name = e.at("name").get<std::string>();
    const auto rows = e.at("shape").at(0).get<Index>();
    const auto cols = e.at("shape").at(1).get<Index>();
    const auto offset = e.at("offset").get<std::size_t>();
    const auto length = e.at("length").get<std::size_t>();
    if (static_cast<std::size_t>(rows * cols) != length || offset + length > total) {
      throw CheckpointError("checkpoint: entry " + name + " out of bounds");
    }
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
    std::memcpy(rm.data(), blob + offset * sizeof(float), length * sizeof(float));
    c.tensors[name] = rm;
    sum += length;
  }
  if (sum != total) throw CheckpointError("checkpoint: entry lengths do not cover the blob");
  m.erase("entries");
  m.erase("blob_floats");
  m.erase("format");
  m.erase("precision");
  c.meta = std::move(m);
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) { write_file_atomic(path, serialize_checkpoint(c)); }

Checkpoint load_checkpoint(const std::string& path) {
  try {
    return parse_checkpoint(read_file(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

void put_params(Checkpoint& c, const ParamSet<float>& params, const OptimizerState<float>* opt) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.tensors[params[i].name] = params[i].tensor.value();
    if (opt) {
      c.tensors["adam.m/" + params[i].name] = opt->first_moment[i];
      c.tensors["adam.v/" + params[i].name] = opt->second_moment[i];
    }
  }
  if (opt) c.meta["adam_step"] = opt->step;
}

namespace {

const Matrix<float>& fetch(const Checkpoint& c, const std::string& name, Index rows, Index cols) {
  const auto it = c.tensors.find(name);
  if (it == c.tensors.end()) throw CheckpointError("checkpoint: missing tensor " + name);
  if (it->second.rows() != rows || it->second.cols() != cols) {
    throw CheckpointError("checkpoint: tensor " + name + " has shape " + std::to_string(it->second.rows()) + "x" +
                          std::to_string(it->second.cols()) + ", model expects " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }
  return it->second;
}

}  // namespace

void get_params(const Checkpoint& c, ParamSet<float>& params, OptimizerState<float>* opt) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params[i].tensor;
    t.value() = fetch(c, params[i].name, t.rows(), t.cols());
    if (opt) {
      opt->first_moment[i] = fetch(c, "adam.m/" + params[i].name, t.rows(), t.cols());
      opt->second_moment[i] = fetch(c, "adam.v/" + params[i].name, t.rows(), t.cols());
    }
  }
  if (opt) opt->step = c.meta.at("adam_step").get<std::int64_t>();
}

}  // namespace lqb
