#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "iqs/mdp.hpp"

namespace iqs {

// Container layout: 4-byte magic, u32 version, u64 header length, JSON header
// (instance + shape), then the dense payload. Numbers are host-endian;
// artifacts are machine-local working files, not interchange formats.

namespace {

constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n, const std::string& what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("truncated artifact while reading " + what);
}

nlohmann::json instance_header(const DpInstance& inst) {
  nlohmann::json pmf = nlohmann::json::array();
  for (const auto& e : inst.arrivals.entry) pmf.push_back(e.p);
  return {{"cost", inst.cost.w}, {"pmf", pmf}, {"beta", inst.beta}};
}

DpInstance instance_from_header(const nlohmann::json& h) {
  auto cost = h.at("cost").get<std::vector<double>>();
  if (cost.size() != 4) throw std::runtime_error("artifact header: cost shape");
  std::vector<QueuePmf> entries;
  for (const auto& e : h.at("pmf")) entries.emplace_back(e.get<std::vector<double>>());
  if (entries.size() != 4) throw std::runtime_error("artifact header: pmf shape");
  return DpInstance{CostMatrix(2, std::move(cost)), ArrivalProcess(2, std::move(entries)),
                    h.at("beta").get<double>()};
}

void write_container(const std::string& path, const char magic[4], const nlohmann::json& header,
                     const void* payload, std::size_t payload_bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  std::string h = header.dump();
  std::uint64_t hlen = h.size();
  write_bytes(out, magic, 4);
  write_bytes(out, &kVersion, sizeof kVersion);
  write_bytes(out, &hlen, sizeof hlen);
  write_bytes(out, h.data(), h.size());
  write_bytes(out, payload, payload_bytes);
  if (!out) throw std::runtime_error("failed writing " + path);
}

nlohmann::json read_container(std::ifstream& in, const std::string& path, const char magic[4]) {
  char m[4];
  read_bytes(in, m, 4, "magic");
  if (std::string(m, 4) != std::string(magic, 4))
    throw std::runtime_error(path + ": not the expected artifact kind");
  std::uint32_t version = 0;
  read_bytes(in, &version, sizeof version, "version");
  if (version != kVersion) throw std::runtime_error(path + ": unsupported artifact version");
  std::uint64_t hlen = 0;
  read_bytes(in, &hlen, sizeof hlen, "header length");
  if (hlen > (1u << 20)) throw std::runtime_error(path + ": implausible header length");
  std::string h(hlen, '\0');
  read_bytes(in, h.data(), hlen, "header");
  try {
    return nlohmann::json::parse(h);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": bad artifact header: " + e.what());
  }
}

}  // namespace

void save_value(const std::string& path, const DpInstance& inst, const ValueFunction& vf) {
  nlohmann::json h = instance_header(inst);
  h["qmax"] = vf.grid.qmax;
  h["sweeps"] = vf.sweeps;
  h["count"] = vf.v.size();
  write_container(path, "IQSV", h, vf.v.data(), vf.v.size() * sizeof(double));
}

SolvedValue load_value(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json h = read_container(in, path, "IQSV");
  SolvedValue sv{instance_from_header(h), {}};
  sv.value.grid.qmax = h.at("qmax").get<int>();
  sv.value.beta = sv.instance.beta;
  sv.value.sweeps = h.at("sweeps").get<int>();
  std::size_t count = h.at("count").get<std::size_t>();
  if (count != sv.value.grid.size())
    throw std::runtime_error(path + ": value count does not match grid");
  sv.value.v.resize(count);
  read_bytes(in, sv.value.v.data(), count * sizeof(double), "values");
  return sv;
}

void save_policy(const std::string& path, const DpInstance& inst, const PolicyTable& pt) {
  nlohmann::json h = instance_header(inst);
  h["qmax"] = pt.grid.qmax;
  h["count"] = pt.action.size();
  std::vector<std::uint8_t> payload;
  payload.reserve(pt.action.size() * 2);
  payload.insert(payload.end(), pt.action.begin(), pt.action.end());
  payload.insert(payload.end(), pt.tie_mask.begin(), pt.tie_mask.end());
  write_container(path, "IQSP", h, payload.data(), payload.size());
}

PolicyTable load_policy(const std::string& path, DpInstance* inst_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json h = read_container(in, path, "IQSP");
  DpInstance inst = instance_from_header(h);
  PolicyTable pt;
  pt.grid.qmax = h.at("qmax").get<int>();
  pt.beta = inst.beta;
  std::size_t count = h.at("count").get<std::size_t>();
  if (count != pt.grid.size())
    throw std::runtime_error(path + ": policy count does not match grid");
  pt.action.resize(count);
  pt.tie_mask.resize(count);
  read_bytes(in, pt.action.data(), count, "actions");
  read_bytes(in, pt.tie_mask.data(), count, "tie sets");
  for (std::size_t i = 0; i < count; ++i)
    if (pt.action[i] > 1 || pt.tie_mask[i] == 0 || pt.tie_mask[i] > 3)
      throw std::runtime_error(path + ": corrupt policy entries");
  if (inst_out) *inst_out = std::move(inst);
  return pt;
}

}  // namespace iqs
