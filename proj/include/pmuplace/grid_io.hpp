#pragma once

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "pmuplace/grid.hpp"

namespace pmuplace {

// Grid file schema, version 1 (JSON):
// {
//   "schema_version": 1,
//   "v_source": [[re,im],[re,im],[re,im]],
//   "buses": [{"id":0,"phases":"abc","kind":"source","load":[[re,im],...]}, ...],
//   "branches": [{"from":0,"to":1,"phases":"ab","admittance":[[[re,im],...],...]}, ...]
// }
// "load" has one [re,im] pair per present phase, in a<b<c order; "admittance"
// is a square nested block over the branch phases. A per-bus "shunt" field is
// reserved but not supported.

namespace detail {

using json = nlohmann::ordered_json;

inline json complex_to_json(const Complex& z) { return json::array({z.real(), z.imag()}); }

inline Complex complex_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw SchemaError(where + ": expected [re, im]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline void check_keys(const json& obj, const std::set<std::string>& allowed,
                       const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (it.key() == "shunt")
      throw SchemaError(where + ": field 'shunt' is reserved and not supported");
    if (!allowed.count(it.key()))
      throw SchemaError(where + ": unknown field '" + it.key() + "'");
  }
}

}  // namespace detail

inline void save_grid(const GridModel& grid, const std::string& path) {
  using detail::complex_to_json;
  using json = detail::json;
  grid.validate();
  json doc;
  doc["schema_version"] = 1;
  doc["v_source"] = json::array();
  for (int p = 0; p < 3; ++p) doc["v_source"].push_back(complex_to_json(grid.v_source[p]));
  doc["buses"] = json::array();
  for (const auto& bus : grid.buses) {
    json jb;
    jb["id"] = bus.id;
    jb["phases"] = phases_to_string(bus.phases);
    jb["kind"] = to_string(bus.kind);
    jb["load"] = json::array();
    for (int p : phase_list(bus.phases)) jb["load"].push_back(complex_to_json(bus.load[p]));
    doc["buses"].push_back(std::move(jb));
  }
  doc["branches"] = json::array();
  for (const auto& br : grid.branches) {
    json jb;
    jb["from"] = br.from;
    jb["to"] = br.to;
    jb["phases"] = phases_to_string(br.phases);
    jb["admittance"] = json::array();
    for (int r = 0; r < br.admittance.rows(); ++r) {
      json row = json::array();
      for (int c = 0; c < br.admittance.cols(); ++c)
        row.push_back(complex_to_json(br.admittance(r, c)));
      jb["admittance"].push_back(std::move(row));
    }
    doc["branches"].push_back(std::move(jb));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SchemaError("cannot open '" + path + "' for writing");
  out << doc.dump(2) << "\n";
}

inline GridModel load_grid(const std::string& path) {
  using detail::check_keys;
  using detail::complex_from_json;
  using json = detail::json;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open grid file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
  check_keys(doc, {"schema_version", "v_source", "buses", "branches"}, path);
  if (!doc.contains("schema_version") || doc["schema_version"].get<int>() != 1)
    throw SchemaError(path + ": missing or unsupported schema_version (expected 1)");
  GridModel grid;
  if (!doc.contains("v_source") || !doc["v_source"].is_array() || doc["v_source"].size() != 3)
    throw SchemaError(path + ": v_source must list 3 phasors");
  for (int p = 0; p < 3; ++p)
    grid.v_source[p] = complex_from_json(doc["v_source"][p], "v_source[" + std::to_string(p) + "]");

  if (!doc.contains("buses") || !doc["buses"].is_array())
    throw SchemaError(path + ": missing buses array");
  for (const auto& jb : doc["buses"]) {
    const std::string where = "bus #" + std::to_string(grid.buses.size());
    check_keys(jb, {"id", "phases", "kind", "load"}, where);
    Bus bus;
    if (!jb.contains("id") || !jb["id"].is_number_integer())
      throw SchemaError(where + ": missing integer field 'id'");
    bus.id = jb["id"].get<int>();
    if (!jb.contains("phases")) throw SchemaError(where + ": missing field 'phases'");
    bus.phases = parse_phases(jb["phases"].get<std::string>());
    if (!jb.contains("kind")) throw SchemaError(where + ": missing field 'kind'");
    const std::string kind = jb["kind"].get<std::string>();
    if (kind == "source") bus.kind = BusKind::source;
    else if (kind == "load") bus.kind = BusKind::load;
    else if (kind == "zero_injection") bus.kind = BusKind::zero_injection;
    else throw SchemaError(where + ": unknown kind '" + kind + "'");
    const auto pl = phase_list(bus.phases);
    if (jb.contains("load")) {
      if (!jb["load"].is_array() || jb["load"].size() != pl.size())
        throw SchemaError(where + ": load must have one [re,im] entry per phase");
      for (size_t k = 0; k < pl.size(); ++k)
        bus.load[pl[k]] = complex_from_json(jb["load"][k], where + ".load");
    }
    for (const auto& existing : grid.buses)
      if (existing.id == bus.id)
        throw DuplicateBusId(path + ": duplicate bus id " + std::to_string(bus.id));
    grid.buses.push_back(bus);
  }

  if (doc.contains("branches")) {
    if (!doc["branches"].is_array()) throw SchemaError(path + ": branches must be an array");
    for (const auto& jb : doc["branches"]) {
      const std::string where = "branch #" + std::to_string(grid.branches.size());
      check_keys(jb, {"from", "to", "phases", "admittance"}, where);
      Branch br;
      if (!jb.contains("from") || !jb.contains("to"))
        throw SchemaError(where + ": missing 'from'/'to'");
      br.from = jb["from"].get<int>();
      br.to = jb["to"].get<int>();
      if (!jb.contains("phases")) throw SchemaError(where + ": missing field 'phases'");
      br.phases = parse_phases(jb["phases"].get<std::string>());
      const int np = phase_count(br.phases);
      if (!jb.contains("admittance") || !jb["admittance"].is_array() ||
          static_cast<int>(jb["admittance"].size()) != np)
        throw SchemaError(where + ": admittance must be a " + std::to_string(np) + "x" +
                          std::to_string(np) + " block");
      br.admittance.resize(np, np);
      for (int r = 0; r < np; ++r) {
        const auto& row = jb["admittance"][r];
        if (!row.is_array() || static_cast<int>(row.size()) != np)
          throw SchemaError(where + ": admittance row " + std::to_string(r) + " has wrong length");
        for (int c = 0; c < np; ++c)
          br.admittance(r, c) = complex_from_json(row[c], where + ".admittance");
      }
      grid.branches.push_back(std::move(br));
    }
  }
  grid.validate();
  return grid;
}

}  // namespace pmuplace
