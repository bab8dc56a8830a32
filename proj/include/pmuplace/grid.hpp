#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/LU>

#include "pmuplace/errors.hpp"
#include "pmuplace/types.hpp"

namespace pmuplace {

// Phases are identified by 0,1,2 = a,b,c and stored as a 3-bit mask.
using PhaseMask = std::uint8_t;

inline constexpr PhaseMask kAllPhases = 0b111;

inline int phase_count(PhaseMask m) {
  return ((m >> 0) & 1) + ((m >> 1) & 1) + ((m >> 2) & 1);
}

inline bool has_phase(PhaseMask m, int phase) { return (m >> phase) & 1; }

inline std::vector<int> phase_list(PhaseMask m) {
  std::vector<int> out;
  for (int p = 0; p < 3; ++p)
    if (has_phase(m, p)) out.push_back(p);
  return out;
}

inline std::string phases_to_string(PhaseMask m) {
  std::string s;
  for (int p = 0; p < 3; ++p)
    if (has_phase(m, p)) s.push_back(static_cast<char>('a' + p));
  return s;
}

inline PhaseMask parse_phases(const std::string& s) {
  PhaseMask m = 0;
  for (char ch : s) {
    if (ch < 'a' || ch > 'c') throw SchemaError("invalid phase character '" + std::string(1, ch) + "'");
    m |= static_cast<PhaseMask>(1u << (ch - 'a'));
  }
  if (m == 0) throw SchemaError("empty phase set");
  return m;
}

enum class BusKind { source, load, zero_injection };

inline std::string to_string(BusKind k) {
  switch (k) {
    case BusKind::source: return "source";
    case BusKind::load: return "load";
    case BusKind::zero_injection: return "zero_injection";
  }
  return "?";
}

struct Bus {
  int id = 0;
  PhaseMask phases = kAllPhases;
  BusKind kind = BusKind::load;
  std::array<Complex, 3> load{};  // volt-amperes per phase slot; zero where phase absent
};

// Branch admittance is a square block over the branch's phase set (a<b<c order),
// which must be a subset of both endpoint phase sets. Blocks are symmetric.
struct Branch {
  int from = 0;
  int to = 0;
  PhaseMask phases = kAllPhases;
  CMatrix admittance;  // siemens, phase_count x phase_count
};

struct GridModel {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::array<Complex, 3> v_source{};

  const Bus* find_bus(int id) const {
    for (const auto& b : buses)
      if (b.id == id) return &b;
    return nullptr;
  }

  int source_id() const {
    for (const auto& b : buses)
      if (b.kind == BusKind::source) return b.id;
    throw SchemaError("grid has no source bus");
  }

  // Total non-source phase count N.
  int state_dim() const {
    int n = 0;
    for (const auto& b : buses)
      if (b.kind != BusKind::source) n += phase_count(b.phases);
    return n;
  }

  void validate() const {
    int sources = 0;
    std::map<int, const Bus*> by_id;
    for (const auto& b : buses) {
      if (!by_id.emplace(b.id, &b).second)
        throw DuplicateBusId("duplicate bus id " + std::to_string(b.id));
      if (b.phases == 0 || b.phases > kAllPhases)
        throw SchemaError("bus " + std::to_string(b.id) + ": invalid phase set");
      if (b.kind == BusKind::source) {
        ++sources;
        if (b.phases != kAllPhases)
          throw SchemaError("source bus must carry all 3 phases");
      }
      for (int p = 0; p < 3; ++p) {
        if (!has_phase(b.phases, p) && b.load[p] != Complex(0, 0))
          throw SchemaError("bus " + std::to_string(b.id) + ": load on absent phase");
        if (b.kind != BusKind::load && b.load[p] != Complex(0, 0))
          throw SchemaError("bus " + std::to_string(b.id) + ": nonzero load on non-load bus");
      }
    }
    if (sources != 1)
      throw SchemaError("grid must have exactly one source bus, found " + std::to_string(sources));
    for (const auto& br : branches) {
      auto fit = by_id.find(br.from);
      auto tit = by_id.find(br.to);
      if (fit == by_id.end() || tit == by_id.end())
        throw SchemaError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                          ": endpoint does not exist");
      if ((br.phases & fit->second->phases) != br.phases ||
          (br.phases & tit->second->phases) != br.phases)
        throw PhaseMismatch("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                            ": phase set not present at both endpoints");
      const int np = phase_count(br.phases);
      if (br.admittance.rows() != np || br.admittance.cols() != np)
        throw PhaseMismatch("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                            ": admittance block shape disagrees with branch phases");
      if (!br.admittance.isApprox(br.admittance.transpose()))
        throw PhaseMismatch("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                            ": admittance block must be symmetric");
    }
  }
};

// Deterministic (bus, phase) -> row/column map: buses in ascending id order,
// phases in a<b<c order. State indices skip the source bus.
struct NodeIndex {
  std::vector<std::pair<int, int>> node_of;       // global -> (bus id, phase)
  std::map<std::pair<int, int>, int> global_of;   // (bus id, phase) -> global
  std::vector<int> state_of;                      // global -> state index, -1 at source
  std::vector<int> global_of_state;               // state -> global
  std::array<int, 3> source_global{};             // global rows of the source phases
  int n_total = 0;
  int n_state = 0;

  int global_index(int bus, int phase) const {
    auto it = global_of.find({bus, phase});
    if (it == global_of.end())
      throw UnknownCandidate("no (bus " + std::to_string(bus) + ", phase " +
                             std::string(1, static_cast<char>('a' + phase)) + ") in grid");
    return it->second;
  }

  int state_index(int bus, int phase) const {
    int s = state_of[global_index(bus, phase)];
    if (s < 0) throw UnknownCandidate("source phases carry no state index");
    return s;
  }
};

inline NodeIndex build_node_index(const GridModel& grid) {
  NodeIndex idx;
  std::vector<const Bus*> sorted;
  sorted.reserve(grid.buses.size());
  for (const auto& b : grid.buses) sorted.push_back(&b);
  std::sort(sorted.begin(), sorted.end(), [](const Bus* a, const Bus* b) { return a->id < b->id; });
  for (const Bus* b : sorted) {
    int src_slot = 0;
    for (int p : phase_list(b->phases)) {
      int g = static_cast<int>(idx.node_of.size());
      idx.node_of.emplace_back(b->id, p);
      idx.global_of[{b->id, p}] = g;
      if (b->kind == BusKind::source) {
        idx.state_of.push_back(-1);
        idx.source_global[src_slot++] = g;
      } else {
        idx.state_of.push_back(static_cast<int>(idx.global_of_state.size()));
        idx.global_of_state.push_back(g);
      }
    }
  }
  idx.n_total = static_cast<int>(idx.node_of.size());
  idx.n_state = static_cast<int>(idx.global_of_state.size());
  return idx;
}

struct AdmittanceMatrix {
  CMatrix y;        // (N+3) x (N+3), graph Laplacian of the weighted grid
  NodeIndex index;
  CMatrix y_ll;     // N x N non-source block
  CMatrix y_lsrc;   // N x 3 coupling of non-source rows to the source columns
  Eigen::PartialPivLU<CMatrix> lu_ll;
};

// Laplacian assembly: off-diagonal block (i,j) gets -w, the diagonal blocks
// accumulate w; both off-diagonal blocks are written from the same value so
// Y = Y^T holds exactly.
inline AdmittanceMatrix build_admittance(const GridModel& grid) {
  grid.validate();
  AdmittanceMatrix adm;
  adm.index = build_node_index(grid);
  const int n = adm.index.n_total;
  adm.y = CMatrix::Zero(n, n);
  for (const auto& br : grid.branches) {
    const auto ph = phase_list(br.phases);
    for (size_t a = 0; a < ph.size(); ++a) {
      for (size_t b = 0; b < ph.size(); ++b) {
        const Complex w = br.admittance(static_cast<int>(a), static_cast<int>(b));
        const int gi = adm.index.global_index(br.from, ph[a]);
        const int gj = adm.index.global_index(br.to, ph[b]);
        adm.y(gi, gj) -= w;
        adm.y(gj, gi) -= w;
        const int gib = adm.index.global_index(br.from, ph[b]);
        const int gjb = adm.index.global_index(br.to, ph[b]);
        adm.y(gi, gib) += w;
        adm.y(adm.index.global_index(br.to, ph[a]), gjb) += w;
      }
    }
  }
  const int ns = adm.index.n_state;
  adm.y_ll.resize(ns, ns);
  adm.y_lsrc.resize(ns, 3);
  for (int r = 0; r < ns; ++r) {
    const int gr = adm.index.global_of_state[r];
    for (int c = 0; c < ns; ++c) adm.y_ll(r, c) = adm.y(gr, adm.index.global_of_state[c]);
    for (int c = 0; c < 3; ++c) adm.y_lsrc(r, c) = adm.y(gr, adm.index.source_global[c]);
  }
  adm.lu_ll.compute(adm.y_ll);
  const RVector pivots = adm.lu_ll.matrixLU().diagonal().cwiseAbs();
  if (ns > 0 && pivots.minCoeff() < 1e-12 * pivots.maxCoeff())
    throw DisconnectedGrid("Y_LL is numerically singular; grid is disconnected");
  return adm;
}

struct FeederConfig {
  double zero_injection_frac = 0.2;
  double full_phase_frac = 0.5;    // chance a child bus inherits all parent phases
  double adm_mag_min = 10.0;       // per-unit siemens
  double adm_mag_max = 100.0;
  double adm_angle_min = 0.3;      // impedance angle, rad
  double adm_angle_max = 1.2;
  double coupling = 0.2;           // mutual/self admittance ratio between phases
  double load_mag_min = 1e-3;      // per-unit volt-amperes
  double load_mag_max = 1e-2;
  double load_angle_max = 0.45;    // power factor angle, rad
};

// Deterministic synthetic radial feeder rooted at bus 0 (the source).
inline GridModel generate_feeder(int n_bus, std::uint64_t seed, const FeederConfig& cfg = {}) {
  if (n_bus < 2) throw InvalidConfig("generate_feeder needs n_bus >= 2");
  if (cfg.adm_mag_min <= 0 || cfg.adm_mag_max < cfg.adm_mag_min)
    throw InvalidConfig("admittance magnitude range must be positive");
  if (cfg.load_mag_min < 0 || cfg.load_mag_max < cfg.load_mag_min)
    throw InvalidConfig("load magnitude range must be nonnegative");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  GridModel grid;
  grid.v_source = {Complex(1.0, 0.0), std::polar(1.0, -2.0 * M_PI / 3.0),
                   std::polar(1.0, 2.0 * M_PI / 3.0)};
  grid.buses.push_back(Bus{0, kAllPhases, BusKind::source, {}});

  for (int i = 1; i < n_bus; ++i) {
    const int parent =
        (i == 1) ? 0 : std::uniform_int_distribution<int>(0, i - 1)(rng);
    const PhaseMask parent_phases = grid.buses[parent].phases;

    PhaseMask phases = parent_phases;
    if (phase_count(parent_phases) > 1 && unit(rng) >= cfg.full_phase_frac) {
      const auto pl = phase_list(parent_phases);
      const int n_sub = (1 << pl.size()) - 1;  // nonempty subsets
      const int pick = std::uniform_int_distribution<int>(1, n_sub)(rng);
      phases = 0;
      for (size_t k = 0; k < pl.size(); ++k)
        if ((pick >> k) & 1) phases |= static_cast<PhaseMask>(1u << pl[k]);
    }

    Bus bus;
    bus.id = i;
    bus.phases = phases;
    bus.kind = unit(rng) < cfg.zero_injection_frac ? BusKind::zero_injection : BusKind::load;
    if (bus.kind == BusKind::load) {
      for (int p : phase_list(phases)) {
        const double mag =
            cfg.load_mag_min + (cfg.load_mag_max - cfg.load_mag_min) * unit(rng);
        const double ang = cfg.load_angle_max * unit(rng);
        bus.load[p] = -std::polar(mag, ang);  // consumption
      }
    }
    grid.buses.push_back(bus);

    Branch br;
    br.from = parent;
    br.to = i;
    br.phases = phases;
    const double ymag =
        cfg.adm_mag_min + (cfg.adm_mag_max - cfg.adm_mag_min) * unit(rng);
    const double zang =
        cfg.adm_angle_min + (cfg.adm_angle_max - cfg.adm_angle_min) * unit(rng);
    const Complex y_self = std::polar(ymag, -zang);
    const int np = phase_count(phases);
    br.admittance = CMatrix::Constant(np, np, cfg.coupling * y_self);
    br.admittance.diagonal().setConstant(y_self);
    grid.branches.push_back(std::move(br));
  }
  grid.validate();
  return grid;
}

}  // namespace pmuplace
