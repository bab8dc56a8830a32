#pragma once

#include <cstdint>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "pmuplace/grid.hpp"

namespace pmuplace {

enum class MeasKind { bus_voltage, bus_current, branch_current };

inline std::string to_string(MeasKind k) {
  switch (k) {
    case MeasKind::bus_voltage: return "bus_voltage";
    case MeasKind::bus_current: return "bus_current";
    case MeasKind::branch_current: return "branch_current";
  }
  return "?";
}

struct CandidateMeasurement {
  int id = 0;
  MeasKind kind = MeasKind::bus_voltage;
  int bus = 0;
  int phase = 0;
  int neighbor = -1;  // branch_current only: the far bus m of i -> m
  double cost = 1.0;
  double sigma_mag = 0.01;  // fraction
  double sigma_ang = 0.01;  // radians
};

// One row of C~_meas over the state indices, plus the known contribution of
// the source columns (subtracted from measurements, the state is V only).
struct MeasurementRow {
  std::vector<std::pair<int, Complex>> entries;
  Complex source_offset{0.0, 0.0};
};

inline MeasurementRow measurement_row(const GridModel& grid, const AdmittanceMatrix& adm,
                                      const CandidateMeasurement& cand) {
  MeasurementRow row;
  switch (cand.kind) {
    case MeasKind::bus_voltage: {
      row.entries.emplace_back(adm.index.state_index(cand.bus, cand.phase), Complex(1.0, 0.0));
      break;
    }
    case MeasKind::bus_current: {
      const int g = adm.index.global_index(cand.bus, cand.phase);
      if (adm.index.state_of[g] < 0)
        throw UnknownCandidate("bus_current candidate at the source bus");
      for (int c = 0; c < adm.index.n_total; ++c) {
        const Complex v = adm.y(g, c);
        if (v == Complex(0, 0)) continue;
        const int s = adm.index.state_of[c];
        if (s >= 0) {
          row.entries.emplace_back(s, v);
        } else {
          for (int p = 0; p < 3; ++p)
            if (adm.index.source_global[p] == c) row.source_offset += v * grid.v_source[p];
        }
      }
      break;
    }
    case MeasKind::branch_current: {
      const int gi = adm.index.global_index(cand.bus, cand.phase);
      if (adm.index.state_of[gi] < 0)
        throw UnknownCandidate("branch_current candidate tapped at the source bus");
      const int gm = adm.index.global_index(cand.neighbor, cand.phase);
      const Complex y = adm.y(gi, gm);
      if (y == Complex(0, 0))
        throw UnknownCandidate("no branch between bus " + std::to_string(cand.bus) + " and bus " +
                               std::to_string(cand.neighbor) + " on that phase");
      row.entries.emplace_back(adm.index.state_of[gi], y);
      const int sm = adm.index.state_of[gm];
      if (sm >= 0) {
        row.entries.emplace_back(sm, -y);
      } else {
        row.source_offset = -y * grid.v_source[cand.phase];
      }
      break;
    }
  }
  return row;
}

// (sigma_mag^2 + sigma_ang^2) |z|^2; the measured value must be away from zero.
inline double measurement_noise_variance(const CandidateMeasurement& cand, Complex z_value,
                                         double floor = 1e-6) {
  const double mag = std::abs(z_value);
  if (mag < floor)
    throw DegenerateMeasurement("candidate " + std::to_string(cand.id) +
                                ": predicted measurement magnitude below floor");
  return (cand.sigma_mag * cand.sigma_mag + cand.sigma_ang * cand.sigma_ang) * mag * mag;
}

struct CostRule {
  enum Kind { fixed, seeded_normal } kind = fixed;
  double value = 1.0;       // fixed
  double mean = 1.0;        // seeded_normal
  double stddev = 0.1;
  double floor = 0.1;       // normal draws truncated from below
  std::uint64_t seed = 0;
};

struct NoiseConfig {
  double sigma_mag = 0.01;
  double sigma_ang = 0.01;
  double sigma_psd = 0.5;
  double pred_floor = 1e-6;  // candidates predicted below this magnitude are dropped
};

struct KindFilter {
  bool bus_voltage = true;
  bool bus_current = true;
  bool branch_current = true;
};

struct CandidateSet {
  std::vector<CandidateMeasurement> candidates;
  SparseCMatrix c;           // n_x x N
  CVector offsets;           // known source contribution per row
  CVector z_pred;            // predicted measurement values (row * V_prior + offset)
  RVector cost;
  RVector sigma_meas_diag;   // diagonal of Sigma_meas
  double sigma_psd = 0.5;
  int n_excluded = 0;

  int size() const { return static_cast<int>(candidates.size()); }
};

// Flat profile: every (bus, phase) at the source phasor of its phase.
inline CVector flat_voltage(const GridModel& grid, const NodeIndex& idx) {
  CVector v(idx.n_state);
  for (int s = 0; s < idx.n_state; ++s)
    v(s) = grid.v_source[idx.node_of[idx.global_of_state[s]].second];
  return v;
}

// All candidate PMU measurements: one bus_voltage and one bus_current per
// non-source (bus, phase), one branch_current per directed branch-phase tapped
// at a non-source bus. Candidates whose predicted value falls below the
// magnitude floor are dropped (their noise weight would be singular).
inline CandidateSet enumerate_candidates(const GridModel& grid, const AdmittanceMatrix& adm,
                                         const CostRule& cost_rule = {},
                                         const NoiseConfig& noise = {},
                                         const KindFilter& filter = {},
                                         const CVector* v_prior = nullptr) {
  const CVector v = v_prior ? *v_prior : flat_voltage(grid, adm.index);

  std::vector<CandidateMeasurement> raw;
  std::vector<const Bus*> sorted;
  for (const auto& b : grid.buses)
    if (b.kind != BusKind::source) sorted.push_back(&b);
  std::sort(sorted.begin(), sorted.end(), [](const Bus* a, const Bus* b) { return a->id < b->id; });
  for (const Bus* b : sorted) {
    for (int p : phase_list(b->phases)) {
      if (filter.bus_voltage)
        raw.push_back({0, MeasKind::bus_voltage, b->id, p, -1, 1.0, noise.sigma_mag, noise.sigma_ang});
      if (filter.bus_current)
        raw.push_back({0, MeasKind::bus_current, b->id, p, -1, 1.0, noise.sigma_mag, noise.sigma_ang});
    }
  }
  if (filter.branch_current) {
    for (const auto& br : grid.branches) {
      for (auto [tap, far] : {std::pair{br.from, br.to}, std::pair{br.to, br.from}}) {
        if (grid.find_bus(tap)->kind == BusKind::source) continue;
        for (int p : phase_list(br.phases))
          raw.push_back({0, MeasKind::branch_current, tap, p, far, 1.0, noise.sigma_mag, noise.sigma_ang});
      }
    }
  }

  CandidateSet set;
  set.sigma_psd = noise.sigma_psd;
  std::vector<MeasurementRow> rows;
  for (auto& cand : raw) {
    MeasurementRow row = measurement_row(grid, adm, cand);
    Complex z = row.source_offset;
    for (const auto& [s, coef] : row.entries) z += coef * v(s);
    if (std::abs(z) < noise.pred_floor) {
      ++set.n_excluded;
      std::cerr << "warning: dropping " << to_string(cand.kind) << " candidate at bus "
                << cand.bus << " phase " << static_cast<char>('a' + cand.phase)
                << " (predicted magnitude " << std::abs(z) << " below floor)\n";
      continue;
    }
    cand.id = static_cast<int>(set.candidates.size());
    set.candidates.push_back(cand);
    rows.push_back(std::move(row));
    set.z_pred.conservativeResize(set.candidates.size());
    set.z_pred(set.candidates.size() - 1) = z;
  }

  const int n_x = set.size();
  set.offsets.resize(n_x);
  set.cost.resize(n_x);
  set.sigma_meas_diag.resize(n_x);
  std::mt19937_64 rng(cost_rule.seed);
  std::normal_distribution<double> normal(cost_rule.mean, cost_rule.stddev);
  std::vector<Eigen::Triplet<Complex>> trips;
  for (int i = 0; i < n_x; ++i) {
    set.offsets(i) = rows[i].source_offset;
    for (const auto& [s, coef] : rows[i].entries) trips.emplace_back(i, s, coef);
    set.cost(i) = cost_rule.kind == CostRule::fixed
                      ? cost_rule.value
                      : std::max(cost_rule.floor, normal(rng));
    set.sigma_meas_diag(i) = measurement_noise_variance(set.candidates[i], set.z_pred(i),
                                                        noise.pred_floor);
  }
  set.c.resize(n_x, adm.index.n_state);
  set.c.setFromTriplets(trips.begin(), trips.end());
  return set;
}

// z = z_true + diag(z_true)(w_mag + j w_ang), w ~ N(0, sigma I), per seed.
inline CVector apply_noise(const CVector& z_true, double sigma_mag, double sigma_ang,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  CVector z = z_true;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double wm = sigma_mag * gauss(rng);
    const double wa = sigma_ang * gauss(rng);
    z(i) += z_true(i) * Complex(wm, wa);
  }
  return z;
}

// Per-candidate sigma variant used by the Monte-Carlo validator.
inline CVector apply_noise(const CVector& z_true, const std::vector<CandidateMeasurement>& cands,
                           std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  CVector z = z_true;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double wm = cands[i].sigma_mag * gauss(rng);
    const double wa = cands[i].sigma_ang * gauss(rng);
    z(i) += z_true(i) * Complex(wm, wa);
  }
  return z;
}

inline void export_candidates(const CandidateSet& set, std::ostream& out) {
  out << "id\tkind\tbus\tphase\tneighbor\tcost\tsigma_mag\tsigma_ang\n";
  for (int i = 0; i < set.size(); ++i) {
    const auto& c = set.candidates[i];
    out << c.id << '\t' << to_string(c.kind) << '\t' << c.bus << '\t'
        << static_cast<char>('a' + c.phase) << '\t' << c.neighbor << '\t' << set.cost(i) << '\t'
        << c.sigma_mag << '\t' << c.sigma_ang << '\n';
  }
}

}  // namespace pmuplace
