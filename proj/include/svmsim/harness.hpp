#pragma once

// Sweep harness: the JSON config document, sweep execution across modes,
// configurations and intensities, the results CSV and the summary table.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "svmsim/system.hpp"

namespace svmsim::harness {

using nlohmann::json;

inline constexpr const char* kCsvVersion = "svmsim-results v1";
inline constexpr const char* kOutputDirEnv = "SVMSIM_OUTPUT_DIR";

/// One point of the configuration axis.
struct Setup {
  Mode mode = Mode::vdma;
  std::uint32_t workers = 7;
  std::uint32_t prefetchers = 0;
  std::uint32_t miss_handlers = 1;

  auto key() const { return std::tuple(static_cast<int>(mode), workers, prefetchers, miss_handlers); }
  bool operator==(const Setup& o) const { return key() == o.key(); }
  bool operator<(const Setup& o) const {
    const std::string a = to_string(mode), b = to_string(o.mode);
    if (a != b) return a < b;
    return std::tuple(workers, prefetchers, miss_handlers) < std::tuple(o.workers, o.prefetchers, o.miss_handlers);
  }
  std::string label() const {
    return std::to_string(workers) + "/" + std::to_string(prefetchers) + "/" + std::to_string(miss_handlers);
  }
};

struct Config {
  SimConfig sim;
  std::uint64_t seed = 1;
  std::string workload = "pc";
  PcSpec pc;
  SpSpec sp;
  std::uint32_t ideal_workers = 7;
  std::vector<Setup> setups;
  std::vector<double> intensities;
  std::string output = "results.csv";
  std::uint32_t threads = 0;  // 0: one per hardware thread
  json document;              // fully resolved, defaults included
};

inline std::vector<double> default_intensities() { return {0.25, 0.5, 1, 2, 4, 8, 16, 32, 64, 128}; }

inline std::vector<Setup> default_setups() {
  return {{Mode::soa, 7, 0, 1}, {Mode::vdma, 7, 0, 1}, {Mode::vdma, 6, 0, 2}, {Mode::vdma, 6, 1, 1},
          {Mode::vdma, 5, 1, 2}};
}

inline json to_json(const Setup& s) {
  return {{"mode", to_string(s.mode)},
          {"workers", s.workers},
          {"prefetchers", s.prefetchers},
          {"miss_handlers", s.miss_handlers}};
}

/// The complete document with every key at its default value. A user
/// document may only contain keys that appear here.
inline json defaults_document() {
  const SimConfig c;
  const PcSpec pc;
  const SpSpec sp;
  json setups = json::array();
  for (const auto& s : default_setups()) setups.push_back(to_json(s));
  return {
      {"seed", 1},
      {"time_limit", c.time_limit},
      {"latency",
       {{"l1_access", c.latency.l1_access},
        {"l2_spm_access", c.latency.l2_spm_access},
        {"dram_access", c.latency.dram_access},
        {"dram_gap_per_64b", c.latency.dram_gap_per_64b},
        {"tlb_l2_lookup", c.latency.tlb_l2_lookup},
        {"wake", c.latency.wake}}},
      {"tlb",
       {{"l1_entries", c.tlb.l1_entries},
        {"l2_sets", c.tlb.l2_sets},
        {"l2_ways", c.tlb.l2_ways},
        {"config_write", c.tlb.config_write}}},
      {"memory", {{"page_table_levels", c.mem.page_table_levels}, {"dram_bytes", c.mem.dram_bytes}}},
      {"dma",
       {{"max_in_flight", c.dma.max_in_flight},
        {"max_burst", c.dma.max_burst},
        {"max_command", c.dma.max_command},
        {"bus_bytes_per_cycle", c.dma.bus_bytes_per_cycle},
        {"command_issue", c.dma.command_issue}}},
      {"miss", {{"queue_capacity", c.miss.queue_capacity}}},
      {"pht",
       {{"min_distance", c.pht.min_distance},
        {"max_distance", c.pht.max_distance},
        {"poll_interval", c.pht.poll_interval}}},
      {"cluster", {{"pes", c.cluster.pes}, {"l1_bytes", c.cluster.l1_bytes}, {"ideal_workers", 7}}},
      {"workload",
       {{"kind", "pc"},
        {"pc",
         {{"vertices", pc.vertices},
          {"degree_min", pc.degree_min},
          {"degree_max", pc.degree_max},
          {"payload", pc.payload},
          {"topology", pc.topology}}},
        {"sp", {{"buffer_bytes", sp.buffer_bytes}, {"block_bytes", sp.block_bytes}}}}},
      {"sweep", {{"configurations", setups}, {"intensities", default_intensities()}}},
      {"output", "results.csv"},
      {"threads", 0},
  };
}

namespace detail {

inline const char* type_name(const json& j) {
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  return j.type_name();
}

inline bool same_kind(const json& def, const json& v) {
  if (def.is_number_integer()) return v.is_number_unsigned();
  if (def.is_number()) return v.is_number();
  return def.type() == v.type();
}

inline void merge(json& into, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError(path.empty() ? "config must be an object" : path + ": expected an object");
  for (const auto& [k, v] : user.items()) {
    const std::string p = path.empty() ? k : path + "." + k;
    if (!into.contains(k)) throw ConfigError("unknown key '" + p + "'");
    json& slot = into[k];
    if (slot.is_object()) {
      merge(slot, v, p);
    } else {
      if (!same_kind(slot, v))
        throw ConfigError(p + ": expected " + (slot.is_number_integer() ? std::string("non-negative integer")
                                                                         : std::string(type_name(slot))) +
                          ", got " + type_name(v));
      slot = v;
    }
  }
}

inline Setup parse_setup(const json& j, std::size_t index) {
  const std::string p = "sweep.configurations[" + std::to_string(index) + "]";
  if (!j.is_object()) throw ConfigError(p + ": expected an object");
  Setup s;
  for (const auto& [k, v] : j.items()) {
    if (k == "mode") {
      if (!v.is_string()) throw ConfigError(p + ".mode: expected string");
      s.mode = mode_from_string(v.get<std::string>());
    } else if (k == "workers" || k == "prefetchers" || k == "miss_handlers") {
      if (!v.is_number_unsigned()) throw ConfigError(p + "." + k + ": expected non-negative integer");
      const auto n = v.get<std::uint32_t>();
      (k == "workers" ? s.workers : k == "prefetchers" ? s.prefetchers : s.miss_handlers) = n;
    } else {
      throw ConfigError("unknown key '" + p + "." + k + "'");
    }
  }
  if (!j.contains("mode")) throw ConfigError(p + ": missing 'mode'");
  if (s.mode == Mode::ideal) s.prefetchers = s.miss_handlers = 0;
  if (s.mode == Mode::soa && (s.prefetchers != 0 || s.miss_handlers != 1))
    throw ConfigError(p + ": soa mode requires prefetchers = 0 and miss_handlers = 1");
  return s;
}

template <class T>
T get(const json& doc, const char* a, const char* b) {
  return doc.at(a).at(b).get<T>();
}

}  // namespace detail

/// Builds a config from a user document (possibly empty) and overrides of
/// the form dotted.key=value, where value is JSON or a bare string.
inline Config load(const json& user, const std::vector<std::string>& overrides = {}) {
  json doc = defaults_document();
  detail::merge(doc, user, "");
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    const std::string key = o.substr(0, eq), text = o.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json patch = value;
    std::string rest = key;
    std::vector<std::string> parts;
    for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
      parts.push_back(rest.substr(0, pos));
    parts.push_back(rest);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
    detail::merge(doc, patch, "");
  }

  Config c;
  c.document = doc;
  using detail::get;
  auto& s = c.sim;
  s.latency.l1_access = get<Cycles>(doc, "latency", "l1_access");
  s.latency.l2_spm_access = get<Cycles>(doc, "latency", "l2_spm_access");
  s.latency.dram_access = get<Cycles>(doc, "latency", "dram_access");
  s.latency.dram_gap_per_64b = get<Cycles>(doc, "latency", "dram_gap_per_64b");
  s.latency.tlb_l2_lookup = get<Cycles>(doc, "latency", "tlb_l2_lookup");
  s.latency.wake = get<Cycles>(doc, "latency", "wake");
  s.tlb.l1_entries = get<std::uint32_t>(doc, "tlb", "l1_entries");
  s.tlb.l2_sets = get<std::uint32_t>(doc, "tlb", "l2_sets");
  s.tlb.l2_ways = get<std::uint32_t>(doc, "tlb", "l2_ways");
  s.tlb.config_write = get<Cycles>(doc, "tlb", "config_write");
  s.mem.page_table_levels = get<std::uint32_t>(doc, "memory", "page_table_levels");
  s.mem.dram_bytes = get<std::uint64_t>(doc, "memory", "dram_bytes");
  s.dma.max_in_flight = get<std::uint32_t>(doc, "dma", "max_in_flight");
  s.dma.max_burst = get<std::uint32_t>(doc, "dma", "max_burst");
  s.dma.max_command = get<std::uint32_t>(doc, "dma", "max_command");
  s.dma.bus_bytes_per_cycle = get<std::uint32_t>(doc, "dma", "bus_bytes_per_cycle");
  s.dma.command_issue = get<Cycles>(doc, "dma", "command_issue");
  s.miss.queue_capacity = get<std::uint32_t>(doc, "miss", "queue_capacity");
  s.pht.min_distance = get<std::uint32_t>(doc, "pht", "min_distance");
  s.pht.max_distance = get<std::uint32_t>(doc, "pht", "max_distance");
  s.pht.poll_interval = get<Cycles>(doc, "pht", "poll_interval");
  s.cluster.pes = get<std::uint32_t>(doc, "cluster", "pes");
  s.cluster.l1_bytes = get<std::uint32_t>(doc, "cluster", "l1_bytes");
  s.time_limit = doc.at("time_limit").get<SimTime>();
  c.ideal_workers = get<std::uint32_t>(doc, "cluster", "ideal_workers");
  c.seed = doc.at("seed").get<std::uint64_t>();
  c.output = doc.at("output").get<std::string>();
  c.threads = doc.at("threads").get<std::uint32_t>();

  const json& w = doc.at("workload");
  c.workload = w.at("kind").get<std::string>();
  if (c.workload != "pc" && c.workload != "sp") throw ConfigError("workload.kind must be 'pc' or 'sp'");
  c.pc.vertices = get<std::uint32_t>(w, "pc", "vertices");
  c.pc.degree_min = get<std::uint32_t>(w, "pc", "degree_min");
  c.pc.degree_max = get<std::uint32_t>(w, "pc", "degree_max");
  c.pc.payload = get<std::uint32_t>(w, "pc", "payload");
  c.pc.topology = get<std::string>(w, "pc", "topology");
  c.pc.seed = c.seed;
  c.sp.buffer_bytes = get<std::uint64_t>(w, "sp", "buffer_bytes");
  c.sp.block_bytes = get<std::uint32_t>(w, "sp", "block_bytes");
  c.sp.seed = c.seed;

  const json& sw = doc.at("sweep");
  if (!sw.at("configurations").is_array() || sw.at("configurations").empty())
    throw ConfigError("sweep.configurations must be a non-empty array");
  for (std::size_t i = 0; i < sw.at("configurations").size(); ++i)
    c.setups.push_back(detail::parse_setup(sw.at("configurations")[i], i));
  if (sw.at("intensities").empty()) throw ConfigError("sweep.intensities must be a non-empty array");
  for (const auto& v : sw.at("intensities")) {
    if (!v.is_number() || v.get<double>() < 0) throw ConfigError("sweep.intensities: expected non-negative numbers");
    c.intensities.push_back(v.get<double>());
  }

  // Every setup must form a valid machine and workload; fail before running anything.
  for (const auto& st : c.setups) {
    SimConfig sc = c.sim;
    sc.mode = st.mode;
    sc.cluster.workers = st.workers;
    sc.cluster.prefetchers = st.prefetchers;
    sc.cluster.miss_handlers = st.miss_handlers;
    sc.validate();
    if (c.workload == "pc") validate(c.pc, sc);
    else validate(c.sp, sc);
  }
  if (c.ideal_workers == 0) throw ConfigError("cluster.ideal_workers must be >= 1");
  return c;
}

inline Config load_file(const std::string& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json user = json::parse(in, nullptr, false, true);
  if (user.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
  return load(user, overrides);
}

inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Hash of everything that determines a row's result except the intensity.
inline std::string config_hash(const Config& c, const Setup& s) {
  json d = c.document;
  d.erase("output");
  d.erase("threads");
  d["sweep"].erase("intensities");
  d["sweep"].erase("configurations");
  d["setup"] = to_json(s);
  return fnv1a_hex(d.dump());
}

struct Row {
  std::string hash;
  Setup setup;
  double intensity = 0;
  RunMetrics metrics;
  double relative = 0;  // ideal elapsed / elapsed; 0 for failed points
  std::optional<double> optimum;
};

inline rt::Word milli_of(double intensity) { return static_cast<rt::Word>(std::llround(intensity * 1000)); }

inline RunMetrics run_point(const Config& c, const Setup& s, double intensity) {
  SimConfig sc = c.sim;
  sc.mode = s.mode;
  sc.cluster.workers = s.workers;
  sc.cluster.prefetchers = s.prefetchers;
  sc.cluster.miss_handlers = s.miss_handlers;
  System sys(sc, c.seed);
  const WorkloadInstance w =
      c.workload == "pc" ? gen_pc(c.pc, sc, sys.address_space()) : gen_sp(c.sp, sc, sys.address_space());
  return sys.run(w, milli_of(intensity));
}

inline Setup ideal_reference(const Config& c) { return Setup{Mode::ideal, c.ideal_workers, 0, 0}; }

/// Runs every configured setup plus the ideal reference at every intensity.
/// Rows come back in canonical order: mode, then WT/PHT/MHT, then intensity.
inline std::vector<Row> run_sweep(const Config& c) {
  std::vector<Setup> setups = c.setups;
  setups.push_back(ideal_reference(c));
  std::sort(setups.begin(), setups.end());
  setups.erase(std::unique(setups.begin(), setups.end()), setups.end());
  std::vector<double> grid = c.intensities;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  struct Job {
    Setup s;
    double intensity;
    RunMetrics m;
  };
  std::vector<Job> jobs;
  for (const auto& s : setups)
    for (double i : grid) jobs.push_back(Job{s, i, {}});

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) jobs[j].m = run_point(c, jobs[j].s, jobs[j].intensity);
  };
  std::uint32_t n = c.threads ? c.threads : std::max(1u, std::thread::hardware_concurrency());
  n = static_cast<std::uint32_t>(std::min<std::size_t>(n, jobs.size()));
  std::vector<std::thread> pool;
  for (std::uint32_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::map<double, SimTime> ideal;
  const Setup ref = ideal_reference(c);
  for (const auto& j : jobs)
    if (j.s == ref && j.m.ok) ideal[j.intensity] = j.m.elapsed;

  std::vector<Row> rows;
  for (const auto& j : jobs) {
    if (std::find(c.setups.begin(), c.setups.end(), j.s) == c.setups.end()) continue;
    Row r;
    r.hash = config_hash(c, j.s);
    r.setup = j.s;
    r.intensity = j.intensity;
    r.metrics = j.m;
    if (j.m.ok && j.m.elapsed > 0 && ideal.count(j.intensity))
      r.relative = static_cast<double>(ideal[j.intensity]) / static_cast<double>(j.m.elapsed);
    rows.push_back(std::move(r));
  }
  std::map<double, double> best;
  for (const auto& r : rows)
    if (r.setup.mode == Mode::vdma && r.metrics.ok)
      best[r.intensity] = std::max(best[r.intensity], r.relative);
  for (auto& r : rows)
    if (best.count(r.intensity)) r.optimum = best[r.intensity];
  return rows;
}

inline const char* kCsvColumns =
    "config_hash,workload,mode,wt,pht,mht,intensity,elapsed_cycles,relative_perf,misses,walks,dedup_hits,"
    "prefetch_hits,prefetch_misses,drain_stall_cycles,status,optimum";

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline void write_csv(std::ostream& os, const std::string& workload, const std::vector<Row>& rows) {
  os << "# " << kCsvVersion << "\n" << kCsvColumns << "\n";
  char rel[32];
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    std::snprintf(rel, sizeof rel, "%.6f", r.relative);
    os << r.hash << ',' << workload << ',' << to_string(r.setup.mode) << ',' << r.setup.workers << ','
       << r.setup.prefetchers << ',' << r.setup.miss_handlers << ',' << format_number(r.intensity) << ','
       << m.elapsed << ',' << rel << ',' << m.misses << ',' << m.walks << ',' << m.dedup << ',' << m.prefetch_hits
       << ',' << m.prefetch_misses << ',' << m.drain_stall_cycles << ',' << m.status << ',';
    if (r.optimum) {
      std::snprintf(rel, sizeof rel, "%.6f", *r.optimum);
      os << rel;
    }
    os << '\n';
  }
}

/// Where the CSV goes: the configured path, with its directory replaced by
/// the override directory when one is given.
inline std::filesystem::path output_path(const Config& c, const char* dir_override) {
  std::filesystem::path p = c.output;
  if (dir_override && *dir_override) p = std::filesystem::path(dir_override) / p.filename();
  return p;
}

/// Per intensity and mode, the configuration with the highest relative
/// performance.
inline void write_summary(std::ostream& os, const std::vector<Row>& rows) {
  std::vector<std::string> modes;
  for (const auto& r : rows)
    if (std::find(modes.begin(), modes.end(), to_string(r.setup.mode)) == modes.end())
      modes.push_back(to_string(r.setup.mode));
  std::map<double, std::map<std::string, const Row*>> best;
  for (const auto& r : rows) {
    const Row*& b = best[r.intensity][to_string(r.setup.mode)];
    if (!b || r.relative > b->relative) b = &r;
  }
  char cell[64];
  std::snprintf(cell, sizeof cell, "%-10s", "intensity");
  os << cell;
  for (const auto& m : modes) {
    std::snprintf(cell, sizeof cell, "  %-16s", m.c_str());
    os << cell;
  }
  os << '\n';
  for (const auto& [i, per_mode] : best) {
    std::snprintf(cell, sizeof cell, "%-10s", format_number(i).c_str());
    os << cell;
    for (const auto& m : modes) {
      auto it = per_mode.find(m);
      if (it == per_mode.end()) {
        std::snprintf(cell, sizeof cell, "  %-16s", "-");
      } else {
        const std::string text = it->second->setup.label() + " " + format_number(it->second->relative);
        std::snprintf(cell, sizeof cell, "  %-16s", text.c_str());
      }
      os << cell;
    }
    os << '\n';
  }
}

}  // namespace svmsim::harness
