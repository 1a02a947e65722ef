#pragma once

// JSON interfaces: routine documents, workload files, scenario files, run
// reports. Serialization uses ordered JSON and fixed field sets so identical
// runs produce identical bytes.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "rsim/core.hpp"
#include "rsim/engine.hpp"
#include "rsim/workload.hpp"

namespace rsim {

using Json = nlohmann::ordered_json;

inline std::string to_string(CommandKind k) {
  return k == CommandKind::Long ? "long" : "short";
}
inline std::string to_string(Necessity n) {
  return n == Necessity::Must ? "must" : "best_effort";
}

// --- routine documents --------------------------------------------------------

// Parses one routine document: {"name", "commands":[{"device", "target",
// "duration_ms", "kind"?, "necessity"?, "read"?}]}. Devices are referenced by
// name (or numeric id). Missing necessity defaults to must; missing kind is
// inferred from the duration.
inline Routine parse_routine(const Json& doc,
                             const std::vector<DeviceInfo>& devices,
                             Time short_bound_ms, RoutineId id = 0) {
  Routine r;
  r.id = id;
  r.name = doc.value("name", "");
  if (!doc.contains("commands") || !doc["commands"].is_array() ||
      doc["commands"].empty())
    throw std::runtime_error("routine has no commands");
  for (const auto& jc : doc["commands"]) {
    Command c;
    if (jc["device"].is_string()) {
      const std::string dname = jc["device"].get<std::string>();
      c.device = -1;
      for (const auto& d : devices)
        if (d.name == dname) c.device = d.id;
      if (c.device < 0)
        throw std::runtime_error("unknown device name: " + dname);
    } else {
      c.device = jc["device"].get<int>();
      if (c.device < 0 || c.device >= static_cast<int>(devices.size()))
        throw std::runtime_error("unknown device id");
    }
    c.target = jc.value("target", 0);
    c.duration_ms = jc.value("duration_ms", static_cast<Time>(0));
    if (c.duration_ms <= 0) throw std::runtime_error("non-positive duration");
    if (jc.contains("kind")) {
      const std::string k = jc["kind"].get<std::string>();
      if (k == "long")
        c.kind = CommandKind::Long;
      else if (k == "short")
        c.kind = CommandKind::Short;
      else
        throw std::runtime_error("bad command kind: " + k);
    } else {
      c.kind = kind_for_duration(c.duration_ms, short_bound_ms);
    }
    if (jc.contains("necessity")) {
      const std::string n = jc["necessity"].get<std::string>();
      if (n == "must")
        c.necessity = Necessity::Must;
      else if (n == "best_effort")
        c.necessity = Necessity::BestEffort;
      else
        throw std::runtime_error("bad necessity: " + n);
    }
    c.read = jc.value("read", false);
    r.commands.push_back(c);
  }
  return r;
}

inline Routine parse_routine(const std::string& text,
                             const std::vector<DeviceInfo>& devices,
                             Time short_bound_ms, RoutineId id = 0) {
  return parse_routine(Json::parse(text), devices, short_bound_ms, id);
}

// --- workload files --------------------------------------------------------------

inline Json workload_to_json(const Workload& w) {
  Json j;
  j["devices"] = Json::array();
  for (const auto& d : w.devices)
    j["devices"].push_back(
        Json{{"id", d.id}, {"name", d.name}, {"initial", d.initial}});
  j["routines"] = Json::array();
  for (const auto& r : w.routines) {
    Json jr{{"id", r.id}, {"name", r.name}, {"submit_time_ms", r.submit_time_ms}};
    jr["commands"] = Json::array();
    for (const auto& c : r.commands) {
      Json jc{{"device", c.device},
              {"target", c.target},
              {"duration_ms", c.duration_ms},
              {"kind", to_string(c.kind)},
              {"necessity", to_string(c.necessity)}};
      if (c.read) jc["read"] = true;
      jr["commands"].push_back(jc);
    }
    j["routines"].push_back(jr);
  }
  j["faults"] = Json::array();
  for (const auto& f : w.faults) {
    Json jf{{"device", f.device}, {"fail_at_ms", f.fail_at_ms}};
    if (f.restart_at_ms) jf["restart_at_ms"] = *f.restart_at_ms;
    j["faults"].push_back(jf);
  }
  if (w.injection == InjectionMode::ClosedLoop)
    j["injection"] = Json{{"mode", "closed_loop"}, {"rho", w.rho}};
  else
    j["injection"] = Json{{"mode", "explicit"}};
  return j;
}

inline Workload workload_from_json(const Json& j) {
  Workload w;
  for (const auto& jd : j.at("devices"))
    w.devices.push_back(DeviceInfo{jd.at("id").get<int>(),
                                   jd.value("name", ""),
                                   jd.value("initial", 0)});
  for (std::size_t i = 0; i < w.devices.size(); ++i)
    if (w.devices[i].id != static_cast<int>(i))
      throw std::runtime_error("device ids must be dense and ordered");
  for (const auto& jr : j.at("routines")) {
    Routine r;
    r.id = jr.at("id").get<int>();
    r.name = jr.value("name", "");
    r.submit_time_ms = jr.value("submit_time_ms", static_cast<Time>(0));
    if (!jr.contains("commands") || jr["commands"].empty())
      throw std::runtime_error("routine has no commands");
    for (const auto& jc : jr["commands"]) {
      Command c;
      c.device = jc.at("device").get<int>();
      if (c.device < 0 || c.device >= static_cast<int>(w.devices.size()))
        throw std::runtime_error("unknown device id");
      c.target = jc.value("target", 0);
      c.duration_ms = jc.at("duration_ms").get<Time>();
      if (c.duration_ms <= 0) throw std::runtime_error("non-positive duration");
      c.kind = jc.value("kind", "short") == "long" ? CommandKind::Long
                                                   : CommandKind::Short;
      c.necessity = jc.value("necessity", "must") == "best_effort"
                        ? Necessity::BestEffort
                        : Necessity::Must;
      c.read = jc.value("read", false);
      r.commands.push_back(c);
    }
    w.routines.push_back(std::move(r));
  }
  for (const auto& jf : j.value("faults", Json::array())) {
    FaultSpec f;
    f.device = jf.at("device").get<int>();
    f.fail_at_ms = jf.at("fail_at_ms").get<Time>();
    if (jf.contains("restart_at_ms"))
      f.restart_at_ms = jf["restart_at_ms"].get<Time>();
    w.faults.push_back(f);
  }
  if (j.contains("injection") && j["injection"].value("mode", "") == "closed_loop") {
    w.injection = InjectionMode::ClosedLoop;
    w.rho = j["injection"].value("rho", 1);
  }
  return w;
}

inline void save_workload(const Workload& w, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << workload_to_json(w).dump(2) << "\n";
}

inline Workload load_workload(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  Json j = Json::parse(in);
  return workload_from_json(j);
}

// --- scenario files ----------------------------------------------------------------

inline Scenario scenario_from_json(const Json& j) {
  Scenario sc;
  sc.name = j.value("name", "");
  sc.span_ms = j.at("span_ms").get<Time>();
  sc.probabilistic = j.value("mode", "fixed_once") == "probabilistic";
  for (const auto& jd : j.at("devices"))
    sc.devices.push_back(DeviceInfo{jd.at("id").get<int>(),
                                    jd.value("name", ""),
                                    jd.value("initial", 0)});
  for (const auto& jt : j.at("routines")) {
    ScenarioTemplate t;
    t.name = jt.at("name").get<std::string>();
    Routine parsed = parse_routine(jt, sc.devices, 60'000);
    t.commands = parsed.commands;
    for (const auto& a : jt.value("after", Json::array()))
      t.after.push_back(a.get<std::string>());
    t.copies = jt.value("copies", 1);
    sc.templates.push_back(std::move(t));
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return scenario_from_json(Json::parse(in));
}

// --- run reports ------------------------------------------------------------------

inline Json report_to_json(const RunResult& res, Model model,
                           SchedulerPolicy policy, std::uint64_t seed) {
  Json j;
  j["model"] = to_string(model);
  j["scheduler"] = to_string(policy);
  j["seed"] = seed;
  j["makespan_ms"] = res.makespan;
  j["order_consistent"] = res.order_consistent;
  j["end_states"] = Json::array();
  for (std::size_t d = 0; d < res.end_states.size(); ++d)
    j["end_states"].push_back(res.end_states[d]);
  j["serialization_order"] = Json::array();
  for (const auto& e : res.serialization_order) {
    Json je;
    switch (e.kind) {
      case OrderEntry::Kind::Routine:
        je = Json{{"routine", e.id}};
        break;
      case OrderEntry::Kind::Fail:
        je = Json{{"fail", e.device}, {"t", e.time}};
        break;
      case OrderEntry::Kind::Restart:
        je = Json{{"restart", e.device}, {"t", e.time}};
        break;
    }
    j["serialization_order"].push_back(je);
  }
  j["routines"] = Json::array();
  for (const auto& o : res.outcomes) {
    j["routines"].push_back(Json{{"id", o.id},
                                 {"committed", o.committed},
                                 {"aborted", o.aborted},
                                 {"submit_ms", o.submit},
                                 {"start_ms", o.start},
                                 {"finish_ms", o.finish},
                                 {"commands", o.commands},
                                 {"executed", o.executed},
                                 {"rolled_back", o.rolled_back}});
  }
  return j;
}

}  // namespace rsim
