#include "fedkd/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fedkd/error.hpp"

namespace fedkd {
namespace {

using nlohmann::json;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json metrics_json(const EvalMetrics& m) {
  json per_class = json::array();
  for (const auto& c : m.per_class) {
    per_class.push_back({{"class", c.class_index},
                         {"name", c.class_index < kClassNames.size() ? std::string(kClassNames[c.class_index])
                                                                     : std::to_string(c.class_index)},
                         {"support", c.support},
                         {"precision", c.precision},
                         {"recall", c.recall},
                         {"f1", c.f1},
                         {"zero_predictions", c.zero_predictions},
                         {"zero_support", c.zero_support}});
  }
  return {{"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"averaging", m.averaging == Averaging::Macro ? "macro" : "weighted"},
          {"per_class", per_class},
          {"warnings", m.warnings}};
}

json comm_json(const CommMetrics& c) {
  return {{"c_to_s_avg", c.c_to_s_avg},
          {"s_to_c_avg", c.s_to_c_avg},
          {"total_bytes_up", c.total_bytes_up},
          {"total_bytes_down", c.total_bytes_down},
          {"cloud_bytes_up", c.cloud_bytes_up},
          {"cloud_messages_up", c.cloud_messages_up},
          {"cloud_messages_down", c.cloud_messages_down},
          {"messages", c.messages},
          {"cloud_floats_read", c.cloud_floats_read},
          {"round_span", c.round_span},
          {"peak_buffer_bytes", c.peak_buffer_bytes},
          {"wall", {{"agg_time", c.agg_time}, {"agg_by_node", c.agg_wall_by_node}}}};
}

json timing_json(const InferenceTiming& t) {
  return {{"mean_seconds", t.mean_seconds}, {"batch_size", t.batch_size}, {"repetitions", t.repetitions}};
}

// Problem collector for validate_report.
struct Checker {
  std::vector<std::string>& problems;

  const json* field(const json& obj, const std::string& where, const char* key) {
    if (!obj.is_object() || !obj.contains(key)) {
      problems.push_back(where + ": missing '" + key + "'");
      return nullptr;
    }
    return &obj.at(key);
  }
  void number(const json& obj, const std::string& where, const char* key) {
    if (const json* v = field(obj, where, key); v && !v->is_number()) {
      problems.push_back(where + "." + key + ": expected a number");
    }
  }
  void unsigned_int(const json& obj, const std::string& where, const char* key) {
    if (const json* v = field(obj, where, key); v && !v->is_number_unsigned()) {
      problems.push_back(where + "." + key + ": expected a non-negative integer");
    }
  }
  void fraction(const json& obj, const std::string& where, const char* key) {
    if (const json* v = field(obj, where, key)) {
      if (!v->is_number() || v->get<double>() < 0.0 || v->get<double>() > 1.0) {
        problems.push_back(where + "." + key + ": expected a number in [0, 1]");
      }
    }
  }
  void kind(const json& obj, const std::string& where, const char* key, json::value_t t) {
    if (const json* v = field(obj, where, key); v && v->type() != t) {
      problems.push_back(where + "." + key + ": expected " + json(t).type_name());
    }
  }
  void metrics(const json& m, const std::string& where) {
    if (!m.is_object()) {
      problems.push_back(where + ": expected an object");
      return;
    }
    for (const char* k : {"accuracy", "precision", "recall", "f1"}) fraction(m, where, k);
    kind(m, where, "averaging", json::value_t::string);
    if (const json* pc = field(m, where, "per_class")) {
      if (!pc->is_array()) {
        problems.push_back(where + ".per_class: expected an array");
      } else {
        for (std::size_t i = 0; i < pc->size(); ++i) {
          const std::string w = where + ".per_class[" + std::to_string(i) + "]";
          unsigned_int((*pc)[i], w, "class");
          unsigned_int((*pc)[i], w, "support");
          for (const char* k : {"precision", "recall", "f1"}) fraction((*pc)[i], w, k);
        }
      }
    }
  }
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string render() const {
    std::vector<std::size_t> width(header.size(), 0);
    for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t c = 0; c < width.size(); ++c) {
        const std::string& s = c < cells.size() ? cells[c] : std::string();
        if (c == 0) {
          os << s << std::string(width[c] - s.size(), ' ');
        } else {
          os << "  " << std::string(width[c] - s.size(), ' ') << s;
        }
      }
      os << '\n';
    };
    line(header);
    std::size_t total = 0;
    for (auto w : width) total += w;
    os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    for (const auto& r : rows) line(r);
    return os.str();
  }
};

std::string pct(double fraction) { return fmt("%.2f", 100.0 * fraction); }
std::string ms(double seconds) { return fmt("%.3f", 1e3 * seconds); }

std::string alpha_text(double alpha) { return fmt("%g", alpha); }

std::string mode_text(TopologyMode mode) {
  return mode == TopologyMode::Hierarchical ? "Hierarchical" : "Centralised";
}

}  // namespace

json report_to_json(const ExperimentReport& rep, const RunConfig& run) {
  RunConfig echo = run;
  echo.experiment = rep.config;
  json rounds = json::array();
  for (const auto& r : rep.rounds) {
    json aggs = json::array();
    for (const auto& a : r.aggregations) {
      aggs.push_back({{"node", a.node.to_string()}, {"inputs", a.inputs}, {"floats_read", a.floats_read}});
    }
    rounds.push_back({{"round", r.round},
                      {"evaluated", r.metrics.has_value()},
                      {"metrics", r.metrics ? metrics_json(*r.metrics) : json(nullptr)},
                      {"updates_sent", r.updates_sent},
                      {"global_aggregations", r.global_aggregations},
                      {"mean_train_loss", r.mean_train_loss},
                      {"aggregations", aggs},
                      {"comm", comm_json(r.comm)},
                      {"warnings", r.warnings},
                      {"wall", {{"train_seconds", r.train_wall_seconds}}}});
  }
  json history = json::array();
  for (const auto& [round, acc] : rep.accuracy_history) history.push_back({{"round", round}, {"accuracy", acc}});
  const auto& t = rep.comm;
  json doc = {
      {"schema", "fedkd-report/1"},
      {"label", rep.label},
      {"seed", rep.config.seed},
      {"config", config_to_json(echo)},
      {"data_hash", hex64(rep.data_hash)},
      {"model",
       {{"student_params", rep.student_params},
        {"teacher_params", rep.teacher_params},
        {"update_bytes", rep.update_bytes}}},
      {"teacher",
       {{"trained", rep.teacher.trained},
        {"epochs_run", rep.teacher.epochs_run},
        {"best_validation_accuracy", rep.teacher.best_validation_accuracy},
        {"validation_rows", rep.teacher.validation_rows}}},
      {"teacher_init",
       {{"messages", rep.teacher_init.messages}, {"bytes", rep.teacher_init.bytes}, {"span", rep.teacher_init.span}}},
      {"rounds", rounds},
      {"accuracy_history", history},
      {"rounds_to_threshold", rep.rounds_to_threshold ? json(*rep.rounds_to_threshold) : json(nullptr)},
      {"final_metrics", metrics_json(rep.final_metrics)},
      {"comm_totals",
       {{"bytes_up", t.bytes_up},
        {"bytes_down", t.bytes_down},
        {"cloud_bytes_up", t.cloud_bytes_up},
        {"cloud_messages_up", t.cloud_messages_up},
        {"cloud_messages_down", t.cloud_messages_down},
        {"messages", t.messages},
        {"mean_c_to_s", t.mean_c_to_s},
        {"mean_s_to_c", t.mean_s_to_c},
        {"peak_cloud_buffer", t.peak_cloud_buffer},
        {"peak_edge_buffer", t.peak_edge_buffer},
        {"wall", {{"mean_agg_time", t.mean_agg_time}}}}},
      {"trace_messages", rep.trace.size()},
      {"wall",
       {{"total_seconds", rep.wall_seconds},
        {"student_inference", timing_json(rep.student_inference)},
        {"teacher_inference", rep.teacher_inference ? timing_json(*rep.teacher_inference) : json(nullptr)}}}};
  return doc;
}

std::vector<std::string> validate_report(const json& doc) {
  std::vector<std::string> problems;
  Checker ck{problems};
  if (!doc.is_object()) return {"report: expected an object"};
  if (const json* s = ck.field(doc, "report", "schema"); s && *s != "fedkd-report/1") {
    problems.push_back("report.schema: expected \"fedkd-report/1\"");
  }
  ck.kind(doc, "report", "label", json::value_t::string);
  ck.unsigned_int(doc, "report", "seed");
  ck.kind(doc, "report", "config", json::value_t::object);
  ck.kind(doc, "report", "data_hash", json::value_t::string);
  if (const json* m = ck.field(doc, "report", "model")) {
    for (const char* k : {"student_params", "teacher_params", "update_bytes"}) ck.unsigned_int(*m, "model", k);
  }
  ck.kind(doc, "report", "teacher", json::value_t::object);
  ck.kind(doc, "report", "teacher_init", json::value_t::object);
  if (const json* rounds = ck.field(doc, "report", "rounds")) {
    if (!rounds->is_array() || rounds->empty()) {
      problems.push_back("report.rounds: expected a non-empty array");
    } else {
      std::uint64_t expected = 1;
      for (std::size_t i = 0; i < rounds->size(); ++i, ++expected) {
        const json& r = (*rounds)[i];
        const std::string w = "rounds[" + std::to_string(i) + "]";
        ck.unsigned_int(r, w, "round");
        if (r.contains("round") && r["round"].is_number_unsigned() && r["round"].get<std::uint64_t>() != expected) {
          problems.push_back(w + ".round: expected " + std::to_string(expected));
        }
        ck.kind(r, w, "evaluated", json::value_t::boolean);
        if (const json* m = ck.field(r, w, "metrics"); m && !m->is_null()) ck.metrics(*m, w + ".metrics");
        ck.unsigned_int(r, w, "updates_sent");
        if (const json* c = ck.field(r, w, "comm")) {
          for (const char* k : {"c_to_s_avg", "s_to_c_avg", "round_span"}) ck.number(*c, w + ".comm", k);
          for (const char* k : {"total_bytes_up", "total_bytes_down", "cloud_bytes_up", "cloud_messages_up",
                                "cloud_messages_down", "messages"}) {
            ck.unsigned_int(*c, w + ".comm", k);
          }
        }
      }
    }
  }
  ck.kind(doc, "report", "accuracy_history", json::value_t::array);
  if (const json* f = ck.field(doc, "report", "final_metrics")) ck.metrics(*f, "final_metrics");
  if (const json* c = ck.field(doc, "report", "comm_totals")) {
    for (const char* k : {"bytes_up", "bytes_down", "cloud_bytes_up", "messages"}) ck.unsigned_int(*c, "comm_totals", k);
  }
  ck.unsigned_int(doc, "report", "trace_messages");
  ck.kind(doc, "report", "wall", json::value_t::object);
  return problems;
}

json strip_wall(const json& doc) {
  if (doc.is_object()) {
    json out = json::object();
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      if (it.key() != "wall") out[it.key()] = strip_wall(it.value());
    }
    return out;
  }
  if (doc.is_array()) {
    json out = json::array();
    for (const auto& e : doc) out.push_back(strip_wall(e));
    return out;
  }
  return doc;
}

std::string render_text(const ExperimentReport& rep) {
  std::ostringstream os;
  os << "scenario: " << rep.label << "  seed " << rep.config.seed << "  rounds " << rep.config.rounds
     << "  data " << hex64(rep.data_hash) << "\n";
  os << "student " << rep.student_params << " params (" << rep.update_bytes << " B/update), teacher "
     << rep.teacher_params << " params";
  if (rep.teacher.trained) {
    os << ", trained " << rep.teacher.epochs_run << " epochs, val acc "
       << pct(rep.teacher.best_validation_accuracy) << "%";
  }
  os << "\n\n";

  Table rounds{{"round", "acc %", "prec", "recall", "f1", "loss", "C->S ms", "S->C ms", "bytes up",
                "cloud bytes up", "cloud msgs", "agg us (wall)"},
               {}};
  for (const auto& r : rep.rounds) {
    std::vector<std::string> row{std::to_string(r.round)};
    if (r.metrics) {
      row.push_back(pct(r.metrics->accuracy));
      row.push_back(fmt("%.4f", r.metrics->precision));
      row.push_back(fmt("%.4f", r.metrics->recall));
      row.push_back(fmt("%.4f", r.metrics->f1));
    } else {
      row.insert(row.end(), {"-", "-", "-", "-"});
    }
    row.push_back(fmt("%.4f", r.mean_train_loss));
    row.push_back(ms(r.comm.c_to_s_avg));
    row.push_back(ms(r.comm.s_to_c_avg));
    row.push_back(std::to_string(r.comm.total_bytes_up));
    row.push_back(std::to_string(r.comm.cloud_bytes_up));
    row.push_back(std::to_string(r.comm.cloud_messages_up));
    row.push_back(fmt("%.1f", 1e6 * r.comm.agg_time));
    rounds.rows.push_back(std::move(row));
  }
  os << rounds.render() << "\n";

  Table classes{{"class", "precision", "recall", "f1", "support"}, {}};
  for (const auto& c : rep.final_metrics.per_class) {
    classes.rows.push_back({std::string(kClassNames.at(c.class_index)), fmt("%.4f", c.precision),
                            fmt("%.4f", c.recall), fmt("%.4f", c.f1), std::to_string(c.support)});
  }
  const char* avg = rep.final_metrics.averaging == Averaging::Macro ? "macro avg" : "weighted avg";
  classes.rows.push_back({avg, fmt("%.4f", rep.final_metrics.precision), fmt("%.4f", rep.final_metrics.recall),
                          fmt("%.4f", rep.final_metrics.f1), ""});
  os << classes.render() << "\n";

  os << "final accuracy " << pct(rep.final_metrics.accuracy) << "%";
  if (rep.rounds_to_threshold) {
    os << ", reached " << pct(rep.config.accuracy_threshold) << "% at round " << *rep.rounds_to_threshold;
  } else {
    os << ", never reached " << pct(rep.config.accuracy_threshold) << "%";
  }
  os << "\n";
  os << "student inference " << ms(rep.student_inference.mean_seconds) << " ms per batch of "
     << rep.student_inference.batch_size;
  if (rep.teacher_inference) os << ", teacher " << ms(rep.teacher_inference->mean_seconds) << " ms";
  os << "\n";
  std::vector<std::string> warnings = rep.final_metrics.warnings;
  for (const auto& r : rep.rounds) warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
  for (const auto& w : warnings) os << "warning: " << w << "\n";
  return os.str();
}

std::string rounds_csv(const ExperimentReport& rep) {
  std::ostringstream os;
  os << "round,evaluated,accuracy,precision,recall,f1,mean_train_loss,c_to_s,s_to_c,total_bytes_up,"
        "total_bytes_down,cloud_bytes_up,cloud_messages_up,cloud_messages_down,peak_cloud_buffer,agg_time_wall\n";
  os.precision(10);
  for (const auto& r : rep.rounds) {
    os << r.round << ',' << (r.metrics ? 1 : 0) << ',';
    if (r.metrics) {
      os << r.metrics->accuracy << ',' << r.metrics->precision << ',' << r.metrics->recall << ',' << r.metrics->f1;
    } else {
      os << ",,,";
    }
    const auto peak = r.comm.peak_buffer_bytes.find("cloud");
    os << ',' << r.mean_train_loss << ',' << r.comm.c_to_s_avg << ',' << r.comm.s_to_c_avg << ','
       << r.comm.total_bytes_up << ',' << r.comm.total_bytes_down << ',' << r.comm.cloud_bytes_up << ','
       << r.comm.cloud_messages_up << ',' << r.comm.cloud_messages_down << ','
       << (peak == r.comm.peak_buffer_bytes.end() ? 0 : peak->second) << ',' << r.comm.agg_time << '\n';
  }
  return os.str();
}

std::string trace_csv(const ExperimentReport& rep) {
  std::ostringstream os;
  write_trace_csv(os, rep.trace);
  return os.str();
}

std::string comparison_table(std::span<const ExperimentReport> reports) {
  Table t{{"scenario", "alpha", "C->S ms", "S->C ms", "agg ms (wall)", "cloud bytes up/round",
           "bytes/round", "cloud msgs up/round", "peak cloud buffer B", "final acc %"},
          {}};
  for (const auto& r : reports) {
    const double n = r.rounds.empty() ? 1.0 : static_cast<double>(r.rounds.size());
    t.rows.push_back({mode_text(r.config.topology.mode), alpha_text(r.config.distill.alpha), ms(r.comm.mean_c_to_s),
                      ms(r.comm.mean_s_to_c), fmt("%.4f", 1e3 * r.comm.mean_agg_time),
                      fmt("%.0f", static_cast<double>(r.comm.cloud_bytes_up) / n),
                      fmt("%.0f", static_cast<double>(r.comm.bytes_up + r.comm.bytes_down) / n),
                      fmt("%.0f", static_cast<double>(r.comm.cloud_messages_up) / n),
                      std::to_string(r.comm.peak_cloud_buffer), pct(r.final_metrics.accuracy)});
  }
  return t.render();
}

std::string kd_impact_table(std::span<const ExperimentReport> reports) {
  Table t{{"mode", "alpha", "accuracy %", "precision", "recall", "f1", "rounds to threshold",
           "student infer ms"},
          {}};
  for (const auto& r : reports) {
    t.rows.push_back({mode_text(r.config.topology.mode), alpha_text(r.config.distill.alpha),
                      pct(r.final_metrics.accuracy), fmt("%.4f", r.final_metrics.precision),
                      fmt("%.4f", r.final_metrics.recall), fmt("%.4f", r.final_metrics.f1),
                      r.rounds_to_threshold ? std::to_string(*r.rounds_to_threshold) : std::string("-"),
                      ms(r.student_inference.mean_seconds)});
  }
  return t.render();
}

std::string scenario_slug(const ExperimentReport& r) {
  return (r.config.topology.mode == TopologyMode::Hierarchical ? "hierarchical" : "centralised") +
         std::string("_alpha") + alpha_text(r.config.distill.alpha);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path partial = path;
  partial += ".partial";
  {
    std::ofstream os(partial, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + partial.string());
    os << text;
    if (!os) throw Error("failed writing " + partial.string());
  }
  std::filesystem::rename(partial, path);
}

std::vector<std::filesystem::path> write_report_files(const std::filesystem::path& dir,
                                                      const ExperimentReport& report, const RunConfig& run) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  if (run.wants("json")) {
    const json doc = report_to_json(report, run);
    const auto problems = validate_report(doc);
    if (!problems.empty()) throw Error("report failed schema validation: " + problems.front());
    written.push_back(dir / "report.json");
    write_text_file(written.back(), doc.dump(2) + "\n");
  }
  if (run.wants("text")) {
    written.push_back(dir / "report.txt");
    write_text_file(written.back(), render_text(report));
  }
  if (run.wants("csv")) {
    written.push_back(dir / "rounds.csv");
    write_text_file(written.back(), rounds_csv(report));
    written.push_back(dir / "trace.csv");
    write_text_file(written.back(), trace_csv(report));
  }
  return written;
}

}  // namespace fedkd
