#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "seasonet/evaluation.hpp"

namespace seasonet::eval {

using nlohmann::json;

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double to_num(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json field_to_json(const GridField& f) {
  json vals = json::array();
  for (double v : f.values()) vals.push_back(v);
  return {{"n_lat", f.n_lat()}, {"n_lon", f.n_lon()}, {"values", std::move(vals)}};
}

GridField field_from_json(const json& j) {
  if (j.at("n_lat").get<std::size_t>() == 0 && j.at("values").empty()) return {};
  return GridField(j.at("n_lat").get<std::size_t>(), j.at("n_lon").get<std::size_t>(),
                   j.at("values").get<std::vector<double>>());
}

json scores_to_json(const SystemScores& s) {
  json j;
  j["system"] = s.system;
  j["overall_mae"] = num(s.overall_mae);
  j["per_region_mae"] = json::object();
  for (const auto& [k, v] : s.per_region_mae) j["per_region_mae"][k] = num(v);
  j["per_season_mae"] = json::object();
  for (const auto& [k, v] : s.per_season_mae) j["per_season_mae"][k] = num(v);
  j["per_region_season_mae"] = json::object();
  for (const auto& [r, seasons] : s.per_region_season_mae)
    for (const auto& [k, v] : seasons) j["per_region_season_mae"][r][k] = num(v);
  j["mae_time_series"] = json::object();
  for (const auto& [r, series] : s.mae_time_series) {
    json a = json::array();
    for (double v : series) a.push_back(num(v));
    j["mae_time_series"][r] = std::move(a);
  }
  j["mae_field"] = field_to_json(s.mae_field);
  j["seasonal_mae_fields"] = json::object();
  for (const auto& [k, f] : s.seasonal_mae_fields) j["seasonal_mae_fields"][k] = field_to_json(f);
  return j;
}

SystemScores scores_from_json(const json& j) {
  SystemScores s;
  s.system = j.at("system").get<std::string>();
  s.overall_mae = to_num(j.at("overall_mae"));
  for (const auto& [k, v] : j.at("per_region_mae").items()) s.per_region_mae[k] = to_num(v);
  for (const auto& [k, v] : j.at("per_season_mae").items()) s.per_season_mae[k] = to_num(v);
  for (const auto& [r, seasons] : j.at("per_region_season_mae").items())
    for (const auto& [k, v] : seasons.items()) s.per_region_season_mae[r][k] = to_num(v);
  for (const auto& [r, a] : j.at("mae_time_series").items()) {
    auto& out = s.mae_time_series[r];
    for (const auto& v : a) out.push_back(to_num(v));
  }
  s.mae_field = field_from_json(j.at("mae_field"));
  if (j.contains("seasonal_mae_fields")) {
    for (const auto& [k, f] : j.at("seasonal_mae_fields").items()) s.seasonal_mae_fields.emplace(k, field_from_json(f));
  }
  return s;
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  json j;
  j["case_id"] = r.case_id;
  j["checkpoint_id"] = r.checkpoint_id;
  j["eval_range"] = r.eval_range.str();
  j["climatology_base_range"] = r.climatology_base_range ? json(r.climatology_base_range->str()) : json(nullptr);
  j["regions"] = r.regions;
  j["overall_rank_rule"] = r.overall_rank_rule;
  j["model"] = scores_to_json(r.model);
  j["baselines"] = json::array();
  for (const auto& b : r.baselines) j["baselines"].push_back(scores_to_json(b));
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
    EvalReport r;
    r.case_id = j.at("case_id").get<std::string>();
    r.checkpoint_id = j.value("checkpoint_id", std::string());
    r.eval_range = MonthRange::parse(j.at("eval_range").get<std::string>());
    if (j.contains("climatology_base_range") && !j["climatology_base_range"].is_null()) {
      r.climatology_base_range = MonthRange::parse(j["climatology_base_range"].get<std::string>());
    }
    r.regions = j.at("regions").get<std::vector<std::string>>();
    r.overall_rank_rule = j.value("overall_rank_rule", r.overall_rank_rule);
    r.model = scores_from_json(j.at("model"));
    for (const auto& b : j.at("baselines")) r.baselines.push_back(scores_from_json(b));
    return r;
  } catch (const json::parse_error& e) {
    throw ParseError(ParseError::Kind::kShape, e.byte, std::string("malformed evaluation report: ") + e.what());
  } catch (const json::exception& e) {
    throw ParseError(ParseError::Kind::kShape, 0, std::string("malformed evaluation report: ") + e.what());
  }
}

std::string report_to_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "system,region,season,mae\n";
  auto emit = [&](const SystemScores& s) {
    os << s.system << ",all,all," << fmt(s.overall_mae) << '\n';
    for (const auto& [region, v] : s.per_region_mae) os << s.system << ',' << region << ",all," << fmt(v) << '\n';
    for (const auto& [season, v] : s.per_season_mae) os << s.system << ",all," << season << ',' << fmt(v) << '\n';
    for (const auto& [region, seasons] : s.per_region_season_mae)
      for (const auto& [season, v] : seasons) os << s.system << ',' << region << ',' << season << ',' << fmt(v) << '\n';
  };
  emit(r.model);
  for (const auto& b : r.baselines) emit(b);
  return os.str();
}

std::string rank_table_to_json(const RankTable& t) {
  json j;
  j["overall_rule"] = t.overall_rule;
  j["columns"] = t.columns;
  j["rows"] = json::array();
  for (std::size_t i = 0; i < t.case_ids.size(); ++i) {
    json row;
    row["case_id"] = t.case_ids[i];
    json mae = json::array();
    for (double v : t.mae[i]) mae.push_back(num(v));
    row["mae"] = std::move(mae);
    row["rank"] = t.rank[i];
    j["rows"].push_back(std::move(row));
  }
  return j.dump(2);
}

std::string rank_table_to_csv(const RankTable& t) {
  std::ostringstream os;
  os << "case_id";
  for (const auto& c : t.columns) os << ',' << c << "_mae," << c << "_rank";
  os << '\n';
  for (std::size_t i = 0; i < t.case_ids.size(); ++i) {
    os << t.case_ids[i];
    for (std::size_t c = 0; c < t.columns.size(); ++c) os << ',' << fmt(t.mae[i][c]) << ',' << t.rank[i][c];
    os << '\n';
  }
  return os.str();
}

std::string bin_stats_to_json(const BinStats& b) {
  json j;
  j["edges"] = b.edges;
  j["counts"] = b.counts;
  j["total_pairs"] = b.total_pairs;
  j["pairs_in_range"] = b.pairs_in_range;
  j["systems"] = json::array();
  for (const auto& s : b.systems) {
    json sj;
    sj["system"] = s.system;
    for (const auto* key : {"median", "q25", "q75"}) sj[key] = json::array();
    for (std::size_t k = 0; k < s.median.size(); ++k) {
      sj["median"].push_back(num(s.median[k]));
      sj["q25"].push_back(num(s.q25[k]));
      sj["q75"].push_back(num(s.q75[k]));
    }
    j["systems"].push_back(std::move(sj));
  }
  return j.dump(2);
}

std::string regression_to_json(const std::map<std::string, RegressionStats>& r) {
  json j = json::object();
  for (const auto& [region, s] : r) {
    j[region] = {{"slope", num(s.slope)}, {"intercept", num(s.intercept)}, {"r_squared", num(s.r_squared)}, {"n", s.n}};
  }
  return j.dump(2);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::kIo, 0, "cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace seasonet::eval
