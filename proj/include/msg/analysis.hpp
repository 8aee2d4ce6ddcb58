#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "msg/errors.hpp"
#include "msg/harness.hpp"
#include "msg/jsonl.hpp"
#include "msg/stats.hpp"
#include "msg/strings.hpp"
#include "msg/types.hpp"

namespace msg::analysis {

// ---- accuracy tables -----------------------------------------------------------

// Rows of respondents, columns of group accuracies plus Overall.
struct Table {
  std::vector<std::string> columns;  // group names; "Overall" is implicit last
  struct Row {
    std::string name;
    std::vector<double> values;  // aligned with columns
    double overall = 0.0;
  };
  std::vector<Row> rows;

  const Row* row(const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return &r;
    return nullptr;
  }
};

enum class GroupKey { Target, Type };

inline const char* to_string(GroupKey k) { return k == GroupKey::Target ? "target" : "type"; }

// Assemble a table from scored results. All results must come from the same
// suite.
inline Table accuracy_table(const std::vector<harness::EvalResult>& results, GroupKey key) {
  if (results.empty()) throw SuiteMismatch("no results to tabulate");
  for (const auto& r : results)
    if (r.suite_id != results.front().suite_id)
      throw SuiteMismatch("results for '" + r.respondent + "' come from a different suite");

  std::set<std::string> group_set;
  for (const auto& r : results) {
    const auto& groups = key == GroupKey::Target ? r.by_target : r.by_type;
    for (const auto& [g, _] : groups) group_set.insert(g);
  }
  Table table;
  table.columns.assign(group_set.begin(), group_set.end());
  for (const auto& r : results) {
    Table::Row row;
    row.name = r.respondent;
    const auto& groups = key == GroupKey::Target ? r.by_target : r.by_type;
    for (const auto& g : table.columns) {
      auto it = groups.find(g);
      row.values.push_back(it == groups.end() ? 0.0 : it->second.accuracy());
    }
    row.overall = r.overall.accuracy();
    table.rows.push_back(std::move(row));
  }
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const Table::Row& a, const Table::Row& b) { return a.overall > b.overall; });
  return table;
}

// External-results import: published accuracies keyed respondent -> group,
// with an "Overall" entry. Lets published tables be analyzed without
// re-running any model.
inline Table import_table(const Json& doc) {
  Table table;
  table.columns = doc.at("groups").get<std::vector<std::string>>();
  for (const auto& [name, groups] : doc.at("results").items()) {
    Table::Row row;
    row.name = name;
    for (const auto& g : table.columns) row.values.push_back(groups.at(g).get<double>());
    row.overall = groups.at("Overall").get<double>();
    table.rows.push_back(std::move(row));
  }
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const Table::Row& a, const Table::Row& b) { return a.overall > b.overall; });
  return table;
}

inline Table import_table_file(const std::filesystem::path& path) {
  return import_table(jsonl::read_json_file(path));
}

// Accuracy plus signed deltas between two tables sharing groups. Rows are the
// `after` rows that exist in `before`, in `after` order.
struct GainTable {
  std::vector<std::string> columns;
  struct Row {
    std::string name;
    std::vector<double> after;
    std::vector<double> delta;
    double overall_after = 0.0;
    double overall_delta = 0.0;
  };
  std::vector<Row> rows;
};

inline GainTable gain_table(const Table& before, const Table& after) {
  if (before.columns != after.columns)
    throw SuiteMismatch("gain table inputs have different group columns");
  GainTable out;
  out.columns = after.columns;
  for (const auto& row : after.rows) {
    const Table::Row* base = before.row(row.name);
    if (!base) continue;
    GainTable::Row g;
    g.name = row.name;
    g.after = row.values;
    for (size_t i = 0; i < row.values.size(); ++i)
      g.delta.push_back(str::round2(row.values[i] - base->values[i]));
    g.overall_after = row.overall;
    g.overall_delta = str::round2(row.overall - base->overall);
    out.rows.push_back(std::move(g));
  }
  if (out.rows.empty()) throw SuiteMismatch("gain table inputs share no respondents");
  return out;
}

// ---- renderers --------------------------------------------------------------------

namespace detail {

// Best and second-best value per column (max wins).
inline void column_marks(const std::vector<std::vector<double>>& cols, size_t col, size_t rows,
                         std::optional<size_t>& best, std::optional<size_t>& second) {
  best.reset();
  second.reset();
  for (size_t r = 0; r < rows; ++r) {
    double v = cols[r][col];
    if (!best || v > cols[*best][col]) {
      second = best;
      best = r;
    } else if (!second || v > cols[*second][col]) {
      second = r;
    }
  }
}

}  // namespace detail

// TSV with plain numbers, suitable for downstream tooling.
inline std::string render_tsv(const Table& table) {
  std::string out = "respondent";
  for (const auto& c : table.columns) out += "\t" + c;
  out += "\tOverall\n";
  for (const auto& row : table.rows) {
    out += row.name;
    for (double v : row.values) out += "\t" + str::format2(v);
    out += "\t" + str::format2(row.overall) + "\n";
  }
  return out;
}

// Human-readable table; the best value per column is wrapped in ** and the
// second best in _ marks.
inline std::string render_text(const Table& table) {
  const size_t n_cols = table.columns.size() + 1;
  std::vector<std::vector<double>> values;
  for (const auto& row : table.rows) {
    std::vector<double> v = row.values;
    v.push_back(row.overall);
    values.push_back(std::move(v));
  }
  std::vector<std::vector<std::string>> cells;
  for (size_t r = 0; r < table.rows.size(); ++r)
    cells.push_back(std::vector<std::string>(n_cols));
  for (size_t c = 0; c < n_cols; ++c) {
    std::optional<size_t> best, second;
    detail::column_marks(values, c, table.rows.size(), best, second);
    for (size_t r = 0; r < table.rows.size(); ++r) {
      std::string s = str::format2(values[r][c]);
      if (best && r == *best) s = "**" + s + "**";
      else if (second && r == *second) s = "_" + s + "_";
      cells[r][c] = s;
    }
  }

  std::vector<std::string> header = table.columns;
  header.push_back("Overall");
  std::vector<size_t> widths(n_cols);
  size_t name_width = std::string("respondent").size();
  for (const auto& row : table.rows) name_width = std::max(name_width, row.name.size());
  for (size_t c = 0; c < n_cols; ++c) {
    widths[c] = header[c].size();
    for (size_t r = 0; r < table.rows.size(); ++r) widths[c] = std::max(widths[c], cells[r][c].size());
  }
  auto pad = [](const std::string& s, size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  std::string out = pad("respondent", name_width);
  for (size_t c = 0; c < n_cols; ++c) out += "  " + pad(header[c], widths[c]);
  out += "\n";
  for (size_t r = 0; r < table.rows.size(); ++r) {
    out += pad(table.rows[r].name, name_width);
    for (size_t c = 0; c < n_cols; ++c) out += "  " + pad(cells[r][c], widths[c]);
    out += "\n";
  }
  return out;
}

inline std::string render_gain_tsv(const GainTable& table) {
  std::string out = "respondent";
  for (const auto& c : table.columns) out += "\t" + c + "\t" + c + "_delta";
  out += "\tOverall\tOverall_delta\n";
  for (const auto& row : table.rows) {
    out += row.name;
    for (size_t i = 0; i < row.after.size(); ++i)
      out += "\t" + str::format2(row.after[i]) + "\t" + str::format2(row.delta[i]);
    out += "\t" + str::format2(row.overall_after) + "\t" + str::format2(row.overall_delta) + "\n";
  }
  return out;
}

inline std::string format_delta(double delta) {
  if (delta >= 0.005) return "+" + str::format2(delta) + "↑";
  if (delta <= -0.005) return "-" + str::format2(-delta) + "↓";
  return str::format2(0.0);
}

inline std::string render_gain_text(const GainTable& table) {
  std::string out;
  for (const auto& row : table.rows) {
    out += row.name + ": ";
    for (size_t i = 0; i < row.after.size(); ++i) {
      out += table.columns[i] + " " + str::format2(row.after[i]) + " (" +
             format_delta(row.delta[i]) + ")  ";
    }
    out += "Overall " + str::format2(row.overall_after) + " (" +
           format_delta(row.overall_delta) + ")\n";
  }
  return out;
}

// ---- rank statistics ------------------------------------------------------------------

// models x observations accuracy matrix feeding the rank tests. Observations
// are the (target x question type) cells or any other shared grouping.
struct RankMatrix {
  std::vector<std::string> models;
  std::vector<std::string> observations;
  std::vector<std::vector<double>> values;  // [model][observation]

  void check() const {
    if (models.size() < 2)
      throw DegenerateMatrix("rank analysis needs at least 2 models, have " +
                             std::to_string(models.size()));
    if (observations.size() < 2)
      throw DegenerateMatrix("rank analysis needs at least 2 observations, have " +
                             std::to_string(observations.size()));
    for (const auto& row : values)
      if (row.size() != observations.size())
        throw DegenerateMatrix("rank matrix is not rectangular");
    if (values.size() != models.size())
      throw DegenerateMatrix("rank matrix is not rectangular");
  }
};

// Build a rank matrix from a table: observations are the group columns.
inline RankMatrix rank_matrix(const Table& table) {
  RankMatrix m;
  m.observations = table.columns;
  for (const auto& row : table.rows) {
    m.models.push_back(row.name);
    m.values.push_back(row.values);
  }
  return m;
}

struct FriedmanResult {
  double chi_square = 0.0;
  double iman_davenport_f = 0.0;
  double p_value = 1.0;
  std::vector<double> average_ranks;  // aligned with matrix.models
};

// Friedman rank test with the Iman-Davenport correction. Higher accuracy
// ranks better (rank 1); ties share the average rank.
inline FriedmanResult friedman(const RankMatrix& matrix) {
  matrix.check();
  const size_t k = matrix.models.size();
  const size_t n = matrix.observations.size();

  std::vector<double> rank_sum(k, 0.0);
  for (size_t obs = 0; obs < n; ++obs) {
    std::vector<size_t> order(k);
    for (size_t i = 0; i < k; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return matrix.values[a][obs] > matrix.values[b][obs];
    });
    size_t i = 0;
    while (i < k) {
      size_t j = i;
      while (j + 1 < k &&
             matrix.values[order[j + 1]][obs] == matrix.values[order[i]][obs])
        ++j;
      double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
      for (size_t t = i; t <= j; ++t) rank_sum[order[t]] += avg_rank;
      i = j + 1;
    }
  }

  FriedmanResult result;
  result.average_ranks.resize(k);
  for (size_t i = 0; i < k; ++i)
    result.average_ranks[i] = rank_sum[i] / static_cast<double>(n);

  const double kd = static_cast<double>(k);
  const double nd = static_cast<double>(n);
  double sum_sq = 0.0;
  for (double r : result.average_ranks) {
    double d = r - (kd + 1.0) / 2.0;
    sum_sq += d * d;
  }
  result.chi_square = 12.0 * nd / (kd * (kd + 1.0)) * sum_sq;

  double denom = nd * (kd - 1.0) - result.chi_square;
  if (result.chi_square <= 0.0) {
    result.iman_davenport_f = 0.0;
    result.p_value = 1.0;
  } else if (denom <= 0.0) {
    // perfectly consistent ordering: the statistic saturates
    result.iman_davenport_f = std::numeric_limits<double>::infinity();
    result.p_value = 0.0;
  } else {
    result.iman_davenport_f = (nd - 1.0) * result.chi_square / denom;
    result.p_value = stats::f_sf(result.iman_davenport_f, kd - 1.0, (kd - 1.0) * (nd - 1.0));
  }
  return result;
}

// Studentized-range constants divided by sqrt(2) for the Nemenyi test,
// k = 2..10 (Demsar's published table).
inline double nemenyi_q(size_t k, double alpha) {
  static const std::array<double, 9> q05 = {1.960, 2.343, 2.569, 2.728, 2.850,
                                            2.949, 3.031, 3.102, 3.164};
  static const std::array<double, 9> q10 = {1.645, 2.052, 2.291, 2.459, 2.589,
                                            2.693, 2.780, 2.855, 2.920};
  if (k < 2 || k > 10)
    throw UnsupportedK("nemenyi constants are embedded for 2 <= k <= 10, got k = " +
                       std::to_string(k));
  if (std::fabs(alpha - 0.05) < 1e-12) return q05[k - 2];
  if (std::fabs(alpha - 0.10) < 1e-12) return q10[k - 2];
  throw UnsupportedK("alpha must be 0.05 or 0.10");
}

// CD = q_alpha(k) * sqrt(k (k + 1) / (6 N)).
inline double nemenyi_cd(size_t k, size_t n, double alpha) {
  double q = nemenyi_q(k, alpha);
  return q * std::sqrt(static_cast<double>(k) * (static_cast<double>(k) + 1.0) /
                       (6.0 * static_cast<double>(n)));
}

// Maximal groups of models whose average-rank spread is within CD. Over
// sorted ranks these are exactly the maximal intervals with spread <= CD.
inline std::vector<std::vector<size_t>> rank_cliques(const std::vector<double>& ranks,
                                                     double cd) {
  const size_t k = ranks.size();
  std::vector<size_t> order(k);
  for (size_t i = 0; i < k; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return ranks[a] < ranks[b]; });

  std::vector<std::pair<size_t, size_t>> intervals;  // [lo, hi] in sorted order
  for (size_t lo = 0; lo < k; ++lo) {
    size_t hi = lo;
    while (hi + 1 < k && ranks[order[hi + 1]] - ranks[order[lo]] <= cd + 1e-12) ++hi;
    if (hi > lo) intervals.emplace_back(lo, hi);
  }
  // keep maximal intervals only
  std::vector<std::vector<size_t>> cliques;
  for (size_t i = 0; i < intervals.size(); ++i) {
    bool contained = false;
    for (size_t j = 0; j < intervals.size(); ++j) {
      if (i == j) continue;
      if (intervals[j].first <= intervals[i].first && intervals[i].second <= intervals[j].second &&
          (intervals[j].first < intervals[i].first || intervals[j].second > intervals[i].second))
        contained = true;
    }
    if (contained) continue;
    std::vector<size_t> clique;
    for (size_t t = intervals[i].first; t <= intervals[i].second; ++t) clique.push_back(order[t]);
    cliques.push_back(std::move(clique));
  }
  return cliques;
}

struct CDResult {
  std::vector<std::string> models;
  std::vector<double> average_ranks;
  double chi_square = 0.0;
  double iman_davenport_f = 0.0;
  double p_value = 1.0;
  double cd = 0.0;
  double alpha = 0.05;
  std::vector<std::vector<size_t>> cliques;

  Json to_json() const {
    Json ranks = Json::object();
    for (size_t i = 0; i < models.size(); ++i) ranks[models[i]] = average_ranks[i];
    Json cliques_json = Json::array();
    for (const auto& clique : cliques) {
      Json names = Json::array();
      for (size_t i : clique) names.push_back(models[i]);
      cliques_json.push_back(names);
    }
    return Json{{"average_ranks", ranks},
                {"friedman_chi_square", chi_square},
                {"iman_davenport_f",
                 std::isinf(iman_davenport_f) ? Json("inf") : Json(iman_davenport_f)},
                {"p_value", p_value},
                {"alpha", alpha},
                {"cd", cd},
                {"cliques", cliques_json}};
  }
};

inline CDResult cd_analysis(const RankMatrix& matrix, double alpha) {
  auto fr = friedman(matrix);
  CDResult result;
  result.models = matrix.models;
  result.average_ranks = fr.average_ranks;
  result.chi_square = fr.chi_square;
  result.iman_davenport_f = fr.iman_davenport_f;
  result.p_value = fr.p_value;
  result.alpha = alpha;
  result.cd = nemenyi_cd(matrix.models.size(), matrix.observations.size(), alpha);
  result.cliques = rank_cliques(result.average_ranks, result.cd);
  return result;
}

// ---- CD diagram -------------------------------------------------------------------------

namespace detail {

inline std::string fmt(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace detail

// Plain-text rendering: models sorted by rank (best first) and the clique
// groups, mirroring the axis-reversed diagram.
inline std::string cd_diagram_text(const CDResult& result) {
  std::vector<size_t> order(result.models.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return result.average_ranks[a] < result.average_ranks[b];
  });

  std::string out = "critical difference diagram (alpha = " + detail::fmt(result.alpha) +
                    ", CD = " + detail::fmt(result.cd, 4) + ")\n";
  out += "lower rank is better; the diagram axis places it to the right\n\n";
  for (size_t i : order)
    out += "  " + detail::fmt(result.average_ranks[i]) + "  " + result.models[i] + "\n";
  out += "\ncliques (not significantly different):\n";
  if (result.cliques.empty()) out += "  none\n";
  for (const auto& clique : result.cliques) {
    out += "  {";
    for (size_t i = 0; i < clique.size(); ++i) {
      if (i) out += ", ";
      out += result.models[clique[i]];
    }
    out += "}\n";
  }
  return out;
}

// Deterministic SVG rendering of the classic CD diagram: reversed rank axis,
// model stems alternating left/right, thick clique bars under the axis.
inline std::string cd_diagram_svg(const CDResult& result) {
  const size_t k = result.models.size();
  std::vector<size_t> order(k);
  for (size_t i = 0; i < k; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return result.average_ranks[a] < result.average_ranks[b];
  });

  const double margin = 140.0;
  const double axis_width = 420.0;
  const double axis_y = 60.0;
  const double label_step = 22.0;
  const double bar_step = 10.0;
  const size_t left_count = (k + 1) / 2;
  const double width = axis_width + 2 * margin;
  const double height =
      axis_y + 30.0 + static_cast<double>(result.cliques.size()) * bar_step + 30.0 +
      static_cast<double>(left_count) * label_step;

  // rank r maps to x; axis reversed so rank 1 (best) sits at the right edge
  const double lo = 1.0, hi = static_cast<double>(k);
  auto x_of = [&](double rank) {
    return margin + (hi - rank) / (hi - lo > 0 ? hi - lo : 1.0) * axis_width;
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(width, 0) +
         "\" height=\"" + detail::fmt(height, 0) + "\" font-family=\"Helvetica, sans-serif\" " +
         "font-size=\"12\">\n";
  svg += "<text x=\"" + detail::fmt(margin) + "\" y=\"20\">CD = " + detail::fmt(result.cd, 4) +
         " (alpha = " + detail::fmt(result.alpha) + ")</text>\n";

  // CD ruler above the axis
  svg += "<line x1=\"" + detail::fmt(x_of(lo + result.cd)) + "\" y1=\"30\" x2=\"" +
         detail::fmt(x_of(lo)) + "\" y2=\"30\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + detail::fmt(x_of(lo + result.cd)) + "\" y1=\"26\" x2=\"" +
         detail::fmt(x_of(lo + result.cd)) + "\" y2=\"34\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + detail::fmt(x_of(lo)) + "\" y1=\"26\" x2=\"" + detail::fmt(x_of(lo)) +
         "\" y2=\"34\" stroke=\"black\"/>\n";

  // axis with integer ticks
  svg += "<line x1=\"" + detail::fmt(margin) + "\" y1=\"" + detail::fmt(axis_y) + "\" x2=\"" +
         detail::fmt(margin + axis_width) + "\" y2=\"" + detail::fmt(axis_y) +
         "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
  for (size_t r = 1; r <= k; ++r) {
    double x = x_of(static_cast<double>(r));
    svg += "<line x1=\"" + detail::fmt(x) + "\" y1=\"" + detail::fmt(axis_y - 5) + "\" x2=\"" +
           detail::fmt(x) + "\" y2=\"" + detail::fmt(axis_y) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + detail::fmt(x - 4) + "\" y=\"" + detail::fmt(axis_y - 10) + "\">" +
           std::to_string(r) + "</text>\n";
  }

  // clique bars under the axis
  double bar_y = axis_y + 12.0;
  for (const auto& clique : result.cliques) {
    double rank_lo = result.average_ranks[clique.front()];
    double rank_hi = result.average_ranks[clique.back()];
    svg += "<line x1=\"" + detail::fmt(x_of(rank_hi)) + "\" y1=\"" + detail::fmt(bar_y) +
           "\" x2=\"" + detail::fmt(x_of(rank_lo)) + "\" y2=\"" + detail::fmt(bar_y) +
           "\" stroke=\"black\" stroke-width=\"4\" stroke-linecap=\"round\"/>\n";
    bar_y += bar_step;
  }

  // model stems: best half on the right, rest on the left
  double stem_base = bar_y + 18.0;
  for (size_t pos = 0; pos < k; ++pos) {
    size_t i = order[pos];
    bool right_side = pos < left_count;
    double rank_x = x_of(result.average_ranks[i]);
    double label_y = stem_base + static_cast<double>(right_side ? pos : k - 1 - pos) * label_step;
    double label_x = right_side ? margin + axis_width + 16.0 : margin - 16.0;
    svg += "<polyline fill=\"none\" stroke=\"black\" points=\"" + detail::fmt(rank_x) + "," +
           detail::fmt(axis_y) + " " + detail::fmt(rank_x) + "," + detail::fmt(label_y) + " " +
           detail::fmt(label_x) + "," + detail::fmt(label_y) + "\"/>\n";
    std::string anchor = right_side ? "start" : "end";
    svg += "<text x=\"" + detail::fmt(right_side ? label_x + 4.0 : label_x - 4.0) + "\" y=\"" +
           detail::fmt(label_y + 4.0) + "\" text-anchor=\"" + anchor + "\">" + result.models[i] +
           " (" + detail::fmt(result.average_ranks[i]) + ")</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace msg::analysis
