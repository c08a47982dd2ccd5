#include "cotscope/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "cotscope/errors.hpp"
#include "io.hpp"

namespace cotscope {

std::size_t ObservationSet::metric_index(std::string_view name) const {
  for (std::size_t i = 0; i < metric_names.size(); ++i)
    if (metric_names[i] == name) return i;
  throw ValidationError("unknown metric: " + std::string(name));
}

ObservationSet ObservationSet::for_model(std::string_view model_id) const {
  ObservationSet out;
  out.metric_names = metric_names;
  for (const auto& r : rows)
    if (r.model_id == model_id) out.rows.push_back(r);
  return out;
}

std::vector<std::string> ObservationSet::models() const {
  std::set<std::string> s;
  for (const auto& r : rows) s.insert(r.model_id);
  return {s.begin(), s.end()};
}

void write_metrics_csv(const ObservationSet& obs, const std::filesystem::path& path) {
  std::string out = "trace_id,question_id,model,difficulty,correct";
  for (const auto& m : obs.metric_names) out += ',' + io::csv_escape(m);
  out += '\n';
  for (const auto& r : obs.rows) {
    out += io::csv_escape(r.trace_id) + ',' + io::csv_escape(r.question_id) + ',' + io::csv_escape(r.model_id) + ',' +
           io::csv_escape(r.difficulty.value_or("")) + ',' + (r.correct ? "1" : "0");
    for (const auto& v : r.values) {
      out += ',';
      if (v) out += io::format_double(*v, 17);
    }
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

ObservationSet read_metrics_csv(const std::filesystem::path& path) {
  const auto rows = io::read_csv(path);
  if (rows.empty()) throw ValidationError(path.string() + ": missing header");
  const auto& header = rows.front();
  if (header.size() < 5 || header[0] != "trace_id" || header[4] != "correct")
    throw ValidationError(path.string() + ": unexpected header");
  ObservationSet obs;
  obs.metric_names.assign(header.begin() + 5, header.end());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != header.size())
      throw ValidationError(path.string() + ":" + std::to_string(i + 1) + ": expected " +
                            std::to_string(header.size()) + " fields");
    Observation o;
    o.trace_id = f[0];
    o.question_id = f[1];
    o.model_id = f[2];
    if (!f[3].empty()) o.difficulty = f[3];
    o.correct = f[4] == "1";
    for (std::size_t c = 5; c < f.size(); ++c) {
      if (f[c].empty()) {
        o.values.emplace_back();
        continue;
      }
      try {
        o.values.emplace_back(std::stod(f[c]));
      } catch (const std::exception&) {
        throw ValidationError(path.string() + ":" + std::to_string(i + 1) + ": bad number '" + f[c] + "'");
      }
    }
    obs.rows.push_back(std::move(o));
  }
  return obs;
}

std::string_view to_string(Stars s) {
  switch (s) {
    case Stars::Three: return "***";
    case Stars::Two: return "**";
    case Stars::One: return "*";
    case Stars::NS: return "ns";
  }
  return "ns";
}

Stars stars_for(double p) {
  if (p <= 0.001) return Stars::Three;
  if (p <= 0.01) return Stars::Two;
  if (p <= 0.05) return Stars::One;
  return Stars::NS;
}

namespace {

// Average ranks (1-based), ties share the mean rank.
std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

// Two-pass group means.
std::vector<double> group_means(const std::vector<std::size_t>& g, const std::vector<double>& v, std::size_t groups) {
  std::vector<double> sum(groups, 0.0), cnt(groups, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    sum[g[i]] += v[i];
    cnt[g[i]] += 1.0;
  }
  std::vector<double> mean(groups, 0.0);
  for (std::size_t k = 0; k < groups; ++k) mean[k] = cnt[k] > 0 ? sum[k] / cnt[k] : 0.0;
  std::vector<double> corr(groups, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) corr[g[i]] += v[i] - mean[g[i]];
  for (std::size_t k = 0; k < groups; ++k)
    if (cnt[k] > 0) mean[k] += corr[k] / cnt[k];
  return mean;
}

}  // namespace

CorrelationResult residual_correlation(const std::vector<std::size_t>& group, const std::vector<double>& x,
                                       const std::vector<double>& y, CorrelationKind kind) {
  if (group.size() != x.size() || x.size() != y.size())
    throw ValidationError("residual_correlation: input lengths differ");
  CorrelationResult res;

  // Drop groups whose outcome is constant.
  std::map<std::size_t, std::pair<double, double>> y_range;
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto [it, fresh] = y_range.try_emplace(group[i], y[i], y[i]);
    if (!fresh) {
      it->second.first = std::min(it->second.first, y[i]);
      it->second.second = std::max(it->second.second, y[i]);
    }
  }
  std::map<std::size_t, std::size_t> dense;
  for (const auto& [g, range] : y_range)
    if (range.first != range.second) dense.emplace(g, dense.size());
  std::vector<std::size_t> g2;
  std::vector<double> x2, y2;
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto it = dense.find(group[i]);
    if (it == dense.end()) continue;
    g2.push_back(it->second);
    x2.push_back(x[i]);
    y2.push_back(y[i]);
  }
  res.n_used = x2.size();
  res.q_used = dense.size();
  if (res.q_used == 0) {
    res.note = "no question with outcome variance";
    return res;
  }
  if (kind == CorrelationKind::Spearman) x2 = average_ranks(x2);

  const auto mx = group_means(g2, x2, res.q_used);
  const auto my = group_means(g2, y2, res.q_used);
  double sxx = 0.0, syy = 0.0, sxy = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < x2.size(); ++i) {
    const double rx = x2[i] - mx[g2[i]];
    const double ry = y2[i] - my[g2[i]];
    sxx += rx * rx;
    syy += ry * ry;
    sxy += rx * ry;
    scale += x2[i] * x2[i];
  }
  const double df = static_cast<double>(res.n_used) - static_cast<double>(res.q_used) - 1.0;
  if (df < 3.0) {
    res.note = "fewer than 3 residual degrees of freedom";
    return res;
  }
  if (sxx <= 1e-24 * scale || sxx == 0.0 || syy == 0.0) {
    res.note = "zero residual variance";
    return res;
  }
  res.computable = true;
  res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (std::abs(res.r) >= 1.0) {
    res.p = 0.0;
  } else {
    const double t = res.r * std::sqrt(df / (1.0 - res.r * res.r));
    const boost::math::students_t dist(df);
    res.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  }
  res.stars = stars_for(res.p);
  return res;
}

namespace {

std::string single_model(const ObservationSet& obs) {
  const auto models = obs.models();
  return models.size() == 1 ? models.front() : std::string();
}

}  // namespace

CorrelationResult conditional_correlation(const ObservationSet& obs, std::string_view metric, CorrelationKind kind) {
  const auto m = obs.metric_index(metric);
  std::map<std::string, std::size_t> qid;
  std::vector<std::size_t> group;
  std::vector<double> x, y;
  for (const auto& r : obs.rows) {
    if (!r.values.at(m)) continue;
    group.push_back(qid.try_emplace(r.question_id, qid.size()).first->second);
    x.push_back(*r.values[m]);
    y.push_back(r.correct ? 1.0 : 0.0);
  }
  auto res = residual_correlation(group, x, y, kind);
  res.metric = std::string(metric);
  res.model = single_model(obs);
  return res;
}

StratifiedResult stratified_correlation(const ObservationSet& obs, std::string_view metric,
                                        const std::vector<std::string>& strata, std::size_t min_rows,
                                        CorrelationKind kind) {
  const auto m = obs.metric_index(metric);
  StratifiedResult out;
  for (const auto& label : strata) {
    ObservationSet sub;
    sub.metric_names = obs.metric_names;
    std::size_t usable = 0;
    for (const auto& r : obs.rows) {
      if (r.difficulty != label) continue;
      sub.rows.push_back(r);
      if (r.values.at(m)) ++usable;
    }
    if (usable < min_rows) {
      out.skipped.emplace_back(label, usable);
      continue;
    }
    auto res = conditional_correlation(sub, metric, kind);
    res.stratum = label;
    if (res.model.empty()) res.model = single_model(obs);
    out.results.push_back(std::move(res));
  }
  return out;
}

std::optional<double> ConcordanceReport::rate() const {
  if (implicating == 0) return std::nullopt;
  return static_cast<double>(concordant) / static_cast<double>(implicating);
}

ConcordanceReport concordance_report(const std::vector<CorrelationResult>& correlations,
                                     const std::vector<GlmmFit>& fits) {
  std::map<std::pair<std::string, std::string>, const GlmmFit*> by_cell;
  for (const auto& f : fits) by_cell[{f.model, f.metric}] = &f;
  ConcordanceReport report;
  for (const auto& c : correlations) {
    if (!c.stratum.empty()) continue;
    ConcordanceRow row;
    row.model = c.model;
    row.metric = c.metric;
    row.correlation_significant = c.computable && c.p <= 0.05;
    if (auto it = by_cell.find({c.model, c.metric}); it != by_cell.end()) {
      const auto& f = *it->second;
      row.glmm_significant = f.converged && f.p_wald <= 0.05;
      row.same_sign = (f.beta1 > 0 && c.r > 0) || (f.beta1 < 0 && c.r < 0);
    }
    row.concordant = row.correlation_significant && row.glmm_significant && row.same_sign;
    if (row.correlation_significant) {
      ++report.implicating;
      if (row.concordant) ++report.concordant;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

std::string fmt_or_empty(bool defined, double v) { return defined ? io::format_double(v) : std::string(); }

double parse_num(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  if (s.empty()) return 0.0;
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw ValidationError(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
}

std::vector<std::vector<std::string>> read_table(const std::filesystem::path& path, std::size_t columns,
                                                 std::string_view first) {
  auto rows = io::read_csv(path);
  if (rows.empty() || rows.front().size() != columns || rows.front().front() != first)
    throw ValidationError(path.string() + ": unexpected header");
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].size() != columns)
      throw ValidationError(path.string() + ":" + std::to_string(i + 1) + ": expected " + std::to_string(columns) +
                            " fields");
  rows.erase(rows.begin());
  return rows;
}

}  // namespace

void write_correlations_csv(const std::vector<CorrelationResult>& results, const std::filesystem::path& path) {
  std::string out = "model,metric,stratum,r,p,stars,n_used,q_used,computable,note\n";
  for (const auto& c : results) {
    out += io::csv_escape(c.model) + ',' + io::csv_escape(c.metric) + ',' + io::csv_escape(c.stratum) + ',' +
           fmt_or_empty(c.computable, c.r) + ',' + fmt_or_empty(c.computable, c.p) + ',' +
           (c.computable ? std::string(to_string(c.stars)) : std::string()) + ',' + std::to_string(c.n_used) + ',' +
           std::to_string(c.q_used) + ',' + (c.computable ? "1" : "0") + ',' + io::csv_escape(c.note) + '\n';
  }
  io::write_file_atomic(path, out);
}

std::vector<CorrelationResult> read_correlations_csv(const std::filesystem::path& path) {
  std::vector<CorrelationResult> out;
  std::size_t line = 1;
  for (const auto& f : read_table(path, 10, "model")) {
    ++line;
    CorrelationResult c;
    c.model = f[0];
    c.metric = f[1];
    c.stratum = f[2];
    c.computable = f[8] == "1";
    c.r = parse_num(f[3], path, line);
    c.p = c.computable ? parse_num(f[4], path, line) : 1.0;
    c.stars = c.computable ? stars_for(c.p) : Stars::NS;
    c.n_used = static_cast<std::size_t>(parse_num(f[6], path, line));
    c.q_used = static_cast<std::size_t>(parse_num(f[7], path, line));
    c.note = f[9];
    out.push_back(std::move(c));
  }
  return out;
}

void write_glmm_csv(const std::vector<GlmmFit>& fits, const std::filesystem::path& path) {
  std::string out = "model,metric,beta0,beta1,se1,p_wald,sigma_u,converged,sigma_at_floor,n,q,iterations,diagnostics\n";
  for (const auto& f : fits) {
    out += io::csv_escape(f.model) + ',' + io::csv_escape(f.metric) + ',' + io::format_double(f.beta0) + ',' +
           io::format_double(f.beta1) + ',' + io::format_double(f.se1) + ',' + fmt_or_empty(f.converged, f.p_wald) +
           ',' + io::format_double(f.sigma_u) + ',' + (f.converged ? "1" : "0") + ',' +
           (f.sigma_at_floor ? "1" : "0") + ',' + std::to_string(f.n) + ',' + std::to_string(f.q) + ',' +
           std::to_string(f.iterations) + ',' + io::csv_escape(f.diagnostics) + '\n';
  }
  io::write_file_atomic(path, out);
}

std::vector<GlmmFit> read_glmm_csv(const std::filesystem::path& path) {
  std::vector<GlmmFit> out;
  std::size_t line = 1;
  for (const auto& f : read_table(path, 13, "model")) {
    ++line;
    GlmmFit g;
    g.model = f[0];
    g.metric = f[1];
    g.beta0 = parse_num(f[2], path, line);
    g.beta1 = parse_num(f[3], path, line);
    g.se1 = parse_num(f[4], path, line);
    g.converged = f[7] == "1";
    g.p_wald = g.converged ? parse_num(f[5], path, line) : 1.0;
    g.sigma_u = parse_num(f[6], path, line);
    g.sigma_at_floor = f[8] == "1";
    g.n = static_cast<std::size_t>(parse_num(f[9], path, line));
    g.q = static_cast<std::size_t>(parse_num(f[10], path, line));
    g.iterations = static_cast<int>(parse_num(f[11], path, line));
    g.diagnostics = f[12];
    out.push_back(std::move(g));
  }
  return out;
}

void write_concordance_csv(const ConcordanceReport& report, const std::filesystem::path& path) {
  std::string out = "model,metric,correlation_significant,glmm_significant,same_sign,concordant\n";
  auto b = [](bool v) { return v ? std::string("1") : std::string("0"); };
  for (const auto& r : report.rows) {
    out += io::csv_escape(r.model) + ',' + io::csv_escape(r.metric) + ',' + b(r.correlation_significant) + ',' +
           b(r.glmm_significant) + ',' + b(r.same_sign) + ',' + b(r.concordant) + '\n';
  }
  io::write_file_atomic(path, out);
}

}  // namespace cotscope
