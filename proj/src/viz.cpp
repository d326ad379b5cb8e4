#include "gateflow/viz.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "gateflow/error.hpp"

namespace gateflow::viz {

namespace {

constexpr double kTwo53 = 9007199254740992.0;

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt2(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 2);
  std::string s(buf, res.ptr);
  return s == "-0.00" ? "0.00" : s;
}

// Neumaier summation.
struct Sum {
  double s = 0, c = 0;
  void add(double x) {
    double t = s + x;
    c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
    s = t;
  }
  double value() const { return s + c; }
};

bool exact_eligible(const std::vector<const Value*>& vs) {
  if (vs.size() >= (1u << 20)) return false;
  for (const Value* v : vs) {
    if (!v->is_integer()) return false;
    std::int64_t x = v->as_integer();
    if (x > (std::int64_t{1} << 31) || x < -(std::int64_t{1} << 31)) return false;
  }
  return true;
}

std::pair<double, double> moments(const std::vector<const Value*>& vs) {
  const auto n = static_cast<double>(vs.size());
  if (exact_eligible(vs)) {
    __int128 s = 0, q = 0;
    for (const Value* v : vs) {
      __int128 x = v->as_integer();
      s += x;
      q += x * x;
    }
    __int128 num = static_cast<__int128>(vs.size()) * q - s * s;
    __int128 den = static_cast<__int128>(vs.size()) * static_cast<__int128>(vs.size());
    double mean = static_cast<double>(static_cast<long double>(s) / static_cast<long double>(n));
    if (static_cast<double>(s < 0 ? -s : s) < kTwo53) mean = static_cast<double>(s) / n;
    double var = static_cast<double>(num) < kTwo53 && static_cast<double>(den) < kTwo53
                     ? static_cast<double>(num) / static_cast<double>(den)
                     : static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
    return {mean, std::sqrt(var)};
  }
  Sum s;
  for (const Value* v : vs) s.add(v->as_real());
  double mean = s.value() / n;
  Sum d;
  for (const Value* v : vs) {
    double e = v->as_real() - mean;
    d.add(e * e);
  }
  return {mean, std::sqrt(d.value() / n)};
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string SeriesKey::label() const {
  std::string out;
  for (const auto* part : {&experiment, &component, &tag}) {
    if (part->empty()) continue;
    if (!out.empty()) out += '/';
    out += *part;
  }
  return out;
}

std::vector<AggregatedSeries> aggregate(const std::vector<store::MetricRecord>& records,
                                        const std::map<std::string, std::string>& run_experiments, GroupBy group_by) {
  std::map<SeriesKey, std::map<std::uint64_t, std::vector<const Value*>>> groups;
  for (const auto& r : records) {
    if (!r.value.is_numeric()) {
      throw Error(ErrorCode::NonNumericValue,
                  "record " + r.run_id + "/" + r.component + "/" + r.tag + "@" + std::to_string(r.step) + " holds " +
                      r.value.to_string(),
                  {r.run_id, r.component, r.tag, std::to_string(r.step)});
    }
    SeriesKey key;
    if (group_by.experiment) {
      auto it = run_experiments.find(r.run_id);
      if (it != run_experiments.end()) key.experiment = it->second;
    }
    if (group_by.component) key.component = r.component;
    if (group_by.tag) key.tag = r.tag;
    groups[key][r.step].push_back(&r.value);
  }
  std::vector<AggregatedSeries> out;
  for (const auto& [key, steps] : groups) {
    AggregatedSeries s;
    s.key = key;
    for (const auto& [step, values] : steps) {
      auto [mean, sd] = moments(values);
      s.steps.push_back(step);
      s.mean.push_back(mean);
      s.stddev.push_back(sd);
      s.n.push_back(values.size());
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<AggregatedSeries> aggregate_runs(const std::filesystem::path& root, const store::QueryFilter& filter,
                                             GroupBy group_by) {
  std::map<std::string, std::string> experiments;
  for (const auto& m : store::list_runs(root)) experiments[m.run_id] = m.experiment;
  return aggregate(store::query(root, filter), experiments, group_by);
}

std::string to_csv(const AggregatedSeries& s) {
  std::string out = "step,mean,std,n\n";
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    out += std::to_string(s.steps[i]) + "," + fmt(s.mean[i]) + "," + fmt(s.stddev[i]) + "," + std::to_string(s.n[i]) + "\n";
  }
  return out;
}

void export_csv(const AggregatedSeries& series, const std::filesystem::path& path) {
  std::string text = to_csv(series);
  try {
    store::write_file_atomic(path, text);
  } catch (const Error& e) {
    throw Error(ErrorCode::StoreIO, "cannot write " + path.string() + ": " + e.what(), {path.string()});
  }
}

AggregatedSeries parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "step,mean,std,n") {
    throw Error(ErrorCode::InvalidArgument, "missing 'step,mean,std,n' header");
  }
  AggregatedSeries s;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    auto bad = [&] { return Error(ErrorCode::InvalidArgument, "bad CSV row " + std::to_string(lineno) + ": " + line); };
    if (cells.size() != 4) throw bad();
    auto parse_u = [&](const std::string& c) {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (ec != std::errc() || p != c.data() + c.size()) throw bad();
      return v;
    };
    auto parse_d = [&](const std::string& c) {
      double v = 0;
      auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (ec != std::errc() || p != c.data() + c.size()) throw bad();
      return v;
    };
    s.steps.push_back(parse_u(cells[0]));
    s.mean.push_back(parse_d(cells[1]));
    s.stddev.push_back(parse_d(cells[2]));
    s.n.push_back(parse_u(cells[3]));
  }
  return s;
}

std::string render_svg(std::vector<AggregatedSeries> series, const SvgStyle& style) {
  if (series.empty()) throw Error(ErrorCode::EmptyInput, "nothing to plot");
  std::sort(series.begin(), series.end(), [](const auto& a, const auto& b) { return a.key < b.key; });

  double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      double lo = s.mean[i] - s.stddev[i], hi = s.mean[i] + s.stddev[i];
      if (!std::isfinite(lo) || !std::isfinite(hi)) continue;
      x_lo = std::min(x_lo, static_cast<double>(s.steps[i]));
      x_hi = std::max(x_hi, static_cast<double>(s.steps[i]));
      y_lo = std::min(y_lo, lo);
      y_hi = std::max(y_hi, hi);
    }
  }
  if (!std::isfinite(x_lo)) x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  auto widen = [](double& lo, double& hi) {
    if (hi == lo) {
      double pad = std::max(std::abs(lo) * 0.5, 0.5);
      lo -= pad;
      hi += pad;
    }
    double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  };
  widen(x_lo, x_hi);
  widen(y_lo, y_hi);

  const double W = style.width, H = style.height;
  const double left = 70, right = W - 170, top = 40, bottom = H - 50;
  auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * (right - left); };
  auto py = [&](double y) { return bottom - (y - y_lo) / (y_hi - y_lo) * (bottom - top); };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << style.width << "\" height=\""
    << style.height << "\" viewBox=\"0 0 " << style.width << " " << style.height << "\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << style.width << "\" height=\"" << style.height << "\" fill=\"white\"/>\n";
  if (!style.title.empty()) {
    o << "<text x=\"" << fmt2(W / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << xml_escape(style.title)
      << "</text>\n";
  }
  // axes and ticks
  o << "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
  o << "<line x1=\"" << fmt2(left) << "\" y1=\"" << fmt2(bottom) << "\" x2=\"" << fmt2(right) << "\" y2=\"" << fmt2(bottom)
    << "\"/>\n";
  o << "<line x1=\"" << fmt2(left) << "\" y1=\"" << fmt2(top) << "\" x2=\"" << fmt2(left) << "\" y2=\"" << fmt2(bottom)
    << "\"/>\n";
  o << "</g>\n<g class=\"ticks\" font-size=\"11\">\n";
  for (int i = 0; i <= 4; ++i) {
    double xv = x_lo + (x_hi - x_lo) * i / 4, yv = y_lo + (y_hi - y_lo) * i / 4;
    o << "<text x=\"" << fmt2(px(xv)) << "\" y=\"" << fmt2(bottom + 16) << "\" text-anchor=\"middle\">" << fmt2(xv)
      << "</text>\n";
    o << "<text x=\"" << fmt2(left - 6) << "\" y=\"" << fmt2(py(yv) + 4) << "\" text-anchor=\"end\">" << fmt2(yv)
      << "</text>\n";
  }
  o << "</g>\n";
  o << "<text x=\"" << fmt2((left + right) / 2) << "\" y=\"" << fmt2(H - 12) << "\" text-anchor=\"middle\">"
    << xml_escape(style.x_label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << fmt2((top + bottom) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << fmt2((top + bottom) / 2) << ")\">" << xml_escape(style.y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const std::string& colour = style.palette.empty() ? std::string("#000000") : style.palette[k % style.palette.size()];
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < s.steps.size(); ++i)
      if (std::isfinite(s.mean[i]) && std::isfinite(s.stddev[i])) idx.push_back(i);
    std::string band, line;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      std::size_t i = idx[j];
      band += (j ? " L" : "M") + fmt2(px(static_cast<double>(s.steps[i]))) + "," + fmt2(py(s.mean[i] + s.stddev[i]));
      line += (j ? " L" : "M") + fmt2(px(static_cast<double>(s.steps[i]))) + "," + fmt2(py(s.mean[i]));
    }
    for (std::size_t j = idx.size(); j-- > 0;) {
      std::size_t i = idx[j];
      band += " L" + fmt2(px(static_cast<double>(s.steps[i]))) + "," + fmt2(py(s.mean[i] - s.stddev[i]));
    }
    if (!idx.empty()) band += " Z";
    o << "<path class=\"band\" d=\"" << band << "\" fill=\"" << colour << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    o << "<path class=\"mean\" d=\"" << line << "\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
  }
  o << "<g class=\"legend\" font-size=\"12\">\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const std::string& colour = style.palette.empty() ? std::string("#000000") : style.palette[k % style.palette.size()];
    double y = top + 18.0 * static_cast<double>(k);
    o << "<g class=\"legend-entry\"><rect x=\"" << fmt2(right + 12) << "\" y=\"" << fmt2(y) << "\" width=\"12\" height=\"12\" fill=\""
      << colour << "\"/><text x=\"" << fmt2(right + 30) << "\" y=\"" << fmt2(y + 10) << "\">" << xml_escape(series[k].key.label())
      << "</text></g>\n";
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

}  // namespace gateflow::viz
