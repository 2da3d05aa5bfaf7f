#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "dgp/bench.hpp"

namespace dgp::bench {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 150.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

double metric_value(const BenchmarkRow& r, ChartMetric metric) {
  switch (metric) {
    case ChartMetric::mae: return r.mae;
    case ChartMetric::rmse: return r.rmse;
    case ChartMetric::log10_predict_time:
      return r.predict_time_s > 0.0 ? std::log10(r.predict_time_s)
                                    : std::numeric_limits<double>::quiet_NaN();
  }
  return std::numeric_limits<double>::quiet_NaN();
}

const char* metric_label(ChartMetric metric) {
  switch (metric) {
    case ChartMetric::mae: return "MAE";
    case ChartMetric::rmse: return "RMSE";
    case ChartMetric::log10_predict_time: return "log10 predict time (s)";
  }
  return "";
}

}  // namespace

std::string render_svg_chart(const std::vector<BenchmarkRow>& rows, ChartMetric metric) {
  // method -> M -> finite values across seeds; insertion order of methods kept.
  std::vector<std::string> order;
  std::map<std::string, std::map<int, std::vector<double>>> values;
  for (const BenchmarkRow& r : rows) {
    const double v = metric_value(r, metric);
    if (!std::isfinite(v)) continue;
    if (!values.count(r.method)) order.push_back(r.method);
    values[r.method][r.M].push_back(v);
  }

  std::map<std::string, std::vector<std::pair<int, double>>> series;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& [method, by_m] : values) {
    for (const auto& [M, vals] : by_m) {
      const double med = median(vals);
      series[method].emplace_back(M, med);
      xmin = std::min(xmin, double(M));
      xmax = std::max(xmax, double(M));
      ymin = std::min(ymin, med);
      ymax = std::max(ymax, med);
    }
  }
  if (order.empty()) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmin -= 1, xmax += 1;
  if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * plot_w; };
  auto sy = [&](double y) { return kTop + (ymax - y) / (ymax - ymin) * plot_h; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << px(kLeft + plot_w / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
    << metric_label(metric) << " vs M (median over seeds)</text>\n";
  s << "<rect x=\"" << px(kLeft) << "\" y=\"" << px(kTop) << "\" width=\"" << px(plot_w)
    << "\" height=\"" << px(plot_h) << "\" fill=\"none\" stroke=\"black\"/>\n";

  // Ticks: every distinct M on x, five evenly spaced on y.
  std::vector<int> ms;
  for (const auto& [method, pts] : series)
    for (const auto& p : pts) ms.push_back(p.first);
  std::sort(ms.begin(), ms.end());
  ms.erase(std::unique(ms.begin(), ms.end()), ms.end());
  for (int M : ms) {
    const double x = sx(M);
    s << "<line x1=\"" << px(x) << "\" y1=\"" << px(kTop + plot_h) << "\" x2=\"" << px(x)
      << "\" y2=\"" << px(kTop + plot_h + 5) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << px(x) << "\" y=\"" << px(kTop + plot_h + 18)
      << "\" text-anchor=\"middle\">" << M << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = ymin + (ymax - ymin) * k / 4.0;
    const double y = sy(v);
    s << "<line x1=\"" << px(kLeft - 5) << "\" y1=\"" << px(y) << "\" x2=\"" << px(kLeft + plot_w)
      << "\" y2=\"" << px(y) << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << px(kLeft - 8) << "\" y=\"" << px(y + 4) << "\" text-anchor=\"end\">"
      << fmt(v) << "</text>\n";
  }
  s << "<text x=\"" << px(kLeft + plot_w / 2) << "\" y=\"" << px(kHeight - 12)
    << "\" text-anchor=\"middle\">M (experts)</text>\n";
  s << "<text transform=\"translate(16," << px(kTop + plot_h / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">" << metric_label(metric) << "</text>\n";

  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::string& method = order[i];
    const char* color = kPalette[i % (sizeof kPalette / sizeof *kPalette)];
    const auto& pts = series[method];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t j = 0; j < pts.size(); ++j)
      s << (j ? " " : "") << px(sx(pts[j].first)) << ',' << px(sy(pts[j].second));
    s << "\"><title>" << method << "</title></polyline>\n";
    for (const auto& p : pts)
      s << "<circle cx=\"" << px(sx(p.first)) << "\" cy=\"" << px(sy(p.second))
        << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = kTop + 10 + 18.0 * static_cast<double>(i);
    const double lx = kLeft + plot_w + 15;
    s << "<line x1=\"" << px(lx) << "\" y1=\"" << px(ly) << "\" x2=\"" << px(lx + 20) << "\" y2=\""
      << px(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << px(lx + 26) << "\" y=\"" << px(ly + 4) << "\">" << method << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace dgp::bench
