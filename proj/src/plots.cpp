#include "dsmt/plots.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dsmt/errors.hpp"

namespace dsmt {

namespace {

constexpr const char* kFemaleColor = "#d1495b";
constexpr const char* kMaleColor = "#1f6fb2";
const char* kSeriesColors[] = {"#888888", "#d1495b", "#e8a33d", "#4f9d69",
                               "#1f6fb2"};

struct Axis {
  double lo, hi;       // data range
  double px0, px1;     // pixel range
  double to_px(double v) const {
    return px0 + (v - lo) / (hi - lo) * (px1 - px0);
  }
};

std::vector<double> nice_ticks(double lo, double hi, int target = 6) {
  const double span = hi - lo;
  double step = std::pow(10.0, std::floor(std::log10(span / target)));
  for (double mult : {1.0, 2.0, 5.0, 10.0})
    if (span / (step * mult) <= target) {
      step *= mult;
      break;
    }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9; t += step)
    ticks.push_back(t);
  return ticks;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::ofstream open_or_throw(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write plot file " + path);
  return f;
}

}  // namespace

double confidence_band_halfwidth(const std::vector<double>& y,
                                 const std::vector<double>& yhat) {
  return 1.96 * error_sd(y, yhat);
}

void emit_scatter_plot(const std::string& svg_path,
                       const std::string& csv_path,
                       const std::vector<double>& y,
                       const std::vector<double>& yhat,
                       const std::vector<int>& sexes) {
  if (y.empty() || y.size() != yhat.size() || y.size() != sexes.size())
    throw ParameterError("emit_scatter_plot: misaligned inputs");

  {
    auto csv = open_or_throw(csv_path);
    csv << "y_true,y_pred,sex\n" << std::setprecision(10);
    for (std::size_t i = 0; i < y.size(); ++i)
      csv << y[i] << ',' << yhat[i] << ',' << sexes[i] << '\n';
  }

  const double m = mae(y, yhat);
  const double sd = error_sd(y, yhat);
  const double band = confidence_band_halfwidth(y, yhat);

  double lo = y[0], hi = y[0];
  for (std::size_t i = 0; i < y.size(); ++i) {
    lo = std::min({lo, y[i], yhat[i]});
    hi = std::max({hi, y[i], yhat[i]});
  }
  const double pad = std::max(1.0, 0.05 * (hi - lo));
  lo -= pad;
  hi += pad;

  const int W = 640, H = 560;
  Axis ax{lo, hi, 70, W - 30.0};
  Axis ay{lo, hi, H - 60.0, 30};  // inverted: larger value higher up

  auto svg = open_or_throw(svg_path);
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W
      << "' height='" << H << "' viewBox='0 0 " << W << ' ' << H << "'>\n";
  svg << "<rect width='" << W << "' height='" << H << "' fill='white'/>\n";

  // 95% band around the identity line.
  svg << "<polygon points='" << ax.to_px(lo) << ',' << ay.to_px(lo + band)
      << ' ' << ax.to_px(hi) << ',' << ay.to_px(hi + band) << ' '
      << ax.to_px(hi) << ',' << ay.to_px(hi - band) << ' ' << ax.to_px(lo)
      << ',' << ay.to_px(lo - band)
      << "' fill='#9db8d2' fill-opacity='0.35'/>\n";

  // axes + ticks
  svg << "<line x1='" << ax.px0 << "' y1='" << ay.px0 << "' x2='" << ax.px1
      << "' y2='" << ay.px0 << "' stroke='black'/>\n";
  svg << "<line x1='" << ax.px0 << "' y1='" << ay.px0 << "' x2='" << ax.px0
      << "' y2='" << ay.px1 << "' stroke='black'/>\n";
  for (double t : nice_ticks(lo, hi)) {
    svg << "<line x1='" << ax.to_px(t) << "' y1='" << ay.px0 << "' x2='"
        << ax.to_px(t) << "' y2='" << ay.px0 + 5 << "' stroke='black'/>\n";
    svg << "<text x='" << ax.to_px(t) << "' y='" << ay.px0 + 18
        << "' font-size='11' text-anchor='middle'>" << num(t) << "</text>\n";
    svg << "<line x1='" << ax.px0 - 5 << "' y1='" << ay.to_px(t) << "' x2='"
        << ax.px0 << "' y2='" << ay.to_px(t) << "' stroke='black'/>\n";
    svg << "<text x='" << ax.px0 - 8 << "' y='" << ay.to_px(t) + 4
        << "' font-size='11' text-anchor='end'>" << num(t) << "</text>\n";
  }
  svg << "<text x='" << (ax.px0 + ax.px1) / 2 << "' y='" << H - 18
      << "' font-size='13' text-anchor='middle'>chronological age "
         "(years)</text>\n";
  svg << "<text x='18' y='" << (ay.px0 + ay.px1) / 2
      << "' font-size='13' text-anchor='middle' transform='rotate(-90 18 "
      << (ay.px0 + ay.px1) / 2 << ")'>predicted brain age (years)</text>\n";

  // identity line
  svg << "<line x1='" << ax.to_px(lo) << "' y1='" << ay.to_px(lo) << "' x2='"
      << ax.to_px(hi) << "' y2='" << ay.to_px(hi)
      << "' stroke='black' stroke-dasharray='5,4'/>\n";

  for (std::size_t i = 0; i < y.size(); ++i)
    svg << "<circle cx='" << ax.to_px(y[i]) << "' cy='" << ay.to_px(yhat[i])
        << "' r='3' fill='" << (sexes[i] == 0 ? kFemaleColor : kMaleColor)
        << "' fill-opacity='0.75'/>\n";

  // annotation + legend
  svg << "<text x='" << ax.px0 + 12 << "' y='44' font-size='13'>MAE "
      << std::fixed << std::setprecision(2) << m << " +/- " << sd << " (N="
      << y.size() << ")</text>\n";
  svg << "<circle cx='" << ax.px1 - 120 << "' cy='40' r='4' fill='"
      << kFemaleColor << "'/><text x='" << ax.px1 - 110
      << "' y='44' font-size='12'>female</text>\n";
  svg << "<circle cx='" << ax.px1 - 120 << "' cy='58' r='4' fill='"
      << kMaleColor << "'/><text x='" << ax.px1 - 110
      << "' y='62' font-size='12'>male</text>\n";
  svg << "</svg>\n";
  if (!svg) throw IoError("short write to " + svg_path);
}

void emit_bracket_bars(const std::string& svg_path,
                       const std::string& csv_path,
                       const std::vector<std::string>& bracket_labels,
                       const std::vector<BracketSeries>& series) {
  if (series.empty() || bracket_labels.empty())
    throw ParameterError("emit_bracket_bars: nothing to plot");
  for (const auto& s : series)
    if (s.mae.size() != bracket_labels.size() ||
        s.sd.size() != bracket_labels.size())
      throw ParameterError("emit_bracket_bars: series length mismatch");

  {
    auto csv = open_or_throw(csv_path);
    csv << "bracket,model,n,mae,sd\n" << std::setprecision(10);
    for (std::size_t b = 0; b < bracket_labels.size(); ++b)
      for (const auto& s : series)
        csv << bracket_labels[b] << ',' << s.label << ','
            << (b < s.n.size() ? s.n[b] : 0) << ',' << s.mae[b] << ','
            << s.sd[b] << '\n';
  }

  double top = 0.0;
  for (const auto& s : series)
    for (std::size_t b = 0; b < s.mae.size(); ++b)
      if (std::isfinite(s.mae[b])) top = std::max(top, s.mae[b] + s.sd[b]);
  top = std::max(top * 1.15, 1e-6);

  const int W = 760, H = 440;
  const double x0 = 70, x1 = W - 20, y0 = H - 70, y1 = 30;
  const double group_w = (x1 - x0) / bracket_labels.size();
  const double bar_w = group_w * 0.8 / series.size();
  Axis ay{0.0, top, y0, y1};

  auto svg = open_or_throw(svg_path);
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W
      << "' height='" << H << "' viewBox='0 0 " << W << ' ' << H << "'>\n";
  svg << "<rect width='" << W << "' height='" << H << "' fill='white'/>\n";
  svg << "<line x1='" << x0 << "' y1='" << y0 << "' x2='" << x1 << "' y2='"
      << y0 << "' stroke='black'/>\n";
  svg << "<line x1='" << x0 << "' y1='" << y0 << "' x2='" << x0 << "' y2='"
      << y1 << "' stroke='black'/>\n";
  for (double t : nice_ticks(0.0, top, 5)) {
    svg << "<line x1='" << x0 - 5 << "' y1='" << ay.to_px(t) << "' x2='" << x0
        << "' y2='" << ay.to_px(t) << "' stroke='black'/>\n";
    svg << "<text x='" << x0 - 8 << "' y='" << ay.to_px(t) + 4
        << "' font-size='11' text-anchor='end'>" << num(t) << "</text>\n";
  }
  svg << "<text x='18' y='" << (y0 + y1) / 2
      << "' font-size='13' text-anchor='middle' transform='rotate(-90 18 "
      << (y0 + y1) / 2 << ")'>MAE (years)</text>\n";

  for (std::size_t b = 0; b < bracket_labels.size(); ++b) {
    const double gx = x0 + b * group_w + group_w * 0.1;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = series[s].mae[b];
      if (!std::isfinite(v)) continue;
      const double bx = gx + s * bar_w;
      const double by = ay.to_px(v);
      svg << "<rect x='" << bx << "' y='" << by << "' width='"
          << bar_w * 0.92 << "' height='" << (y0 - by) << "' fill='"
          << kSeriesColors[s % 5] << "'/>\n";
      const double sd = series[s].sd[b];
      if (std::isfinite(sd) && sd > 0.0) {
        const double cx = bx + bar_w * 0.46;
        svg << "<line x1='" << cx << "' y1='" << ay.to_px(v - sd) << "' x2='"
            << cx << "' y2='" << ay.to_px(std::min(v + sd, top))
            << "' stroke='black'/>\n";
      }
    }
    svg << "<text x='" << x0 + b * group_w + group_w / 2 << "' y='" << y0 + 18
        << "' font-size='11' text-anchor='middle'>" << bracket_labels[b]
        << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double lx = x0 + 10 + s * 130;
    svg << "<rect x='" << lx << "' y='" << H - 34 << "' width='12' height='12' fill='"
        << kSeriesColors[s % 5] << "'/>\n";
    svg << "<text x='" << lx + 16 << "' y='" << H - 24
        << "' font-size='12'>" << series[s].label << "</text>\n";
  }
  svg << "</svg>\n";
  if (!svg) throw IoError("short write to " + svg_path);
}

void emit_plots(const std::vector<double>& y, const std::vector<double>& yhat,
                const std::vector<int>& sexes, const std::string& out_dir,
                const std::vector<double>& bracket_edges,
                const std::string& model_label) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir))
    throw IoError("cannot create plot directory " + out_dir);

  const auto base = fs::path(out_dir);
  emit_scatter_plot((base / "scatter.svg").string(),
                    (base / "scatter_data.csv").string(), y, yhat, sexes);

  auto rep = stratify(y, yhat, sexes, bracket_edges);
  BracketSeries series;
  series.label = model_label;
  for (const auto& m : rep.by_bracket) {
    series.mae.push_back(m.n ? m.mae
                             : std::numeric_limits<double>::quiet_NaN());
    series.sd.push_back(m.n ? m.sd : std::numeric_limits<double>::quiet_NaN());
    series.n.push_back(m.n);
  }
  emit_bracket_bars((base / "mae_by_bracket.svg").string(),
                    (base / "mae_by_bracket_data.csv").string(),
                    rep.bracket_labels, {series});
}

}  // namespace dsmt
