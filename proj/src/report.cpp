#include "robustft/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <png.h>

#include "json.hpp"
#include "robustft/augment.hpp"
#include "robustft/errors.hpp"
#include "robustft/kv.hpp"

namespace robustft {

using nlohmann::json;

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::size_t index_of(const std::vector<std::string>& v, const std::string& name, const char* what) {
  const auto it = std::find(v.begin(), v.end(), name);
  if (it == v.end()) throw ContractError(std::string("metric grid has no ") + what + " '" + name + "'");
  return static_cast<std::size_t>(it - v.begin());
}

}  // namespace

double to_percent2(double accuracy) { return std::round(accuracy * 10000.0) / 100.0; }

std::vector<std::string> MetricGrid::standard_conditions() {
  std::vector<std::string> c{"Clean"};
  for (AugmentKind k : kAllAugmentKinds) c.emplace_back(short_name(k));
  c.emplace_back("Combined+");
  c.emplace_back("Combined-");
  return c;
}

MetricGrid::MetricGrid(std::vector<std::string> conditions_, std::vector<std::string> models_)
    : conditions(std::move(conditions_)), models(std::move(models_)) {
  cells.assign(conditions.size(), std::vector<double>(models.size(), 0.0));
}

double& MetricGrid::at(const std::string& condition, const std::string& model) {
  return cells[index_of(conditions, condition, "condition")][index_of(models, model, "model")];
}

double MetricGrid::at(const std::string& condition, const std::string& model) const {
  return cells[index_of(conditions, condition, "condition")][index_of(models, model, "model")];
}

double MetricGrid::average_improvement(const std::string& model) const {
  const std::size_t col = index_of(models, model, "model");
  double sum = 0.0;
  for (const auto& row : cells) sum += row[col] - row[0];
  return sum / static_cast<double>(cells.size());
}

double MetricGrid::average_augmented_improvement(const std::string& model) const {
  const std::size_t col = index_of(models, model, "model");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    if (conditions[r] == "Clean") continue;
    sum += cells[r][col] - cells[r][0];
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

std::string MetricGrid::to_csv() const {
  std::ostringstream os;
  os << "condition";
  for (const auto& m : models) os << ',' << m;
  os << '\n';
  for (std::size_t r = 0; r < conditions.size(); ++r) {
    os << conditions[r];
    for (double v : cells[r]) os << ',' << fixed2(to_percent2(v));
    os << '\n';
  }
  return os.str();
}

std::string MetricGrid::to_json() const {
  json j;
  j["unit"] = "percent";
  j["conditions"] = conditions;
  j["models"] = models;
  json rows = json::array();
  for (const auto& row : cells) {
    json r = json::array();
    for (double v : row) r.push_back(to_percent2(v));
    rows.push_back(r);
  }
  j["cells"] = rows;
  json avg = json::object();
  for (std::size_t c = 1; c < models.size(); ++c) avg[models[c]] = std::round(average_improvement(models[c]) * 10000.0) / 100.0;
  j["average_improvement"] = avg;
  return j.dump(2) + "\n";
}

std::string MetricGrid::to_markdown() const {
  std::ostringstream os;
  os << "| |";
  for (const auto& m : models) os << ' ' << m << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < models.size(); ++i) os << "---|";
  os << '\n';
  for (std::size_t r = 0; r < conditions.size(); ++r) {
    os << "| " << conditions[r] << " |";
    for (double v : cells[r]) os << ' ' << fixed2(to_percent2(v)) << "% |";
    os << '\n';
  }
  os << "| Average improvement | --- |";
  for (std::size_t c = 1; c < models.size(); ++c) os << ' ' << fixed2(average_improvement(models[c]) * 100.0) << "% |";
  os << '\n';
  return os.str();
}

MetricGrid MetricGrid::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("metric grid CSV is empty");
  auto header = split_line(line, ',');
  if (header.size() < 2 || header[0] != "condition") throw FormatError("metric grid CSV header must start with 'condition'");
  MetricGrid g;
  g.models.assign(header.begin() + 1, header.end());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_line(line, ',');
    if (fields.size() != header.size()) throw FormatError("metric grid CSV line " + std::to_string(line_no) + " has wrong field count");
    g.conditions.push_back(fields[0]);
    std::vector<double> row;
    for (std::size_t i = 1; i < fields.size(); ++i) row.push_back(parse_double(fields[i]) / 100.0);
    g.cells.push_back(std::move(row));
  }
  return g;
}

MetricGrid MetricGrid::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    MetricGrid g;
    g.conditions = j.at("conditions").get<std::vector<std::string>>();
    g.models = j.at("models").get<std::vector<std::string>>();
    for (const auto& row : j.at("cells")) {
      std::vector<double> r;
      for (const auto& v : row) r.push_back(v.get<double>() / 100.0);
      if (r.size() != g.models.size()) throw FormatError("metric grid JSON row has wrong width");
      g.cells.push_back(std::move(r));
    }
    if (g.cells.size() != g.conditions.size()) throw FormatError("metric grid JSON row count mismatch");
    return g;
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt metric grid JSON: ") + e.what());
  }
}

std::vector<std::string> curve_series() {
  std::vector<std::string> s{"Clean"};
  for (AugmentKind k : kAllAugmentKinds) s.emplace_back(short_name(k));
  return s;
}

namespace {
double series_value(const EpochRecord& e, const std::string& name) {
  if (name == "Clean") return e.clean_accuracy;
  const auto it = e.augmented_accuracy.find(name);
  if (it == e.augmented_accuracy.end()) {
    throw FormatError("run manifest epoch " + std::to_string(e.epoch) + " lacks accuracy for '" + name + "'");
  }
  return it->second;
}
}  // namespace

std::string curves_csv(const RunManifest& manifest) {
  const auto series = curve_series();
  std::ostringstream os;
  os << "epoch";
  for (const auto& s : series) os << ',' << s;
  os << '\n';
  for (const auto& e : manifest.epochs) {
    os << e.epoch + 1;
    for (const auto& s : series) os << ',' << fixed2(to_percent2(series_value(e, s)));
    os << '\n';
  }
  return os.str();
}

std::string curves_svg(const RunManifest& manifest, const std::string& title) {
  static const char* kColors[] = {"#000000", "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6"};
  const auto series = curve_series();
  constexpr double kW = 760, kH = 440, kLeft = 60, kRight = 140, kTop = 40, kBottom = 50;
  const double plot_w = kW - kLeft - kRight, plot_h = kH - kTop - kBottom;
  const std::size_t n = manifest.epochs.size();

  double lo = 1.0, hi = 0.0;
  for (const auto& e : manifest.epochs) {
    for (const auto& s : series) {
      lo = std::min(lo, series_value(e, s));
      hi = std::max(hi, series_value(e, s));
    }
  }
  if (n == 0) lo = 0.0, hi = 1.0;
  lo = std::floor(lo * 10.0) / 10.0;
  hi = std::ceil(hi * 10.0) / 10.0;
  if (hi <= lo) hi = lo + 0.1;

  auto px = [&](std::size_t i) { return kLeft + (n > 1 ? plot_w * static_cast<double>(i) / static_cast<double>(n - 1) : plot_w / 2); };
  auto py = [&](double v) { return kTop + plot_h * (1.0 - (v - lo) / (hi - lo)); };
  auto escape = [](const std::string& s) {
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
  };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW
     << ' ' << kH << "\">\n";
  os << "  <rect x=\"0\" y=\"0\" width=\"" << kW << "\" height=\"" << kH << "\" fill=\"#ffffff\"/>\n";
  os << "  <text x=\"" << kLeft << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">" << escape(title) << "</text>\n";
  const int ticks = static_cast<int>(std::lround((hi - lo) / 0.1));
  for (int t = 0; t <= ticks; ++t) {
    const double v = lo + 0.1 * t;
    os << "  <line x1=\"" << kLeft << "\" y1=\"" << fixed2(py(v)) << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
       << fixed2(py(v)) << "\" stroke=\"#dddddd\"/>\n";
    os << "  <text x=\"" << kLeft - 8 << "\" y=\"" << fixed2(py(v) + 4) << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
       << "font-size=\"11\">" << fixed2(v * 100.0) << "%</text>\n";
  }
  os << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w << "\" y2=\"" << kTop + plot_h
     << "\" stroke=\"#000000\"/>\n";
  os << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + plot_h
     << "\" stroke=\"#000000\"/>\n";
  for (std::size_t i = 0; i < n; ++i) {
    os << "  <text x=\"" << fixed2(px(i)) << "\" y=\"" << kTop + plot_h + 16 << "\" text-anchor=\"middle\" "
       << "font-family=\"sans-serif\" font-size=\"10\">" << manifest.epochs[i].epoch + 1 << "</text>\n";
  }
  os << "  <text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
     << "font-size=\"12\">epoch</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    os << "  <polyline fill=\"none\" stroke=\"" << kColors[s % 8] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
      if (i) os << ' ';
      os << fixed2(px(i)) << ',' << fixed2(py(series_value(manifest.epochs[i], series[s])));
    }
    os << "\"/>\n";
    const double ly = kTop + 14.0 * static_cast<double>(s) + 6;
    os << "  <line x1=\"" << kLeft + plot_w + 12 << "\" y1=\"" << fixed2(ly) << "\" x2=\"" << kLeft + plot_w + 32
       << "\" y2=\"" << fixed2(ly) << "\" stroke=\"" << kColors[s % 8] << "\" stroke-width=\"2\"/>\n";
    os << "  <text x=\"" << kLeft + plot_w + 38 << "\" y=\"" << fixed2(ly + 4) << "\" font-family=\"sans-serif\" "
       << "font-size=\"11\">" << escape(series[s]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

Image read_png(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw FormatError("cannot read PNG '" + path + "': " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw FormatError("cannot decode PNG '" + path + "': " + msg);
  }
  Image img;
  img.height = png.height;
  img.width = png.width;
  img.channels = 3;
  img.pixels.resize(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i] / 255.0;
  return img;
}

void write_png(const std::string& path, const Image& img) {
  if (img.channels != 3) throw ContractError("write_png: expected 3 channels");
  std::vector<unsigned char> buf(img.pixels.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    buf[i] = static_cast<unsigned char>(std::clamp(std::lround(img.pixels[i] * 255.0), 0L, 255L));
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw FormatError("cannot write PNG '" + path + "': " + png.message);
  }
}

}  // namespace robustft
