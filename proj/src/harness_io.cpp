#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "decorr/errors.hpp"
#include "decorr/harness.hpp"

namespace decorr::harness {

std::string experiment_name(Experiment e) {
  switch (e) {
    case Experiment::slr: return "slr";
    case Experiment::mountain_car: return "mountain-car";
    case Experiment::chain_eval: return "chain-eval";
    case Experiment::dqn_gram: return "dqn-gram";
    case Experiment::verify: return "verify";
  }
  return "unknown";
}

Experiment parse_experiment(const std::string& name) {
  for (Experiment e : {Experiment::slr, Experiment::mountain_car, Experiment::chain_eval,
                       Experiment::dqn_gram, Experiment::verify}) {
    if (experiment_name(e) == name) return e;
  }
  throw ConfigError("unknown experiment '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (runs < 1) throw ConfigError("runs must be at least 1");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  switch (experiment) {
    case Experiment::slr:
      if (!(slr.correlation > -1.0 && slr.correlation < 1.0)) throw ConfigError("slr.correlation must lie in (-1,1)");
      if (!(slr.learning_rate > 0.0)) throw ConfigError("slr.learning_rate must be positive");
      if (!(slr.lambda >= 0.0)) throw ConfigError("slr.lambda must be non-negative");
      if (slr.updates < 1 || slr.record_every < 1) throw ConfigError("slr.updates and slr.record_every must be positive");
      if (!(slr.threshold_fraction > 0.0 && slr.threshold_fraction < 1.0))
        throw ConfigError("slr.threshold_fraction must lie in (0,1)");
      break;
    case Experiment::mountain_car:
      if (mountain_car.alpha_grid.empty()) throw ConfigError("mountain-car.alpha_grid must not be empty");
      if (mountain_car.lambda_grid.empty()) throw ConfigError("mountain-car.lambda_grid must not be empty");
      for (double a : mountain_car.alpha_grid)
        if (!(a > 0.0)) throw ConfigError("mountain-car.alpha_grid entries must be positive");
      for (double l : mountain_car.lambda_grid)
        if (!(l >= 0.0)) throw ConfigError("mountain-car.lambda_grid entries must be non-negative");
      if (mountain_car.tilings < 1 || mountain_car.tiles < 1) throw ConfigError("mountain-car.tilings and tiles must be positive");
      if (mountain_car.episodes < 1 || mountain_car.max_episode_steps < 1)
        throw ConfigError("mountain-car.episodes and max_episode_steps must be positive");
      if (!(mountain_car.epsilon >= 0.0 && mountain_car.epsilon <= 1.0)) throw ConfigError("mountain-car.epsilon must lie in [0,1]");
      if (!(mountain_car.gamma >= 0.0 && mountain_car.gamma < 1.0)) throw ConfigError("mountain-car.gamma must lie in [0,1)");
      break;
    case Experiment::chain_eval:
      if (chain.states < 2) throw ConfigError("chain-eval.states must be at least 2");
      if (chain.features > chain.states) throw ConfigError("chain-eval.features cannot exceed states");
      if (!(chain.lambda >= 0.0)) throw ConfigError("chain-eval.lambda must be non-negative");
      if (!(chain.alpha0 > 0.0) || !(chain.decay >= 0.0)) throw ConfigError("chain-eval step schedule is invalid");
      if (!(chain.gamma >= 0.0 && chain.gamma < 1.0)) throw ConfigError("chain-eval.gamma must lie in [0,1)");
      break;
    case Experiment::dqn_gram:
      if (dqn.lambda_grid.empty()) throw ConfigError("dqn-gram.lambda_grid must not be empty");
      for (double l : dqn.lambda_grid)
        if (!(l >= 0.0)) throw ConfigError("dqn-gram.lambda_grid entries must be non-negative");
      if (dqn.rows * dqn.cols < 2) throw ConfigError("dqn-gram grid needs at least two cells");
      if (dqn.batch < 1 || dqn.buffer < dqn.batch) throw ConfigError("dqn-gram.buffer must hold at least one batch");
      if (dqn.sync_period < 1) throw ConfigError("dqn-gram.sync_period must be at least 1");
      if (!(dqn.learning_rate > 0.0)) throw ConfigError("dqn-gram.learning_rate must be positive");
      if (!(dqn.gamma >= 0.0 && dqn.gamma < 1.0)) throw ConfigError("dqn-gram.gamma must lie in [0,1)");
      if (dqn.hidden < 1 || dqn.feature_width < 1) throw ConfigError("dqn-gram widths must be positive");
      if (dqn.checkpoint_every < 1) throw ConfigError("dqn-gram.checkpoint_every must be positive");
      break;
    case Experiment::verify:
      break;
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

std::size_t to_count(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

envs::FeatureMode to_mode(const std::string& v) {
  if (v == "tabular") return envs::FeatureMode::tabular;
  if (v == "random" || v == "random_full_rank") return envs::FeatureMode::random_full_rank;
  if (v == "correlated") return envs::FeatureMode::correlated;
  throw ConfigError("chain-eval.features: expected tabular, random or correlated, got '" + v + "'");
}

Fault to_fault(const std::string& v) {
  if (v == "none") return Fault::none;
  if (v == "sign-flip") return Fault::regularizer_sign_flip;
  if (v == "terminal-mask") return Fault::dropped_terminal_mask;
  if (v == "pair-offset") return Fault::pair_offset;
  throw ConfigError("verify.fault: expected none, sign-flip, terminal-mask or pair-offset, got '" + v + "'");
}

}  // namespace

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(to_real("list", item));
  }
  return out;
}

void set_option(ExperimentConfig& cfg, const std::string& section, const std::string& key,
                const std::string& value) {
  const std::string name = section + "." + key;
  const std::string v = trim(value);
  auto real = [&](double& field) { field = to_real(name, v); };
  auto count = [&](std::size_t& field) { field = to_count(name, v); };

  if (section == "run") {
    if (key == "experiment") return void(cfg.experiment = parse_experiment(v));
    if (key == "seed") return void(cfg.seed = to_count(name, v));
    if (key == "runs") return count(cfg.runs);
    if (key == "jobs") return count(cfg.jobs);
    if (key == "out_dir") return void(cfg.out_dir = v);
  } else if (section == "slr") {
    auto& s = cfg.slr;
    if (key == "correlation") return real(s.correlation);
    if (key == "learning_rate") return real(s.learning_rate);
    if (key == "lambda") return real(s.lambda);
    if (key == "updates") return count(s.updates);
    if (key == "record_every") return count(s.record_every);
    if (key == "threshold_fraction") return real(s.threshold_fraction);
  } else if (section == "mountain-car") {
    auto& m = cfg.mountain_car;
    if (key == "tilings") return count(m.tilings);
    if (key == "tiles") return count(m.tiles);
    if (key == "duplicates") return count(m.duplicates);
    if (key == "episodes") return count(m.episodes);
    if (key == "max_episode_steps") return count(m.max_episode_steps);
    if (key == "epsilon") return real(m.epsilon);
    if (key == "gamma") return real(m.gamma);
    if (key == "alpha_grid") return void(m.alpha_grid = parse_list(v));
    if (key == "lambda_grid") return void(m.lambda_grid = parse_list(v));
  } else if (section == "chain-eval") {
    auto& c = cfg.chain;
    if (key == "states") return count(c.states);
    if (key == "n_features") return count(c.features);
    if (key == "features") return void(c.mode = to_mode(v));
    if (key == "gamma") return real(c.gamma);
    if (key == "lambda") return real(c.lambda);
    if (key == "project_every") return count(c.project_every);
    if (key == "steps") return count(c.steps);
    if (key == "alpha0") return real(c.alpha0);
    if (key == "decay") return real(c.decay);
    if (key == "checkpoint_every") return count(c.checkpoint_every);
  } else if (section == "dqn-gram") {
    auto& d = cfg.dqn;
    if (key == "rows") return count(d.rows);
    if (key == "cols") return count(d.cols);
    if (key == "steps") return count(d.steps);
    if (key == "lambda_grid") return void(d.lambda_grid = parse_list(v));
    if (key == "hidden") return count(d.hidden);
    if (key == "feature_width") return count(d.feature_width);
    if (key == "buffer") return count(d.buffer);
    if (key == "batch") return count(d.batch);
    if (key == "sync_period") return count(d.sync_period);
    if (key == "learning_rate") return real(d.learning_rate);
    if (key == "gamma") return real(d.gamma);
    if (key == "epsilon_final") return real(d.epsilon_final);
    if (key == "anneal_fraction") return real(d.anneal_fraction);
    if (key == "warmup") return count(d.warmup);
    if (key == "max_episode_steps") return count(d.max_episode_steps);
    if (key == "checkpoint_every") return count(d.checkpoint_every);
  } else if (section == "verify") {
    if (key == "fault") return void(cfg.verify.fault = to_fault(v));
  } else {
    throw ConfigError("unknown config section [" + section + "]");
  }
  throw ConfigError("unknown config key " + name);
}

void apply_config(ExperimentConfig& cfg, std::istream& in) {
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": key outside any section");
    set_option(cfg, section, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  apply_config(cfg, in);
}

namespace {

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<CurveRow>& rows) {
  out << "run,x,metric,value\n";
  for (const CurveRow& r : rows) out << r.run << ',' << format_real(r.x) << ',' << r.metric << ',' << format_real(r.value) << '\n';
}

void write_csv_file(const std::filesystem::path& path, const std::vector<CurveRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_csv(out, rows);
}

MeanStderr mean_stderr(const std::vector<double>& values) {
  MeanStderr out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stderr_ = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return out;
}

void write_svg(std::ostream& out, const std::string& title, const std::string& x_label,
               const std::vector<Band>& bands) {
  const double width = 640, height = 400, left = 70, right = 160, top = 40, bottom = 50;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const Band& b : bands) {
    for (std::size_t k = 0; k < b.x.size(); ++k) {
      xmin = std::min(xmin, b.x[k]);
      xmax = std::max(xmax, b.x[k]);
      const double se = k < b.stderr_.size() ? b.stderr_[k] : 0.0;
      ymin = std::min(ymin, b.mean[k] - se);
      ymax = std::max(ymax, b.mean[k] + se);
    }
  }
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  if (!(ymax > ymin)) ymax = ymin + 1.0;
  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  char buf[160];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n", left, top, pw, ph);
  out << buf;
  for (int t = 0; t <= 4; ++t) {
    const double yv = ymin + (ymax - ymin) * t / 4.0, xv = xmin + (xmax - xmin) * t / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\" font-size=\"11\">%.3g</text>\n", left - 6, sy(yv) + 4, yv);
    out << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-size=\"11\">%.3g</text>\n", sx(xv), top + ph + 16, xv);
    out << buf;
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";

  for (std::size_t b = 0; b < bands.size(); ++b) {
    const Band& band = bands[b];
    const char* color = colors[b % 6];
    if (band.x.empty()) continue;
    out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t k = 0; k < band.x.size(); ++k) {
      const double se = k < band.stderr_.size() ? band.stderr_[k] : 0.0;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", sx(band.x[k]), sy(band.mean[k] + se));
      out << buf;
    }
    for (std::size_t k = band.x.size(); k-- > 0;) {
      const double se = k < band.stderr_.size() ? band.stderr_[k] : 0.0;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", sx(band.x[k]), sy(band.mean[k] - se));
      out << buf;
    }
    out << "\"/>\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < band.x.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", sx(band.x[k]), sy(band.mean[k]));
      out << buf;
    }
    out << "\"/>\n";
    const double ly = top + 14 + 18 * static_cast<double>(b);
    std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"14\" height=\"4\" fill=\"%s\"/>\n", left + pw + 10, ly - 4, color);
    out << buf;
    out << "<text x=\"" << left + pw + 30 << "\" y=\"" << ly << "\" font-size=\"11\">" << band.label << "</text>\n";
  }
  out << "</svg>\n";
}

void write_svg_file(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                    const std::vector<Band>& bands) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_svg(out, title, x_label, bands);
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace decorr::harness
