#include "decorr/mdp.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "decorr/errors.hpp"

namespace decorr {

void MdpSpec::validate() const {
  if (features.rows() != n_states) {
    throw DimensionError("MdpSpec: features " + features.shape() + " for " +
                         std::to_string(n_states) + " states");
  }
  if (transition.rows() != n_states || transition.cols() != n_states) {
    throw DimensionError("MdpSpec: transition " + transition.shape() + " for " +
                         std::to_string(n_states) + " states");
  }
  if (rewards.size() != n_states || mu.size() != n_states || terminal.size() != n_states) {
    throw DimensionError("MdpSpec: per-state vectors must have length n_states");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw DomainError("MdpSpec: gamma must lie in [0,1), got " + std::to_string(gamma));
  }
  for (std::size_t s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (double p : transition.row(s)) {
      if (p < 0.0) throw DomainError("MdpSpec: negative transition probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      throw DomainError("MdpSpec: transition row " + std::to_string(s) + " sums to " +
                        std::to_string(sum));
    }
  }
  double total = 0.0;
  for (double m : mu) {
    if (m < 0.0) throw DomainError("MdpSpec: negative mu entry");
    total += m;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw DomainError("MdpSpec: mu sums to " + std::to_string(total));
  }
  const Vector pushed = matvec_t(transition, mu);
  for (std::size_t s = 0; s < n_states; ++s) {
    if (std::abs(pushed[s] - mu[s]) > 1e-9) {
      throw DomainError("MdpSpec: mu is not stationary at state " + std::to_string(s));
    }
  }
}

Vector stationary_distribution(const Matrix& transition) {
  const std::size_t n = transition.rows();
  // (Pᵀ − I)μ = 0 with the last equation replaced by Σμ = 1.
  Matrix system(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) system(i, j) = transition(j, i) - (i == j ? 1.0 : 0.0);
  Vector rhs(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) system(n - 1, j) = 1.0;
  rhs[n - 1] = 1.0;
  Vector mu = solve(system, rhs);
  double total = 0.0;
  for (double& m : mu) {
    if (m < 0.0 && m > -1e-14) m = 0.0;
    total += m;
  }
  for (double& m : mu) m /= total;
  return mu;
}

namespace {

void write_row(std::ostream& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ' ';
    out << values[i];
  }
  out << '\n';
}

Vector parse_reals(const std::string& line, std::size_t expected, const std::string& section) {
  std::istringstream in(line);
  Vector values;
  double v;
  while (in >> v) values.push_back(v);
  if (!in.eof()) throw ConfigError("mdp file: unparsable number in [" + section + "]");
  if (values.size() != expected) {
    throw ConfigError("mdp file: expected " + std::to_string(expected) + " values in [" +
                      section + "], found " + std::to_string(values.size()));
  }
  return values;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void write_mdp(std::ostream& out, const MdpSpec& mdp) {
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::setprecision(17);
  out << "# decorr MdpSpec v1\n[mdp]\n";
  out << "n_states = " << mdp.n_states << '\n';
  out << "n_features = " << mdp.n_features() << '\n';
  out << "gamma = " << mdp.gamma << '\n';
  out << "[features]\n";
  for (std::size_t s = 0; s < mdp.n_states; ++s) write_row(out, mdp.features.row(s));
  out << "[transition]\n";
  for (std::size_t s = 0; s < mdp.n_states; ++s) write_row(out, mdp.transition.row(s));
  out << "[rewards]\n";
  write_row(out, mdp.rewards);
  out << "[mu]\n";
  write_row(out, mdp.mu);
  out << "[terminal]\n";
  for (std::size_t s = 0; s < mdp.n_states; ++s) out << (s ? " " : "") << (mdp.terminal[s] ? 1 : 0);
  out << '\n';
  out.flags(flags);
  out.precision(precision);
}

MdpSpec read_mdp(std::istream& in) {
  std::map<std::string, std::vector<std::string>> sections;
  std::string current;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      current = line.substr(1, line.size() - 2);
      sections[current];
      continue;
    }
    if (current.empty()) throw ConfigError("mdp file: content before first section");
    sections[current].push_back(line);
  }

  auto section = [&](const std::string& name) -> const std::vector<std::string>& {
    auto it = sections.find(name);
    if (it == sections.end()) throw ConfigError("mdp file: missing section [" + name + "]");
    return it->second;
  };

  std::map<std::string, std::string> header;
  for (const auto& kv : section("mdp")) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("mdp file: expected key = value, got '" + kv + "'");
    header[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
  }
  auto key = [&](const std::string& k) {
    auto it = header.find(k);
    if (it == header.end()) throw ConfigError("mdp file: missing key " + k);
    return it->second;
  };

  MdpSpec mdp;
  std::size_t d = 0;
  try {
    mdp.n_states = std::stoul(key("n_states"));
    d = std::stoul(key("n_features"));
    mdp.gamma = std::stod(key("gamma"));
  } catch (const std::logic_error&) {
    throw ConfigError("mdp file: malformed [mdp] header");
  }
  const std::size_t n = mdp.n_states;

  const auto& feat = section("features");
  const auto& trans = section("transition");
  if (feat.size() != n || trans.size() != n) {
    throw ConfigError("mdp file: [features] and [transition] need one row per state");
  }
  mdp.features = Matrix(n, d);
  mdp.transition = Matrix(n, n);
  for (std::size_t s = 0; s < n; ++s) {
    const Vector f = parse_reals(feat[s], d, "features");
    std::copy(f.begin(), f.end(), mdp.features.row(s).begin());
    const Vector p = parse_reals(trans[s], n, "transition");
    std::copy(p.begin(), p.end(), mdp.transition.row(s).begin());
  }
  auto single_line = [&](const std::string& name) {
    const auto& lines = section(name);
    if (lines.size() != 1) throw ConfigError("mdp file: [" + name + "] must be one line");
    return parse_reals(lines[0], n, name);
  };
  mdp.rewards = single_line("rewards");
  mdp.mu = single_line("mu");
  const Vector flags = single_line("terminal");
  mdp.terminal.resize(n);
  for (std::size_t s = 0; s < n; ++s) mdp.terminal[s] = flags[s] != 0.0;
  mdp.validate();
  return mdp;
}

void save_mdp(const std::filesystem::path& path, const MdpSpec& mdp) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_mdp(out, mdp);
}

MdpSpec load_mdp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  return read_mdp(in);
}

}  // namespace decorr
