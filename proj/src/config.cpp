#include "semibolt/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace semibolt::cli {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw std::invalid_argument("config: key '" + key +
                                "' expects a real number, got '" + v + "'");
  }
}

long parse_long(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw std::invalid_argument("config: key '" + key +
                                "' expects an integer, got '" + v + "'");
  }
}

Vec parse_list(const std::string& key, const std::string& v) {
  Vec out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  if (out.empty())
    throw std::invalid_argument("config: key '" + key + "' expects a list");
  return out;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig c;
  std::map<std::string, std::function<void(const std::string&)>> setters;

  auto str = [&](const char* k, std::string* p) {
    setters[k] = [p](const std::string& v) { *p = v; };
  };
  auto dbl = [&](const char* k, double* p) {
    setters[k] = [p, k](const std::string& v) { *p = parse_double(k, v); };
  };
  auto lng = [&](const char* k, long* p) {
    setters[k] = [p, k](const std::string& v) { *p = parse_long(k, v); };
  };
  auto itg = [&](const char* k, int* p) {
    setters[k] = [p, k](const std::string& v) {
      *p = static_cast<int>(parse_long(k, v));
    };
  };
  auto u64 = [&](const char* k, uint64_t* p) {
    setters[k] = [p, k](const std::string& v) {
      *p = static_cast<uint64_t>(parse_long(k, v));
    };
  };

  str("problem", &c.problem);
  str("method", &c.method);
  dbl("eps", &c.eps);
  dbl("sigma_true", &c.sigma_true);
  itg("hidden_layers", &c.hidden_layers);
  itg("neurons", &c.neurons);
  itg("rho_hidden_layers", &c.rho_hidden_layers);
  itg("rho_neurons", &c.rho_neurons);
  itg("diff_hidden_layers", &c.diff_hidden_layers);
  itg("diff_neurons", &c.diff_neurons);
  itg("corr_hidden_layers", &c.corr_hidden_layers);
  itg("corr_neurons", &c.corr_neurons);
  itg("g_hidden_layers", &c.g_hidden_layers);
  itg("g_neurons", &c.g_neurons);
  itg("phi_hidden_layers", &c.phi_hidden_layers);
  itg("phi_neurons", &c.phi_neurons);
  str("diffusion_variant", &c.diffusion_variant);
  lng("epochs", &c.epochs);
  lng("pretrain_epochs", &c.pretrain_epochs);
  dbl("lr", &c.lr);
  str("lr_schedule", &c.lr_schedule);
  dbl("lr_decay_factor", &c.lr_decay_factor);
  lng("lr_decay_interval", &c.lr_decay_interval);
  dbl("lr_floor", &c.lr_floor);
  u64("seed", &c.seed);
  itg("n_obs_rho", &c.n_obs_rho);
  itg("n_obs_phi", &c.n_obs_phi);
  dbl("obs_noise", &c.obs_noise);
  u64("obs_seed", &c.obs_seed);
  setters["sigma0_list"] = [&c](const std::string& v) {
    c.sigma0_list = parse_list("sigma0_list", v);
  };
  itg("nv", &c.nv);
  itg("hermite_order", &c.hermite_order);
  itg("colloc_nt", &c.colloc_nt);
  itg("colloc_nx", &c.colloc_nx);
  dbl("ref_dx", &c.ref_dx);
  dbl("ref_dt", &c.ref_dt);
  dbl("t_final", &c.t_final);
  itg("rel_log_interval", &c.rel_log_interval);
  dbl("divergence_guard", &c.divergence_guard);
  dbl("lambda1", &c.lambda1);
  dbl("lambda2", &c.lambda2);
  dbl("lambda1_diff", &c.lambda1_diff);
  dbl("lambda2_diff", &c.lambda2_diff);
  dbl("w_data_rho", &c.w_data_rho);
  dbl("w_data_phi", &c.w_data_phi);
  dbl("w_poisson", &c.w_poisson);
  dbl("beta", &c.beta);
  dbl("bias_v", &c.bias_v);
  str("out_dir", &c.out_dir);

  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key=value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end())
      throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second(val);
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good())
    throw std::invalid_argument("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (c.problem != "problem1" && c.problem != "problem2")
    fail("config: problem must be problem1 or problem2");
  const bool known_method =
      c.method == "pinn" || c.method == "apnn" || c.method == "bi_explicit" ||
      c.method == "bi_implicit" || c.method == "reference" ||
      c.method == "drift_diffusion";
  if (!known_method) fail("config: unknown method '" + c.method + "'");
  if (c.method == "drift_diffusion" && c.problem == "problem2")
    fail("config: drift_diffusion needs the given-potential problem");
  if (!(c.eps > 0.0)) fail("config: eps must be > 0");
  if (c.epochs < 0 || c.pretrain_epochs < 0) fail("config: epochs must be >= 0");
  if (c.nv < 1) fail("config: nv must be >= 1");
  if (c.hermite_order >= 0 && c.hermite_order > c.nv - 1)
    fail("config: hermite_order aliases the quadrature (max nv-1)");
  if (c.colloc_nt < 1 || c.colloc_nx < 1) fail("config: collocation empty");
  if (!(c.ref_dx > 0.0) || !(c.ref_dt > 0.0) || !(c.t_final > 0.0))
    fail("config: grid steps must be positive");
  if (c.diffusion_variant != "auto" && c.diffusion_variant != "v1" &&
      c.diffusion_variant != "v2")
    fail("config: diffusion_variant must be auto, v1 or v2");
  if (c.lr_schedule != "auto" && c.lr_schedule != "constant" &&
      c.lr_schedule != "step_decay")
    fail("config: lr_schedule must be auto, constant or step_decay");
  if (c.lambda1 < 0 || c.lambda2 < 0 || c.lambda1_diff < 0 ||
      c.lambda2_diff < 0 || c.w_data_rho < 0 || c.w_data_phi < 0 ||
      c.w_poisson < 0)
    fail("config: penalty weights must be >= 0");
  if (c.n_obs_rho < 0 || c.n_obs_phi < 0)
    fail("config: observation counts must be >= 0");
  for (double s0 : c.sigma0_list)
    if (!(s0 > 0.0)) fail("config: sigma0 guesses must be positive");
  if (!(c.beta > 0.0)) fail("config: beta must be positive");
}

std::string canonical_text(const ExperimentConfig& c) {
  std::ostringstream os;
  auto num = [&](const char* k, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << k << "=" << buf << "\n";
  };
  os << "problem=" << c.problem << "\n";
  os << "method=" << c.method << "\n";
  num("eps", c.eps);
  num("sigma_true", c.sigma_true);
  os << "hidden_layers=" << c.hidden_layers << "\n";
  os << "neurons=" << c.neurons << "\n";
  os << "rho_hidden_layers=" << c.rho_hidden_layers << "\n";
  os << "rho_neurons=" << c.rho_neurons << "\n";
  os << "diff_hidden_layers=" << c.diff_hidden_layers << "\n";
  os << "diff_neurons=" << c.diff_neurons << "\n";
  os << "corr_hidden_layers=" << c.corr_hidden_layers << "\n";
  os << "corr_neurons=" << c.corr_neurons << "\n";
  os << "g_hidden_layers=" << c.g_hidden_layers << "\n";
  os << "g_neurons=" << c.g_neurons << "\n";
  os << "phi_hidden_layers=" << c.phi_hidden_layers << "\n";
  os << "phi_neurons=" << c.phi_neurons << "\n";
  os << "diffusion_variant=" << c.diffusion_variant << "\n";
  os << "epochs=" << c.epochs << "\n";
  os << "pretrain_epochs=" << c.pretrain_epochs << "\n";
  num("lr", c.lr);
  os << "lr_schedule=" << c.lr_schedule << "\n";
  num("lr_decay_factor", c.lr_decay_factor);
  os << "lr_decay_interval=" << c.lr_decay_interval << "\n";
  num("lr_floor", c.lr_floor);
  os << "seed=" << c.seed << "\n";
  os << "n_obs_rho=" << c.n_obs_rho << "\n";
  os << "n_obs_phi=" << c.n_obs_phi << "\n";
  num("obs_noise", c.obs_noise);
  os << "obs_seed=" << c.obs_seed << "\n";
  os << "sigma0_list=";
  for (size_t i = 0; i < c.sigma0_list.size(); ++i) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", c.sigma0_list[i]);
    os << (i ? "," : "") << buf;
  }
  os << "\n";
  os << "nv=" << c.nv << "\n";
  os << "hermite_order=" << c.hermite_order << "\n";
  os << "colloc_nt=" << c.colloc_nt << "\n";
  os << "colloc_nx=" << c.colloc_nx << "\n";
  num("ref_dx", c.ref_dx);
  num("ref_dt", c.ref_dt);
  num("t_final", c.t_final);
  os << "rel_log_interval=" << c.rel_log_interval << "\n";
  num("divergence_guard", c.divergence_guard);
  num("lambda1", c.lambda1);
  num("lambda2", c.lambda2);
  num("lambda1_diff", c.lambda1_diff);
  num("lambda2_diff", c.lambda2_diff);
  num("w_data_rho", c.w_data_rho);
  num("w_data_phi", c.w_data_phi);
  num("w_poisson", c.w_poisson);
  num("beta", c.beta);
  num("bias_v", c.bias_v);
  return os.str();
}

std::string config_hash(const ExperimentConfig& c) {
  std::string t = canonical_text(c);
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : t) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace semibolt::cli
