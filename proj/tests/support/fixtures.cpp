#include "fixtures.hpp"

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "alids/random.hpp"

namespace fixtures {

using alids::Rng;
namespace ds = alids::dataset;

std::string blobs_csv(std::size_t n, std::uint64_t seed, double sd) {
  Rng rng(seed);
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < n; ++i) {
    const bool attack = i % 2 == 1;
    const double c = attack ? 0.7 : 0.3;
    const double x = c + sd * rng.normal();
    const double y = c + sd * rng.normal();
    out << x << "," << y << "," << (attack ? "attack" : "normal") << "\n";
  }
  return out.str();
}

ds::FeatureSchema blobs_schema() {
  ds::FeatureSchema s;
  s.columns = {{"x", ds::ColumnKind::numeric}, {"y", ds::ColumnKind::numeric}, {"label", ds::ColumnKind::ignored}};
  s.label_column = "label";
  s.normal_label = "normal";
  return s;
}

ds::EncodedDataset encode_csv(const std::string& csv, const ds::FeatureSchema& schema) {
  const auto records = ds::parse_csv(csv, schema);
  const auto map = ds::fit_encoding(records, schema);
  return ds::binarize_labels(ds::encode(records, map, schema), schema.normal_label);
}

ds::EncodedDataset blobs(std::size_t n, std::uint64_t seed, double sd) {
  return encode_csv(blobs_csv(n, seed, sd), blobs_schema());
}

// ---------------------------------------------------------------------------
// KDD-format surrogate

namespace {

constexpr std::size_t kFields = 41;

struct Record {
  std::array<double, kFields> v{};
  std::string protocol = "tcp";
  std::string service = "http";
  std::string flag = "SF";
};

// Column positions in the KDD layout.
enum Col : std::size_t {
  duration = 0, src_bytes = 4, dst_bytes = 5, land = 6, wrong_fragment = 7, urgent = 8, hot = 9,
  num_failed_logins = 10, logged_in = 11, num_compromised = 12, root_shell = 13, num_root = 15,
  num_file_creations = 16, num_access_files = 18, is_guest_login = 21, count = 22, srv_count = 23,
  serror_rate = 24, srv_serror_rate = 25, rerror_rate = 26, srv_rerror_rate = 27, same_srv_rate = 28,
  diff_srv_rate = 29, srv_diff_host_rate = 30, dst_host_count = 31, dst_host_srv_count = 32,
  dst_host_same_srv_rate = 33, dst_host_diff_srv_rate = 34, dst_host_same_src_port_rate = 35,
  dst_host_srv_diff_host_rate = 36, dst_host_serror_rate = 37, dst_host_srv_serror_rate = 38,
  dst_host_rerror_rate = 39, dst_host_srv_rerror_rate = 40
};

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double u() { return rng_.uniform(); }
  double unif(double a, double b) { return a + (b - a) * u(); }
  double rate(double mean, double sd) { return std::clamp(mean + sd * rng_.normal(), 0.0, 1.0); }
  double num(double mean, double sd, double hi = 511) {
    return std::round(std::clamp(mean + sd * rng_.normal(), 0.0, hi));
  }
  double lognormal(double mu, double sigma) { return std::round(std::exp(mu + sigma * rng_.normal())); }
  bool chance(double p) { return u() < p; }
  template <typename T, std::size_t N>
  const T& pick(const std::array<T, N>& options) {
    return options[rng_.below(N)];
  }

  Record normal() {
    Record r;
    const double kind = u();
    if (kind < 0.62) {
      r.service = "http";
      r.v[src_bytes] = lognormal(5.5, 0.5);
      r.v[dst_bytes] = lognormal(7.8, 1.2);
      r.v[logged_in] = 1;
    } else if (kind < 0.72) {
      r.service = "smtp";
      r.v[src_bytes] = lognormal(7.0, 0.8);
      r.v[dst_bytes] = lognormal(5.8, 0.4);
      r.v[logged_in] = 1;
      r.v[duration] = num(2, 2, 60);
    } else if (kind < 0.80) {
      r.protocol = "udp";
      r.service = "domain_u";
      r.v[src_bytes] = lognormal(3.7, 0.3);
      r.v[dst_bytes] = lognormal(4.6, 0.4);
    } else if (kind < 0.88) {
      r.service = chance(0.5) ? "ftp_data" : "ftp";
      r.v[src_bytes] = lognormal(6.5, 2.0);
      r.v[dst_bytes] = chance(0.6) ? 0 : lognormal(6.0, 1.5);
      r.v[logged_in] = chance(0.8) ? 1 : 0;
      r.v[duration] = chance(0.3) ? num(10, 20, 3000) : 0;
    } else if (kind < 0.93) {
      r.protocol = "udp";
      r.service = chance(0.5) ? "private" : "ntp_u";
      r.v[src_bytes] = lognormal(3.8, 0.4);
      r.v[dst_bytes] = lognormal(3.8, 0.4);
    } else if (kind < 0.96) {
      r.protocol = "icmp";
      r.service = chance(0.6) ? "ecr_i" : "eco_i";
      r.v[src_bytes] = chance(0.5) ? 8 : lognormal(4.0, 0.8);
    } else {
      r.service = chance(0.5) ? "telnet" : "finger";
      r.v[src_bytes] = lognormal(5.0, 1.2);
      r.v[dst_bytes] = lognormal(7.0, 1.5);
      r.v[logged_in] = chance(0.7) ? 1 : 0;
      r.v[duration] = num(30, 60, 5000);
      r.v[hot] = chance(0.2) ? num(1, 1, 10) : 0;
      if (chance(0.05)) r.flag = "RSTO";
    }
    if (r.protocol == "tcp" && chance(0.02)) r.flag = chance(0.5) ? "REJ" : "S1";
    r.v[count] = num(8, 8);
    r.v[srv_count] = num(std::max(1.0, r.v[count]), 6);
    r.v[same_srv_rate] = rate(0.97, 0.08);
    r.v[diff_srv_rate] = rate(0.02, 0.05);
    r.v[srv_diff_host_rate] = rate(0.1, 0.15);
    r.v[serror_rate] = chance(0.05) ? rate(0.1, 0.1) : 0.0;
    r.v[srv_serror_rate] = r.v[serror_rate];
    r.v[rerror_rate] = chance(0.05) ? rate(0.1, 0.1) : 0.0;
    r.v[srv_rerror_rate] = r.v[rerror_rate];
    r.v[dst_host_count] = num(150, 90, 255);
    r.v[dst_host_srv_count] = num(190, 70, 255);
    r.v[dst_host_same_srv_rate] = rate(0.8, 0.25);
    r.v[dst_host_diff_srv_rate] = rate(0.04, 0.06);
    r.v[dst_host_same_src_port_rate] = rate(0.1, 0.2);
    r.v[dst_host_srv_diff_host_rate] = rate(0.03, 0.04);
    r.v[dst_host_serror_rate] = rate(0.01, 0.03);
    r.v[dst_host_srv_serror_rate] = rate(0.01, 0.02);
    r.v[dst_host_rerror_rate] = rate(0.05, 0.1);
    r.v[dst_host_srv_rerror_rate] = rate(0.05, 0.1);
    return r;
  }

  Record smurf() {
    Record r;
    r.protocol = "icmp";
    r.service = "ecr_i";
    r.v[src_bytes] = chance(0.85) ? 1032 : 520;
    r.v[count] = chance(0.9) ? 511 : num(300, 150);
    r.v[srv_count] = r.v[count];
    r.v[same_srv_rate] = 1;
    r.v[dst_host_count] = 255;
    r.v[dst_host_srv_count] = 255;
    r.v[dst_host_same_srv_rate] = 1;
    r.v[dst_host_same_src_port_rate] = 1;
    return r;
  }

  Record neptune() {
    Record r;
    static const std::array<std::string, 6> services{"private", "private", "private", "telnet", "http", "finger"};
    r.service = pick(services);
    r.flag = chance(0.9) ? "S0" : "REJ";
    const bool syn = r.flag == "S0";
    r.v[count] = num(200, 80);
    r.v[srv_count] = num(15, 8);
    r.v[serror_rate] = syn ? 1.0 : 0.0;
    r.v[srv_serror_rate] = r.v[serror_rate];
    r.v[rerror_rate] = syn ? 0.0 : 1.0;
    r.v[srv_rerror_rate] = r.v[rerror_rate];
    r.v[same_srv_rate] = rate(0.07, 0.05);
    r.v[diff_srv_rate] = rate(0.06, 0.03);
    r.v[dst_host_count] = 255;
    r.v[dst_host_srv_count] = num(15, 8, 255);
    r.v[dst_host_same_srv_rate] = rate(0.06, 0.04);
    r.v[dst_host_diff_srv_rate] = rate(0.06, 0.03);
    r.v[dst_host_serror_rate] = syn ? 1.0 : 0.0;
    r.v[dst_host_srv_serror_rate] = r.v[dst_host_serror_rate];
    r.v[dst_host_rerror_rate] = syn ? 0.0 : 1.0;
    r.v[dst_host_srv_rerror_rate] = r.v[dst_host_rerror_rate];
    return r;
  }

  // Remote-to-local and user-to-root attacks ride on ordinary sessions; only a
  // few content features give them away.
  Record back() {
    Record r = normal_session("http");
    r.v[src_bytes] = lognormal(10.9, 0.05);
    r.v[dst_bytes] = lognormal(8.9, 0.3);
    r.v[hot] = 2;
    r.v[num_compromised] = chance(0.5) ? 1 : 0;
    return r;
  }

  Record warezclient() {
    Record r = normal_session(chance(0.7) ? "ftp_data" : "ftp");
    r.v[duration] = num(300, 400, 15000);
    r.v[src_bytes] = lognormal(8.5, 1.5);
    r.v[dst_bytes] = 0;
    r.v[hot] = chance(0.6) ? num(3, 4, 30) : 0;
    r.v[is_guest_login] = chance(0.7) ? 1 : 0;
    return r;
  }

  Record guess_passwd() {
    Record r = normal_session("telnet");
    r.flag = chance(0.6) ? "RSTO" : "SF";
    r.v[src_bytes] = num(125, 5, 1000);
    r.v[dst_bytes] = num(180, 10, 1000);
    r.v[num_failed_logins] = 1;
    r.v[logged_in] = 0;
    r.v[duration] = num(2, 1, 10);
    return r;
  }

  Record buffer_overflow() {
    Record r = normal_session("telnet");
    r.v[duration] = num(100, 80, 3000);
    r.v[src_bytes] = lognormal(7.2, 0.8);
    r.v[dst_bytes] = lognormal(8.5, 0.8);
    r.v[hot] = num(2, 2, 20);
    r.v[root_shell] = chance(0.7) ? 1 : 0;
    r.v[num_file_creations] = chance(0.5) ? num(1, 1, 10) : 0;
    r.v[num_root] = r.v[root_shell] ? num(1, 1, 10) : 0;
    r.v[num_access_files] = chance(0.2) ? 1 : 0;
    return r;
  }

  Record probe(const std::string& name) {
    Record r;
    if (name == "ipsweep") {
      r.protocol = "icmp";
      r.service = "eco_i";
      r.v[src_bytes] = 8;
      r.v[count] = num(2, 2);
      r.v[srv_count] = num(20, 10);
      r.v[srv_diff_host_rate] = rate(0.9, 0.1);
      r.v[dst_host_count] = num(40, 40, 255);
      r.v[dst_host_srv_count] = num(40, 30, 255);
      r.v[dst_host_same_src_port_rate] = rate(0.9, 0.1);
      r.v[dst_host_srv_diff_host_rate] = rate(0.5, 0.2);
      r.v[same_srv_rate] = 1;
      r.v[dst_host_same_srv_rate] = 1;
      return r;
    }
    static const std::array<std::string, 5> services{"private", "other", "telnet", "ftp", "http"};
    r.service = pick(services);
    r.flag = chance(0.6) ? "REJ" : (chance(0.5) ? "RSTR" : "S0");
    r.v[src_bytes] = chance(0.8) ? 0 : num(5, 3, 50);
    r.v[count] = num(name == "satan" ? 80 : 2, 30);
    r.v[srv_count] = num(2, 2);
    r.v[rerror_rate] = r.flag == "S0" ? 0.0 : rate(0.8, 0.2);
    r.v[srv_rerror_rate] = r.v[rerror_rate];
    r.v[serror_rate] = r.flag == "S0" ? rate(0.9, 0.1) : 0.0;
    r.v[srv_serror_rate] = r.v[serror_rate];
    r.v[same_srv_rate] = rate(0.1, 0.1);
    r.v[diff_srv_rate] = rate(0.7, 0.3);
    r.v[dst_host_count] = num(name == "satan" ? 240 : 10, 30, 255);
    r.v[dst_host_srv_count] = num(3, 3, 255);
    r.v[dst_host_same_srv_rate] = rate(0.05, 0.05);
    r.v[dst_host_diff_srv_rate] = rate(0.6, 0.3);
    r.v[dst_host_same_src_port_rate] = rate(name == "portsweep" ? 0.9 : 0.1, 0.1);
    r.v[dst_host_rerror_rate] = r.v[rerror_rate];
    r.v[dst_host_srv_rerror_rate] = r.v[rerror_rate];
    return r;
  }

  std::pair<Record, std::string> draw() {
    const double c = u();
    if (c < 0.568) return {smurf(), "smurf."};
    if (c < 0.785) return {neptune(), "neptune."};
    if (c < 0.982) return {normal(), "normal."};
    if (c < 0.9865) return {back(), "back."};
    if (c < 0.9895) return {probe("satan"), "satan."};
    if (c < 0.992) return {probe("ipsweep"), "ipsweep."};
    if (c < 0.994) return {probe("portsweep"), "portsweep."};
    if (c < 0.996) return {warezclient(), "warezclient."};
    if (c < 0.998) return {probe("nmap"), "nmap."};
    if (c < 0.999) return {guess_passwd(), "guess_passwd."};
    return {buffer_overflow(), "buffer_overflow."};
  }

 private:
  Record normal_session(const std::string& service) {
    Record r = normal();
    r.protocol = "tcp";
    r.service = service;
    r.flag = "SF";
    r.v[logged_in] = 1;
    return r;
  }

  Rng rng_;
};

std::string format_value(double v) {
  char buf[32];
  if (v == std::round(v)) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.2f", v);
  }
  return buf;
}

}  // namespace

std::string kdd_surrogate_csv(std::size_t n, std::uint64_t seed) {
  Gen gen(seed);
  std::string out;
  out.reserve(n * 160);
  for (std::size_t i = 0; i < n; ++i) {
    auto [r, label] = gen.draw();
    for (std::size_t c = 0; c < kFields; ++c) {
      if (c > 0) out += ',';
      if (c == 1) {
        out += r.protocol;
      } else if (c == 2) {
        out += r.service;
      } else if (c == 3) {
        out += r.flag;
      } else {
        out += format_value(r.v[c]);
      }
    }
    out += ',';
    out += label;
    out += '\n';
  }
  return out;
}

ds::FeatureSchema kdd_schema() { return ds::FeatureSchema::load(source_dir() / "data" / "kdd99_schema.json"); }

// ---------------------------------------------------------------------------
// Files and processes

std::filesystem::path source_dir() { return ALIDS_SOURCE_DIR; }
std::filesystem::path cli_path() { return ALIDS_CLI_PATH; }

TempDir::TempDir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "alids-test-XXXXXX").string();
  if (mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

CommandResult run_cli(const std::string& args) {
  const std::string command = "'" + cli_path().string() + "' " + args + " 2>&1";
  CommandResult result;
  FILE* pipe = popen(command.c_str(), "r");
  if (pipe == nullptr) throw std::runtime_error("popen failed");
  std::array<char, 4096> buf;
  std::size_t got;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) result.output.append(buf.data(), got);
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

}  // namespace fixtures
