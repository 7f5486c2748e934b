#pragma once

// SolutionBundle container, on-disk format, and coordinate normalization.
//
// A bundle on disk is a directory holding meta.json and u.f64 (raw
// little-endian doubles, time-major: row i = time index i).

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "symmflow/array.hpp"
#include "symmflow/common.hpp"
#include "symmflow/pde.hpp"

namespace symmflow {

static_assert(std::endian::native == std::endian::little,
              "bundle payload I/O assumes a little-endian host");

inline constexpr int kBundleFormatVersion = 1;

struct SolutionBundle {
  std::string equation;
  double L = 0.0;
  double T = 0.0;
  int64_t n_x = 0;
  int64_t n_t = 0;
  uint64_t seed = 0;
  std::map<std::string, double> params;
  nlohmann::json provenance;  // optional, carried through augmentation
  NdArray u;                  // [n_t, n_x]

  double x(int64_t j) const { return L * static_cast<double>(j) / static_cast<double>(n_x); }
  double t(int64_t i) const {
    return n_t > 1 ? T * static_cast<double>(i) / static_cast<double>(n_t - 1) : 0.0;
  }
  int64_t grid_size() const { return n_x * n_t; }

  PdeSpec spec() const {
    PdeSpec s = make_pde_spec(equation);
    s.L = L;
    s.T = T;
    if (auto it = params.find("nu"); it != params.end()) s.nu = it->second;
    if (auto it = params.find("t0"); it != params.end()) s.t0 = it->second;
    return s;
  }
};

namespace detail {
inline const nlohmann::json& json_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  require(it != j.end(), std::string("meta.json: missing field '") + key + "'");
  return *it;
}
}  // namespace detail

inline void write_bundle(const SolutionBundle& b, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  require(b.u.rank() == 2 && b.u.dims()[0] == b.n_t && b.u.dims()[1] == b.n_x,
          "write_bundle: u-grid shape does not match N_t x N_x");
  require(b.u.all_finite(), "write_bundle: non-finite values in u-grid");

  fs::path tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  nlohmann::json meta;
  meta["format_version"] = kBundleFormatVersion;
  meta["name"] = b.equation;
  meta["L"] = b.L;
  meta["T"] = b.T;
  meta["N_x"] = b.n_x;
  meta["N_t"] = b.n_t;
  meta["seed"] = b.seed;
  meta["params"] = b.params;
  if (!b.provenance.is_null()) meta["provenance"] = b.provenance;
  {
    std::ofstream f(tmp / "meta.json");
    f << meta.dump(2) << "\n";
    require(f.good(), "write_bundle: failed writing meta.json");
  }
  {
    std::ofstream f(tmp / "u.f64", std::ios::binary);
    f.write(reinterpret_cast<const char*>(b.u.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(b.u.numel())));
    require(f.good(), "write_bundle: failed writing u.f64");
  }
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

inline SolutionBundle read_bundle(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  require(fs::exists(dir / "meta.json"), "read_bundle: no meta.json under " + dir.string());
  nlohmann::json meta;
  {
    std::ifstream f(dir / "meta.json");
    try {
      f >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("read_bundle: malformed meta.json: " + std::string(e.what()));
    }
  }
  int version = detail::json_field(meta, "format_version").get<int>();
  require(version == kBundleFormatVersion,
          "read_bundle: unsupported format_version " + std::to_string(version));

  SolutionBundle b;
  b.equation = detail::json_field(meta, "name").get<std::string>();
  b.L = detail::json_field(meta, "L").get<double>();
  b.T = detail::json_field(meta, "T").get<double>();
  b.n_x = detail::json_field(meta, "N_x").get<int64_t>();
  b.n_t = detail::json_field(meta, "N_t").get<int64_t>();
  b.seed = detail::json_field(meta, "seed").get<uint64_t>();
  for (auto& [k, v] : detail::json_field(meta, "params").items())
    b.params[k] = v.get<double>();
  if (meta.contains("provenance")) b.provenance = meta["provenance"];

  std::ifstream f(dir / "u.f64", std::ios::binary);
  require(f.good(), "read_bundle: missing u.f64 under " + dir.string());
  f.seekg(0, std::ios::end);
  int64_t bytes = static_cast<int64_t>(f.tellg());
  int64_t expected = 8 * b.n_x * b.n_t;
  require(bytes == expected, "read_bundle: u.f64 payload is " + std::to_string(bytes) +
                                 " bytes, expected " + std::to_string(expected));
  f.seekg(0);
  b.u = NdArray({b.n_t, b.n_x});
  f.read(reinterpret_cast<char*>(b.u.data()), bytes);
  require(f.good(), "read_bundle: truncated u.f64 payload");
  require(b.u.all_finite(), "read_bundle: non-finite values in u.f64");
  return b;
}

/// Returns bundle subdirectories of `dir` in lexicographic order.
inline std::vector<std::filesystem::path> list_bundle_dirs(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> out;
  require(fs::is_directory(dir), "not a directory: " + dir.string());
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "meta.json")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Coordinate normalization: (x,t) onto [0,1]^2, u centered and scaled so
// its dataset-wide standard deviation matches that of a uniform grid
// coordinate, 1/sqrt(12).

inline constexpr double kTargetUStd = 0.28867513459481287;  // 1/sqrt(12)

struct Normalization {
  double L = 1.0;
  double T = 1.0;
  double u_offset = 0.0;
  double u_scale = 1.0;  // physical u = u_offset + u_scale * normalized u
  bool degenerate_u = false;

  static Normalization fit(std::span<const SolutionBundle> bundles) {
    require(!bundles.empty(), "Normalization::fit: empty dataset");
    Normalization n;
    n.L = bundles[0].L;
    n.T = bundles[0].T;
    double sum = 0.0, count = 0.0;
    for (const auto& b : bundles) {
      require(b.L == n.L && b.T == n.T,
              "Normalization::fit: bundles disagree on domain size");
      for (int64_t i = 0; i < b.u.numel(); ++i) sum += b.u[i];
      count += static_cast<double>(b.u.numel());
    }
    n.u_offset = sum / count;
    double ss = 0.0;
    for (const auto& b : bundles)
      for (int64_t i = 0; i < b.u.numel(); ++i) {
        double d = b.u[i] - n.u_offset;
        ss += d * d;
      }
    double stddev = std::sqrt(ss / count);
    if (stddev < 1e-14) {
      n.u_scale = 1.0;
      n.degenerate_u = true;
      std::fprintf(stderr, "warning: zero u-variance in dataset; u-scale set to 1\n");
    } else {
      n.u_scale = stddev / kTargetUStd;
    }
    return n;
  }

  double norm_x(double x) const { return x / L; }
  double norm_t(double t) const { return t / T; }
  double norm_u(double u) const { return (u - u_offset) / u_scale; }
  double denorm_x(double x) const { return x * L; }
  double denorm_t(double t) const { return t * T; }
  double denorm_u(double u) const { return u_offset + u_scale * u; }

  nlohmann::json to_json() const {
    return {{"L", L}, {"T", T}, {"u_offset", u_offset}, {"u_scale", u_scale},
            {"degenerate_u", degenerate_u}};
  }

  static Normalization from_json(const nlohmann::json& j) {
    Normalization n;
    n.L = detail::json_field(j, "L").get<double>();
    n.T = detail::json_field(j, "T").get<double>();
    n.u_offset = detail::json_field(j, "u_offset").get<double>();
    n.u_scale = detail::json_field(j, "u_scale").get<double>();
    n.degenerate_u = j.value("degenerate_u", false);
    return n;
  }
};

/// A ground-truth field re-expressed in normalized coordinates:
/// components divide by (L, T, u_scale) and evaluate at physical points.
inline std::function<std::array<double, 3>(double, double, double)> normalized_field(
    const GeneratorField& f, const Normalization& n) {
  return [f, n](double xn, double tn, double un) {
    auto c = f.comps(n.denorm_x(xn), n.denorm_t(tn), n.denorm_u(un));
    return std::array<double, 3>{c[0] / n.L, c[1] / n.T, c[2] / n.u_scale};
  };
}

}  // namespace symmflow
