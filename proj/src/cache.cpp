#include "heatcorr/cache.hpp"

#include <chrono>
#include <cstdio>
#include <mutex>
#include <set>
#include <thread>

#include "heatcorr/geodesic.hpp"
#include "heatcorr/hash.hpp"
#include "heatcorr/log.hpp"
#include "heatcorr/parallel.hpp"

namespace heatcorr {
namespace {

namespace fs = std::filesystem;

// Exclusive per-entry lock held while an entry is computed and written.
class EntryLock {
 public:
  EntryLock(const fs::path& entry, double timeout_seconds) : path_(entry.string() + ".lock") {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
    while (true) {
      if (std::FILE* f = std::fopen(path_.c_str(), "wx")) {
        std::fclose(f);
        return;
      }
      if (std::chrono::steady_clock::now() > deadline) {
        throw Error(ErrorCategory::io, "timed out waiting for cache lock " + path_.string() +
                                           " (delete it if no other process is running)");
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  }
  ~EntryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  EntryLock(const EntryLock&) = delete;
  EntryLock& operator=(const EntryLock&) = delete;

 private:
  fs::path path_;
};

enum class Lookup { hit, missing, stale, corrupt };

// Tries `load`; classifies the outcome so the caller can decide whether to
// recompute. `matches` checks the loaded value against the current inputs.
template <typename T, typename Load, typename Matches>
Lookup try_load(const fs::path& path, Load&& load, Matches&& matches, T& out) {
  if (!fs::exists(path)) return Lookup::missing;
  try {
    out = load(path);
  } catch (const Error& e) {
    if (e.category() != ErrorCategory::parse) throw;
    log::warn("cache entry " + path.string() + " is unreadable (" + e.what() + "); recomputing");
    return Lookup::corrupt;
  }
  if (!matches(out)) {
    log::info("cache entry " + path.string() + " is stale; recomputing");
    return Lookup::stale;
  }
  return Lookup::hit;
}

// Writes via a temporary file so readers never observe a partial entry.
template <typename Save>
void atomic_save(const fs::path& path, Save&& save) {
  const fs::path tmp = path.string() + ".tmp";
  save(tmp);
  fs::rename(tmp, path);
}

void count(CacheReport* report, Lookup outcome) {
  if (!report) return;
  switch (outcome) {
    case Lookup::hit: ++report->reused; break;
    case Lookup::corrupt: ++report->repaired; break;
    default: ++report->computed; break;
  }
}

template <typename T, typename Load, typename Matches, typename Compute, typename Save>
T fetch(const fs::path& path, const CacheSettings& settings, CacheReport* report, Load&& load, Matches&& matches,
        Compute&& compute, Save&& save) {
  T value;
  Lookup outcome = try_load(path, load, matches, value);
  if (outcome == Lookup::hit) {
    count(report, outcome);
    return value;
  }
  EntryLock lock(path, settings.lock_timeout_seconds);
  // another process may have filled the entry while we waited
  if (outcome == Lookup::missing && try_load(path, load, matches, value) == Lookup::hit) {
    count(report, Lookup::hit);
    return value;
  }
  value = compute();
  atomic_save(path, [&](const fs::path& p) { save(value, p); });
  count(report, outcome);
  return value;
}

template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.category(), std::string(stage) + " stage: " + e.what());
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

CacheReport& CacheReport::operator+=(const CacheReport& other) {
  computed += other.computed;
  reused += other.reused;
  repaired += other.repaired;
  return *this;
}

CacheSettings cache_settings(const RunConfig& config, bool geodesics) {
  CacheSettings s;
  s.dir = config.cache_dir;
  s.basis_size = config.basis_size;
  s.descriptor_source = config.descriptor_source;
  s.shot = config.shot;
  s.external_descriptor_dir = config.external_descriptor_dir;
  s.geodesics = geodesics;
  s.threads = config.threads;
  return s;
}

CachePaths cache_paths(const fs::path& mesh_path, const CacheSettings& settings) {
  char tag[16];
  std::snprintf(tag, sizeof tag, "%08x",
                static_cast<unsigned>(fnv1a(fs::absolute(mesh_path).lexically_normal().string()) & 0xffffffffu));
  const std::string base = mesh_path.stem().string() + "-" + tag;
  CachePaths p;
  p.spectral = settings.dir / (base + ".e" + std::to_string(settings.basis_size) + ".spec");
  p.descriptors = settings.dir / (base + ".shot-b" + std::to_string(settings.shot.bins) + "-r" +
                                  format_double(settings.shot.radius_fraction) + ".desc");
  p.geodesics = settings.dir / (base + ".geod");
  return p;
}

fs::path external_descriptor_path(const fs::path& dir, const fs::path& mesh) {
  return dir / (mesh.stem().string() + ".txt");
}

ShapeBundle load_shape(const fs::path& mesh_path, const CacheSettings& settings, CacheReport* report) {
  const ContentHash mesh_hash = hash_file(mesh_path);
  ShapeBundle b;
  b.mesh = in_stage("mesh", [&] { return normalize_to_unit_area(load_mesh(mesh_path)); });
  fs::create_directories(settings.dir);
  const CachePaths paths = cache_paths(mesh_path, settings);

  b.basis = in_stage("spectral", [&] {
    return fetch<SpectralBasis>(
      paths.spectral, settings, report,
      [&](const fs::path& p) {
        SpectralCache c = load_spectral_cache(p);
        if (c.mesh_hash != mesh_hash) c.basis = {};
        return c.basis;
      },
      [&](const SpectralBasis& basis) {
        return basis.size() == settings.basis_size && basis.n_vertices() == b.mesh.n_vertices();
      },
      [&] { return eigendecompose(build_laplacian(b.mesh), settings.basis_size); },
      [&](const SpectralBasis& basis, const fs::path& p) { save_spectral_cache(basis, mesh_hash, p); });
  });

  b.descriptors = in_stage("descriptor", [&] {
    if (settings.descriptor_source == DescriptorSource::external) {
      return load_descriptors_text(external_descriptor_path(settings.external_descriptor_dir, mesh_path));
    }
    return fetch<DescriptorMatrix>(
        paths.descriptors, settings, report,
        [&](const fs::path& p) {
          DescriptorFile f = load_descriptors(p);
          if (f.mesh_hash != mesh_hash) f.descriptors.values.resize(0, 0);
          return f.descriptors;
        },
        [&](const DescriptorMatrix& d) { return d.rows() == b.mesh.n_vertices(); },
        [&] { return compute_shot(b.mesh, settings.shot, settings.threads); },
        [&](const DescriptorMatrix& d, const fs::path& p) { save_descriptors(d, mesh_hash, p); });
  });
  if (b.descriptors.rows() != b.mesh.n_vertices()) {
    throw Error(ErrorCategory::validation, mesh_path.string() + ": descriptor rows (" +
                                               std::to_string(b.descriptors.rows()) + ") do not match vertex count (" +
                                               std::to_string(b.mesh.n_vertices()) + ")");
  }

  if (settings.geodesics) {
    const GeodesicMatrix g = in_stage("geodesic", [&] {
      return fetch<GeodesicMatrix>(
        paths.geodesics, settings, report, [](const fs::path& p) { return load_geodesic_cache(p); },
        [&](const GeodesicMatrix& m) { return m.source_mesh_hash == mesh_hash && m.values.rows() == b.mesh.n_vertices(); },
        [&] {
          GeodesicMatrix m = all_pairs_geodesic(b.mesh, settings.threads);
          m.source_mesh_hash = mesh_hash;
          // the cache stores float32; round now so fresh and cached runs agree
          m.values = m.values.cast<float>().cast<double>();
          return m;
        },
        [](const GeodesicMatrix& m, const fs::path& p) { save_geodesic_cache(m, p); });
    });
    b.supervisor = SupervisorKernel::geodesic(g.values);
  }
  b.check_consistent();
  return b;
}

CacheReport precompute_shapes(const std::vector<fs::path>& meshes, const CacheSettings& settings) {
  std::vector<fs::path> unique;
  std::set<fs::path> seen;
  for (const auto& m : meshes) {
    if (seen.insert(fs::absolute(m).lexically_normal()).second) unique.push_back(m);
  }
  // parallelism goes across meshes; each mesh is processed single-threaded
  CacheSettings inner = settings;
  inner.threads = 1;
  std::vector<CacheReport> reports(unique.size());
  parallel_for(static_cast<Index>(unique.size()), settings.threads, [&](Index i) {
    const auto& path = unique[static_cast<std::size_t>(i)];
    try {
      load_shape(path, inner, &reports[static_cast<std::size_t>(i)]);
    } catch (const Error& e) {
      throw Error(e.category(), path.filename().string() + ": " + e.what());
    }
  });
  CacheReport total;
  for (const auto& r : reports) total += r;
  return total;
}

}  // namespace heatcorr
