#pragma once

// Finite-difference obstacle problem on [-R, R]^n:
//   u >= 0,  L_h u <= 1,  u (L_h u - 1) = 0 at interior nodes,  u = g on the box boundary,
// with L_h the (2n+1)-point Laplacian, solved by projected SOR.

#include "ellobst/geometry.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ellobst {

/// Tensor grid with m nodes per axis on [-R, R]^n; node index runs fastest along axis 0.
class GridSpec {
 public:
  static constexpr int kMinPoints = 17;
  static constexpr std::size_t kMaxNodes = std::size_t{1} << 27;

  GridSpec(int dim, double box_radius, int points_per_axis)
      : dim_(dim), radius_(box_radius), m_(points_per_axis) {
    if (dim_ < 1 || dim_ > 3) throw InvalidArgument("GridSpec: dimension must be 1, 2 or 3");
    if (!(radius_ > 0.0) || !std::isfinite(radius_))
      throw InvalidArgument("GridSpec: box radius must be positive");
    if (m_ < kMinPoints) throw InvalidArgument("GridSpec: points per axis must be >= 17");
    if (m_ % 2 == 0) throw InvalidArgument("GridSpec: points per axis must be odd");
    std::size_t count = 1;
    for (int k = 0; k < dim_; ++k) {
      count *= static_cast<std::size_t>(m_);
      if (count > kMaxNodes) throw InvalidArgument("GridSpec: more than 2^27 nodes");
    }
    count_ = count;
  }

  int dim() const { return dim_; }
  double box_radius() const { return radius_; }
  int points_per_axis() const { return m_; }
  double spacing() const { return 2.0 * radius_ / (m_ - 1); }
  std::size_t node_count() const { return count_; }

  std::size_t stride(int axis) const {
    std::size_t s = 1;
    for (int k = 0; k < axis; ++k) s *= static_cast<std::size_t>(m_);
    return s;
  }

  std::array<int, 3> index(std::size_t flat) const {
    std::array<int, 3> idx{0, 0, 0};
    for (int k = 0; k < dim_; ++k) {
      idx[k] = static_cast<int>(flat % m_);
      flat /= m_;
    }
    return idx;
  }

  std::size_t flat(const std::array<int, 3>& idx) const {
    std::size_t f = 0;
    for (int k = dim_ - 1; k >= 0; --k) f = f * m_ + idx[k];
    return f;
  }

  double coordinate(int i) const { return -radius_ + i * spacing(); }

  Vec node(std::size_t flat_index) const {
    const auto idx = index(flat_index);
    Vec x(dim_);
    for (int k = 0; k < dim_; ++k) x[k] = coordinate(idx[k]);
    return x;
  }

  bool on_boundary(std::size_t flat_index) const {
    const auto idx = index(flat_index);
    for (int k = 0; k < dim_; ++k)
      if (idx[k] == 0 || idx[k] == m_ - 1) return true;
    return false;
  }

  friend bool operator==(const GridSpec& a, const GridSpec& b) {
    return a.dim_ == b.dim_ && a.radius_ == b.radius_ && a.m_ == b.m_;
  }

 private:
  int dim_;
  double radius_;
  int m_;
  std::size_t count_ = 0;
};

class GridField {
 public:
  explicit GridField(GridSpec spec, double fill = 0.0) : spec_(spec), values_(spec.node_count(), fill) {}

  GridField(GridSpec spec, std::vector<double> values) : spec_(spec), values_(std::move(values)) {
    if (values_.size() != spec_.node_count())
      throw InvalidArgument("GridField: value count does not match grid");
  }

  const GridSpec& spec() const { return spec_; }
  std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  /// Multilinear interpolation; points outside the box are clamped to it.
  double interpolate(const Vec& x) const {
    require_dim(x, spec_.dim(), "GridField::interpolate");
    const int n = spec_.dim(), m = spec_.points_per_axis();
    const double h = spec_.spacing();
    std::array<int, 3> base{0, 0, 0};
    std::array<double, 3> frac{0, 0, 0};
    for (int k = 0; k < n; ++k) {
      const double s = std::clamp((x[k] + spec_.box_radius()) / h, 0.0, m - 1.0);
      base[k] = std::min(static_cast<int>(s), m - 2);
      frac[k] = s - base[k];
    }
    double sum = 0.0;
    for (int corner = 0; corner < (1 << n); ++corner) {
      double w = 1.0;
      std::array<int, 3> idx = base;
      for (int k = 0; k < n; ++k) {
        const bool up = (corner >> k) & 1;
        idx[k] += up;
        w *= up ? frac[k] : 1.0 - frac[k];
      }
      if (w != 0.0) sum += w * values_[spec_.flat(idx)];
    }
    return sum;
  }

  /// Discrete Laplacian at an interior node.
  double laplacian(std::size_t flat_index) const {
    const double h = spec_.spacing();
    double sum = -2.0 * spec_.dim() * values_[flat_index];
    for (int k = 0; k < spec_.dim(); ++k) {
      const std::size_t s = spec_.stride(k);
      sum += values_[flat_index + s] + values_[flat_index - s];
    }
    return sum / (h * h);
  }

 private:
  GridSpec spec_;
  std::vector<double> values_;
};

enum class SweepOrder { Lexicographic, RedBlack };

struct SolveParams {
  double omega = 1.8;
  std::optional<double> tol;  ///< defaults to 1e-10 * max |boundary data|
  std::size_t max_sweeps = 100000;
  SweepOrder order = SweepOrder::Lexicographic;
  std::optional<GridField> initial;  ///< starting iterate (interior values); zero otherwise
  int threads = 0;                   ///< red-black width; 0 reads ELLOBST_THREADS
  std::function<void(std::size_t sweep, const GridField&)> observer;
};

struct Complementarity {
  double max_neg_u = 0.0;             ///< max (-u)_+
  double max_excess_laplacian = 0.0;  ///< max (L_h u - 1)_+
  double max_product = 0.0;           ///< max |u (L_h u - 1)|
  bool finite = true;

  double worst() const { return std::max({max_neg_u, max_excess_laplacian, max_product}); }
};

struct SolveResult {
  GridField field;
  bool converged = false;
  std::size_t sweeps = 0;
  double last_update = 0.0;
  double tol = 0.0;
  Complementarity residual;
};

/// Three complementarity maxima over interior nodes; any non-finite value makes them infinite.
inline Complementarity complementarity_residual(const GridField& field) {
  Complementarity c;
  const auto& spec = field.spec();
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (!std::isfinite(field[i])) c.finite = false;
    if (spec.on_boundary(i)) continue;
    const double u = field[i];
    const double excess = field.laplacian(i) - 1.0;
    if (!std::isfinite(excess)) c.finite = false;
    c.max_neg_u = std::max(c.max_neg_u, -u);
    c.max_excess_laplacian = std::max(c.max_excess_laplacian, excess);
    c.max_product = std::max(c.max_product, std::abs(u * excess));
  }
  if (!c.finite) {
    const double inf = std::numeric_limits<double>::infinity();
    c.max_neg_u = c.max_excess_laplacian = c.max_product = inf;
  }
  return c;
}

/// 2 / (1 + sin(pi h / (2R))): the SOR optimum of the unconstrained Poisson problem.
inline double optimal_omega(const GridSpec& spec) {
  return 2.0 / (1.0 + std::sin(std::numbers::pi / (spec.points_per_axis() - 1)));
}

inline int configured_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ELLOBST_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace detail {

template <int Dim>
struct Stencil {
  std::size_t m;
  std::size_t s1, s2;
  double h2;
  double omega;

  double relax(double* u, std::size_t i) const {
    double nb = u[i - 1] + u[i + 1];
    if constexpr (Dim >= 2) nb += u[i - s1] + u[i + s1];
    if constexpr (Dim >= 3) nb += u[i - s2] + u[i + s2];
    const double gs = (nb - h2) / (2.0 * Dim);
    const double old = u[i];
    const double next = std::max(0.0, old + omega * (gs - old));
    u[i] = next;
    return std::abs(next - old);
  }
};

template <int Dim>
double sweep_lexicographic(const Stencil<Dim>& st, double* u) {
  const std::size_t m = st.m;
  double delta = 0.0;
  const std::size_t outer = Dim >= 3 ? m - 1 : 2;
  const std::size_t middle = Dim >= 2 ? m - 1 : 2;
  for (std::size_t k = 1; k < outer; ++k)
    for (std::size_t j = 1; j < middle; ++j) {
      const std::size_t row = (Dim >= 3 ? k * st.s2 : 0) + (Dim >= 2 ? j * st.s1 : 0);
      for (std::size_t i = 1; i + 1 < m; ++i) delta = std::max(delta, st.relax(u, row + i));
    }
  return delta;
}

template <int Dim>
double sweep_red_black(const Stencil<Dim>& st, double* u, int threads) {
  const std::size_t m = st.m;
  const long outer = Dim >= 3 ? static_cast<long>(m) - 1 : 2;
  const long middle = Dim >= 2 ? static_cast<long>(m) - 1 : 2;
  double delta = 0.0;
  for (int color = 0; color < 2; ++color) {
    // neighbours of a node have the other colour, so one colour updates independently
#pragma omp parallel for num_threads(threads) reduction(max : delta) schedule(static)
    for (long k = 1; k < outer; ++k) {
      for (long j = 1; j < middle; ++j) {
        const std::size_t row = (Dim >= 3 ? k * st.s2 : 0) + (Dim >= 2 ? j * st.s1 : 0);
        const long parity = ((Dim >= 3 ? k : 0) + (Dim >= 2 ? j : 0)) % 2;
        const std::size_t start = 1 + static_cast<std::size_t>((color + parity + 1) % 2);
        for (std::size_t i = start; i + 1 < m; i += 2) delta = std::max(delta, st.relax(u, row + i));
      }
    }
  }
  (void)threads;
  return delta;
}

template <int Dim>
double run_sweep(const GridSpec& spec, double omega, SweepOrder order, int threads, double* u) {
  const auto m = static_cast<std::size_t>(spec.points_per_axis());
  const double h = spec.spacing();
  const Stencil<Dim> st{m, m, m * m, h * h, omega};
  return order == SweepOrder::Lexicographic ? sweep_lexicographic<Dim>(st, u)
                                            : sweep_red_black<Dim>(st, u, threads);
}

}  // namespace detail

/// Projected SOR for the discrete obstacle problem with Dirichlet data `boundary`.
///
/// Stops when the largest nodal update is <= tol and every complementarity maximum is
/// <= 10 tol; otherwise returns the last iterate flagged non-converged after max_sweeps.
inline SolveResult solve_obstacle(const GridSpec& spec, const std::function<double(const Vec&)>& boundary,
                                  const SolveParams& params = {}) {
  if (!(params.omega > 0.0 && params.omega < 2.0))
    throw InvalidArgument("solve_obstacle: omega must lie in (0, 2)");
  GridField field(spec);
  if (params.initial) {
    if (!(params.initial->spec() == spec)) throw InvalidArgument("solve_obstacle: initial field grid mismatch");
    for (std::size_t i = 0; i < field.size(); ++i) field[i] = std::max(0.0, (*params.initial)[i]);
  }
  double scale = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (!spec.on_boundary(i)) continue;
    const double g = boundary(spec.node(i));
    if (!(g >= 0.0) || !std::isfinite(g))
      throw InvalidArgument("solve_obstacle: boundary data must be finite and nonnegative");
    field[i] = g;
    scale = std::max(scale, g);
  }
  SolveResult result{field, false, 0, 0.0, 0.0, {}};
  result.tol = params.tol.value_or(1e-10 * (scale > 0.0 ? scale : 1.0));
  const int threads = configured_threads(params.threads);
  double* u = result.field.values().data();
  for (std::size_t sweep = 1; sweep <= params.max_sweeps; ++sweep) {
    double delta = 0.0;
    switch (spec.dim()) {
      case 1: delta = detail::run_sweep<1>(spec, params.omega, params.order, threads, u); break;
      case 2: delta = detail::run_sweep<2>(spec, params.omega, params.order, threads, u); break;
      default: delta = detail::run_sweep<3>(spec, params.omega, params.order, threads, u); break;
    }
    result.sweeps = sweep;
    result.last_update = delta;
    if (params.observer) params.observer(sweep, result.field);
    if (!std::isfinite(delta)) break;
    if (delta <= result.tol) {
      result.residual = complementarity_residual(result.field);
      if (result.residual.finite && result.residual.worst() <= 10.0 * result.tol) {
        result.converged = true;
        return result;
      }
    }
  }
  result.residual = complementarity_residual(result.field);
  return result;
}

/// Coarse-to-fine solve: each level starts from the interpolated solution of the level with
/// (m + 1) / 2 points per axis, down to the 17-point grid.
inline SolveResult solve_obstacle_cascade(const GridSpec& spec,
                                          const std::function<double(const Vec&)>& boundary,
                                          SolveParams params = {}) {
  const int m = spec.points_per_axis();
  const int coarse_m = (m + 1) / 2;
  if (coarse_m >= GridSpec::kMinPoints && coarse_m % 2 == 1) {
    const GridSpec coarse(spec.dim(), spec.box_radius(), coarse_m);
    SolveParams coarse_params = params;
    coarse_params.initial.reset();
    coarse_params.observer = nullptr;
    const auto coarse_result = solve_obstacle_cascade(coarse, boundary, coarse_params);
    GridField guess(spec);
    for (std::size_t i = 0; i < guess.size(); ++i)
      guess[i] = coarse_result.field.interpolate(spec.node(i));
    params.initial = std::move(guess);
  }
  return solve_obstacle(spec, boundary, params);
}

/// Interior nodes with u < h^2 / 4 (quadratic growth u ~ dist^2 / 2 off the free boundary).
inline std::vector<std::uint8_t> coincidence_mask(const GridField& field) {
  const auto& spec = field.spec();
  const double threshold = 0.25 * spec.spacing() * spec.spacing();
  std::vector<std::uint8_t> mask(field.size(), 0);
  for (std::size_t i = 0; i < field.size(); ++i)
    if (!spec.on_boundary(i) && field[i] < threshold) mask[i] = 1;
  return mask;
}

struct OrderingReport {
  double min_difference = 0.0;          ///< min over all nodes of a - b
  std::size_t argmin = 0;
  bool boundary_ordered = true;         ///< a >= b on every boundary node
  double max_boundary_violation = 0.0;  ///< max (b - a)_+ on the boundary
};

/// Nodewise comparison of two fields on the same grid.
inline OrderingReport compare_solutions(const GridField& a, const GridField& b) {
  if (!(a.spec() == b.spec())) throw InvalidArgument("compare_solutions: grid mismatch");
  OrderingReport rep;
  rep.min_difference = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d < rep.min_difference) {
      rep.min_difference = d;
      rep.argmin = i;
    }
    if (a.spec().on_boundary(i) && d < 0.0) {
      rep.boundary_ordered = false;
      rep.max_boundary_violation = std::max(rep.max_boundary_violation, -d);
    }
  }
  return rep;
}

//---------------------------------------------------------------------------//
// Export
//---------------------------------------------------------------------------//

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

/// Text header "n m R h\n" followed by the node values as little-endian float64.
inline void write_field(std::ostream& os, const GridField& field) {
  static_assert(std::endian::native == std::endian::little, "field export assumes a little-endian host");
  const auto& s = field.spec();
  os << s.dim() << ' ' << s.points_per_axis() << ' ' << format_double(s.box_radius()) << ' '
     << format_double(s.spacing()) << '\n';
  os.write(reinterpret_cast<const char*>(field.values().data()),
           static_cast<std::streamsize>(field.size() * sizeof(double)));
}

inline GridField read_field(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw InvalidArgument("read_field: missing header");
  std::istringstream hs(header);
  int n = 0, m = 0;
  double radius = 0.0, h = 0.0;
  if (!(hs >> n >> m >> radius >> h)) throw InvalidArgument("read_field: malformed header");
  const GridSpec spec(n, radius, m);
  if (std::abs(spec.spacing() - h) > 1e-12 * std::max(1.0, h))
    throw InvalidArgument("read_field: spacing inconsistent with header");
  std::vector<double> values(spec.node_count());
  is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (is.gcount() != static_cast<std::streamsize>(values.size() * sizeof(double)))
    throw InvalidArgument("read_field: truncated data");
  return GridField(spec, std::move(values));
}

/// CSV "x,y,u" of the plane spanned by axes (axis_a, axis_b) through the central node.
inline void write_slice_csv(std::ostream& os, const GridField& field, int axis_a = 0, int axis_b = 1) {
  const auto& s = field.spec();
  if (s.dim() < 2 || axis_a == axis_b || axis_a < 0 || axis_b < 0 || axis_a >= s.dim() || axis_b >= s.dim())
    throw InvalidArgument("write_slice_csv: invalid slice axes");
  const int m = s.points_per_axis();
  std::array<int, 3> idx{m / 2, m / 2, m / 2};
  os << "x,y,u\n";
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) {
      idx[axis_a] = i;
      idx[axis_b] = j;
      os << format_double(s.coordinate(i)) << ',' << format_double(s.coordinate(j)) << ','
         << format_double(field[s.flat(idx)]) << '\n';
    }
}

//---------------------------------------------------------------------------//
// Mask versus ellipsoid
//---------------------------------------------------------------------------//

struct MaskComparison {
  double hausdorff = 0.0;  ///< max distance to the boundary over nodes classified differently
  std::size_t mismatched = 0;
  double mask_volume = 0.0;  ///< node count times h^n
};

/// Every node whose mask membership disagrees with membership in `e` lies within `hausdorff`
/// of the boundary of e; that bounds the Hausdorff distance between mask and ellipsoid.
inline MaskComparison compare_mask(const GridSpec& spec, const std::vector<std::uint8_t>& mask,
                                   const Ellipsoid& e) {
  if (mask.size() != spec.node_count()) throw InvalidArgument("compare_mask: size mismatch");
  MaskComparison out;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) ++count;
    if (spec.on_boundary(i)) continue;
    const Vec x = spec.node(i);
    if (static_cast<bool>(mask[i]) != contains(e, x)) {
      ++out.mismatched;
      out.hausdorff = std::max(out.hausdorff, boundary_distance(e, x));
    }
  }
  out.mask_volume = count * std::pow(spec.spacing(), spec.dim());
  return out;
}

}  // namespace ellobst
