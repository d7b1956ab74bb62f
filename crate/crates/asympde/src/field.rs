//! Uniform periodic grids and sampled scalar fields, with the norms and
//! quadrature the rate measurements are built on.
//!
//! A grid covers the box `[-L, L)^N` (N = 1 or 2) with `n` equispaced nodes
//! per axis, `x_j = -L + j·h`, `h = 2L/n`.  All integrals are trapezoid
//! sums, which on a periodic grid collapse to `h^N Σ f` and are spectrally
//! accurate for the smooth, rapidly decaying fields the experiments
//! produce.  Accuracy therefore hinges on the tails actually having decayed
//! inside the box; [`BOUNDARY_TOL`] is the guard the solver enforces.

use crate::error::{Error, Result};
use crate::kernel::g_axis_factor;
use crate::multi_index::MultiIndex;
use crate::{real, Scalar};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

pub use crate::spectral::{gradient, heat_apply, Spectral};

/// Largest admissible magnitude of a solution sample on the outermost grid
/// layer.  Beyond this the periodic wrap-around starts contaminating
/// norms and polynomial moments, so runs that reach it are aborted as
/// invalid rather than reported with silently degraded accuracy.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Uniform periodic grid on `[-L, L)^N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T: Scalar> {
    dim: usize,
    half_extent: T,
    points_per_axis: usize,
}

impl<T: Scalar> Grid<T> {
    /// `dim` must be 1 or 2; `points_per_axis` a power of two ≥ 64.
    pub fn new(dim: usize, half_extent: T, points_per_axis: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension {dim} not supported (1 or 2)"
            )));
        }
        if !(half_extent > T::zero()) {
            return Err(Error::InvalidGrid("half extent must be positive".into()));
        }
        if points_per_axis < 64 || !points_per_axis.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two of at least 64, got {points_per_axis}"
            )));
        }
        Ok(Grid {
            dim,
            half_extent,
            points_per_axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_extent(&self) -> T {
        self.half_extent
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Grid spacing `h = 2L/n`.
    pub fn spacing(&self) -> T {
        real::<T>(2.0) * self.half_extent / real(self.points_per_axis as f64)
    }

    /// Total number of nodes, `n^N`.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of index `j` along one axis.
    pub fn axis_coord(&self, j: usize) -> T {
        -self.half_extent + real::<T>(j as f64) * self.spacing()
    }

    /// Quadrature weight of one node, `h^N`.
    pub fn cell_volume(&self) -> T {
        self.spacing().powi(self.dim as i32)
    }

    /// Visit every node as `(flat_index, coordinates)` in row-major order.
    pub fn for_each_node(&self, mut visit: impl FnMut(usize, &[T])) {
        let n = self.points_per_axis;
        let mut buf = [T::zero(); 2];
        match self.dim {
            1 => {
                for i in 0..n {
                    buf[0] = self.axis_coord(i);
                    visit(i, &buf[..1]);
                }
            }
            2 => {
                for i0 in 0..n {
                    buf[0] = self.axis_coord(i0);
                    for i1 in 0..n {
                        buf[1] = self.axis_coord(i1);
                        visit(i0 * n + i1, &buf[..2]);
                    }
                }
            }
            _ => unreachable!("validated in Grid::new"),
        }
    }
}

/// A scalar field sampled on a [`Grid`], optionally tagged with the time it
/// was recorded at.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T: Scalar> {
    grid: Grid<T>,
    samples: Vec<T>,
    time_tag: Option<T>,
}

impl<T: Scalar> Field<T> {
    pub fn zeros(grid: Grid<T>) -> Self {
        Field {
            grid,
            samples: vec![T::zero(); grid.len()],
            time_tag: None,
        }
    }

    /// Wrap an existing sample vector (must match the grid size).
    pub fn from_samples(grid: Grid<T>, samples: Vec<T>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "sample count {} does not match grid size {}",
                samples.len(),
                grid.len()
            )));
        }
        Ok(Field {
            grid,
            samples,
            time_tag: None,
        })
    }

    /// Sample a closure at every node.
    pub fn sample(grid: Grid<T>, f: impl Fn(&[T]) -> T) -> Self {
        let mut samples = vec![T::zero(); grid.len()];
        grid.for_each_node(|idx, x| samples[idx] = f(x));
        Field {
            grid,
            samples,
            time_tag: None,
        }
    }

    pub fn grid(&self) -> Grid<T> {
        self.grid
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [T] {
        &mut self.samples
    }

    pub fn time_tag(&self) -> Option<T> {
        self.time_tag
    }

    pub fn with_time_tag(mut self, t: T) -> Self {
        self.time_tag = Some(t);
        self
    }

    fn check_same_grid(&self, other: &Field<T>) {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(T) -> T) -> Field<T> {
        Field {
            grid: self.grid,
            samples: self.samples.iter().map(|&v| f(v)).collect(),
            time_tag: self.time_tag,
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Field<T>, f: impl Fn(T, T) -> T) -> Field<T> {
        self.check_same_grid(other);
        Field {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            time_tag: None,
        }
    }

    pub fn add(&self, other: &Field<T>) -> Field<T> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field<T>) -> Field<T> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: T) -> Field<T> {
        self.map(|v| c * v)
    }

    /// In-place `self += c · other`.
    pub fn add_scaled(&mut self, c: T, other: &Field<T>) {
        self.check_same_grid(other);
        for (a, &b) in self.samples.iter_mut().zip(&other.samples) {
            *a += c * b;
        }
    }

    pub fn max_abs(&self) -> T {
        self.samples
            .iter()
            .fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.is_finite())
    }

    /// Largest |sample| on the outermost grid layer (any axis index 0 or
    /// n−1) — the quantity [`BOUNDARY_TOL`] guards.
    pub fn boundary_max(&self) -> T {
        let n = self.grid.points_per_axis;
        let mut m = T::zero();
        match self.grid.dim {
            1 => {
                m = m.max(self.samples[0].abs());
                m = m.max(self.samples[n - 1].abs());
            }
            2 => {
                for i in 0..n {
                    m = m.max(self.samples[i].abs()); // first row
                    m = m.max(self.samples[(n - 1) * n + i].abs()); // last row
                    m = m.max(self.samples[i * n].abs()); // first column
                    m = m.max(self.samples[i * n + n - 1].abs()); // last column
                }
            }
            _ => unreachable!(),
        }
        m
    }

    /// Trapezoid integral `∫ f dx = h^N Σ f`.
    pub fn integral(&self) -> T {
        let sum: T = self.samples.iter().copied().sum();
        sum * self.grid.cell_volume()
    }
}

/// `L^q` norm of a field, `q ∈ [1, ∞]` (`q = ∞` is the max norm).
pub fn lq_norm<T: Scalar>(f: &Field<T>, q: T) -> Result<T> {
    if q.is_nan() || q < T::one() {
        return Err(Error::domain("lq_norm", format!("exponent {q} is below 1")));
    }
    if q.is_infinite() {
        return Ok(f.max_abs());
    }
    let vol = f.grid.cell_volume();
    if q == T::one() {
        let sum: T = f.samples.iter().map(|v| v.abs()).sum();
        return Ok(sum * vol);
    }
    let sum: T = f.samples.iter().map(|v| v.abs().powf(q)).sum();
    Ok((sum * vol).powf(T::one() / q))
}

/// Weighted norm `∫ (1+|x|)^l |f(x)| dx`, `l ≥ 0`.
pub fn weighted_l1_norm<T: Scalar>(f: &Field<T>, l: T) -> Result<T> {
    if l.is_nan() || l < T::zero() {
        return Err(Error::domain(
            "weighted_l1_norm",
            format!("weight exponent {l} is negative"),
        ));
    }
    let mut sum = T::zero();
    f.grid.for_each_node(|idx, x| {
        let r = x.iter().fold(T::zero(), |s, &xi| s + xi * xi).sqrt();
        sum = sum + (T::one() + r).powf(l) * f.samples[idx].abs();
    });
    Ok(sum * f.grid.cell_volume())
}

/// Raw monomial moment `∫ x^α f(x) dx` by trapezoid quadrature.
pub fn moment_of_field<T: Scalar>(f: &Field<T>, alpha: &MultiIndex) -> T {
    assert_eq!(alpha.dim(), f.grid.dim(), "moment dimension mismatch");
    let mut sum = T::zero();
    f.grid.for_each_node(|idx, x| {
        sum = sum + alpha.monomial(x) * f.samples[idx];
    });
    sum * f.grid.cell_volume()
}

/// Sample `g_α(·, t)` on a grid.  Separable: one pass per axis, then an
/// outer product, so 2-D sampling costs O(n) kernel evaluations.
pub fn sample_g_alpha<T: Scalar>(grid: Grid<T>, alpha: &MultiIndex, t: T) -> Field<T> {
    assert_eq!(alpha.dim(), grid.dim(), "kernel dimension mismatch");
    let tau = T::one() + t;
    let n = grid.points_per_axis;
    let axis_values: Vec<Vec<T>> = (0..grid.dim())
        .map(|axis| {
            (0..n)
                .map(|j| g_axis_factor(alpha.entry(axis), grid.axis_coord(j), tau))
                .collect()
        })
        .collect();
    let mut field = Field::zeros(grid);
    match grid.dim() {
        1 => field.samples.copy_from_slice(&axis_values[0]),
        2 => {
            for i0 in 0..n {
                let a0 = axis_values[0][i0];
                for i1 in 0..n {
                    field.samples[i0 * n + i1] = a0 * axis_values[1][i1];
                }
            }
        }
        _ => unreachable!(),
    }
    field.time_tag = Some(t);
    field
}

/// Sample the raw heat kernel `G(·, t)` on a grid (`t > 0`).
pub fn sample_gauss<T: Scalar>(grid: Grid<T>, t: T) -> Result<Field<T>> {
    if t <= T::zero() {
        return Err(Error::domain("sample_gauss", format!("time {t} not positive")));
    }
    Ok(Field::sample(grid, |x| {
        crate::kernel::gauss(x, t).expect("time checked above")
    }))
}

fn fmt_scalar<T: Scalar>(v: T) -> String {
    // 17 significant digits: enough to round-trip f64 exactly.
    format!("{:.16e}", v)
}

impl<T: Scalar> Field<T> {
    /// Write the field as CSV: a `#`-prefixed header recording the grid and
    /// time tag, then one `coordinates…,value` row per node in row-major
    /// order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let time = match self.time_tag {
            Some(t) => fmt_scalar(t),
            None => "none".to_string(),
        };
        writeln!(
            out,
            "# dim={} half_extent={} points={} time={}",
            self.grid.dim,
            fmt_scalar(self.grid.half_extent),
            self.grid.points_per_axis,
            time
        )
        .expect("string write");
        self.grid.for_each_node(|idx, x| {
            for xi in x {
                out.push_str(&fmt_scalar(*xi));
                out.push(',');
            }
            out.push_str(&fmt_scalar(self.samples[idx]));
            out.push('\n');
        });
        let mut file = std::fs::File::create(path)?;
        file.write_all(out.as_bytes())?;
        Ok(())
    }

    /// Read a field written by [`Field::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Field<T>> {
        let bad = |reason: &str| Error::Malformed {
            path: path.display().to_string(),
            reason: reason.to_string(),
        };
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))??;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| bad("missing # header"))?;
        let mut dim = None;
        let mut half_extent = None;
        let mut points = None;
        let mut time = None;
        for tok in header.split_whitespace() {
            let (key, value) = tok.split_once('=').ok_or_else(|| bad("header token"))?;
            match key {
                "dim" => dim = Some(value.parse::<usize>().map_err(|_| bad("dim"))?),
                "half_extent" => {
                    half_extent =
                        Some(value.parse::<f64>().map_err(|_| bad("half_extent"))?)
                }
                "points" => points = Some(value.parse::<usize>().map_err(|_| bad("points"))?),
                "time" => {
                    time = if value == "none" {
                        None
                    } else {
                        Some(value.parse::<f64>().map_err(|_| bad("time"))?)
                    }
                }
                _ => return Err(bad("unknown header key")),
            }
        }
        let grid = Grid::new(
            dim.ok_or_else(|| bad("missing dim"))?,
            real::<T>(half_extent.ok_or_else(|| bad("missing half_extent"))?),
            points.ok_or_else(|| bad("missing points"))?,
        )?;
        let mut samples = Vec::with_capacity(grid.len());
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let value = line
                .rsplit(',')
                .next()
                .ok_or_else(|| bad("empty row"))?
                .trim()
                .parse::<f64>()
                .map_err(|_| bad("unparseable value"))?;
            samples.push(real::<T>(value));
        }
        if samples.len() != grid.len() {
            return Err(bad("row count does not match grid size"));
        }
        let mut field = Field::from_samples(grid, samples)?;
        field.time_tag = time.map(real::<T>);
        Ok(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{g_alpha, gauss, gaussian_moment};
    use std::f64::consts::PI;

    fn unit_gaussian(grid: Grid<f64>, t: f64) -> Field<f64> {
        Field::sample(grid, |x| gauss(x, t).unwrap())
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1, 10.0, 256).is_ok());
        assert!(Grid::new(3, 10.0, 256).is_err());
        assert!(Grid::new(1, 10.0, 100).is_err()); // not a power of two
        assert!(Grid::new(1, 10.0, 32).is_err()); // too coarse
        assert!(Grid::new(1, 0.0, 256).is_err());
        assert!(Grid::new(2, -1.0, 256).is_err());
    }

    #[test]
    fn nodes_and_spacing() {
        let grid = Grid::new(1, 8.0, 64).unwrap();
        assert_eq!(grid.spacing(), 0.25);
        assert_eq!(grid.axis_coord(0), -8.0);
        assert_eq!(grid.axis_coord(32), 0.0); // origin is a node
        assert_eq!(grid.axis_coord(63), 8.0 - 0.25); // right endpoint excluded
        assert_eq!(grid.len(), 64);
        assert_eq!(Grid::new(2, 8.0, 64).unwrap().len(), 64 * 64);
    }

    #[test]
    fn lq_norms_of_the_gaussian() {
        let grid = Grid::new(1, 30.0, 2048).unwrap();
        let t = 1.0;
        let f = unit_gaussian(grid, t);
        // ‖G‖₁ = 1, ‖G‖₂ = (8πt)^{-1/4}, ‖G‖₃ = ((4πt)^{-1}/√3)^{1/3}, ‖G‖_∞ = (4πt)^{-1/2}
        assert!((lq_norm(&f, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let l2 = (8.0 * PI * t).powf(-0.25);
        assert!((lq_norm(&f, 2.0).unwrap() - l2).abs() < 1e-12 * l2);
        let l3 = ((4.0 * PI * t).recip() / 3.0f64.sqrt()).powf(1.0 / 3.0);
        assert!((lq_norm(&f, 3.0).unwrap() - l3).abs() < 1e-12 * l3);
        let linf = (4.0 * PI * t).powf(-0.5);
        assert!((lq_norm(&f, f64::INFINITY).unwrap() - linf).abs() < 1e-15);
    }

    #[test]
    fn lq_norm_rejects_bad_exponents() {
        let grid = Grid::new(1, 10.0, 64).unwrap();
        let f = Field::zeros(grid);
        assert!(lq_norm(&f, 0.5).is_err());
        assert!(lq_norm(&f, f64::NAN).is_err());
    }

    #[test]
    fn weighted_norm_of_the_gaussian() {
        // ∫ (1+|x|)² G(x,1) dx = 1 + 2·E|x| + E x² = 3 + 4/√π for variance 2.
        // The weight's |x| kink caps the quadrature at second order
        // (Euler–Maclaurin correction (dx²/12)·4G(0,1) at the crease), so
        // the oracle checks the value at that accuracy and the O(dx²) rate.
        let expected = 3.0 + 4.0 / PI.sqrt();
        let err_at = |n: usize| {
            let grid = Grid::new(1, 30.0, n).unwrap();
            (weighted_l1_norm(&unit_gaussian(grid, 1.0), 2.0).unwrap() - expected).abs()
        };
        let coarse = err_at(2048);
        let fine = err_at(4096);
        assert!(fine < 1e-4, "error {fine:.3e} too large at n = 4096");
        let ratio = coarse / fine;
        assert!(
            (3.5..4.5).contains(&ratio),
            "kink error must be O(dx²): ratio {ratio:.2}"
        );
        let grid = Grid::new(1, 30.0, 256).unwrap();
        assert!(weighted_l1_norm(&unit_gaussian(grid, 1.0), -1.0).is_err());
    }

    #[test]
    fn field_moments_match_closed_forms() {
        let grid = Grid::new(1, 40.0, 2048).unwrap();
        let t = 1.5;
        let f = unit_gaussian(grid, 1.0 + t); // = g₀ sampled at shifted time
        for k in 0..=4u32 {
            let alpha = MultiIndex::new(&[k]);
            let got = moment_of_field(&f, &alpha);
            let expected = gaussian_moment(&alpha, t);
            assert!(
                (got - expected).abs() < 1e-9 * (1.0 + expected.abs()),
                "k={k}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn two_dimensional_quadrature() {
        let grid = Grid::new(2, 15.0, 128).unwrap();
        let f = unit_gaussian(grid, 2.0);
        assert!((f.integral() - 1.0).abs() < 1e-12);
        let beta = MultiIndex::new(&[2, 0]);
        let got = moment_of_field(&f, &beta);
        assert!((got - 4.0).abs() < 1e-10); // ∫x₁²G(x,2) = 2t = 4
    }

    #[test]
    fn sampled_g_alpha_matches_pointwise_evaluation() {
        let grid: Grid<f64> = Grid::new(2, 10.0, 64).unwrap();
        let alpha = MultiIndex::new(&[1, 2]);
        let t = 0.8;
        let sampled = sample_g_alpha(grid, &alpha, t);
        grid.for_each_node(|idx, x| {
            let direct = g_alpha(&alpha, x, t);
            assert!(
                (sampled.samples()[idx] - direct).abs() <= 1e-17 + 1e-14 * direct.abs(),
                "mismatch at {x:?}"
            );
        });
        assert_eq!(sampled.time_tag(), Some(t));
    }

    #[test]
    fn boundary_max_scans_the_outer_layer() {
        let grid = Grid::new(1, 10.0, 64).unwrap();
        let mut f = Field::zeros(grid);
        f.samples_mut()[63] = -3.0;
        assert_eq!(f.boundary_max(), 3.0);
        let grid2 = Grid::new(2, 10.0, 64).unwrap();
        let mut f2 = Field::zeros(grid2);
        f2.samples_mut()[5 * 64] = 2.0; // first column, interior row
        assert_eq!(f2.boundary_max(), 2.0);
        f2.samples_mut()[5 * 64 + 30] = 9.0; // interior: not seen by the scan
        assert_eq!(f2.boundary_max(), 2.0);
    }

    #[test]
    #[should_panic(expected = "different grids")]
    fn mismatched_grids_are_rejected() {
        let a = Field::zeros(Grid::new(1, 10.0, 64).unwrap());
        let b = Field::zeros(Grid::new(1, 10.0, 128).unwrap());
        let _ = a.add(&b);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = std::env::temp_dir().join("asympde-field-csv-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("field.csv");
        let grid = Grid::new(1, 5.0, 64).unwrap();
        let f = unit_gaussian(grid, 0.7).with_time_tag(0.25);
        f.write_csv(&path).unwrap();
        let g = Field::<f64>::read_csv(&path).unwrap();
        assert_eq!(f.grid(), g.grid());
        assert_eq!(f.time_tag(), g.time_tag());
        assert_eq!(f.samples(), g.samples()); // 17 digits round-trip exactly
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn arithmetic_helpers() {
        let grid: Grid<f64> = Grid::new(1, 5.0, 64).unwrap();
        let f = Field::sample(grid, |x| x[0]);
        let g = Field::sample(grid, |x| 2.0 * x[0]);
        let mut h = f.add(&g).sub(&f).scale(0.5);
        assert!((h.samples()[10] - g.samples()[10] * 0.5).abs() < 1e-15);
        h.add_scaled(3.0, &f);
        assert!((h.samples()[10] - (g.samples()[10] * 0.5 + 3.0 * f.samples()[10])).abs() < 1e-15);
        assert!(h.is_finite());
    }
}
