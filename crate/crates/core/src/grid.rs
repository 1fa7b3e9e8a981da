//! Uniformly sampled space-time fields and their text file format.
//!
//! A [`FieldGrid`] holds a measurement matrix with one row per spatial
//! sample and one column per time sample, together with both coordinate
//! axes in SI units.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HEADER: &str = "# fieldgrid v1";

/// Relative tolerance on the spread of successive axis differences.
pub const UNIFORM_RTOL: f64 = 1e-9;

/// Space-time measurement matrix `W[n, m] = w(x_n, t_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    values: DMatrix<f64>,
    x: Vec<f64>,
    t: Vec<f64>,
}

/// Additive measurement noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseSpec {
    None,
    /// Standard deviation given as a fraction of `max |W|`.
    Gaussian { sigma_rel: f64 },
}

impl NoiseSpec {
    pub fn sigma_rel(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Gaussian { sigma_rel } => sigma_rel,
        }
    }
}

/// Checks that `axis` is strictly increasing with uniform spacing and returns the spacing.
fn check_axis(axis: &[f64], name: &str) -> Result<f64> {
    if axis.is_empty() {
        return Err(Error::Grid {
            msg: format!("{name} axis is empty"),
            index: 0,
        });
    }
    if let Some(i) = axis.iter().position(|v| !v.is_finite()) {
        return Err(Error::Grid {
            msg: format!("{name} axis has a non-finite coordinate"),
            index: i,
        });
    }
    if axis.len() == 1 {
        return Ok(0.0);
    }
    let step = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    let mut worst = (0usize, 0.0f64);
    for (i, w) in axis.windows(2).enumerate() {
        let d = w[1] - w[0];
        if d <= 0.0 {
            return Err(Error::Grid {
                msg: format!("{name} axis is not strictly increasing"),
                index: i + 1,
            });
        }
        let dev = (d - step).abs();
        if dev > worst.1 {
            worst = (i + 1, dev);
        }
    }
    if worst.1 >= UNIFORM_RTOL * step {
        return Err(Error::Grid {
            msg: format!(
                "{name} axis spacing is not uniform (deviation {:e} vs step {:e})",
                worst.1, step
            ),
            index: worst.0,
        });
    }
    Ok(step)
}

impl FieldGrid {
    /// Builds a grid, validating axis uniformity and value finiteness.
    pub fn new(values: DMatrix<f64>, x: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        check_axis(&x, "x")?;
        check_axis(&t, "t")?;
        if values.nrows() != x.len() || values.ncols() != t.len() {
            return Err(Error::Dimension(format!(
                "values are {}x{} but axes give {}x{}",
                values.nrows(),
                values.ncols(),
                x.len(),
                t.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Grid {
                msg: "field contains a non-finite value".into(),
                index: i,
            });
        }
        Ok(Self { values, x, t })
    }

    /// Uniform axes `x0 + n*dx`, `t0 + m*dt` with values from `f(x, t)`.
    pub fn from_fn(
        (x0, dx, nx): (f64, f64, usize),
        (t0, dt, nt): (f64, f64, usize),
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let x: Vec<f64> = (0..nx).map(|n| x0 + n as f64 * dx).collect();
        let t: Vec<f64> = (0..nt).map(|m| t0 + m as f64 * dt).collect();
        let values = DMatrix::from_fn(nx, nt, |n, m| f(x[n], t[m]));
        Self::new(values, x, t)
    }

    /// Same axes, new values.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        Self::new(values, self.x.clone(), self.t.clone())
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn n_x(&self) -> usize {
        self.x.len()
    }

    pub fn n_t(&self) -> usize {
        self.t.len()
    }

    /// Uniform spatial spacing (0 for a single sample).
    pub fn dx(&self) -> f64 {
        axis_step(&self.x)
    }

    /// Uniform temporal spacing (0 for a single sample).
    pub fn dt(&self) -> f64 {
        axis_step(&self.t)
    }

    /// Spatial extent `X = x_last - x_first`.
    pub fn extent_x(&self) -> f64 {
        self.x[self.x.len() - 1] - self.x[0]
    }

    /// Temporal extent `T = t_last - t_first`.
    pub fn extent_t(&self) -> f64 {
        self.t[self.t.len() - 1] - self.t[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Keeps the time columns listed in `cols` (must be increasing with uniform stride).
    pub(crate) fn select_time(&self, cols: &[usize]) -> Result<Self> {
        let t: Vec<f64> = cols.iter().map(|&c| self.t[c]).collect();
        let values = self.values.select_columns(cols.iter());
        Self::new(values, self.x.clone(), t)
    }

    /// Affinely rescaled copy: `x' = gx*x`, `t' = gt*t`, `W' = gw*W`.
    pub fn scaled(&self, gw: f64, gx: f64, gt: f64) -> Result<Self> {
        Self::new(
            &self.values * gw,
            self.x.iter().map(|v| v * gx).collect(),
            self.t.iter().map(|v| v * gt).collect(),
        )
    }
}

fn axis_step(axis: &[f64]) -> f64 {
    if axis.len() < 2 {
        0.0
    } else {
        (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
    }
}

/// Shortest decimal text that parses back to exactly `v`.
pub fn fmt_shortest(v: f64) -> String {
    let plain = format!("{v}");
    let exp = format!("{v:e}");
    if exp.len() < plain.len() {
        exp
    } else {
        plain
    }
}

fn parse_numbers(line: &str, line_no: usize) -> Result<Vec<f64>> {
    line.split_ascii_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| Error::Format {
                line: line_no,
                msg: format!("cannot parse number {tok:?}"),
            })
        })
        .collect()
}

fn parse_axis(line: Option<&str>, tag: &str, line_no: usize) -> Result<Vec<f64>> {
    let line = line.ok_or_else(|| Error::Format {
        line: line_no,
        msg: format!("missing `{tag}` line"),
    })?;
    let rest = line.strip_prefix(tag).ok_or_else(|| Error::Format {
        line: line_no,
        msg: format!("expected line starting with `{tag}`"),
    })?;
    let axis = parse_numbers(rest, line_no)?;
    if axis.is_empty() {
        return Err(Error::Format {
            line: line_no,
            msg: format!("`{tag}` line holds no coordinates"),
        });
    }
    Ok(axis)
}

/// Parses field-file text.
pub fn parse_field(text: &str) -> Result<FieldGrid> {
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.trim_end() == HEADER => {}
        _ => {
            return Err(Error::Format {
                line: 1,
                msg: format!("expected header `{HEADER}`"),
            })
        }
    }
    let x = parse_axis(lines.next(), "x:", 2)?;
    let t = parse_axis(lines.next(), "t:", 3)?;
    let (nx, nt) = (x.len(), t.len());
    let mut data = Vec::with_capacity(nx * nt);
    let mut rows = 0usize;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 4;
        let row = parse_numbers(line, line_no)?;
        if row.len() != nt {
            return Err(Error::Format {
                line: line_no,
                msg: format!("row has {} values, expected {nt}", row.len()),
            });
        }
        data.extend(row);
        rows += 1;
    }
    if rows != nx {
        return Err(Error::Format {
            line: 4 + rows,
            msg: format!("found {rows} value rows, expected {nx}"),
        });
    }
    FieldGrid::new(DMatrix::from_row_slice(nx, nt, &data), x, t)
}

/// Serializes a grid to field-file text.
pub fn format_field(grid: &FieldGrid) -> String {
    let mut out = String::with_capacity(24 * grid.n_x() * (grid.n_t() + 1));
    out.push_str(HEADER);
    out.push('\n');
    let push_line = |out: &mut String, prefix: &str, vals: &mut dyn Iterator<Item = f64>| {
        out.push_str(prefix);
        let mut first = prefix.is_empty();
        for v in vals {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{}", fmt_shortest(v));
        }
        out.push('\n');
    };
    push_line(&mut out, "x:", &mut grid.x.iter().copied());
    push_line(&mut out, "t:", &mut grid.t.iter().copied());
    for n in 0..grid.n_x() {
        push_line(&mut out, "", &mut grid.values.row(n).iter().copied());
    }
    out
}

pub fn load_field(path: impl AsRef<Path>) -> Result<FieldGrid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_field(&text)
}

pub fn save_field(grid: &FieldGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_field(grid)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Sub-grid of the time samples in `[t_start, t_end]`.
///
/// Each endpoint snaps to the nearest sample, so bounds that fall within
/// `dt/2` of a sample include it.
pub fn window(grid: &FieldGrid, t_start: f64, t_end: f64) -> Result<FieldGrid> {
    if !(t_start < t_end) {
        return Err(Error::Window(format!(
            "t_start ({t_start:e}) must be below t_end ({t_end:e})"
        )));
    }
    let t = grid.t();
    let nt = t.len();
    if nt == 1 {
        return if t_start <= t[0] && t[0] <= t_end {
            Ok(grid.clone())
        } else {
            Err(Error::Window("window does not contain the single sample".into()))
        };
    }
    let dt = grid.dt();
    let last = t[nt - 1];
    if t_end < t[0] - 0.5 * dt || t_start > last + 0.5 * dt {
        return Err(Error::Window(format!(
            "[{t_start:e}, {t_end:e}] does not overlap [{:e}, {last:e}]",
            t[0]
        )));
    }
    let snap = |v: f64| -> usize { ((v - t[0]) / dt).round().clamp(0.0, (nt - 1) as f64) as usize };
    let (i0, i1) = (snap(t_start), snap(t_end));
    if i0 > i1 {
        return Err(Error::Window("window selects no samples".into()));
    }
    let cols: Vec<usize> = (i0..=i1).collect();
    grid.select_time(&cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FieldGrid {
        FieldGrid::new(
            DMatrix::from_row_slice(3, 2, &[1.0, -2.5, 0.1, 1e-300, 3.0, 7.25]),
            vec![0.0, 0.0005, 0.001],
            vec![0.0, 1.6e-7],
        )
        .unwrap()
    }

    #[test]
    fn minimal_file_parses() {
        let text = "# fieldgrid v1\nx: 0 0.0005 0.001\nt: 0 1.6e-7\n1 2\n3 4\n5 6\n";
        let g = parse_field(text).unwrap();
        assert_eq!((g.n_x(), g.n_t()), (3, 2));
        assert_eq!(g.x(), &[0.0, 0.0005, 0.001]);
        assert_eq!(g.values()[(2, 1)], 6.0);
    }

    #[test]
    fn al_like_axis_has_half_millimetre_spacing() {
        let g = FieldGrid::from_fn((0.0, 5e-4, 195), (0.0, 1.6e-7, 4), |x, t| x + t).unwrap();
        let back = parse_field(&format_field(&g)).unwrap();
        assert_eq!(back.n_x(), 195);
        assert!((back.dx() - 5e-4).abs() < 1e-15);
    }

    #[test]
    fn duplicated_time_entry_is_a_grid_error() {
        let text = "# fieldgrid v1\nx: 0 1\nt: 0 1 1 2\n1 2 3 4\n5 6 7 8\n";
        match parse_field(text) {
            Err(Error::Grid { index, .. }) => assert_eq!(index, 2),
            other => panic!("expected grid error, got {other:?}"),
        }
    }

    #[test]
    fn non_uniform_axis_reports_worst_index() {
        let err = FieldGrid::new(
            DMatrix::zeros(5, 1),
            vec![0.0, 1.0, 2.0, 3.5, 4.0],
            vec![0.0],
        )
        .unwrap_err();
        match err {
            Error::Grid { index, .. } => assert!(index == 3 || index == 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_header_is_a_format_error() {
        assert!(matches!(
            parse_field("fieldgrid\nx: 0\nt: 0\n1\n"),
            Err(Error::Format { line: 1, .. })
        ));
        assert!(matches!(
            parse_field("# fieldgrid v1\nx: 0 1\nt: 0\n1\n"),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn round_trip_is_exact() {
        let g = small();
        assert_eq!(parse_field(&format_field(&g)).unwrap(), g);
    }

    #[test]
    fn save_then_load_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        let g = small();
        save_field(&g, &path).unwrap();
        assert_eq!(load_field(&path).unwrap(), g);
    }

    #[test]
    fn large_round_trip_preserves_axes() {
        let g = FieldGrid::from_fn((0.0, 5e-4, 195), (5.5984e-4, 1.6e-7, 1501), |x, t| {
            (x * 91.3).sin() * (t * 6.1e4).cos() + 1e-7 * x / (t + 1.0)
        })
        .unwrap();
        let back = parse_field(&format_field(&g)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn save_to_missing_directory_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("no/such/dir/f.txt");
        assert!(matches!(save_field(&small(), &path), Err(Error::Io { .. })));
    }

    #[test]
    fn measurement_windows_give_expected_sample_counts() {
        let al = FieldGrid::from_fn((0.0, 5e-4, 2), (0.0, 1.6e-7, 12500), |_, _| 0.0).unwrap();
        assert_eq!(window(&al, 5.5984e-4, 7.9984e-4).unwrap().n_t(), 1501);
        let ie = FieldGrid::from_fn((0.0, 5e-4, 2), (0.0, 3.195e-7, 12520), |_, _| 0.0).unwrap();
        assert_eq!(window(&ie, 1.4693e-3, 2.3639e-3).unwrap().n_t(), 2801);
    }

    #[test]
    fn window_over_full_span_is_identity() {
        let g = FieldGrid::from_fn((0.0, 1.0, 3), (0.0, 0.1, 20), |x, t| x * t).unwrap();
        assert_eq!(window(&g, 0.0, 1.9).unwrap(), g);
    }

    #[test]
    fn empty_or_disjoint_window_is_an_error() {
        let g = FieldGrid::from_fn((0.0, 1.0, 3), (0.0, 0.1, 20), |x, t| x * t).unwrap();
        assert!(matches!(window(&g, 5.0, 6.0), Err(Error::Window(_))));
        assert!(matches!(window(&g, 0.5, 0.2), Err(Error::Window(_))));
        assert!(matches!(window(&g, -3.0, -1.0), Err(Error::Window(_))));
    }

    #[test]
    fn shortest_format_round_trips() {
        for v in [0.0, 1.6e-7, 5e-4, 58.5218, -1.0 / 3.0, 6.9e10, f64::MIN_POSITIVE] {
            let s = fmt_shortest(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_shortest(1.6e-7), "1.6e-7");
        assert_eq!(fmt_shortest(0.0005), "5e-4");
        assert_eq!(fmt_shortest(58.5218), "58.5218");
    }
}
