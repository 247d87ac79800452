//! Plain-text file formats.
//!
//! * Grid: header `nx nz dx dz`, then `nz` lines of `nx` velocities (m/s).
//! * Geometry: one station per line, `S x z` or `R x z` in meters.
//! * Data: header `freq_hz n_src n_rec`, then lines `s r re im`.
//! * Matrix: header `n m`, then `n` rows of `m` values.
//! * Curve: CSV with header `iter,freq_hz,misfit,model_rms`.
//!
//! Blank lines and lines starting with `#` are ignored on input. Floats are
//! written with 17 significant digits so that values round-trip exactly.

use crate::error::{FwiError, Result};
use crate::grid_model::{velocity_to_model, AcquisitionGeometry, Grid2D, Model, Source, VelocityField};
use crate::sensitivity::DataSet;
use faer::{c64, Mat};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Exact round-trip formatting of a float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| FwiError::io(path, e))
}

pub(crate) fn write(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| FwiError::io(dir, e))?;
    }
    fs::write(path, content).map_err(|e| FwiError::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| FwiError::parse(path, line, format!("cannot parse {what} from `{tok}`")))
}

fn expect_fields<'a>(path: &Path, line: usize, text: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let f: Vec<&str> = text.split_whitespace().collect();
    if f.len() != n {
        return Err(FwiError::parse(path, line, format!("expected {n} fields, found {}", f.len())));
    }
    Ok(f)
}

/// Velocity grid file.
pub fn read_velocity_grid(path: &Path) -> Result<VelocityField> {
    let text = read(path)?;
    let mut lines = content_lines(&text);
    let (ln, header) = lines.next().ok_or_else(|| FwiError::parse(path, 1, "empty grid file"))?;
    let h = expect_fields(path, ln, header, 4)?;
    let nx: usize = parse_num(path, ln, h[0], "nx")?;
    let nz: usize = parse_num(path, ln, h[1], "nz")?;
    let dx: f64 = parse_num(path, ln, h[2], "dx")?;
    let dz: f64 = parse_num(path, ln, h[3], "dz")?;
    let grid = Grid2D::new(nx, nz, dx, dz).map_err(|e| FwiError::parse(path, ln, e.to_string()))?;
    let mut values = Vec::with_capacity(grid.len());
    let mut rows = 0;
    for (ln, l) in lines {
        if rows == nz {
            return Err(FwiError::parse(path, ln, format!("more than {nz} rows")));
        }
        let f = expect_fields(path, ln, l, nx)?;
        for tok in f {
            values.push(parse_num::<f64>(path, ln, tok, "velocity")?);
        }
        rows += 1;
    }
    if rows != nz {
        return Err(FwiError::parse(path, text.lines().count(), format!("expected {nz} rows, found {rows}")));
    }
    VelocityField::new(grid, values)
}

pub fn read_model(path: &Path) -> Result<Model> {
    velocity_to_model(&read_velocity_grid(path)?)
}

pub fn write_velocity_grid(path: &Path, v: &VelocityField) -> Result<()> {
    let g = v.grid;
    let mut s = format!("{} {} {} {}\n", g.nx, g.nz, fmt_f64(g.dx), fmt_f64(g.dz));
    for row in v.values.chunks(g.nx) {
        let line: Vec<String> = row.iter().map(|x| fmt_f64(*x)).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    write(path, &s)
}

pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    write_velocity_grid(path, &model.to_velocity())
}

/// Geometry file on `grid`; positions snap to the nearest node and must lie
/// inside the grid. Sources get unit amplitude.
pub fn read_geometry(path: &Path, grid: Grid2D) -> Result<AcquisitionGeometry> {
    let text = read(path)?;
    let (ex, ez) = grid.extent();
    let (tx, tz) = (0.5 * grid.dx, 0.5 * grid.dz);
    let mut sources = Vec::new();
    let mut receivers = Vec::new();
    for (ln, l) in content_lines(&text) {
        let f = expect_fields(path, ln, l, 3)?;
        let x: f64 = parse_num(path, ln, f[1], "x")?;
        let z: f64 = parse_num(path, ln, f[2], "z")?;
        if !(x >= -tx && x <= ex + tx && z >= -tz && z <= ez + tz) {
            return Err(FwiError::parse(path, ln, format!("station ({x}, {z}) lies outside the {ex} x {ez} m grid")));
        }
        let node = grid.snap(x, z);
        match f[0] {
            "S" | "s" => sources.push(Source {
                node,
                amplitude: c64::new(1.0, 0.0),
            }),
            "R" | "r" => receivers.push(node),
            other => return Err(FwiError::parse(path, ln, format!("station kind must be S or R, found `{other}`"))),
        }
    }
    AcquisitionGeometry::new(grid, sources, receivers).map_err(|e| FwiError::parse(path, 0, e.to_string()))
}

pub fn write_geometry(path: &Path, geometry: &AcquisitionGeometry) -> Result<()> {
    let g = geometry.grid();
    let mut s = String::new();
    for src in geometry.sources() {
        let (x, z) = g.node_position(src.node.0, src.node.1);
        let _ = writeln!(s, "S {} {}", fmt_f64(x), fmt_f64(z));
    }
    for &(i, j) in geometry.receivers() {
        let (x, z) = g.node_position(i, j);
        let _ = writeln!(s, "R {} {}", fmt_f64(x), fmt_f64(z));
    }
    write(path, &s)
}

pub fn read_data(path: &Path) -> Result<DataSet> {
    let text = read(path)?;
    let mut lines = content_lines(&text);
    let (ln, header) = lines.next().ok_or_else(|| FwiError::parse(path, 1, "empty data file"))?;
    let h = expect_fields(path, ln, header, 3)?;
    let frequency_hz: f64 = parse_num(path, ln, h[0], "frequency")?;
    let ns: usize = parse_num(path, ln, h[1], "source count")?;
    let nr: usize = parse_num(path, ln, h[2], "receiver count")?;
    let mut traces = vec![vec![c64::new(f64::NAN, f64::NAN); nr]; ns];
    let mut seen = vec![false; ns * nr];
    for (ln, l) in lines {
        let f = expect_fields(path, ln, l, 4)?;
        let s: usize = parse_num(path, ln, f[0], "source index")?;
        let r: usize = parse_num(path, ln, f[1], "receiver index")?;
        if s >= ns || r >= nr {
            return Err(FwiError::parse(path, ln, format!("index ({s}, {r}) out of range")));
        }
        if std::mem::replace(&mut seen[s * nr + r], true) {
            return Err(FwiError::parse(path, ln, format!("duplicate entry ({s}, {r})")));
        }
        traces[s][r] = c64::new(parse_num(path, ln, f[2], "real part")?, parse_num(path, ln, f[3], "imaginary part")?);
    }
    if let Some(k) = seen.iter().position(|v| !v) {
        return Err(FwiError::parse(path, 0, format!("missing entry ({}, {})", k / nr.max(1), k % nr.max(1))));
    }
    Ok(DataSet {
        frequency_hz,
        n_receivers: nr,
        traces,
    })
}

pub fn write_data(path: &Path, data: &DataSet) -> Result<()> {
    let mut s = format!("{} {} {}\n", fmt_f64(data.frequency_hz), data.n_sources(), data.n_receivers);
    for (si, t) in data.traces.iter().enumerate() {
        for (ri, v) in t.iter().enumerate() {
            let _ = writeln!(s, "{si} {ri} {} {}", fmt_f64(v.re), fmt_f64(v.im));
        }
    }
    write(path, &s)
}

pub fn write_matrix(path: &Path, m: &Mat<f64>) -> Result<()> {
    let mut s = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    write(path, &s)
}

pub fn read_matrix(path: &Path) -> Result<Mat<f64>> {
    let text = read(path)?;
    let mut lines = content_lines(&text);
    let (ln, header) = lines.next().ok_or_else(|| FwiError::parse(path, 1, "empty matrix file"))?;
    let h = expect_fields(path, ln, header, 2)?;
    let n: usize = parse_num(path, ln, h[0], "row count")?;
    let m: usize = parse_num(path, ln, h[1], "column count")?;
    let mut out = Mat::<f64>::zeros(n, m);
    let mut rows = 0;
    for (ln, l) in lines {
        if rows == n {
            return Err(FwiError::parse(path, ln, format!("more than {n} rows")));
        }
        for (j, tok) in expect_fields(path, ln, l, m)?.into_iter().enumerate() {
            out[(rows, j)] = parse_num(path, ln, tok, "matrix entry")?;
        }
        rows += 1;
    }
    if rows != n {
        return Err(FwiError::parse(path, 0, format!("expected {n} rows, found {rows}")));
    }
    Ok(out)
}

/// One row of a convergence curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub frequency_hz: f64,
    pub misfit: f64,
    pub model_rms: f64,
}

pub const CURVE_HEADER: &str = "iter,freq_hz,misfit,model_rms";

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = format!("{CURVE_HEADER}\n");
    for p in points {
        let _ = writeln!(s, "{},{},{},{}", p.iteration, fmt_f64(p.frequency_hz), fmt_f64(p.misfit), fmt_f64(p.model_rms));
    }
    s
}

pub fn write_curve(path: &Path, points: &[CurvePoint]) -> Result<()> {
    write(path, &curve_csv(points))
}

pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>> {
    let text = read(path)?;
    let mut lines = content_lines(&text);
    match lines.next() {
        Some((_, h)) if h == CURVE_HEADER => {}
        Some((ln, h)) => return Err(FwiError::parse(path, ln, format!("unexpected header `{h}`"))),
        None => return Err(FwiError::parse(path, 1, "empty curve file")),
    }
    lines
        .map(|(ln, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(FwiError::parse(path, ln, format!("expected 4 columns, found {}", f.len())));
            }
            Ok(CurvePoint {
                iteration: parse_num(path, ln, f[0], "iteration")?,
                frequency_hz: parse_num(path, ln, f[1], "frequency")?,
                misfit: parse_num(path, ln, f[2], "misfit")?,
                model_rms: parse_num(path, ln, f[3], "model error")?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_complex, random_real};
    use proptest::prelude::*;

    fn grid() -> Grid2D {
        Grid2D::new(5, 4, 12.5, 10.0).unwrap()
    }

    #[test]
    fn velocity_grid_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.txt");
        let r = random_real(20, 3);
        let v = VelocityField::new(grid(), r.iter().map(|x| 2000.0 + 500.0 * x).collect()).unwrap();
        write_velocity_grid(&p, &v).unwrap();
        let back = read_velocity_grid(&p).unwrap();
        assert_eq!(back.values, v.values);
        assert_eq!(back.grid, v.grid);
    }

    #[test]
    fn grid_file_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.txt");
        fs::write(&p, "3 3 1 1\n1 1 1\n1 x 1\n1 1 1\n").unwrap();
        match read_velocity_grid(&p) {
            Err(FwiError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        fs::write(&p, "3 3 1 1\n1 1 1\n1 1 1\n").unwrap();
        assert!(matches!(read_velocity_grid(&p), Err(FwiError::Parse { .. })));
        fs::write(&p, "3 3 1 1\n1 1 1\n1 1\n1 1 1\n").unwrap();
        assert!(matches!(read_velocity_grid(&p), Err(FwiError::Parse { line: 3, .. })));
        assert!(matches!(read_velocity_grid(&dir.path().join("missing")), Err(FwiError::Io { .. })));
    }

    #[test]
    fn geometry_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.txt");
        fs::write(&p, "# stations\nS 0 0\nS 25.1 10\nR 50 30\n\nR 12.5 20\n").unwrap();
        let g = read_geometry(&p, grid()).unwrap();
        assert_eq!(g.sources().iter().map(|s| s.node).collect::<Vec<_>>(), vec![(0, 0), (2, 1)]);
        assert_eq!(g.receivers(), &[(4, 3), (1, 2)]);
        let q = dir.path().join("g2.txt");
        write_geometry(&q, &g).unwrap();
        let back = read_geometry(&q, grid()).unwrap();
        assert_eq!(back.receivers(), g.receivers());
        fs::write(&p, "S 0 0\nR 80 0\n").unwrap();
        assert!(matches!(read_geometry(&p, grid()), Err(FwiError::Parse { line: 2, .. })));
        fs::write(&p, "S 0 0\nQ 1 1\n").unwrap();
        assert!(matches!(read_geometry(&p, grid()), Err(FwiError::Parse { line: 2, .. })));
    }

    #[test]
    fn data_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.txt");
        let vals = random_complex(12, 5);
        let d = DataSet {
            frequency_hz: 125.0,
            n_receivers: 4,
            traces: vals.chunks(4).map(|c| c.to_vec()).collect(),
        };
        write_data(&p, &d).unwrap();
        assert_eq!(read_data(&p).unwrap(), d);
        fs::write(&p, "5 1 2\n0 0 1 0\n").unwrap();
        assert!(matches!(read_data(&p), Err(FwiError::Parse { .. })));
        fs::write(&p, "5 1 1\n0 0 1 0\n0 0 1 0\n").unwrap();
        assert!(matches!(read_data(&p), Err(FwiError::Parse { line: 3, .. })));
    }

    #[test]
    fn matrix_and_curve_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = random_real(6, 8);
        let m = Mat::from_fn(2, 3, |i, j| r[3 * i + j]);
        let p = dir.path().join("m.txt");
        write_matrix(&p, &m).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), m);
        let pts = vec![
            CurvePoint {
                iteration: 0,
                frequency_hz: 5.0,
                misfit: 0.1 + 0.2,
                model_rms: 1.0 / 3.0,
            },
            CurvePoint {
                iteration: 1,
                frequency_hz: 5.0,
                misfit: 1e-300,
                model_rms: 0.0,
            },
        ];
        let c = dir.path().join("c.csv");
        write_curve(&c, &pts).unwrap();
        assert_eq!(read_curve(&c).unwrap(), pts);
        assert!(fs::read_to_string(&c).unwrap().starts_with("iter,freq_hz,misfit,model_rms\n"));
    }

    proptest! {
        #[test]
        fn float_formatting_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
