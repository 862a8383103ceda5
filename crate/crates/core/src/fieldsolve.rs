//! Magnetic forward model: thin-filament Biot-Savart for wire phantoms, point
//! dipoles, projection onto an NV axis and depth-averaged rendering onto the
//! camera pixel grid.
//!
//! Geometry: sources sit near the plane z = 0 and the NV layer lies below it,
//! so a sample at depth `s` is evaluated at z = -s. Lab axes follow the crystal:
//! x = [110]/sqrt2, y = [-110]/sqrt2, z = [001].

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::MU0_OVER_4PI;
use crate::error::{QdmError, Result};
use crate::grid::{FieldMap, NvAxis, DEFAULT_PITCH};
use crate::io::{csv_err, parse_err, parse_f64};
use crate::vec3::Vec3;

/// Field of a straight filament from `a` to `b` carrying `current` (A), at `p`.
pub fn segment_field(a: Vec3, b: Vec3, current: f64, p: Vec3) -> Result<Vec3> {
    let r1 = p - a;
    let r2 = p - b;
    let l = (b - a).norm();
    if l == 0.0 {
        return Err(QdmError::invalid("segment endpoints coincide"));
    }
    let n1 = r1.norm();
    let n2 = r2.norm();
    let c = r1.cross(r2);
    let scale = n1.max(n2).max(l);
    let dist = c.norm() / l;
    if dist <= 10.0 * f64::EPSILON * scale {
        // On the line: inside the span (or at an endpoint) is singular,
        // outside it the cross product vanishes and so does the field.
        let t = r1.dot(b - a) / (l * l);
        if (0.0..=1.0).contains(&t) || n1 == 0.0 || n2 == 0.0 {
            return Err(QdmError::Singular(format!(
                "point ({:e}, {:e}, {:e}) m on segment",
                p.x, p.y, p.z
            )));
        }
        return Ok(Vec3::ZERO);
    }
    let k = MU0_OVER_4PI * current * (n1 + n2) / (n1 * n2 * (n1 * n2 + r1.dot(r2)));
    Ok(c * k)
}

/// Fabricated current trace(s), modelled as parallel thin filaments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WirePhantom {
    pub traces: Vec<Vec<Vec3>>,
    /// Trace width, m.
    #[serde(default = "default_trace_width")]
    pub width: f64,
    /// Trace thickness, m (informational; filaments are thin).
    #[serde(default = "default_trace_thickness")]
    pub thickness: f64,
    /// Series current, A.
    pub current: f64,
    /// Number of filaments spread across the width.
    #[serde(default = "default_filaments")]
    pub filaments: usize,
}

fn default_trace_width() -> f64 {
    4e-6
}
fn default_trace_thickness() -> f64 {
    10e-9
}
fn default_filaments() -> usize {
    5
}

/// One straight piece of filament and its share of the current.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Filament {
    pub a: Vec3,
    pub b: Vec3,
    pub current: f64,
}

impl WirePhantom {
    pub fn new(traces: Vec<Vec<Vec3>>, current: f64) -> Result<Self> {
        let p = WirePhantom {
            traces,
            width: default_trace_width(),
            thickness: default_trace_thickness(),
            current,
            filaments: default_filaments(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.traces.is_empty() {
            return Err(QdmError::invalid("phantom has no traces"));
        }
        for (i, t) in self.traces.iter().enumerate() {
            if t.len() < 2 {
                return Err(QdmError::invalid(format!("trace {i} has fewer than 2 vertices")));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(QdmError::invalid(format!("trace {i} has a non-finite vertex")));
            }
            if t.windows(2).any(|w| w[0] == w[1]) {
                return Err(QdmError::invalid(format!("trace {i} repeats a vertex")));
            }
        }
        if !self.current.is_finite() {
            return Err(QdmError::invalid("current must be finite"));
        }
        if !(self.width >= 0.0) || !(self.thickness >= 0.0) || self.filaments == 0 {
            return Err(QdmError::invalid("width, thickness >= 0 and filaments >= 1 required"));
        }
        Ok(())
    }

    pub fn with_current(&self, current: f64) -> Self {
        WirePhantom {
            current,
            ..self.clone()
        }
    }

    /// Filament segments: each trace is offset sideways (in the xy plane,
    /// mitred at corners) to `filaments` evenly spaced positions across the width.
    pub fn filament_segments(&self) -> Vec<Filament> {
        let k = self.filaments;
        let share = self.current / k as f64;
        let mut out = Vec::new();
        for trace in &self.traces {
            let n = trace.len();
            let normal = |i: usize| {
                let d = trace[i + 1] - trace[i];
                let h = (d.x * d.x + d.y * d.y).sqrt();
                if h == 0.0 {
                    Vec3::new(1.0, 0.0, 0.0)
                } else {
                    Vec3::new(-d.y / h, d.x / h, 0.0)
                }
            };
            let offsets: Vec<Vec3> = (0..n)
                .map(|i| {
                    if i == 0 {
                        normal(0)
                    } else if i == n - 1 {
                        normal(n - 2)
                    } else {
                        let (n1, n2) = (normal(i - 1), normal(i));
                        let m = n1 + n2;
                        let mn = m.norm();
                        if mn < 1e-9 {
                            n1
                        } else {
                            let m = m / mn;
                            m / m.dot(n1)
                        }
                    }
                })
                .collect();
            for f in 0..k {
                let s = if k == 1 {
                    0.0
                } else {
                    self.width * ((f as f64 + 0.5) / k as f64 - 0.5)
                };
                for i in 0..n - 1 {
                    out.push(Filament {
                        a: trace[i] + offsets[i] * s,
                        b: trace[i + 1] + offsets[i + 1] * s,
                        current: share,
                    });
                }
            }
        }
        out
    }

    /// Total trace length along the centre lines, m.
    pub fn length(&self) -> f64 {
        self.traces
            .iter()
            .flat_map(|t| t.windows(2).map(|w| (w[1] - w[0]).norm()))
            .sum()
    }
}

pub fn phantom_field_at(p: &WirePhantom, point: Vec3) -> Result<Vec3> {
    filaments_field_at(&p.filament_segments(), point)
}

fn filaments_field_at(segs: &[Filament], point: Vec3) -> Result<Vec3> {
    let mut b = Vec3::ZERO;
    for s in segs {
        b += segment_field(s.a, s.b, s.current, point)?;
    }
    Ok(b)
}

/// Parse the phantom CSV format:
///
/// ```text
/// # comments
/// phantom,<width_m>,<thickness_m>,<current_a>
/// trace_id,x_m,y_m,z_m
/// 0,0.0,0.0,0.0
/// ...
/// ```
pub fn parse_phantom(text: &str, origin: &Path) -> Result<WirePhantom> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut header: Option<(f64, f64, f64)> = None;
    let mut saw_columns = false;
    let mut order: Vec<String> = Vec::new();
    let mut traces: HashMap<String, Vec<Vec3>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(origin, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if header.is_none() {
            if rec.len() != 4 || &rec[0] != "phantom" {
                return Err(parse_err(origin, line, "expected 'phantom,<width_m>,<thickness_m>,<current_a>'"));
            }
            header = Some((
                parse_f64(origin, line, &rec[1])?,
                parse_f64(origin, line, &rec[2])?,
                parse_f64(origin, line, &rec[3])?,
            ));
            continue;
        }
        if !saw_columns {
            let cols: Vec<&str> = rec.iter().collect();
            if cols != ["trace_id", "x_m", "y_m", "z_m"] {
                return Err(parse_err(origin, line, "expected column line 'trace_id,x_m,y_m,z_m'"));
            }
            saw_columns = true;
            continue;
        }
        if rec.len() != 4 {
            return Err(parse_err(origin, line, "expected 4 fields"));
        }
        let id = rec[0].to_string();
        let v = Vec3::new(
            parse_f64(origin, line, &rec[1])?,
            parse_f64(origin, line, &rec[2])?,
            parse_f64(origin, line, &rec[3])?,
        );
        if !traces.contains_key(&id) {
            order.push(id.clone());
        }
        traces.entry(id).or_default().push(v);
    }
    let (width, thickness, current) =
        header.ok_or_else(|| parse_err(origin, 0, "missing phantom header"))?;
    let p = WirePhantom {
        traces: order.iter().map(|id| traces.remove(id).unwrap()).collect(),
        width,
        thickness,
        current,
        filaments: default_filaments(),
    };
    p.validate().map_err(|e| parse_err(origin, 0, &e.to_string()))?;
    Ok(p)
}

pub fn read_phantom(path: impl AsRef<Path>) -> Result<WirePhantom> {
    let path = path.as_ref();
    parse_phantom(&std::fs::read_to_string(path)?, path)
}

pub fn write_phantom(p: &WirePhantom, path: impl AsRef<Path>) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "phantom,{:?},{:?},{:?}", p.width, p.thickness, p.current)?;
    writeln!(w, "trace_id,x_m,y_m,z_m")?;
    for (i, t) in p.traces.iter().enumerate() {
        for v in t {
            writeln!(w, "{i},{:?},{:?},{:?}", v.x, v.y, v.z)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Meandering serpentine centred on the origin: `legs` parallel runs of length
/// `leg_length` along y, `spacing` apart, joined alternately at top and bottom,
/// with straight leads of length `lead` leaving along y from both ends.
pub fn serpentine(legs: usize, leg_length: f64, spacing: f64, lead: f64) -> Vec<Vec3> {
    let x0 = -0.5 * spacing * (legs as f64 - 1.0);
    let half = 0.5 * leg_length;
    let mut pts = vec![Vec3::new(x0, -half - lead, 0.0)];
    for i in 0..legs {
        let x = x0 + i as f64 * spacing;
        let (start, end) = if i % 2 == 0 { (-half, half) } else { (half, -half) };
        pts.push(Vec3::new(x, start, 0.0));
        pts.push(Vec3::new(x, end, 0.0));
    }
    let last = *pts.last().unwrap();
    let dir = if last.y > 0.0 { 1.0 } else { -1.0 };
    pts.push(Vec3::new(last.x, last.y + dir * lead, 0.0));
    // drop the duplicated first leg start
    pts.dedup();
    pts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleSource {
    /// A m^2.
    pub moment: Vec3,
    pub position: Vec3,
}

/// Default magnetisation of a magnetite-filled protein compartment, A/m.
pub const ENCAPSULIN_MAGNETIZATION: f64 = 2.1e5;
/// Default compartment radius, m.
pub const ENCAPSULIN_RADIUS: f64 = 15e-9;

impl DipoleSource {
    /// Uniformly magnetised sphere of radius `radius` along unit `direction`.
    pub fn sphere(magnetization: f64, radius: f64, direction: Vec3, position: Vec3) -> Self {
        let volume = 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3);
        DipoleSource {
            moment: direction.normalized() * (magnetization * volume),
            position,
        }
    }

    pub fn encapsulin(direction: Vec3, position: Vec3) -> Self {
        Self::sphere(ENCAPSULIN_MAGNETIZATION, ENCAPSULIN_RADIUS, direction, position)
    }
}

pub fn dipole_field(d: &DipoleSource, point: Vec3) -> Result<Vec3> {
    let r = point - d.position;
    let rn = r.norm();
    if rn == 0.0 {
        return Err(QdmError::ZeroSeparation);
    }
    let u = r / rn;
    Ok((u * (3.0 * d.moment.dot(u)) - d.moment) * (MU0_OVER_4PI / rn.powi(3)))
}

/// Unit vector of an NV axis in the lab frame.
pub fn axis_lab_vector(axis: NvAxis) -> Vec3 {
    let [a, b, c] = axis.crystal_direction();
    let s2 = std::f64::consts::SQRT_2;
    Vec3::new((a + b) / s2, (b - a) / s2, c) / 3f64.sqrt()
}

pub fn project_axis(b: Vec3, axis: NvAxis) -> f64 {
    b.dot(axis_lab_vector(axis))
}

/// Everything that produces field at the sensor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSet {
    pub phantom: Option<WirePhantom>,
    pub dipoles: Vec<DipoleSource>,
    /// Spatially uniform external field, T.
    pub uniform: Vec3,
}

impl SourceSet {
    pub fn field_at(&self, point: Vec3) -> Result<Vec3> {
        let segs = self
            .phantom
            .as_ref()
            .map(|p| p.filament_segments())
            .unwrap_or_default();
        self.field_with(&segs, point)
    }

    fn field_with(&self, segs: &[Filament], point: Vec3) -> Result<Vec3> {
        let mut b = self.uniform + filaments_field_at(segs, point)?;
        for d in &self.dipoles {
            b += dipole_field(d, point)?;
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingGeometry {
    /// Distance from the source plane to the top of the NV layer, m.
    pub standoff: f64,
    pub layer_thickness: f64,
    pub depth_samples: usize,
    pub pitch: f64,
    pub width: usize,
    pub height: usize,
    /// Lab (x, y) of the grid centre, m.
    pub center: [f64; 2],
    pub axis: NvAxis,
}

impl Default for SensingGeometry {
    fn default() -> Self {
        SensingGeometry {
            standoff: 5e-6,
            layer_thickness: 10e-6,
            depth_samples: 11,
            pitch: DEFAULT_PITCH,
            width: 142,
            height: 142,
            center: [0.0, 0.0],
            axis: NvAxis::A111,
        }
    }
}

impl SensingGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.standoff >= 0.0) || !(self.layer_thickness > 0.0) || self.depth_samples == 0 {
            return Err(QdmError::invalid(
                "standoff >= 0, layer_thickness > 0 and depth_samples >= 1 required",
            ));
        }
        if !(self.pitch > 0.0) || self.width == 0 || self.height == 0 {
            return Err(QdmError::invalid("pitch > 0 and non-empty grid required"));
        }
        Ok(())
    }

    /// Lab (x, y) of pixel (i, j).
    pub fn pixel_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.center[0] + (i as f64 - 0.5 * (self.width as f64 - 1.0)) * self.pitch,
            self.center[1] + (j as f64 - 0.5 * (self.height as f64 - 1.0)) * self.pitch,
        )
    }

    /// Sample depths: midpoints of `depth_samples` equal slices of the layer.
    pub fn depths(&self) -> Vec<f64> {
        let n = self.depth_samples as f64;
        (0..self.depth_samples)
            .map(|k| self.standoff + (k as f64 + 0.5) * self.layer_thickness / n)
            .collect()
    }
}

const JITTER: f64 = 1e-12;

/// Depth-averaged projected field on the pixel grid.
pub fn render_map(sources: &SourceSet, g: &SensingGeometry) -> Result<FieldMap> {
    g.validate()?;
    let axis = axis_lab_vector(g.axis);
    let segs = sources
        .phantom
        .as_ref()
        .map(|p| p.filament_segments())
        .unwrap_or_default();
    let depths = g.depths();
    let values: Result<Vec<f64>> = (0..g.width * g.height)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % g.width, idx / g.width);
            let (x, y) = g.pixel_center(i, j);
            let mut acc = 0.0;
            for &d in &depths {
                let p = Vec3::new(x, y, -d);
                let b = match sources.field_with(&segs, p) {
                    Ok(b) => b,
                    Err(QdmError::Singular(_)) | Err(QdmError::ZeroSeparation) => sources
                        .field_with(&segs, p + Vec3::new(JITTER, JITTER, 0.0))
                        .map_err(|e| {
                            QdmError::Singular(format!("pixel ({i}, {j}) at depth {d:e} m: {e}"))
                        })?,
                    Err(e) => return Err(e),
                };
                acc += b.dot(axis);
            }
            Ok(acc / depths.len() as f64)
        })
        .collect();
    Ok(FieldMap::new(g.width, g.height, g.pitch, values?)?.with_axis(g.axis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::MU0;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn rand_vec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
        Vec3::new(
            rng.random_range(-s..s),
            rng.random_range(-s..s),
            rng.random_range(-s..s),
        )
    }

    #[test]
    fn matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let a = rand_vec(&mut rng, 1e-4);
            let b = rand_vec(&mut rng, 1e-4);
            let p = rand_vec(&mut rng, 1e-4);
            let ours = segment_field(a, b, 1e-3, p).unwrap();
            let q = oracle::segment_field_quadrature(a, b, 1e-3, p);
            assert!((ours - q).norm() <= 1e-9 * q.norm(), "{ours:?} {q:?}");
        }
    }

    #[test]
    fn collinear_and_singular() {
        let a = Vec3::ZERO;
        let b = Vec3::new(1e-5, 0.0, 0.0);
        assert_eq!(segment_field(a, b, 1.0, Vec3::new(3e-5, 0.0, 0.0)).unwrap(), Vec3::ZERO);
        assert!(matches!(
            segment_field(a, b, 1.0, Vec3::new(0.5e-5, 0.0, 0.0)),
            Err(QdmError::Singular(_))
        ));
        assert!(matches!(segment_field(a, b, 1.0, a), Err(QdmError::Singular(_))));
    }

    #[test]
    fn infinite_wire_limit() {
        let a = Vec3::new(0.0, -1e6, 0.0);
        let m = Vec3::ZERO;
        let b = Vec3::new(0.0, 1e6, 0.0);
        let p = Vec3::new(1e-3, 0.0, 0.0);
        let f = segment_field(a, m, 1e-3, p).unwrap() + segment_field(m, b, 1e-3, p).unwrap();
        let expected = MU0 * 1e-3 / (2.0 * PI * 1e-3);
        assert!(rel(f.norm(), expected) < 1e-6);
        assert!(rel(f.norm(), 2.0e-7) < 1e-6);
    }

    #[test]
    fn bisector_formula() {
        let (l, d) = (3e-5, 7e-6);
        let f = segment_field(Vec3::new(-l, 0.0, 0.0), Vec3::new(l, 0.0, 0.0), 2e-3, Vec3::new(0.0, d, 0.0)).unwrap();
        let expected = MU0 * 2e-3 * l / (2.0 * PI * d * (d * d + l * l).sqrt());
        assert!(rel(f.norm(), expected) < 1e-12);
    }

    #[test]
    fn reversal_flips_sign_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (a, b, p) = (rand_vec(&mut rng, 1.0), rand_vec(&mut rng, 1.0), rand_vec(&mut rng, 1.0));
            assert_eq!(segment_field(a, b, 1.0, p).unwrap(), -segment_field(b, a, 1.0, p).unwrap());
        }
    }

    fn square_loop(side: f64) -> WirePhantom {
        let h = side / 2.0;
        let pts = vec![
            Vec3::new(-h, -h, 0.0),
            Vec3::new(h, -h, 0.0),
            Vec3::new(h, h, 0.0),
            Vec3::new(-h, h, 0.0),
            Vec3::new(-h, -h, 0.0),
        ];
        WirePhantom {
            filaments: 1,
            ..WirePhantom::new(vec![pts], 1e-3).unwrap()
        }
    }

    #[test]
    fn square_loop_center() {
        let p = square_loop(100e-6);
        let b = phantom_field_at(&p, Vec3::ZERO).unwrap();
        let expected = 2.0 * 2f64.sqrt() * MU0 * 1e-3 / (PI * 100e-6);
        assert!(rel(b.norm(), expected) < 1e-12);
        let mut q = Vec3::ZERO;
        for s in p.filament_segments() {
            q += oracle::segment_field_quadrature(s.a, s.b, s.current, Vec3::ZERO);
        }
        assert!((b - q).norm() < 1e-6 * expected);
        assert_eq!(phantom_field_at(&p.with_current(0.0), Vec3::ZERO).unwrap(), Vec3::ZERO);
        let b2 = phantom_field_at(&p.with_current(2e-3), Vec3::new(1e-6, 3e-6, -5e-6)).unwrap();
        let b1 = phantom_field_at(&p, Vec3::new(1e-6, 3e-6, -5e-6)).unwrap();
        assert_eq!(b2, b1 * 2.0);
    }

    #[test]
    fn divergence_free() {
        let phantom = WirePhantom::new(vec![serpentine(3, 60e-6, 25e-6, 50e-6)], 1e-3).unwrap();
        let src = SourceSet {
            phantom: Some(phantom),
            dipoles: vec![DipoleSource {
                moment: Vec3::new(1e-16, -2e-16, 3e-16),
                position: Vec3::new(5e-6, 5e-6, 2e-6),
            }],
            uniform: Vec3::ZERO,
        };
        let h = 1e-9;
        for &(x, y, z) in &[(1e-6, 2e-6, -7e-6), (-20e-6, 13e-6, -9e-6), (30e-6, -4e-6, -12e-6)] {
            let p = Vec3::new(x, y, z);
            let d = |e: Vec3, sel: fn(Vec3) -> f64| {
                (sel(src.field_at(p + e).unwrap()) - sel(src.field_at(p - e).unwrap())) / (2.0 * h)
            };
            let div = d(Vec3::new(h, 0.0, 0.0), |v| v.x)
                + d(Vec3::new(0.0, h, 0.0), |v| v.y)
                + d(Vec3::new(0.0, 0.0, h), |v| v.z);
            let b = src.field_at(p).unwrap().norm();
            assert!(div.abs() < 1e-6 * b / h, "div {div} |B| {b}");
        }
    }

    #[test]
    fn dipole_examples() {
        let zero = DipoleSource {
            moment: Vec3::ZERO,
            position: Vec3::ZERO,
        };
        assert_eq!(dipole_field(&zero, Vec3::new(0.0, 0.0, 1e-5)).unwrap(), Vec3::ZERO);
        let d = DipoleSource {
            moment: Vec3::new(0.0, 0.0, 1e-16),
            position: Vec3::ZERO,
        };
        let b = dipole_field(&d, Vec3::new(0.0, 0.0, 1e-5)).unwrap();
        assert!(rel(b.z, 2e-8) < 1e-9);
        let e = DipoleSource::encapsulin(Vec3::new(0.0, 0.0, 1.0), Vec3::ZERO);
        assert!(rel(e.moment.norm(), 2.97e-18) < 0.01);
        let b = dipole_field(&e, Vec3::new(0.0, 0.0, 1e-5)).unwrap();
        assert!(rel(b.norm(), 600e-12) < 0.05);
        assert!(matches!(dipole_field(&d, Vec3::ZERO), Err(QdmError::ZeroSeparation)));
    }

    #[test]
    fn axis_projections() {
        let b = Vec3::new(0.0, 0.0, 1e-6);
        let s3 = 3f64.sqrt();
        let p: Vec<f64> = NvAxis::ALL.iter().map(|&a| project_axis(b, a)).collect();
        let expected = [1.0, -1.0, -1.0, 1.0];
        for (v, e) in p.iter().zip(expected) {
            assert!((v - e * 1e-6 / s3).abs() < 1e-20);
        }
        assert!(p.iter().sum::<f64>().abs() < 1e-21);
        // [-110] is lab y
        assert!(project_axis(Vec3::new(0.0, 1.0, 0.0), NvAxis::A111).abs() < 1e-16);
        for a in NvAxis::ALL {
            assert!((axis_lab_vector(a).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_field_renders_constant() {
        let src = SourceSet {
            uniform: Vec3::new(1e-6, 2e-6, 3e-6),
            ..Default::default()
        };
        let g = SensingGeometry {
            width: 8,
            height: 6,
            ..Default::default()
        };
        let m = render_map(&src, &g).unwrap();
        let expect = project_axis(src.uniform, NvAxis::A111);
        assert!(m.values().iter().all(|v| (v - expect).abs() < 1e-20));
    }

    #[test]
    fn phantom_csv_round_trip() {
        let p = WirePhantom::new(vec![serpentine(4, 100e-6, 30e-6, 200e-6)], 436e-9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_phantom(&p, &path).unwrap();
        assert_eq!(read_phantom(&path).unwrap(), p);
        let bad = "phantom,4e-6,1e-8,1e-3\ntrace_id,x_m,y_m,z_m\n0,0,0,0\n";
        assert!(parse_phantom(bad, Path::new("bad.csv")).is_err());
    }

    #[test]
    fn filament_offsets_span_width() {
        let p = WirePhantom::new(vec![vec![Vec3::ZERO, Vec3::new(0.0, 1e-4, 0.0)]], 1.0).unwrap();
        let segs = p.filament_segments();
        assert_eq!(segs.len(), 5);
        let xs: Vec<f64> = segs.iter().map(|s| s.a.x).collect();
        assert!((xs[0] - 1.6e-6).abs() < 1e-18 || (xs[0] + 1.6e-6).abs() < 1e-18);
        assert!(segs.iter().all(|s| (s.current - 0.2).abs() < 1e-15));
    }
}
