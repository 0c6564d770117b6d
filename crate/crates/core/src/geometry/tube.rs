//! Tubes `D(γ, r)`: normal discs along a curve, the projection onto the
//! curve, and foliation, `|dπ|`, area and coarea diagnostics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::curve::Curve;
use super::distance::distance;
use super::exp::{exp_fixed, log_map, steps_for};
use super::quadrature::{gauss_interval, sphere2};
use super::sampler::{contract, MetricSampler};
use super::{axpy, coord_norm, scale, sub, Point};
use crate::error::{Error, Result};
use crate::linalg::{bilinear, det4, gram_schmidt, quad, Mat4};
use crate::metric::MetricField;

#[derive(Clone, Debug, PartialEq)]
pub struct TubeConfig {
    /// Tube hypotheses are checked with this `β`; `None` skips them.
    pub beta: Option<f64>,
    /// Disc spacing along the curve as a fraction of `r` (metric length).
    pub spacing_fraction: f64,
    /// Samples per ray of each disc, excluding the centre.
    pub radial_samples: usize,
    /// Radial Gauss points of the disc-area quadrature.
    pub area_radial: usize,
    /// Order of the `S²` rule of the disc-area quadrature.
    pub area_sphere: usize,
    /// Curve parameters carrying `|dπ|` probes.
    pub probe_params: usize,
    /// Probe distances from the curve as fractions of `r`.
    pub probe_radii: Vec<f64>,
    /// Finite-difference step as a fraction of `r`.
    pub fd_step: f64,
    /// Probes and coarea quadrature use this fraction of the parameter range,
    /// centred, away from the end discs.
    pub interior: f64,
}

impl Default for TubeConfig {
    fn default() -> Self {
        Self {
            beta: Some(0.05),
            spacing_fraction: 0.25,
            radial_samples: 4,
            area_radial: 3,
            area_sphere: 3,
            probe_params: 5,
            probe_radii: vec![0.0, 0.5, 0.9],
            fd_step: 1e-4,
            interior: 0.6,
        }
    }
}

/// One normal disc `D(γ(s), r)`.
#[derive(Clone, Debug)]
pub struct Disc {
    pub s: f64,
    pub center: Point,
    /// Unit tangent at the centre.
    pub tangent: Point,
    /// `|γ'(s)|`.
    pub speed: f64,
    /// Orthonormal frame of the normal space.
    pub frame: [Point; 3],
    /// Exponential-map samples along rays; each ray starts after the centre.
    pub rays: Vec<Vec<Point>>,
    /// 3-volume of the disc.
    pub area: f64,
}

/// A probe point with its generating leaf and computed projection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionSample {
    pub q: Point,
    /// Leaf the probe was generated on.
    pub leaf: f64,
    /// `π(q)` from the leaf search.
    pub s: f64,
    pub dpi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TubeDiagnostics {
    /// No pair of sampled discs meets.
    pub foliated: bool,
    pub crossings: usize,
    /// Smallest signed distance of a disc sample to the leaf of another disc
    /// on the side it should lie; negative values mean the discs cross.
    pub min_separation: f64,
    pub sup_dpi: f64,
    pub min_dpi: f64,
    pub min_area: f64,
    /// `min_s Area(D(γ(s), r)) / r³`.
    pub c_emp: f64,
    /// Largest `|π(q) − s|` over probes generated on leaf `s`.
    pub max_leaf_error: f64,
}

#[derive(Clone, Debug)]
pub struct Tube {
    pub curve: Curve,
    pub radius: f64,
    pub discs: Vec<Disc>,
    pub projection_samples: Vec<ProjectionSample>,
    pub diagnostics: TubeDiagnostics,
    geo: TubeGeometry,
    config: TubeConfig,
}

/// Smooth normal frame along the curve and the maps built from it.
#[derive(Clone, Debug)]
struct TubeGeometry {
    sampler: MetricSampler,
    curve: Curve,
    vel: Vec<Point>,
    /// Coordinate axis left out when completing the tangent to a frame.
    skip_axis: usize,
    steps: usize,
    radius: f64,
}

struct Frame {
    center: Point,
    tangent: Point,
    speed: f64,
    normal: [Point; 3],
    g: Mat4,
}

impl TubeGeometry {
    fn frame(&self, s: f64) -> Frame {
        let (center, v) = self.curve.hermite(s, &self.vel);
        let g = self.sampler.metric(&center);
        let speed = quad(&g, &v).max(0.0).sqrt();
        let tangent = scale(&v, 1.0 / speed);
        let mut vecs = vec![tangent];
        for a in (0..4).filter(|&a| a != self.skip_axis) {
            let mut e = [0.0; 4];
            e[a] = 1.0;
            vecs.push(e);
        }
        let mut b = gram_schmidt(&g, &vecs);
        if b.len() < 4 {
            // The tangent lies in the span of the preferred axes.
            let mut e = [0.0; 4];
            e[self.skip_axis] = 1.0;
            vecs.push(e);
            b = gram_schmidt(&g, &vecs);
        }
        let normal = [b[1], b[2], b[3]];
        Frame {
            center,
            tangent,
            speed,
            normal,
            g,
        }
    }

    fn phi_in(&self, f: &Frame, w: &[f64; 3]) -> Point {
        let mut v = [0.0; 4];
        for (i, e) in f.normal.iter().enumerate() {
            v = axpy(&v, w[i], e);
        }
        exp_fixed(&self.sampler, &f.center, &v, self.steps).unwrap_or([f64::NAN; 4])
    }

    fn phi(&self, s: f64, w: &[f64; 3]) -> Point {
        self.phi_in(&self.frame(s), w)
    }

    /// Tangential component and normal distance of `log_{γ(s)} q`.
    fn leaf_coords(&self, f: &Frame, q: &Point, exact: bool) -> Option<(f64, f64)> {
        let v = if exact {
            log_map(&self.sampler, &f.center, q)?
        } else {
            let d = self.sampler.grid().min_image(f.center, *q);
            let c = contract(&self.sampler.christoffel(&f.center), &d, &d);
            axpy(&d, 0.5, &c)
        };
        let t = bilinear(&f.g, &v, &f.tangent);
        let n2 = quad(&f.g, &v) - t * t;
        Some((t, n2.max(0.0).sqrt()))
    }

    /// `π(q)` by secant iteration on the leaf equation from `guess`.
    fn project_from(&self, q: &Point, guess: f64) -> Option<f64> {
        if !guess.is_finite() {
            return None;
        }
        let f0 = self.frame(guess);
        let (h0, _) = self.leaf_coords(&f0, q, true)?;
        let mut s0 = guess;
        let mut h0 = h0;
        let (lo, hi) = self.curve.param_range();
        let mut s1 = guess + h0 / f0.speed;
        if !(s1 >= lo && s1 <= hi) {
            return None;
        }
        let tol = 1e-13 * self.radius.max(1e-300);
        for _ in 0..60 {
            let f1 = self.frame(s1);
            let (h1, _) = self.leaf_coords(&f1, q, true)?;
            if h1.abs() <= tol || s1 == s0 {
                return Some(s1);
            }
            let slope = (h1 - h0) / (s1 - s0);
            let next = if slope < 0.0 { s1 - h1 / slope } else { s1 + h1 / f1.speed };
            if !(next >= lo && next <= hi) {
                return None;
            }
            s0 = s1;
            h0 = h1;
            s1 = next;
        }
        None
    }

    /// `|dπ|` at `q` by central differences along a `g(q)`-orthonormal frame.
    fn dpi(&self, q: &Point, s_q: f64, step: f64) -> Option<f64> {
        let g = self.sampler.metric(q);
        let basis = gram_schmidt(&g, &[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]);
        let mut sq = 0.0;
        for e in &basis {
            let sp = self.project_from(&axpy(q, step, e), s_q)?;
            let sm = self.project_from(&axpy(q, -step, e), s_q)?;
            let d = (sp - sm) / (2.0 * step);
            sq += d * d;
        }
        Some(self.frame(s_q).speed * sq.sqrt())
    }

    fn disc_jacobian(&self, f: &Frame, w: &[f64; 3], step: f64) -> f64 {
        let mut cols = [[0.0; 4]; 3];
        for (i, c) in cols.iter_mut().enumerate() {
            let (mut wp, mut wm) = (*w, *w);
            wp[i] += step;
            wm[i] -= step;
            *c = scale(&sub(&self.phi_in(f, &wp), &self.phi_in(f, &wm)), 0.5 / step);
        }
        let x = self.phi_in(f, w);
        let g = self.sampler.metric(&x);
        let mut gram = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                gram[i][j] = bilinear(&g, &cols[i], &cols[j]);
            }
        }
        det3(&gram).max(0.0).sqrt()
    }

    fn full_jacobian(&self, s: f64, w: &[f64; 3], step: f64, s_step: f64) -> f64 {
        let f = self.frame(s);
        let mut cols = [[0.0; 4]; 4];
        cols[0] = scale(&sub(&self.phi(s + s_step, w), &self.phi(s - s_step, w)), 0.5 / s_step);
        for i in 0..3 {
            let (mut wp, mut wm) = (*w, *w);
            wp[i] += step;
            wm[i] -= step;
            cols[i + 1] = scale(&sub(&self.phi_in(&f, &wp), &self.phi_in(&f, &wm)), 0.5 / step);
        }
        let x = self.phi_in(&f, w);
        let g = self.sampler.metric(&x);
        let mut gram = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                gram[i][j] = bilinear(&g, &cols[i], &cols[j]);
            }
        }
        det4(&gram).max(0.0).sqrt()
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Unit ray directions in the normal space: the six frame axes and the eight
/// cube diagonals.
fn ray_directions() -> Vec<[f64; 3]> {
    let mut d = Vec::new();
    for i in 0..3 {
        for sgn in [1.0, -1.0] {
            let mut w = [0.0; 3];
            w[i] = sgn;
            d.push(w);
        }
    }
    let c = 1.0 / 3.0f64.sqrt();
    for k in 0..8 {
        d.push([
            if k & 1 == 0 { c } else { -c },
            if k & 2 == 0 { c } else { -c },
            if k & 4 == 0 { c } else { -c },
        ]);
    }
    d
}

fn disc_area(geo: &TubeGeometry, f: &Frame, r: f64, radial: usize, sphere: usize, step: f64) -> f64 {
    let mut area = 0.0;
    for (rho, wr) in gauss_interval(radial, 0.0, r) {
        for (dir, wd) in sphere2(sphere) {
            let w = [rho * dir[0], rho * dir[1], rho * dir[2]];
            area += wr * wd * rho * rho * geo.disc_jacobian(f, &w, step);
        }
    }
    area
}

/// Builds the tube of radius `r` around `curve` and its diagnostics.
pub fn build_tube(metric: &MetricField, curve: &Curve, r: f64, config: &TubeConfig) -> Result<Tube> {
    let sampler = MetricSampler::new(metric);
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("tube radius must be positive, got {r}")));
    }
    let half_period = 0.5 * metric.grid().periods().iter().cloned().fold(f64::INFINITY, f64::min);
    if r >= half_period {
        return Err(Error::InvalidArgument(format!("tube radius {r} exceeds half the shortest period")));
    }
    if let Some(beta) = config.beta {
        check_hypotheses(metric, &sampler, curve, beta)?;
    }
    let vel = curve.node_velocities();
    let (a, b) = curve.param_range();
    let mean = sub(&curve.end(), &curve.start());
    let skip_axis = (0..4)
        .max_by(|&i, &j| mean[i].abs().total_cmp(&mean[j].abs()))
        .unwrap_or(0);
    let lam_min = crate::linalg::sym_eigenvalues(&sampler.metric(&curve.start()))[0].max(1e-12);
    let steps = steps_for(&sampler, 1.5 * r / lam_min.sqrt());
    let geo = TubeGeometry {
        sampler,
        curve: curve.clone(),
        vel,
        skip_axis,
        steps,
        radius: r,
    };
    let step = config.fd_step * r;

    let length = curve.length(&geo.sampler);
    let count = ((length / (config.spacing_fraction * r)).ceil() as usize).max(1) + 1;
    let dirs = ray_directions();
    let discs: Vec<Disc> = crate::par::map_collect(count, |k| {
        let s = a + (b - a) * k as f64 / (count - 1) as f64;
        let f = geo.frame(s);
        let rays = dirs
            .iter()
            .map(|d| {
                (1..=config.radial_samples)
                    .map(|m| {
                        let rho = r * m as f64 / config.radial_samples as f64;
                        geo.phi_in(&f, &[rho * d[0], rho * d[1], rho * d[2]])
                    })
                    .collect()
            })
            .collect();
        let area = disc_area(&geo, &f, r, config.area_radial, config.area_sphere, step);
        Disc {
            s,
            center: f.center,
            tangent: f.tangent,
            speed: f.speed,
            frame: f.normal,
            rays,
            area,
        }
    });

    let (crossings, min_separation) = foliation_test(&geo, &discs, r);

    let (lo, hi) = interior(a, b, config.interior);
    let mut probes = Vec::new();
    for k in 0..config.probe_params {
        let s = if config.probe_params == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (config.probe_params - 1) as f64
        };
        for &frac in &config.probe_radii {
            let rho = frac * r;
            if rho == 0.0 {
                probes.push((s, [0.0; 3]));
                continue;
            }
            for d in dirs.iter().take(6) {
                probes.push((s, [rho * d[0], rho * d[1], rho * d[2]]));
            }
        }
    }
    let projection_samples: Vec<ProjectionSample> = crate::par::map_collect(probes.len(), |i| {
        let (leaf, w) = probes[i];
        let q = geo.phi(leaf, &w);
        let s = project(&geo, &discs, &q, r).unwrap_or(f64::NAN);
        let dpi = geo.dpi(&q, s, step).unwrap_or(f64::NAN);
        ProjectionSample { q, leaf, s, dpi }
    });

    let sup_dpi = projection_samples.iter().map(|p| p.dpi).fold(0.0, nan_max);
    let min_dpi = projection_samples.iter().map(|p| p.dpi).fold(f64::INFINITY, nan_min);
    let max_leaf_error = projection_samples
        .iter()
        .map(|p| (p.s - p.leaf).abs())
        .fold(0.0, nan_max);
    let min_area = discs.iter().map(|d| d.area).fold(f64::INFINITY, f64::min);
    let diagnostics = TubeDiagnostics {
        foliated: crossings == 0,
        crossings,
        min_separation,
        sup_dpi,
        min_dpi,
        min_area,
        c_emp: min_area / (r * r * r),
        max_leaf_error,
    };
    Ok(Tube {
        curve: curve.clone(),
        radius: r,
        discs,
        projection_samples,
        diagnostics,
        geo,
        config: config.clone(),
    })
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn nan_min(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.min(b)
    }
}

fn interior(a: f64, b: f64, frac: f64) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let half = 0.5 * (b - a) * frac.clamp(0.0, 1.0);
    (m - half, m + half)
}

fn check_hypotheses(metric: &MetricField, sampler: &MetricSampler, curve: &Curve, beta: f64) -> Result<()> {
    let length = curve.length(sampler);
    let d = distance(metric, &curve.start(), &curve.end());
    if length > d + beta {
        return Err(Error::TubeHypothesis {
            bound: "L(γ) ≤ d(γ(0), γ(L)) + β",
            value: length,
            limit: d + beta,
        });
    }
    let acc = curve.accelerations(sampler).iter().cloned().fold(0.0, f64::max);
    if acc > beta {
        return Err(Error::TubeHypothesis {
            bound: "|∇_γ' γ'| ≤ β",
            value: acc,
            limit: beta,
        });
    }
    let speeds = curve.speeds(sampler);
    let vmax = speeds.iter().cloned().fold(0.0, f64::max);
    let vmin = speeds.iter().cloned().fold(f64::INFINITY, f64::min);
    if vmax > 1.0 + beta {
        return Err(Error::TubeHypothesis {
            bound: "|γ'| ≤ 1 + β",
            value: vmax,
            limit: 1.0 + beta,
        });
    }
    if vmin < 1.0 / (1.0 + beta) {
        return Err(Error::TubeHypothesis {
            bound: "|γ'| ≥ 1/(1 + β)",
            value: 1.0 / vmin,
            limit: 1.0 + beta,
        });
    }
    Ok(())
}

/// Leaf search: the disc whose leaf equation is closest to zero within
/// reach, then secant refinement.
fn project(geo: &TubeGeometry, discs: &[Disc], q: &Point, r: f64) -> Option<f64> {
    let grid = geo.sampler.grid();
    let mut best: Option<(f64, f64)> = None;
    for d in discs {
        if coord_norm(&grid.min_image(d.center, *q)) > 3.0 * r {
            continue;
        }
        let f = geo.frame(d.s);
        if let Some((t, n)) = geo.leaf_coords(&f, q, false) {
            if n <= 1.5 * r && best.map_or(true, |(bt, _)| t.abs() < bt) {
                best = Some((t.abs(), d.s));
            }
        }
    }
    geo.project_from(q, best?.1)
}

/// Sign test of every disc's samples against the leaf equation of every
/// nearby disc. Returns the crossing count and the minimal separation.
fn foliation_test(geo: &TubeGeometry, discs: &[Disc], r: f64) -> (usize, f64) {
    let grid = geo.sampler.grid();
    let frames: Vec<Frame> = discs.iter().map(|d| geo.frame(d.s)).collect();
    // Beyond this the minimum image of a disc sample is ambiguous.
    let half_period = 0.5 * grid.periods().iter().cloned().fold(f64::INFINITY, f64::min);
    let reach = (3.0 * r).min(half_period - r);
    let results: Vec<(usize, f64)> = crate::par::map_collect(discs.len(), |j| {
        let dj = &discs[j];
        let mut crossings = 0;
        let mut sep = f64::INFINITY;
        for (i, di) in discs.iter().enumerate() {
            if i == j || coord_norm(&grid.min_image(di.center, dj.center)) > reach {
                continue;
            }
            let sigma = if dj.s > di.s { 1.0 } else { -1.0 };
            let fi = &frames[i];
            let eval = |q: &Point| geo.leaf_coords(fi, q, false).map(|(t, n)| (sigma * t, n));
            let Some(c0) = eval(&dj.center) else { continue };
            if c0.1 <= r {
                sep = sep.min(c0.0);
                if c0.0 <= 0.0 {
                    crossings += 1;
                    continue;
                }
            }
            let mut crossed = false;
            for ray in &dj.rays {
                let mut prev = c0;
                for q in ray {
                    let Some(cur) = eval(q) else { break };
                    if cur.1 <= r {
                        sep = sep.min(cur.0);
                    }
                    if prev.0 > 0.0 && cur.0 <= 0.0 {
                        let u = prev.0 / (prev.0 - cur.0);
                        if prev.1 + u * (cur.1 - prev.1) <= r {
                            crossed = true;
                        }
                    }
                    prev = cur;
                }
            }
            if crossed {
                crossings += 1;
            }
        }
        (crossings, sep)
    });
    results
        .iter()
        .fold((0, f64::INFINITY), |(c, s), &(ci, si)| (c + ci, s.min(si)))
}

/// `|∫_tube φ dV − ∫ ∫_{D(s)} φ / |dπ| dA ds| / |∫_tube φ dV|` over the
/// interior part of the tube, both sides by the same product quadrature in
/// `(s, ρ, direction)`; the left side uses the full Jacobian of
/// `(s, w) ↦ exp_{γ(s)}(w)`, the right side the disc Jacobian divided by the
/// sampled normal Jacobian of `π`.
pub fn coarea_residual<F>(tube: &Tube, phi: F, s_points: usize, radial: usize, sphere: usize) -> Result<f64>
where
    F: Fn(&Point) -> f64 + Sync + Send,
{
    if !tube.diagnostics.foliated {
        return Err(Error::InvalidArgument("coarea check needs a foliated tube".into()));
    }
    let geo = &tube.geo;
    let r = tube.radius;
    let (a, b) = tube.curve.param_range();
    let (lo, hi) = interior(a, b, tube.config.interior);
    let step = tube.config.fd_step * r;
    let s_step = tube.config.fd_step * (b - a);
    let s_nodes = gauss_interval(s_points, lo, hi);
    let disc_nodes: Vec<([f64; 3], f64)> = gauss_interval(radial, 0.0, r)
        .into_iter()
        .flat_map(|(rho, wr)| {
            sphere2(sphere)
                .into_iter()
                .map(move |(d, wd)| ([rho * d[0], rho * d[1], rho * d[2]], wr * wd * rho * rho))
        })
        .collect();
    let nodes: Vec<(f64, f64, [f64; 3], f64)> = s_nodes
        .iter()
        .flat_map(|&(s, ws)| disc_nodes.iter().map(move |&(w, ww)| (s, ws, w, ww)))
        .collect();
    let terms: Vec<Option<(f64, f64)>> = crate::par::map_collect(nodes.len(), |i| {
        let (s, ws, w, ww) = nodes[i];
        let f = geo.frame(s);
        let q = geo.phi_in(&f, &w);
        let v = phi(&q);
        let full = geo.full_jacobian(s, &w, step, s_step);
        let disc = geo.disc_jacobian(&f, &w, step);
        let dpi = geo.dpi(&q, s, step)?;
        Some((ws * ww * v * full, ws * ww * f.speed * v * disc / dpi))
    });
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for t in terms {
        let (l, r) = t.ok_or_else(|| Error::InvalidArgument("leaf search failed in coarea quadrature".into()))?;
        lhs += l;
        rhs += r;
    }
    if lhs == 0.0 {
        return Ok(if rhs == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((lhs - rhs).abs() / lhs.abs())
}

impl Tube {
    /// `π(q)`, or `None` outside the reach of the leaf search.
    pub fn project(&self, q: &Point) -> Option<f64> {
        project(&self.geo, &self.discs, q, self.radius)
    }

    /// `exp_{γ(s)}(Σ wᵢ Eᵢ(s))` in the tube's normal frame.
    pub fn point(&self, s: f64, w: &[f64; 3]) -> Point {
        self.geo.phi(s, w)
    }

    /// Disc areas with a different quadrature order.
    pub fn disc_areas(&self, radial: usize, sphere: usize) -> Vec<f64> {
        let step = self.config.fd_step * self.radius;
        crate::par::map_collect(self.discs.len(), |k| {
            let f = self.geo.frame(self.discs[k].s);
            disc_area(&self.geo, &f, self.radius, radial, sphere, step)
        })
    }
}
