//! Curvature energies `F = ∫|Rm|²` and `G = ∫|R̊c|²`, their exact discrete
//! gradients, and the analytic gradient `2δdRc − 2Ř + ½|Rm|²g`.
//!
//! The discrete gradients are reverse-mode derivatives of the quadrature
//! `Σ_x |Rm|²(x) √det g(x) ∏h` through the finite-difference stencils, so they
//! are exact for the discretized functional.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::curvature::{
    check_tensor, metric_jet, ricci_of, rm_component, trace, CurvatureBundle, MetricJet,
    PointCurvature, Rm6,
};
use crate::error::{Error, Result};
use crate::field::{first, mixed, second, Field, Neighborhood, AXIS_PAIRS};
use crate::grid::DIM;
use crate::linalg::{matmul, wedge_square, Mat4, Sym4, FORM_INDEX, FORM_PAIRS, SYM_INDEX, SYM_PAIRS};
use crate::metric::MetricField;

/// Gauss–Bonnet normalization `c₀` in `F = c₀π²χ + 4G`. It multiplies the
/// Euler characteristic, which vanishes on the torus, so its value never enters
/// a computation here. With the full-contraction norm `|Rm|² = R_ijkl R^ijkl`
/// the four-dimensional Chern–Gauss–Bonnet formula gives 32; 8 is kept as the
/// conventional default.
pub const C0: f64 = 8.0;

/// Sign `s` in `(δT)_jk = s·(−2∇^i T_ijk)`.
///
/// The factor 2 makes `δ` the formal `L²` adjoint of
/// `(dh)_ijk = ∇_i h_jk − ∇_j h_ik` under the full tensor inner product
/// `⟨T, S⟩ = T_ijk S^ijk`, the same contraction used for `|Rm|²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeltaSign {
    /// `δT = −2∇^i T_i··`, the formal adjoint of `d`.
    Adjoint,
    /// `δT = +2∇^i T_i··`.
    Divergence,
}

impl DeltaSign {
    pub fn factor(self) -> f64 {
        match self {
            DeltaSign::Adjoint => 1.0,
            DeltaSign::Divergence => -1.0,
        }
    }
}

/// Result of the sign calibration against the discrete gradient, frozen here
/// and re-derived by a test.
pub const CALIBRATED_DELTA_SIGN: Option<DeltaSign> = Some(DeltaSign::Adjoint);

/// Energies of one metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyReport {
    /// `∫|Rm|² dV`.
    pub f: f64,
    /// `∫|R̊c|² dV`.
    pub g: f64,
    /// `F − 4G`, which vanishes in the continuum on `T⁴`.
    pub gauss_bonnet_residual: f64,
    pub volume: f64,
}

impl EnergyReport {
    pub const CSV_HEADER: &'static str = "t,F,G,residual,volume";

    pub fn csv_row(&self, t: f64) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e}",
            t, self.f, self.g, self.gauss_bonnet_residual, self.volume
        )
    }
}

fn point_curvature(metric: &MetricField, idx: usize) -> Result<PointCurvature> {
    PointCurvature::from_jet(&metric_jet(metric, idx)).ok_or(Error::NotPositiveDefinite {
        index: idx,
        coords: metric.grid().coords(idx),
    })
}

fn traceless_ricci_sq(pc: &PointCurvature) -> f64 {
    let rc = pc.ricci();
    let r = trace(&rc, &pc.ginv);
    crate::curvature::sym_norm_sq(&rc, &pc.ginv) - 0.25 * r * r
}

/// `F`, `G`, the Gauss–Bonnet residual and the volume.
pub fn energy(metric: &MetricField) -> Result<EnergyReport> {
    metric.validate()?;
    let grid = metric.grid();
    let w = grid.cell_volume();
    let per_point: Vec<[f64; 3]> = crate::par::map_collect(grid.len(), |idx| {
        let pc = point_curvature(metric, idx).expect("validated metric");
        [pc.rm_norm_sq() * pc.sqrt_det, traceless_ricci_sq(&pc) * pc.sqrt_det, pc.sqrt_det]
    });
    let (mut f, mut g, mut vol) = (0.0, 0.0, 0.0);
    for v in &per_point {
        f += v[0];
        g += v[1];
        vol += v[2];
    }
    let (f, g) = (f * w, g * w);
    Ok(EnergyReport {
        f,
        g,
        gauss_bonnet_residual: f - 4.0 * g,
        volume: vol * w,
    })
}

/// Just `F`, cheaper than [`energy`].
pub fn energy_f(metric: &MetricField) -> Result<f64> {
    metric.validate()?;
    let w = metric.grid().cell_volume();
    Ok(crate::par::sum_points(metric.grid().len(), |idx| {
        let pc = point_curvature(metric, idx).expect("validated metric");
        pc.rm_norm_sq() * pc.sqrt_det
    }) * w)
}

/// How a gradient field was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    DiscreteOracle,
}

/// Symmetric 2-tensor field (lower indices, 10 packed values per point).
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    pub field: Field,
    pub provenance: Provenance,
}

impl GradientField {
    pub fn at(&self, idx: usize) -> Mat4 {
        let mut s = [0.0; 10];
        s.copy_from_slice(self.field.at(idx));
        Sym4(s).to_full()
    }

    /// `∫ |T|²_g dV`.
    pub fn l2_sq(&self, metric: &MetricField) -> f64 {
        let w = metric.grid().cell_volume();
        crate::par::sum_points(metric.grid().len(), |idx| {
            let (ginv, det) = crate::linalg::spd_inverse_det(&metric.full_at(idx)).expect("valid metric");
            crate::curvature::sym_norm_sq(&self.at(idx), &ginv) * det.sqrt()
        }) * w
    }

    pub fn l2_norm(&self, metric: &MetricField) -> f64 {
        self.l2_sq(metric).sqrt()
    }

    /// `self − c·other`, keeping this field's provenance.
    pub fn sub_scaled(&self, c: f64, other: &GradientField) -> GradientField {
        let mut f = self.field.clone();
        f.data_mut()
            .iter_mut()
            .zip(other.field.data().iter())
            .for_each(|(a, b)| *a -= c * b);
        GradientField {
            field: f,
            provenance: self.provenance,
        }
    }

    /// `∫ ⟨T, h⟩_g dV` for a packed symmetric perturbation `h`.
    pub fn pair(&self, metric: &MetricField, h: &Field) -> f64 {
        let w = metric.grid().cell_volume();
        crate::par::sum_points(metric.grid().len(), |idx| {
            let (ginv, det) = crate::linalg::spd_inverse_det(&metric.full_at(idx)).expect("valid metric");
            let mut hs = [0.0; 10];
            hs.copy_from_slice(h.at(idx));
            let t = self.at(idx);
            let hm = Sym4(hs).to_full();
            let a = matmul(&matmul(&ginv, &t), &ginv);
            let mut s = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    s += a[i][j] * hm[i][j];
                }
            }
            s * det.sqrt()
        }) * w
    }

    pub fn is_symmetric(&self) -> bool {
        // packed storage is symmetric by construction
        self.field.comps() == 10
    }
}

/// Reverse-mode seeds accumulated at one point.
struct PointAdjoint {
    /// `∂e/∂g_ab` per packed component.
    g: [f64; 10],
    /// `∂e/∂(∂_c g_ab)`.
    dg: [[f64; 10]; DIM],
    /// `∂e/∂(∂_c∂_c g_ab)`.
    dd: [[f64; 10]; DIM],
    /// `∂e/∂(∂_a∂_b g)` for the six axis pairs.
    mixed: [[f64; 10]; 6],
}

/// Pulls back seeds on `R`, `g⁻¹` and `√det g` to the metric jet.
fn backprop_jet(pc: &PointCurvature, rbar: &Rm6, mut ginv_bar: Mat4, mu_bar: f64) -> PointAdjoint {
    let c1 = &pc.first_kind;
    let c2 = &pc.christoffel;
    let ginv = &pc.ginv;
    let mut c1_bar = [[[0.0; 4]; 4]; 4];
    let mut c2_bar = [[[0.0; 4]; 4]; 4];
    let mut ddg_bar = [[[[0.0; 4]; 4]; 4]; 4];
    for (p, &(i, j)) in FORM_PAIRS.iter().enumerate() {
        for (q, &(k, l)) in FORM_PAIRS.iter().enumerate() {
            let rb = rbar[p][q];
            if rb == 0.0 {
                continue;
            }
            let hw = 0.5 * rb;
            ddg_bar[j][l][i][k] += hw;
            ddg_bar[i][k][j][l] += hw;
            ddg_bar[i][l][j][k] -= hw;
            ddg_bar[j][k][i][l] -= hw;
            for e in 0..4 {
                c2_bar[e][j][l] += rb * c1[e][i][k];
                c1_bar[e][i][k] += rb * c2[e][j][l];
                c2_bar[e][j][k] -= rb * c1[e][i][l];
                c1_bar[e][i][l] -= rb * c2[e][j][k];
            }
        }
    }
    // c2[m][a][b] = Σ_e ginv[m][e] c1[e][a][b]
    for m in 0..4 {
        for e in 0..4 {
            let mut s = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    s += c2_bar[m][a][b] * c1[e][a][b];
                    c1_bar[e][a][b] += ginv[m][e] * c2_bar[m][a][b];
                }
            }
            ginv_bar[m][e] += s;
        }
    }
    // c1[e][a][b] = ½(∂_a g_be + ∂_b g_ae − ∂_e g_ab)
    let mut dg_bar = [[[0.0; 4]; 4]; 4];
    for e in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                let v = 0.5 * c1_bar[e][a][b];
                dg_bar[a][b][e] += v;
                dg_bar[b][a][e] += v;
                dg_bar[e][a][b] -= v;
            }
        }
    }
    // ginv = g⁻¹ and √det g
    let t = matmul(&matmul(ginv, &ginv_bar), ginv);
    let mut g_bar = [[0.0; 4]; 4];
    let half_mu = 0.5 * pc.sqrt_det * mu_bar;
    for a in 0..4 {
        for b in 0..4 {
            g_bar[a][b] = -t[a][b] + half_mu * ginv[a][b];
        }
    }
    let fold = |m: &Mat4| -> [f64; 10] {
        let mut out = [0.0; 10];
        for (k, &(a, b)) in SYM_PAIRS.iter().enumerate() {
            out[k] = if a == b { m[a][a] } else { m[a][b] + m[b][a] };
        }
        out
    };
    let mut adj = PointAdjoint {
        g: fold(&g_bar),
        dg: [[0.0; 10]; DIM],
        dd: [[0.0; 10]; DIM],
        mixed: [[0.0; 10]; 6],
    };
    for c in 0..DIM {
        adj.dg[c] = fold(&dg_bar[c]);
        adj.dd[c] = fold(&ddg_bar[c][c]);
    }
    for (n, &(a, b)) in AXIS_PAIRS.iter().enumerate() {
        let ab = fold(&ddg_bar[a][b]);
        let ba = fold(&ddg_bar[b][a]);
        for k in 0..10 {
            adj.mixed[n][k] = ab[k] + ba[k];
        }
    }
    adj
}

fn mat6_mul(a: &Rm6, b: &Rm6) -> Rm6 {
    let mut c = [[0.0; 6]; 6];
    for i in 0..6 {
        for k in 0..6 {
            let aik = a[i][k];
            for j in 0..6 {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// Seeds for `e = √det g · |Rm|²`.
fn seeds_f(pc: &PointCurvature) -> (Rm6, Mat4, f64) {
    let mu = pc.sqrt_det;
    let r = &pc.rm;
    let p = wedge_square(&pc.ginv);
    let rp = mat6_mul(r, &p);
    let pr = mat6_mul(&p, r);
    let prp = mat6_mul(&pr, &p);
    let rpr = mat6_mul(&rp, r);
    let mut q = 0.0;
    for i in 0..6 {
        for j in 0..6 {
            q += rp[i][j] * rp[j][i];
        }
    }
    let mut rbar = [[0.0; 6]; 6];
    let mut pbar = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            rbar[i][j] = 8.0 * mu * prp[i][j];
            pbar[i][j] = 8.0 * mu * rpr[i][j];
        }
    }
    // P_{(ab),(ij)} = G_ai G_bj − G_aj G_bi
    let g = &pc.ginv;
    let mut ginv_bar = [[0.0; 4]; 4];
    for (pp, &(a, b)) in FORM_PAIRS.iter().enumerate() {
        for (qq, &(i, j)) in FORM_PAIRS.iter().enumerate() {
            let w = pbar[pp][qq];
            ginv_bar[a][i] += w * g[b][j];
            ginv_bar[b][j] += w * g[a][i];
            ginv_bar[a][j] -= w * g[b][i];
            ginv_bar[b][i] -= w * g[a][j];
        }
    }
    (rbar, ginv_bar, 4.0 * q)
}

/// Seeds for `e = √det g · (|Rc|² − ¼R²)`.
fn seeds_g(pc: &PointCurvature) -> (Rm6, Mat4, f64) {
    let mu = pc.sqrt_det;
    let g = &pc.ginv;
    let rc = ricci_of(&pc.rm, g);
    let r = trace(&rc, g);
    let grcg = matmul(&matmul(g, &rc), g);
    let rcgrc = matmul(&matmul(&rc, g), &rc);
    let mut rc_bar = [[0.0; 4]; 4];
    let mut ginv_bar = [[0.0; 4]; 4];
    let mut val = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            rc_bar[a][b] = mu * (2.0 * grcg[a][b] - 0.5 * r * g[a][b]);
            ginv_bar[a][b] = mu * (2.0 * rcgrc[a][b] - 0.5 * r * rc[a][b]);
            val += grcg[a][b] * rc[a][b];
        }
    }
    val -= 0.25 * r * r;
    // Rc_jk = Σ_il G_il R(i,j,k,l)
    let mut rbar = [[0.0; 6]; 6];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    let (Some((p, sp)), Some((q, sq))) = (FORM_INDEX[i][j], FORM_INDEX[k][l]) else {
                        continue;
                    };
                    let rb = rc_bar[j][k];
                    rbar[p][q] += rb * g[i][l] * sp * sq;
                    ginv_bar[i][l] += rb * rm_component(&pc.rm, i, j, k, l);
                }
            }
        }
    }
    (rbar, ginv_bar, val)
}

#[derive(Clone, Copy)]
enum Functional {
    F,
    G,
}

/// Energy sums gathered during a gradient pass.
#[derive(Clone, Copy, Debug, Default)]
struct Totals {
    f: f64,
    g: f64,
    volume: f64,
    sup_rm: f64,
}

/// `∂E/∂g_p(y)` for every point and packed component, plus energy totals.
fn discrete_partials(metric: &MetricField, which: Functional) -> Result<(Field, Totals)> {
    metric.validate()?;
    let grid = metric.grid().clone();
    let n = grid.len();
    // per point: g(10), dg(40), dd(40), mixed(60), then e_F, e_G, √det g, |Rm|
    const STRIDE: usize = 154;
    let seeds = Field::from_fn(&grid, STRIDE, |idx, out| {
        let pc = point_curvature(metric, idx).expect("validated metric");
        let (rbar, gbar, mu_bar) = match which {
            Functional::F => seeds_f(&pc),
            Functional::G => seeds_g(&pc),
        };
        let adj = backprop_jet(&pc, &rbar, gbar, mu_bar);
        out[..10].copy_from_slice(&adj.g);
        for c in 0..DIM {
            out[10 + 10 * c..20 + 10 * c].copy_from_slice(&adj.dg[c]);
            out[50 + 10 * c..60 + 10 * c].copy_from_slice(&adj.dd[c]);
        }
        for m in 0..6 {
            out[90 + 10 * m..100 + 10 * m].copy_from_slice(&adj.mixed[m]);
        }
        let nsq = pc.rm_norm_sq();
        out[150] = nsq * pc.sqrt_det;
        out[151] = traceless_ricci_sq(&pc) * pc.sqrt_det;
        out[152] = pc.sqrt_det;
        out[153] = nsq.max(0.0).sqrt();
    });
    let h = grid.spacing();
    let w = grid.cell_volume();
    let data = seeds.data();
    let mut totals = Totals::default();
    for idx in 0..n {
        let e = &data[idx * STRIDE + 150..idx * STRIDE + 154];
        totals.f += e[0];
        totals.g += e[1];
        totals.volume += e[2];
        totals.sup_rm = totals.sup_rm.max(e[3]);
    }
    totals.f *= w;
    totals.g *= w;
    totals.volume *= w;
    let partials = Field::from_fn(&grid, 10, |idx, out| {
        let nb = Neighborhood::new(&grid, idx);
        let mut acc = [0.0; 10];
        acc.copy_from_slice(&data[idx * STRIDE..idx * STRIDE + 10]);
        let mut buf = [0.0; 10];
        let view = |off: usize| &data[off..];
        for c in 0..DIM {
            // adjoint of the antisymmetric first-derivative stencil is its negative
            first(view(10 + 10 * c), STRIDE, &nb, c, 1.0 / h[c], &mut buf);
            acc.iter_mut().zip(buf.iter()).for_each(|(a, b)| *a -= b);
            second(view(50 + 10 * c), STRIDE, &nb, c, 1.0 / (h[c] * h[c]), &mut buf);
            acc.iter_mut().zip(buf.iter()).for_each(|(a, b)| *a += b);
        }
        for (m, &(a, b)) in AXIS_PAIRS.iter().enumerate() {
            mixed(view(90 + 10 * m), STRIDE, &nb, a, b, 1.0 / (h[a] * h[b]), &mut buf);
            acc.iter_mut().zip(buf.iter()).for_each(|(x, y)| *x += y);
        }
        for (o, a) in out.iter_mut().zip(acc.iter()) {
            *o = w * a;
        }
    });
    drop(seeds);
    for idx in 0..n {
        if let Some(c) = partials.at(idx).iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteProbe { index: idx, component: c });
        }
    }
    Ok((partials, totals))
}

/// Gradient of `F` together with the energies of the same metric.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub energy: EnergyReport,
    pub sup_rm: f64,
    pub grad: GradientField,
    /// `∫ |grad F|² dV`.
    pub grad_l2_sq: f64,
}

/// One pass computing `grad F`, `F`, `G`, the volume and `sup|Rm|`.
pub fn evaluate(metric: &MetricField) -> Result<Evaluation> {
    let (partials, t) = discrete_partials(metric, Functional::F)?;
    let grad = partials_to_gradient(metric, &partials);
    let grad_l2_sq = grad.l2_sq(metric);
    Ok(Evaluation {
        energy: EnergyReport {
            f: t.f,
            g: t.g,
            gauss_bonnet_residual: t.f - 4.0 * t.g,
            volume: t.volume,
        },
        sup_rm: t.sup_rm,
        grad,
        grad_l2_sq,
    })
}

/// Converts `∂E/∂g_p` into the `L²(dV_g)` gradient tensor with lower indices.
pub fn partials_to_gradient(metric: &MetricField, partials: &Field) -> GradientField {
    let grid = metric.grid();
    let w = grid.cell_volume();
    let field = Field::from_fn(grid, 10, |idx, out| {
        let (_, det) = crate::linalg::spd_inverse_det(&metric.full_at(idx)).expect("valid metric");
        let g = metric.full_at(idx);
        let mu = det.sqrt();
        let mut up = [0.0; 10];
        for (k, u) in up.iter_mut().enumerate() {
            *u = partials.at(idx)[k] / (w * mu * Sym4::multiplicity(k));
        }
        let lower = matmul(&matmul(&g, &Sym4(up).to_full()), &g);
        out.copy_from_slice(&Sym4::from_full(&lower).0);
    });
    GradientField {
        field,
        provenance: Provenance::DiscreteOracle,
    }
}

/// Exact gradient of the discretized `F` by reverse-mode differentiation.
pub fn grad_f_discrete(metric: &MetricField) -> Result<GradientField> {
    Ok(partials_to_gradient(metric, &discrete_partials(metric, Functional::F)?.0))
}

/// Exact gradient of the discretized `G`.
pub fn grad_g_discrete(metric: &MetricField) -> Result<GradientField> {
    Ok(partials_to_gradient(metric, &discrete_partials(metric, Functional::G)?.0))
}

/// Raw partial derivatives `∂F/∂g_p(y)` of the discretized energy.
pub fn energy_partials(metric: &MetricField) -> Result<Field> {
    Ok(discrete_partials(metric, Functional::F)?.0)
}

/// Grid points whose energy density depends on the metric at `idx`.
fn stencil_support(metric: &MetricField, idx: usize) -> Vec<usize> {
    let grid = metric.grid();
    let mut pts = Vec::new();
    pts.push(idx);
    for a in 0..DIM {
        for k in [-2i64, -1, 1, 2] {
            pts.push(grid.shift(idx, a, k));
        }
    }
    for &(a, b) in AXIS_PAIRS.iter() {
        for p in [-2i64, -1, 1, 2] {
            for q in [-2i64, -1, 1, 2] {
                pts.push(grid.shift(grid.shift(idx, a, p), b, q));
            }
        }
    }
    pts.sort_unstable();
    pts.dedup();
    pts
}

/// Central-difference gradient of the discretized `F`, one component at a
/// time with step `probe_spacing` (relative to the local metric scale). Only
/// the energy densities inside the stencil support are re-evaluated.
pub fn grad_f_probe(metric: &MetricField, probe_spacing: f64) -> Result<GradientField> {
    if !(probe_spacing > 0.0) {
        return Err(Error::InvalidArgument(format!("probe spacing must be positive, got {probe_spacing}")));
    }
    metric.validate()?;
    let grid = metric.grid().clone();
    let w = grid.cell_volume();
    let base = metric.field().clone();
    let local = |m: &MetricField, pts: &[usize]| -> Option<f64> {
        let mut s = 0.0;
        for &p in pts {
            let pc = PointCurvature::from_jet(&metric_jet(m, p))?;
            s += pc.rm_norm_sq() * pc.sqrt_det;
        }
        Some(s * w)
    };
    let results: Vec<Result<[f64; 10]>> = crate::par::map_collect(grid.len(), |idx| {
        let pts = stencil_support(metric, idx);
        let scale = (0..4).map(|a| metric.full_at(idx)[a][a].abs()).fold(0.0, f64::max);
        let eps = probe_spacing * scale.max(1e-300);
        let mut out = [0.0; 10];
        let mut work = MetricField::new(base.clone()).expect("validated metric");
        for (k, o) in out.iter_mut().enumerate() {
            let orig = base.at(idx)[k];
            let mut f = work.clone().into_field();
            f.at_mut(idx)[k] = orig + eps;
            work = MetricField::new(f).map_err(|_| Error::NonFiniteProbe { index: idx, component: k })?;
            let plus = local(&work, &pts);
            let mut f = work.clone().into_field();
            f.at_mut(idx)[k] = orig - eps;
            work = MetricField::new(f).map_err(|_| Error::NonFiniteProbe { index: idx, component: k })?;
            let minus = local(&work, &pts);
            let mut f = work.clone().into_field();
            f.at_mut(idx)[k] = orig;
            work = MetricField::new(f).expect("restored metric");
            match (plus, minus) {
                (Some(p), Some(m)) if p.is_finite() && m.is_finite() => *o = (p - m) / (2.0 * eps),
                _ => return Err(Error::NonFiniteProbe { index: idx, component: k }),
            }
        }
        Ok(out)
    });
    let mut partials = Field::zeros(&grid, 10);
    for (idx, r) in results.into_iter().enumerate() {
        partials.at_mut(idx).copy_from_slice(&r?);
    }
    Ok(partials_to_gradient(metric, &partials))
}

/// `(dRc)_ijk = ∇_i Rc_jk − ∇_j Rc_ik`, 64 values per point.
fn d_ricci(bundle: &CurvatureBundle) -> Field {
    let grid = bundle.grid().clone();
    let h = grid.spacing();
    Field::from_fn(&grid, 64, |idx, out| {
        let nb = Neighborhood::new(&grid, idx);
        let gam = crate::curvature::unpack_christoffel(bundle.christoffel.at(idx));
        let rc = CurvatureBundle::sym_at(&bundle.ricci, idx);
        let mut nrc = [[[0.0; 4]; 4]; 4];
        let mut buf = [0.0; 10];
        for i in 0..4 {
            first(bundle.ricci.data(), 10, &nb, i, 1.0 / h[i], &mut buf);
            for j in 0..4 {
                for k in 0..4 {
                    let mut v = buf[SYM_INDEX[j][k]];
                    for m in 0..4 {
                        v -= gam[m][i][j] * rc[m][k] + gam[m][i][k] * rc[j][m];
                    }
                    nrc[i][j][k] = v;
                }
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    out[16 * i + 4 * j + k] = nrc[i][j][k] - nrc[j][i][k];
                }
            }
        }
    })
}

/// Analytic `grad F = 2δdRc − 2Ř + ½|Rm|²g` with `δ` of the given sign.
pub fn grad_f_analytic_with(metric: &MetricField, sign: DeltaSign) -> Result<GradientField> {
    let bundle = CurvatureBundle::build(metric, 0)?;
    let grid = metric.grid().clone();
    let t = d_ricci(&bundle);
    let h = grid.spacing();
    let s = sign.factor();
    let field = Field::from_fn(&grid, 10, |idx, out| {
        let nb = Neighborhood::new(&grid, idx);
        let gam = crate::curvature::unpack_christoffel(bundle.christoffel.at(idx));
        let ginv = bundle.ginv_at(idx);
        let g = metric.full_at(idx);
        let here = t.at(idx);
        let tt = |i: usize, j: usize, k: usize| here[16 * i + 4 * j + k];
        // div_jk = g^{ip} ∇_p T_ijk
        let mut div = [[0.0; 4]; 4];
        let mut buf = [0.0; 64];
        for p in 0..4 {
            first(t.data(), 64, &nb, p, 1.0 / h[p], &mut buf);
            for i in 0..4 {
                let gip = ginv[i][p];
                if gip == 0.0 {
                    continue;
                }
                for j in 0..4 {
                    for k in 0..4 {
                        let mut v = buf[16 * i + 4 * j + k];
                        for m in 0..4 {
                            v -= gam[m][p][i] * tt(m, j, k) + gam[m][p][j] * tt(i, m, k) + gam[m][p][k] * tt(i, j, m);
                        }
                        div[j][k] += gip * v;
                    }
                }
            }
        }
        let rm = bundle.rm_at(idx);
        let ch = check_tensor(&rm, &ginv);
        let nsq = bundle.rm_norm_sq.at(idx)[0];
        let mut gf = [[0.0; 4]; 4];
        for j in 0..4 {
            for k in 0..4 {
                let delta_d = -s * (div[j][k] + div[k][j]);
                gf[j][k] = 2.0 * delta_d - 2.0 * ch[j][k] + 0.5 * nsq * g[j][k];
            }
        }
        out.copy_from_slice(&Sym4::from_full(&gf).0);
    });
    Ok(GradientField {
        field,
        provenance: Provenance::Analytic,
    })
}

/// Analytic gradient with the frozen calibrated sign of `δ`.
pub fn grad_f_analytic(metric: &MetricField) -> Result<GradientField> {
    let sign = CALIBRATED_DELTA_SIGN.ok_or(Error::UncalibratedSign)?;
    grad_f_analytic_with(metric, sign)
}

/// `‖a − b‖ / ‖b‖` in `L²(dV_g)`.
pub fn relative_l2_difference(metric: &MetricField, a: &GradientField, b: &GradientField) -> f64 {
    let diff = a.sub_scaled(1.0, b);
    let nb = b.l2_norm(metric);
    if nb == 0.0 {
        diff.l2_norm(metric)
    } else {
        diff.l2_norm(metric) / nb
    }
}

/// Picks the sign of `δ` minimizing the total relative `L²` distance to the
/// discrete gradient over `metrics`. Returns the winner and both scores.
pub fn calibrate_delta_sign(metrics: &[MetricField]) -> Result<(DeltaSign, [f64; 2])> {
    let mut scores = [0.0; 2];
    for m in metrics {
        let disc = grad_f_discrete(m)?;
        for (s, sign) in [DeltaSign::Adjoint, DeltaSign::Divergence].into_iter().enumerate() {
            let an = grad_f_analytic_with(m, sign)?;
            scores[s] += relative_l2_difference(m, &an, &disc);
        }
    }
    let best = if scores[0] <= scores[1] {
        DeltaSign::Adjoint
    } else {
        DeltaSign::Divergence
    };
    Ok((best, scores))
}

/// Pointwise `g^ij (2Ř − ½|Rm|²g)_ij`, which vanishes identically in dimension four.
pub fn zeroth_order_trace(pc: &PointCurvature) -> f64 {
    let ch = check_tensor(&pc.rm, &pc.ginv);
    2.0 * trace(&ch, &pc.ginv) - 0.5 * pc.rm_norm_sq() * 4.0
}

/// The metric jet at a point, re-exported for oracles.
pub fn jet(metric: &MetricField, idx: usize) -> MetricJet {
    metric_jet(metric, idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_direction(grid: &TorusGrid, seed: u64) -> Field {
        let modes = crate::metric::BandLimitedModes::new(1, seed);
        let l = grid.periods();
        Field::from_fn(grid, 10, |idx, out| {
            let x = grid.position(idx);
            for (c, o) in out.iter_mut().enumerate() {
                *o = modes.eval(c, x, &l);
            }
        })
    }

    #[test]
    fn flat_energy_and_gradient_vanish() {
        let grid = TorusGrid::unit(8).unwrap();
        let m = MetricField::flat(&grid);
        let e = energy(&m).unwrap();
        assert_eq!(e.f, 0.0);
        assert_eq!(e.g, 0.0);
        assert!((e.volume - 1.0).abs() < 1e-12);
        assert_eq!(grad_f_discrete(&m).unwrap().field.max_abs(), 0.0);
        assert_eq!(grad_f_analytic(&m).unwrap().field.max_abs(), 0.0);
    }

    #[test]
    fn energy_is_scale_invariant() {
        let grid = TorusGrid::unit(8).unwrap();
        let m = MetricField::band_limited(&grid, 0.05, 1, 11).unwrap();
        let a = energy(&m).unwrap();
        let b = energy(&m.scaled(3.0).unwrap()).unwrap();
        assert!((a.f - b.f).abs() <= 1e-10 * a.f);
        assert!((a.g - b.g).abs() <= 1e-10 * a.g);
    }

    #[test]
    fn directional_derivative_consistency() {
        let grid = TorusGrid::unit(8).unwrap();
        let m = MetricField::band_limited(&grid, 0.05, 1, 5).unwrap();
        let grad = grad_f_discrete(&m).unwrap();
        let gg = grad_g_discrete(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let h = random_direction(&grid, rng.random());
            let eps = 1e-4;
            let fp = energy(&m.axpy(eps, &h).unwrap()).unwrap();
            let fm = energy(&m.axpy(-eps, &h).unwrap()).unwrap();
            let fd = (fp.f - fm.f) / (2.0 * eps);
            let an = grad.pair(&m, &h);
            assert!((fd - an).abs() <= 1e-6 * fd.abs().max(an.abs()), "{fd} vs {an}");
            let fd_g = (fp.g - fm.g) / (2.0 * eps);
            let an_g = gg.pair(&m, &h);
            assert!((fd_g - an_g).abs() <= 1e-6 * fd_g.abs().max(an_g.abs()), "{fd_g} vs {an_g}");
        }
    }

    #[test]
    fn probe_gradient_agrees_with_adjoint() {
        let grid = TorusGrid::unit(8).unwrap();
        let m = MetricField::band_limited(&grid, 0.05, 1, 9).unwrap();
        let a = grad_f_discrete(&m).unwrap();
        let p = grad_f_probe(&m, 1e-5).unwrap();
        assert!(relative_l2_difference(&m, &p, &a) < 1e-6);
    }

    #[test]
    fn calibration_reproduces_frozen_sign() {
        let grid = TorusGrid::unit(8).unwrap();
        let metrics: Vec<MetricField> = (0..5)
            .map(|s| MetricField::band_limited(&grid, 0.05, 1, 100 + s).unwrap())
            .collect();
        let (sign, scores) = calibrate_delta_sign(&metrics).unwrap();
        assert_eq!(Some(sign), CALIBRATED_DELTA_SIGN);
        assert!(scores[0] < 0.25 * scores[1], "{scores:?}");
    }

    #[test]
    fn zeroth_order_part_is_tracefree() {
        let grid = TorusGrid::unit(8).unwrap();
        let m = MetricField::band_limited(&grid, 0.05, 1, 2).unwrap();
        for idx in (0..grid.len()).step_by(17) {
            let pc = PointCurvature::from_jet(&metric_jet(&m, idx)).unwrap();
            assert!(zeroth_order_trace(&pc).abs() <= 1e-12 * pc.rm_norm_sq().max(1e-300));
        }
    }
}
