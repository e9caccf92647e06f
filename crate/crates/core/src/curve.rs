//! Spectral curves `Γ: y² = Q_{2N}(λ)` and `Σ: y² = Q_{2N}(w + w⁻¹)`,
//! their differentials, a canonical homology basis, periods, Abel maps,
//! angle coordinates and action periods.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::ComplexFloat;
use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::laurent::{chebyshev_q, chebyshev_r, LambdaPoly, LaurentPoly};
use crate::monodromy::ReflectionData;
use crate::phasespace::ModelParams;
use crate::quadrature::{integrate, integrate_periodic, QuadOptions};
use crate::roots::poly_roots;
use crate::sov::{divisor_track_with, SovChart, TrackOptions, TrackedChart};
use crate::C64;

const I: C64 = C64::new(0.0, 1.0);

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Which ends of a straight segment carry an inverse square-root singularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ends {
    Regular,
    Start,
    End,
    Both,
}

#[derive(Debug, Clone)]
pub struct SpectralCurve {
    pub n: usize,
    pub q2n: LambdaPoly<C64>,
    pub big_p: C64,
    /// `(P + P⁻¹)/2`, the value of `λ^{−N}y` at `∞₊`.
    pub s0: C64,
    /// Sorted by (Re, Im); cut `i` joins entries `2i` and `2i + 1`.
    pub branch_points: Vec<C64>,
    pub hamiltonians: Vec<C64>,
    pub det_numerator: LaurentPoly<C64>,
    /// `h(λ) = (A − D)/2` when the curve comes from a phase point.
    pub h: Option<LambdaPoly<C64>>,
    mids: Vec<C64>,
    halfs: Vec<C64>,
    r: Vec<LambdaPoly<C64>>,
    /// `S(λ) = ½ΣP_j q_j(λ)`, so that `tr 𝒩 = (z + z⁻¹)S`.
    s_poly: LambdaPoly<C64>,
    pub scale: f64,
}

/// `tr 𝒩(z) = (z + z⁻¹)·½ΣP_j(z^{2j} + z^{−2j})`.
fn trace_from_hamiltonians(p: &[C64]) -> LaurentPoly<C64> {
    let n = p.len() - 1;
    let mut inner = vec![c(0.0); 4 * n + 1];
    inner[2 * n] = p[0];
    for (j, pj) in p.iter().enumerate().skip(1) {
        inner[2 * n + 2 * j] += pj * 0.5;
        inner[2 * n - 2 * j] += pj * 0.5;
    }
    let inner = LaurentPoly::from_coeffs(-2 * n as i32, inner);
    &inner * &LaurentPoly::from_coeffs(-1, vec![c(1.0), c(0.0), c(1.0)])
}

fn q2n_from(trace: &LaurentPoly<C64>, det: &LaurentPoly<C64>) -> Result<LambdaPoly<C64>> {
    let num = &(trace * trace).scale(c(0.25)) - det;
    let zm = LaurentPoly::from_coeffs(-1, vec![c(-1.0), c(0.0), c(1.0)]);
    let tol = 1e-9;
    num.divide_exact(&zm, tol)?.divide_exact(&zm, tol)?.to_lambda(tol)
}

/// Root of `P − P⁻¹ = P_N/2` nearest `hint`.
pub fn big_p_from_pn(pn: C64, hint: C64) -> C64 {
    let half = pn * 0.25;
    let disc = (half * half + 1.0).sqrt();
    let r1 = half + disc;
    let r2 = half - disc;
    if (r1 - hint).norm() <= (r2 - hint).norm() {
        r1
    } else {
        r2
    }
}

impl SpectralCurve {
    pub fn from_data(data: &ReflectionData<C64>) -> Result<Self> {
        let q2n = data.spectral_polynomial()?;
        Self::build(data.n(), q2n, data.big_p, data.hamiltonians.clone(), data.det_numerator.clone(), Some(data.h_poly()?))
    }

    /// The curve determined by `P_0..P_N`, `det 𝒩` and `P`.
    pub fn from_invariants(hamiltonians: Vec<C64>, det_numerator: LaurentPoly<C64>, big_p: C64) -> Result<Self> {
        let n = hamiltonians.len() - 1;
        let q2n = q2n_from(&trace_from_hamiltonians(&hamiltonians), &det_numerator)?;
        Self::build(n, q2n, big_p, hamiltonians, det_numerator, None)
    }

    /// A bare hyperelliptic curve `y² = q(λ)` with `deg q = 2n`. The
    /// invariants needed by the dynamical quantities are left empty.
    pub fn from_polynomial(n: usize, q2n: LambdaPoly<C64>, big_p: C64) -> Result<Self> {
        Self::build(n, q2n, big_p, vec![], LaurentPoly::zero(), None)
    }

    fn build(
        n: usize,
        q2n: LambdaPoly<C64>,
        big_p: C64,
        hamiltonians: Vec<C64>,
        det_numerator: LaurentPoly<C64>,
        h: Option<LambdaPoly<C64>>,
    ) -> Result<Self> {
        if q2n.degree() != Some(2 * n) {
            return Err(Error::SingularCurve(format!("Q_2N has degree {:?}, expected {}", q2n.degree(), 2 * n)));
        }
        let s0 = (big_p + big_p.recip()) * 0.5;
        let lead = q2n.leading();
        let gap = (lead - s0 * s0).norm() / lead.norm().max(1e-300);
        if gap > 1e-8 {
            return Err(Error::Construction { identity: "leading coefficient of Q_2N = ((P+1/P)/2)^2".into(), residual: gap });
        }
        let mut branch_points = poly_roots(&q2n)?;
        branch_points.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let scale = branch_points.iter().map(|b| b.norm()).fold(1.0, f64::max);
        for i in 0..branch_points.len() {
            for j in i + 1..branch_points.len() {
                let d = (branch_points[i] - branch_points[j]).norm();
                if d < 1e-7 * scale {
                    return Err(Error::SingularCurve(format!("repeated branch point near {:.6}", branch_points[i])));
                }
            }
        }
        let mids = (0..n).map(|i| (branch_points[2 * i] + branch_points[2 * i + 1]) * 0.5).collect();
        let halfs = (0..n).map(|i| (branch_points[2 * i + 1] - branch_points[2 * i]) * 0.5).collect();
        let s_poly = if hamiltonians.is_empty() {
            LambdaPoly::constant(c(0.0))
        } else {
            let q = chebyshev_q::<C64>(n);
            q.iter().zip(&hamiltonians).fold(LambdaPoly::constant(c(0.0)), |acc, (qj, pj)| &acc + &qj.scale(pj * 0.5))
        };
        Ok(SpectralCurve {
            n,
            q2n,
            big_p,
            s0,
            branch_points,
            hamiltonians,
            det_numerator,
            h,
            mids,
            halfs,
            r: chebyshev_r(n),
            s_poly,
            scale,
        })
    }

    pub fn genus(&self) -> usize {
        self.n - 1
    }

    /// `P + P⁻¹`.
    pub fn s(&self) -> C64 {
        self.s0 * 2.0
    }

    /// `Q̃(w) = Q_{2N}(w + w⁻¹)`, the Σ-model.
    pub fn q_sigma(&self, w: C64) -> C64 {
        self.q2n.eval(w + w.recip())
    }

    /// `y` on sheet 1, analytic off the straight cuts, with `λ^{−N}y → s₀`
    /// at infinity.
    pub fn yplus(&self, l: C64) -> C64 {
        let mut out = self.s0;
        for (i, m) in self.mids.iter().enumerate() {
            let u = l - m;
            // sqrt(1 − h²/u²) split so that λ − b keeps full precision
            let lo = (l - self.branch_points[2 * i]) / u;
            let hi = (l - self.branch_points[2 * i + 1]) / u;
            out *= u * lo.sqrt() * hi.sqrt();
        }
        out
    }

    /// `y(λ)` continued along the straight segment from `(lref, yref)`.
    pub fn continue_y(&self, l: C64, lref: C64, yref: C64) -> C64 {
        self.branch_points.iter().fold(yref, |acc, b| acc * ((l - b) / (lref - b)).sqrt())
    }

    /// Densities of `Ω_1..Ω_N` with respect to `dλ`.
    pub fn forms(&self, l: C64, y: C64) -> Vec<C64> {
        let n = self.n;
        let mut v: Vec<C64> = self.r[..n - 1].iter().map(|r| r.eval(l) / (y * 8.0)).collect();
        v.push(-self.s() * self.r[n - 1].eval(l) / (y * 2.0));
        v
    }

    /// `t` at the point of Σ over `λ` with `ν = w − w⁻¹`.
    pub fn transfer_sigma(&self, l: C64, nu: C64) -> C64 {
        (l + 2.0) * self.s_poly.eval(l) / (nu * 2.0)
    }

    /// `∫ f(λ, y(λ)) dλ` along the segment `l0 → l1`.
    pub fn segment(
        &self,
        l0: C64,
        l1: C64,
        y_at: &dyn Fn(C64) -> C64,
        f: &dyn Fn(C64, C64) -> Vec<C64>,
        ends: Ends,
        opts: &QuadOptions,
    ) -> Result<Vec<C64>> {
        if ends == Ends::Both {
            let mid = (l0 + l1) * 0.5;
            let a = self.segment(l0, mid, y_at, f, Ends::Start, opts)?;
            let b = self.segment(mid, l1, y_at, f, Ends::End, opts)?;
            return Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect());
        }
        let d = l1 - l0;
        integrate(
            |s| {
                let (u, du) = match ends {
                    Ends::Start => (s * s, 2.0 * s),
                    Ends::End => (1.0 - (1.0 - s) * (1.0 - s), 2.0 * (1.0 - s)),
                    _ => (s, 1.0),
                };
                let l = l0 + d * u;
                Ok(f(l, y_at(l)).into_iter().map(|v| v * d * du).collect())
            },
            0.0,
            1.0,
            opts,
        )
    }

    /// Waypoints from `from` to `to` that keep a distance from every branch
    /// point not at an end.
    fn polyline(&self, from: C64, to: C64) -> Vec<C64> {
        let margin = 1e-4 * self.scale;
        let mut pts = vec![from];
        let d = to - from;
        let len2 = d.norm_sqr();
        if len2 > 0.0 {
            let mut hits: Vec<(f64, C64)> = Vec::new();
            for b in &self.branch_points {
                if (b - from).norm() < margin || (b - to).norm() < margin {
                    continue;
                }
                let s = ((b - from) * d.conj()).re / len2;
                if s <= 0.0 || s >= 1.0 {
                    continue;
                }
                let foot = from + d * s;
                if (foot - b).norm() < margin {
                    let step = 0.05 * d.norm().min(self.scale);
                    hits.push((s, b + d * I / d.norm() * step));
                }
            }
            hits.sort_by(|a, b| a.0.total_cmp(&b.0));
            pts.extend(hits.into_iter().map(|h| h.1));
        }
        pts.push(to);
        pts
    }

    /// `∫` of all `N` forms from the first branch point to `(λ, y)`, with `y`
    /// continued backward from the target.
    pub fn abel_from_base(&self, l: C64, y: C64, opts: &QuadOptions) -> Result<Vec<C64>> {
        let b0 = self.branch_points[0];
        if (l - b0).norm() < 1e-14 * self.scale {
            return Ok(vec![c(0.0); self.n]);
        }
        let pts = self.polyline(b0, l);
        let mut total = vec![c(0.0); self.n];
        let mut lref = l;
        let mut yref = y;
        for k in (0..pts.len() - 1).rev() {
            let (p, q) = (pts[k], pts[k + 1]);
            let (lr, yr) = (lref, yref);
            let ends = if k == 0 { Ends::Start } else { Ends::Regular };
            let part = self.segment(p, q, &|u| self.continue_y(u, lr, yr), &|u, yy| self.forms(u, yy), ends, opts)?;
            for (t, v) in total.iter_mut().zip(part) {
                *t += v;
            }
            yref = self.continue_y(p, lr, yr);
            lref = p;
        }
        check_finite(&total, "Abel path")?;
        Ok(total)
    }

    /// `∫` of all `N` forms from `(l0, y0)` to `l1`; returns the integral and
    /// the continued `y(l1)`.
    pub fn path_increment(&self, l0: C64, y0: C64, l1: C64, opts: &QuadOptions) -> Result<(Vec<C64>, C64)> {
        let pts = self.polyline(l0, l1);
        let mut total = vec![c(0.0); self.n];
        let mut lref = l0;
        let mut yref = y0;
        for k in 0..pts.len() - 1 {
            let (p, q) = (pts[k], pts[k + 1]);
            let (lr, yr) = (lref, yref);
            let part = self.segment(p, q, &|u| self.continue_y(u, lr, yr), &|u, yy| self.forms(u, yy), Ends::Regular, opts)?;
            for (t, v) in total.iter_mut().zip(part) {
                *t += v;
            }
            yref = self.continue_y(q, lr, yr);
            lref = q;
        }
        Ok((total, yref))
    }

    /// Holomorphic integrals from the first branch point to `∞` on the sheet
    /// `sign·y₊`, along the leftward ray.
    pub fn to_infinity(&self, sign: f64, opts: &QuadOptions) -> Result<Vec<C64>> {
        let g = self.genus();
        let b0 = self.branch_points[0];
        let holo = |l: C64, y: C64| self.forms(l, y)[..g].to_vec();
        let ysheet = |l: C64| self.yplus(l) * sign;
        let mut tot = self.segment(b0, b0 - 1.0, &ysheet, &holo, Ends::Start, opts)?;
        let tail = integrate(
            |s| {
                let l = b0 - (1.0 + s / (1.0 - s));
                let dl = -1.0 / ((1.0 - s) * (1.0 - s));
                Ok(holo(l, ysheet(l)).into_iter().map(|v| v * dl).collect())
            },
            0.0,
            1.0,
            opts,
        )?;
        for (t, v) in tot.iter_mut().zip(tail) {
            *t += v;
        }
        Ok(tot)
    }

    /// `Res_{∞₊}Ω_j` from a large counter-clockwise λ-circle on sheet 1.
    pub fn residues_at_infinity(&self, opts: &QuadOptions) -> Result<Vec<C64>> {
        let r = 4.0 * self.scale + 4.0;
        let v = integrate_periodic(
            |th| {
                let e = C64::from_polar(1.0, th);
                let l = e * r;
                Ok(self.forms(l, self.yplus(l)).into_iter().map(|f| f * I * l).collect())
            },
            opts.abs_tol,
            opts.rel_tol,
            1 << 16,
        )?;
        Ok(v.into_iter().map(|x| -x / (TAU * I)).collect())
    }
}

fn check_finite(v: &[C64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Path(format!("{what} produced a non-finite value")))
    }
}

/// `λ = m + h·cos(θ − iρ)`, counter-clockwise for `θ ∈ [0, 2π]`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Ellipse {
    pub center: C64,
    pub half: C64,
    pub rho: f64,
}

impl Ellipse {
    pub fn point(&self, th: f64) -> C64 {
        self.center + self.half * C64::new(th, -self.rho).cos()
    }

    pub fn tangent(&self, th: f64) -> C64 {
        -self.half * C64::new(th, -self.rho).sin()
    }

    /// Elliptic radius of `p` relative to the focal segment.
    pub fn radius_of(center: C64, half: C64, p: C64) -> f64 {
        ((p - center) / half).acosh().re.abs()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HomologyBasis {
    pub cuts: Vec<(C64, C64)>,
    pub a_cycles: Vec<Ellipse>,
    /// `B_i` as the segments it traverses twice (once per sheet).
    pub b_chains: Vec<Vec<(C64, C64)>>,
    /// Radius of the λ-circle standing in for `γ = A_N`.
    pub gamma_radius: f64,
}

fn seg_intersect(p1: C64, p2: C64, q1: C64, q2: C64) -> bool {
    let cross = |a: C64, b: C64| a.re * b.im - a.im * b.re;
    let d1 = cross(p2 - p1, q1 - p1);
    let d2 = cross(p2 - p1, q2 - p1);
    let d3 = cross(q2 - q1, p1 - q1);
    let d4 = cross(q2 - q1, p2 - q1);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

pub fn homology_basis(curve: &SpectralCurve) -> Result<HomologyBasis> {
    let n = curve.n;
    let g = curve.genus();
    let b = &curve.branch_points;
    let cuts: Vec<(C64, C64)> = (0..n).map(|i| (b[2 * i], b[2 * i + 1])).collect();
    for i in 0..n {
        for j in i + 1..n {
            let sep = seg_distance(cuts[i], cuts[j]);
            if sep < 1e-6 * curve.scale {
                return Err(Error::Basis(format!("cuts {i} and {j} are {sep:.3e} apart")));
            }
        }
    }
    let mut a_cycles = Vec::with_capacity(g);
    for i in 0..g {
        let (m, h) = (curve.mids[i], curve.halfs[i]);
        let mut rho: f64 = 0.5;
        // ±2 carry the branch points of ν = w − w⁻¹ and the pole of the
        // third-kind form on dynamical curves.
        let mut avoid: Vec<C64> = if curve.hamiltonians.is_empty() { vec![] } else { vec![c(2.0), c(-2.0)] };
        for (j, cut) in cuts.iter().enumerate() {
            if j == i {
                continue;
            }
            for s in 0..=32 {
                avoid.push(cut.0 + (cut.1 - cut.0) * (s as f64 / 32.0));
            }
        }
        for p in avoid {
            rho = rho.min(Ellipse::radius_of(m, h, p) / 2.0);
        }
        if rho < 1e-6 {
            return Err(Error::Basis(format!("no room for A-cycle {i} (elliptic radius {rho:.3e})")));
        }
        a_cycles.push(Ellipse { center: m, half: h, rho });
    }
    let mut b_chains = Vec::with_capacity(g);
    for i in 0..g {
        let mut chain = Vec::new();
        for j in i..g {
            let seg = (b[2 * j + 2], b[2 * j + 1]);
            for (k, cut) in cuts.iter().enumerate() {
                if k != j && k != j + 1 && seg_intersect(seg.0, seg.1, cut.0, cut.1) {
                    return Err(Error::Basis(format!("B-chain segment {j} crosses cut {k}")));
                }
            }
            chain.push(seg);
        }
        b_chains.push(chain);
    }
    Ok(HomologyBasis { cuts, a_cycles, b_chains, gamma_radius: 4.0 * curve.scale + 4.0 })
}

fn seg_distance(a: (C64, C64), b: (C64, C64)) -> f64 {
    let pt = |p: C64, s: (C64, C64)| {
        let d = s.1 - s.0;
        let t = (((p - s.0) * d.conj()).re / d.norm_sqr().max(1e-300)).clamp(0.0, 1.0);
        (s.0 + d * t - p).norm()
    };
    if seg_intersect(a.0, a.1, b.0, b.1) {
        return 0.0;
    }
    pt(a.0, b).min(pt(a.1, b)).min(pt(b.0, a)).min(pt(b.1, a))
}

/// `∮_{A_i} f(λ, y₊) dλ` by the periodic trapezoidal rule.
pub fn a_cycle_integral<F>(curve: &SpectralCurve, e: &Ellipse, f: F, opts: &QuadOptions) -> Result<Vec<C64>>
where
    F: Fn(C64, C64) -> Vec<C64>,
{
    integrate_periodic(
        |th| {
            let l = e.point(th);
            let dl = e.tangent(th);
            Ok(f(l, curve.yplus(l)).into_iter().map(|v| v * dl).collect())
        },
        opts.abs_tol,
        opts.rel_tol,
        1 << 18,
    )
}

/// `∮_{B_i} f(λ, y) dλ` for forms odd under the sheet exchange.
pub fn b_cycle_integral<F>(curve: &SpectralCurve, chain: &[(C64, C64)], f: F, opts: &QuadOptions) -> Result<Vec<C64>>
where
    F: Fn(C64, C64) -> Vec<C64>,
{
    let mut total: Vec<C64> = Vec::new();
    for (p, q) in chain {
        let part = curve.segment(*p, *q, &|l| curve.yplus(l), &f, Ends::Both, opts)?;
        if total.is_empty() {
            total = vec![c(0.0); part.len()];
        }
        for (t, v) in total.iter_mut().zip(part) {
            *t += v * 2.0;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodData {
    pub n: usize,
    /// `∮_{A_i}Ω_m`, `g × N`.
    pub a_periods: Vec<Vec<C64>>,
    /// `∮_{B_i}Ω_m`, `g × N`.
    pub b_periods: Vec<Vec<C64>>,
    /// `dω_j = Σ_k 𝓝_{jk}Ω_k`.
    pub normalization: Vec<Vec<C64>>,
    /// `𝓑_{jk} = ∮_{B_j}dω_k`.
    pub big_b: Vec<Vec<C64>>,
    /// `V_j = ∮_{B_j}dω_N`.
    pub v: Vec<C64>,
    pub s: C64,
    /// Relative difference between one A-period computed in the λ- and the
    /// w-chart.
    pub w_chart_residual: f64,
}

fn to_dmatrix(rows: &[Vec<C64>]) -> DMatrix<C64> {
    let r = rows.len();
    let cc = if r == 0 { 0 } else { rows[0].len() };
    DMatrix::from_fn(r, cc, |i, j| rows[i][j])
}

fn from_dmatrix(m: &DMatrix<C64>) -> Vec<Vec<C64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn periods(curve: &SpectralCurve, basis: &HomologyBasis, opts: &QuadOptions) -> Result<PeriodData> {
    let n = curve.n;
    let g = curve.genus();
    let forms = |l: C64, y: C64| curve.forms(l, y);
    let mut a_periods = Vec::with_capacity(g);
    let mut b_periods = Vec::with_capacity(g);
    for i in 0..g {
        a_periods.push(a_cycle_integral(curve, &basis.a_cycles[i], forms, opts)?);
        b_periods.push(b_cycle_integral(curve, &basis.b_chains[i], forms, opts)?);
    }
    let mut mp = DMatrix::<C64>::zeros(n, n);
    for i in 0..g {
        for m in 0..n {
            mp[(i, m)] = a_periods[i][m];
        }
    }
    mp[(n - 1, n - 1)] = c(1.0);
    let nn = mp.transpose().try_inverse().ok_or_else(|| Error::LinearAlgebra("A-period matrix is singular".into()))?;
    let mut big_b = vec![vec![c(0.0); g]; g];
    let mut v = vec![c(0.0); g];
    for j in 0..g {
        for k in 0..g {
            big_b[j][k] = (0..n).map(|m| nn[(k, m)] * b_periods[j][m]).sum();
        }
        v[j] = (0..n).map(|m| nn[(n - 1, m)] * b_periods[j][m]).sum();
    }
    let w_chart_residual = if g > 0 { w_chart_check(curve, &basis.a_cycles[0], a_periods[0][0], opts)? } else { 0.0 };
    Ok(PeriodData { n, a_periods, b_periods, normalization: from_dmatrix(&nn), big_b, v, s: curve.s(), w_chart_residual })
}

/// `∮_{A_1}Ω_1` redone on Σ with the w-chart form
/// `((w+1)/(w−1))·((w + w⁻¹ − 2)/(8yw))dw` along the lift `w(θ)` of the
/// ellipse, `|w| > 1` at `θ = 0`.
fn w_chart_check(curve: &SpectralCurve, e: &Ellipse, reference: C64, opts: &QuadOptions) -> Result<f64> {
    let lift = |l: C64, prev: Option<C64>| {
        let r = (l * l - 4.0).sqrt();
        let (w1, w2) = ((l + r) * 0.5, (l - r) * 0.5);
        match prev {
            Some(p) => {
                if (w1 - p).norm() <= (w2 - p).norm() {
                    w1
                } else {
                    w2
                }
            }
            None => {
                if w1.norm() >= w2.norm() {
                    w1
                } else {
                    w2
                }
            }
        }
    };
    let m = 4096;
    let mut w = lift(e.point(0.0), None);
    let mut total = c(0.0);
    let h = TAU / m as f64;
    for k in 0..m {
        let th = k as f64 * h;
        let l = e.point(th);
        w = lift(l, Some(w));
        let y = curve.yplus(l);
        let dw = e.tangent(th) / (c(1.0) - w.powi(-2));
        let dens = (w + 1.0) / (w - 1.0) * (w + w.recip() - 2.0) / (y * 8.0 * w);
        total += dens * dw * h;
    }
    let _ = opts;
    Ok((total - reference).norm() / reference.norm().max(1e-300))
}

impl PeriodData {
    pub fn g(&self) -> usize {
        self.n - 1
    }

    pub fn big_b_matrix(&self) -> DMatrix<C64> {
        to_dmatrix(&self.big_b)
    }

    /// `U^{(k)}_j = 𝓝_{jk}` (`k = 1..=N`); zero for `k = N`.
    pub fn u(&self, k: usize) -> Vec<C64> {
        let g = self.g();
        if k == self.n {
            return vec![c(0.0); g];
        }
        (0..g).map(|j| self.normalization[j][k - 1]).collect()
    }

    /// Exponential rate of `Q` under the flow of `P_k`.
    pub fn c(&self, k: usize) -> C64 {
        if k == self.n {
            self.s * 4.0
        } else {
            -self.normalization[self.n - 1][k - 1]
        }
    }

    /// `4(P + P⁻¹)𝓝_{Nk}`.
    pub fn c_printed(&self, k: usize) -> C64 {
        self.s * 4.0 * self.normalization[self.n - 1][k - 1]
    }

    /// Normalized holomorphic components `Σ_m 𝓝_{jm}v_m`, `j < g`; `v` may
    /// hold `g` or `N` entries.
    pub fn normalize(&self, v: &[C64]) -> Vec<C64> {
        (0..self.g()).map(|j| v.iter().enumerate().map(|(m, x)| self.normalization[j][m] * x).sum()).collect()
    }

    /// `Σ_m 𝓝_{Nm}v_m` for an `N`-vector of raw integrals.
    pub fn normalize_third(&self, v: &[C64]) -> C64 {
        v.iter().enumerate().map(|(m, x)| self.normalization[self.n - 1][m] * x).sum()
    }

    pub fn symmetry_residual(&self) -> f64 {
        let g = self.g();
        let mut r: f64 = 0.0;
        let mut s: f64 = 1e-300;
        for j in 0..g {
            for k in 0..g {
                r = r.max((self.big_b[j][k] - self.big_b[k][j]).norm());
                s = s.max(self.big_b[j][k].norm());
            }
        }
        r / s
    }

    /// Smallest eigenvalue of `Im 𝓑` (symmetrized).
    pub fn im_min_eigenvalue(&self) -> f64 {
        let g = self.g();
        if g == 0 {
            return f64::INFINITY;
        }
        let m = DMatrix::from_fn(g, g, |j, k| 0.5 * (self.big_b[j][k].im + self.big_b[k][j].im));
        m.symmetric_eigenvalues().min()
    }

    /// `max |∮_{A_i}dω_j − δ_ij|`.
    pub fn normalization_residual(&self) -> f64 {
        let g = self.g();
        let mut r: f64 = 0.0;
        for i in 0..g {
            let a = self.normalize(&self.a_periods[i]);
            for (j, v) in a.iter().enumerate() {
                let target = if i == j { c(1.0) } else { c(0.0) };
                r = r.max((v - target).norm());
            }
        }
        r
    }

    /// The same periods with `𝓝` replaced and `𝓑`, `V` recomputed.
    pub fn with_normalization(&self, normalization: Vec<Vec<C64>>) -> Self {
        let (n, g) = (self.n, self.g());
        let mut out = self.clone();
        for j in 0..g {
            for k in 0..g {
                out.big_b[j][k] = (0..n).map(|m| normalization[k][m] * self.b_periods[j][m]).sum();
            }
            out.v[j] = (0..n).map(|m| normalization[n - 1][m] * self.b_periods[j][m]).sum();
        }
        out.normalization = normalization;
        out
    }

    /// Nearest-lattice reduction of `v` modulo `Z^g + 𝓑Z^g`.
    pub fn reduce(&self, v: &[C64]) -> Vec<C64> {
        reduce_mod_lattice(v, &self.big_b_matrix())
    }

    /// Distance of `v` to the period lattice after reduction.
    pub fn lattice_distance(&self, v: &[C64]) -> f64 {
        self.reduce(v).iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

/// Complex arithmetic-geometric mean with the optimal square-root choice
/// `|a_{n+1} − b_{n+1}| ≤ |a_{n+1} + b_{n+1}|` at every step.
pub fn complex_agm(mut a: C64, mut b: C64) -> C64 {
    if (a - b).norm() > (a + b).norm() {
        b = -b;
    }
    for _ in 0..100 {
        if (a - b).norm() <= 1e-16 * a.norm() {
            break;
        }
        let an = (a + b) * 0.5;
        let mut bn = (a * b).sqrt();
        if (an - bn).norm() > (an + bn).norm() {
            bn = -bn;
        }
        a = an;
        b = bn;
    }
    a
}

/// Genus one: distance of the lattice spanned by `∮_A dλ/y`, `∮_B dλ/y` from
/// the lattice spanned by the AGM periods `2π/M(α, γ)`, `2πi/M(α, β)` of the
/// quartic, measured as the largest deviation of the change-of-basis matrix
/// from an integer matrix of determinant `±1`.
pub fn elliptic_lattice_residual(curve: &SpectralCurve, pd: &PeriodData) -> Result<f64> {
    if pd.g() != 1 {
        return Err(Error::Domain("AGM oracle needs genus one".into()));
    }
    let e = &curve.branch_points;
    let (e1, e2, e3, e4) = (e[3], e[2], e[1], e[0]);
    let alpha = ((e1 - e3) * (e2 - e4)).sqrt();
    let beta = ((e1 - e4) * (e2 - e3)).sqrt();
    let gamma = ((e1 - e2) * (e3 - e4)).sqrt();
    let w1 = c(TAU) / complex_agm(alpha, gamma);
    let w2 = I * TAU / complex_agm(alpha, beta);
    // Ω_1 = dλ/(8y), y = s₀√∏(λ − e_i)
    let a = pd.a_periods[0][0] * 8.0 * curve.s0;
    let b = pd.b_periods[0][0] * 8.0 * curve.s0;
    let basis = nalgebra::Matrix2::new(w1.re, w2.re, w1.im, w2.im);
    let inv = basis.try_inverse().ok_or_else(|| Error::LinearAlgebra("AGM periods are collinear".into()))?;
    let ca = inv * nalgebra::Vector2::new(a.re, a.im);
    let cb = inv * nalgebra::Vector2::new(b.re, b.im);
    let m = nalgebra::Matrix2::new(ca[0], cb[0], ca[1], cb[1]);
    let r = m.map(|x| x.round());
    let off = (m - r).abs().max();
    let det = r.determinant().abs();
    Ok(if (det - 1.0).abs() < 0.5 { off } else { f64::INFINITY })
}

/// Babai rounding: remove `𝓑n` using `Im`, then integers using `Re`.
pub fn reduce_mod_lattice(v: &[C64], big_b: &DMatrix<C64>) -> Vec<C64> {
    let g = v.len();
    if g == 0 {
        return vec![];
    }
    let im_b = big_b.map(|x| x.im);
    let im_v = DVector::from_iterator(g, v.iter().map(|x| x.im));
    let nb = im_b.lu().solve(&im_v).unwrap_or_else(|| DVector::zeros(g)).map(|x| x.round());
    let shift = big_b * nb.map(c);
    v.iter()
        .enumerate()
        .map(|(j, x)| {
            let y = x - shift[j];
            y - y.re.round()
        })
        .collect()
}

/// Abel data of the special points and of a divisor, all from the same
/// base branch point.
#[derive(Debug, Clone, Serialize)]
pub struct AbelPoints {
    pub inf_minus: Vec<C64>,
    pub inf_plus: Vec<C64>,
    /// Directly integrated `𝒜(∞₊)` (ray on sheet 1), for the reciprocity check.
    pub inf_plus_ray: Vec<C64>,
}

pub fn abel_infinities(curve: &SpectralCurve, pd: &PeriodData, opts: &QuadOptions) -> Result<AbelPoints> {
    let ray = curve.to_infinity(1.0, opts)?;
    let plus_ray = pd.normalize(&ray);
    let inf_minus: Vec<C64> = plus_ray.iter().map(|x| -x).collect();
    let inf_plus = inf_minus.iter().zip(&pd.v).map(|(m, v)| m + v / (TAU * I)).collect();
    Ok(AbelPoints { inf_minus, inf_plus, inf_plus_ray: plus_ray })
}

/// `𝒜(Σ p_k)` normalized, from the base branch point.
pub fn abel_map(curve: &SpectralCurve, pd: &PeriodData, points: &[(C64, C64)], opts: &QuadOptions) -> Result<Vec<C64>> {
    let mut total = vec![c(0.0); pd.g()];
    for (l, y) in points {
        let q = curve.q2n.eval(*l);
        let magnitude: f64 = curve.q2n.coeffs().iter().enumerate().map(|(i, a)| a.norm() * l.norm().powi(i as i32)).sum();
        let rel = (y * y - q).norm() / q.norm().max(y.norm_sqr()).max(1e-8 * magnitude);
        if rel > 1e-6 {
            return Err(Error::Path(format!("point ({l}, {y}) is off the curve (relative {rel:.3e})")));
        }
        let a = pd.normalize(&curve.abel_from_base(*l, *y, opts)?);
        for (t, v) in total.iter_mut().zip(a) {
            *t += v;
        }
    }
    Ok(total)
}

/// Divisor points `(λ_k, y_k)` of a chart.
pub fn divisor_points(chart: &SovChart) -> Vec<(C64, C64)> {
    chart.lambdas.iter().copied().zip(chart.ys.iter().copied()).collect()
}

/// Angle variables at one point of a tracked trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct AngleState {
    pub t: f64,
    pub lambdas: Vec<C64>,
    pub ys: Vec<C64>,
    /// `Σ_k ∫_{λ₀}^{p_k} Ω_m`, `m = 1..N`.
    pub integrals: Vec<C64>,
    /// `∫_{λ₀}^{p_k} Ω_m` per divisor point, continued along the track.
    pub point_integrals: Vec<Vec<C64>>,
    /// `log Q`, continued.
    pub log_q: C64,
    /// `F_1..F_N`.
    pub f: Vec<C64>,
}

impl AngleState {
    fn finish(curve: &SpectralCurve, t: f64, lambdas: Vec<C64>, ys: Vec<C64>, point_integrals: Vec<Vec<C64>>, log_q: C64) -> Self {
        let n = curve.n;
        let integrals = point_integrals.iter().fold(vec![c(0.0); n], |acc, p| acc.iter().zip(p).map(|(a, b)| a + b).collect());
        let s = curve.s();
        let mut f: Vec<C64> = integrals[..n - 1].to_vec();
        f.push((log_q - integrals[n - 1]) / (s * 4.0));
        AngleState { t, lambdas, ys, integrals, point_integrals, log_q, f }
    }

    /// `F̃_N = log Q − Σ∫dω_N`.
    pub fn f_tilde(&self, pd: &PeriodData) -> C64 {
        self.log_q - pd.normalize_third(&self.integrals)
    }

    /// Normalized `𝒜(𝒟)`.
    pub fn abel(&self, pd: &PeriodData) -> Vec<C64> {
        pd.normalize(&self.integrals)
    }

    /// Normalized images of the individual divisor points.
    pub fn point_images(&self, pd: &PeriodData) -> Vec<Vec<C64>> {
        self.point_integrals.iter().map(|p| pd.normalize(p)).collect()
    }
}

/// `F_j` at a chart, integrating from the base branch point.
pub fn angle_coordinates(curve: &SpectralCurve, chart: &SovChart, t: f64, opts: &QuadOptions) -> Result<AngleState> {
    if chart.big_q.norm() == 0.0 {
        return Err(Error::Degenerate("Q = 0".into()));
    }
    let mut points = Vec::with_capacity(chart.g());
    for (l, y) in divisor_points(chart) {
        if (l - curve.branch_points[0]).norm() < 1e-10 * curve.scale {
            return Err(Error::Path("divisor point at the base point".into()));
        }
        points.push(curve.abel_from_base(l, y, opts)?);
    }
    Ok(AngleState::finish(curve, t, chart.lambdas.clone(), chart.ys.clone(), points, chart.big_q.ln()))
}

fn y_matches(a: C64, b: C64) -> bool {
    (a - b).norm() <= 1e-6 * a.norm().max(b.norm()).max(1e-12)
}

/// Advances `prev` to `chart` by path increments; fails if a continued `y`
/// lands on the other sheet.
pub fn advance_angles(curve: &SpectralCurve, prev: &AngleState, chart: &SovChart, t: f64, opts: &QuadOptions) -> Result<AngleState> {
    let mut points = prev.point_integrals.clone();
    for k in 0..chart.g() {
        let (inc, y1) = curve.path_increment(prev.lambdas[k], prev.ys[k], chart.lambdas[k], opts)?;
        if !y_matches(y1, chart.ys[k]) {
            return Err(Error::Tracking { time: t, reason: format!("sheet mismatch for divisor point {}", k + 1) });
        }
        for (a, v) in points[k].iter_mut().zip(inc) {
            *a += v;
        }
    }
    let lq = chart.big_q.ln();
    let wind = ((prev.log_q.im - lq.im) / TAU).round();
    let log_q = lq + I * (TAU * wind);
    Ok(AngleState::finish(curve, t, chart.lambdas.clone(), chart.ys.clone(), points, log_q))
}

/// Angle variables at the sample times of `traj`, tracking the divisor
/// continuously between samples.
pub fn track_angles(
    curve: &SpectralCurve,
    traj: &Trajectory,
    params: &ModelParams,
    track: &TrackOptions,
    opts: &QuadOptions,
) -> Result<Vec<AngleState>> {
    let accept = |a: &TrackedChart, b: &TrackedChart| {
        (0..a.chart.g()).all(|k| {
            let l0 = a.chart.lambdas[k];
            let l1 = b.chart.lambdas[k];
            let y1 = curve.continue_y(l1, l0, a.chart.ys[k]);
            let step = (l1 - l0).norm();
            let near = curve.branch_points.iter().any(|bp| point_segment_distance(*bp, l0, l1) < 0.5 * step);
            y_matches(y1, b.chart.ys[k]) && !near
        })
    };
    let charts = divisor_track_with(traj, params, track, accept)?;
    let mut out = Vec::with_capacity(traj.times.len());
    let mut state = angle_coordinates(curve, &charts[0].chart, charts[0].t, opts)?;
    out.push(state.clone());
    for tc in &charts[1..] {
        state = advance_angles(curve, &state, &tc.chart, tc.t, opts)?;
        if tc.sample {
            out.push(state.clone());
        }
    }
    Ok(out)
}

fn point_segment_distance(p: C64, a: C64, b: C64) -> f64 {
    let d = b - a;
    let t = (((p - a) * d.conj()).re / d.norm_sqr().max(1e-300)).clamp(0.0, 1.0);
    (a + d * t - p).norm()
}

/// Least-squares line through `(t_i, v_i)`: slope, intercept and the largest
/// residual.
pub fn fit_line(ts: &[f64], vs: &[C64]) -> Result<(C64, C64, f64)> {
    let m = ts.len();
    if m < 2 {
        return Err(Error::Degenerate("insufficient samples for a slope fit".into()));
    }
    let tm = ts.iter().sum::<f64>() / m as f64;
    let vm: C64 = vs.iter().sum::<C64>() / m as f64;
    let stt: f64 = ts.iter().map(|t| (t - tm) * (t - tm)).sum();
    if stt == 0.0 {
        return Err(Error::Degenerate("insufficient samples for a slope fit".into()));
    }
    let stv: C64 = ts.iter().zip(vs).map(|(t, v)| (v - vm) * (t - tm)).sum();
    let slope = stv / stt;
    let icpt = vm - slope * tm;
    let res = ts.iter().zip(vs).map(|(t, v)| (v - icpt - slope * *t).norm()).fold(0.0, f64::max);
    Ok((slope, icpt, res))
}

/// Action periods `J_1..J_N` and the lift-difference diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct ActionPeriods {
    /// `J_i = ∮_{A_i} log ζ dw/w` on the lift with `|w| > 1` at `θ = 0`,
    /// then `J_N` on the counter-clockwise w-circle of `radius`.
    pub j: Vec<C64>,
    /// `J_i` on the other lift (`w ↦ w⁻¹`), `i < N`.
    pub j_other_lift: Vec<C64>,
    pub radius: f64,
    /// `J_N − 2πi log P`.
    pub j_n_shifted: C64,
}

/// Samples `(ν, log ζ)` along an ellipse with both continued, then
/// integrates `log ζ dλ/ν` by Gauss–Kronrod with the branch of each sample
/// fixed from the table.
fn log_period(curve: &SpectralCurve, e: &Ellipse, outer: bool, opts: &QuadOptions) -> Result<C64> {
    let mut m = 1024usize;
    let table = loop {
        let mut tab: Vec<(C64, C64)> = Vec::with_capacity(m + 1);
        let mut ok = true;
        for k in 0..=m {
            let th = TAU * k as f64 / m as f64;
            let l = e.point(th);
            let r = (l * l - 4.0).sqrt();
            let nu = match tab.last() {
                None => {
                    let w = (l + r) * 0.5;
                    let wb = if (w.norm() >= 1.0) == outer { w } else { w.recip() };
                    wb - wb.recip()
                }
                Some((pn, _)) => {
                    if (r - pn).norm() <= (r + pn).norm() {
                        r
                    } else {
                        -r
                    }
                }
            };
            let zeta = curve.transfer_sigma(l, nu) + curve.yplus(l);
            if zeta.norm() == 0.0 {
                return Err(Error::Path("log ζ contour passes through ζ = 0".into()));
            }
            let lz = zeta.ln();
            let lz = match tab.last() {
                None => lz,
                Some((_, pl)) => {
                    let k = ((pl.im - lz.im) / TAU).round();
                    let v = lz + I * (TAU * k);
                    if (v.im - pl.im).abs() > 1.0 {
                        ok = false;
                    }
                    v
                }
            };
            tab.push((nu, lz));
        }
        if ok {
            break tab;
        }
        m *= 2;
        if m > 1 << 20 {
            return Err(Error::Path("log ζ winds too fast along the A-contour".into()));
        }
    };
    let lookup = |th: f64| {
        let x = th / TAU * m as f64;
        let k = (x.floor() as usize).min(m - 1);
        let s = x - k as f64;
        let (n0, l0) = table[k];
        let (_, l1) = table[k + 1];
        (n0, l0 + (l1 - l0) * s)
    };
    let v = integrate(
        |th| {
            let l = e.point(th);
            let (nref, lref) = lookup(th);
            let r = (l * l - 4.0).sqrt();
            let nu = if (r - nref).norm() <= (r + nref).norm() { r } else { -r };
            let zeta = curve.transfer_sigma(l, nu) + curve.yplus(l);
            let lz = zeta.ln();
            let lz = lz + I * (TAU * ((lref.im - lz.im) / TAU).round());
            Ok(vec![lz * e.tangent(th) / nu])
        },
        0.0,
        TAU,
        opts,
    )?;
    Ok(v[0])
}

/// `J_N = N(2πi log R − 2π²) + ∮ g dw/w`, `g = log(ζ/w^N)` on the
/// counter-clockwise circle `|w| = R` near `∞₊`.
fn j_infinity(curve: &SpectralCurve, radius: f64, opts: &QuadOptions) -> Result<C64> {
    let n = curve.n as f64;
    let lp = curve.big_p.ln();
    let v = integrate_periodic(
        |th| {
            let w = C64::from_polar(radius, th);
            let l = w + w.recip();
            let nu = w - w.recip();
            let zeta = curve.transfer_sigma(l, nu) + curve.yplus(l);
            let g = lp + (zeta / (curve.big_p * w.powf(n))).ln();
            Ok(vec![g * I])
        },
        opts.abs_tol,
        opts.rel_tol,
        1 << 16,
    )?;
    Ok(c(n) * (I * TAU * radius.ln() - 2.0 * PI * PI) + v[0])
}

pub fn action_periods(curve: &SpectralCurve, basis: &HomologyBasis, radius: f64, opts: &QuadOptions) -> Result<ActionPeriods> {
    if curve.hamiltonians.is_empty() {
        return Err(Error::Domain("action periods need the Hamiltonians of the curve".into()));
    }
    let mut j = Vec::with_capacity(curve.n);
    let mut j_other_lift = Vec::with_capacity(curve.genus());
    for e in &basis.a_cycles {
        j.push(log_period(curve, e, true, opts)?);
        j_other_lift.push(log_period(curve, e, false, opts)?);
    }
    let jn = j_infinity(curve, radius, opts)?;
    j.push(jn);
    Ok(ActionPeriods { j, j_other_lift, radius, j_n_shifted: jn - I * TAU * curve.big_p.ln() })
}

/// `∂J_i/∂P_k` predicted from periods: `2∮_{A_i}r_k dλ/(8y)`, and
/// `∂J_N/∂P_k = 2πi/(2(P + P⁻¹))·δ_{kN}`.
pub fn action_jacobian_predicted(curve: &SpectralCurve, pd: &PeriodData) -> Vec<Vec<C64>> {
    let n = curve.n;
    let s = curve.s();
    let mut out = Vec::with_capacity(n);
    for a in &pd.a_periods {
        let mut row: Vec<C64> = a[..n - 1].iter().map(|x| x * 2.0).collect();
        row.push(-a[n - 1] / (s * 2.0));
        out.push(row);
    }
    let mut last = vec![c(0.0); n];
    last[n - 1] = I * TAU / (s * 2.0);
    out.push(last);
    out
}

/// Central differences of `J` in `P_k` (`P_0` compensating, `det 𝒯` fixed)
/// on the fixed contours of `basis`.
pub fn action_jacobian_fd(
    curve: &SpectralCurve,
    basis: &HomologyBasis,
    radius: f64,
    step: f64,
    opts: &QuadOptions,
) -> Result<Vec<Vec<C64>>> {
    let n = curve.n;
    let mut cols = Vec::with_capacity(n);
    for k in 1..=n {
        let mut js = Vec::with_capacity(2);
        for sgn in [1.0, -1.0] {
            let mut p = curve.hamiltonians.clone();
            p[k] += step * sgn;
            p[0] -= step * sgn;
            let big_p = if k == n { big_p_from_pn(p[n], curve.big_p) } else { curve.big_p };
            let cv = SpectralCurve::from_invariants(p, curve.det_numerator.clone(), big_p)?;
            js.push(action_periods(&cv, basis, radius, opts)?.j);
        }
        cols.push((0..n).map(|i| (js[0][i] - js[1][i]) / (2.0 * step)).collect::<Vec<_>>());
    }
    Ok((0..n).map(|i| (0..n).map(|k| cols[k][i]).collect()).collect())
}

/// Smallest singular value of a square complex matrix.
pub fn min_singular_value(m: &[Vec<C64>]) -> f64 {
    let d = to_dmatrix(m);
    d.singular_values().min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monodromy::reflection_monodromy;
    use crate::phasespace::{OrderingMode, PhasePoint, SiteState};

    pub(crate) fn tame_point() -> (PhasePoint<C64>, ModelParams) {
        let sites = vec![
            SiteState::new(C64::new(0.4, 0.1), C64::new(0.3, -0.2), C64::new(1.05, 0.1)),
            SiteState::new(C64::new(-0.2, 0.3), C64::new(0.5, 0.1), C64::new(0.9, -0.15)),
        ];
        let params = ModelParams::new(C64::new(1.1, 0.2), vec![C64::new(1.2, 0.1), C64::new(0.85, -0.1)], OrderingMode::Reversed).unwrap();
        (PhasePoint::new(sites), params)
    }

    fn agm(mut a: f64, mut b: f64) -> f64 {
        while (a - b).abs() > 1e-16 * a {
            let t = 0.5 * (a + b);
            b = (a * b).sqrt();
            a = t;
        }
        a
    }

    fn ellk(k: f64) -> f64 {
        std::f64::consts::FRAC_PI_2 / agm(1.0, (1.0 - k * k).sqrt())
    }

    #[test]
    fn elliptic_oracle() {
        // y² = (λ² − 1)(λ² − 4) = λ⁴ − 5λ² + 4
        let q = LambdaPoly::new(vec![c(4.0), c(0.0), c(-5.0), c(0.0), c(1.0)]);
        let cv = SpectralCurve::from_polynomial(2, q, c(1.0)).unwrap();
        let basis = homology_basis(&cv).unwrap();
        let pd = periods(&cv, &basis, &QuadOptions::default()).unwrap();
        let tau = pd.big_b[0][0];
        let expect = 2.0 * ellk(0.5) / ellk(3f64.sqrt() / 2.0);
        assert!((tau - C64::new(0.0, expect)).norm() < 1e-7, "{tau} vs i{expect}");
        assert!((pd.a_periods[0][0].norm() - ellk(3f64.sqrt() / 2.0) / 8.0).abs() < 1e-10);
        assert!(elliptic_lattice_residual(&cv, &pd).unwrap() < 1e-9);
    }

    #[test]
    fn agm_lattice_on_a_dynamical_curve() {
        let (x, params) = tame_point();
        let data = reflection_monodromy(&x, &params).unwrap();
        let cv = SpectralCurve::from_data(&data).unwrap();
        let basis = homology_basis(&cv).unwrap();
        let pd = periods(&cv, &basis, &QuadOptions::default()).unwrap();
        let r = elliptic_lattice_residual(&cv, &pd).unwrap();
        assert!(r < 1e-7, "{r}");
    }

    #[test]
    fn chebyshev_r_examples() {
        let r = chebyshev_r::<C64>(3);
        assert_eq!(r[0].coeffs(), &[c(1.0)]);
        assert_eq!(r[1].coeffs(), &[c(2.0), c(1.0)]);
        assert_eq!(r[2].coeffs(), &[c(1.0), c(2.0), c(1.0)]);
    }

    #[test]
    fn trivial_point_is_singular() {
        let params = ModelParams::homogeneous(1, c(1.0));
        let x = PhasePoint::new(vec![SiteState::new(c(0.0), c(0.0), c(1.0))]);
        let data = reflection_monodromy(&x, &params).unwrap();
        let q = data.spectral_polynomial().unwrap();
        assert!((q.eval(c(3.0)) - c(1.0)).norm() < 1e-12);
        assert!(matches!(SpectralCurve::from_data(&data), Err(Error::SingularCurve(_))));
    }

    #[test]
    fn period_invariants_n2() {
        let (x, params) = tame_point();
        let data = reflection_monodromy(&x, &params).unwrap();
        let cv = SpectralCurve::from_data(&data).unwrap();
        let opts = QuadOptions::default();
        let basis = homology_basis(&cv).unwrap();
        let pd = periods(&cv, &basis, &opts).unwrap();
        assert!(pd.symmetry_residual() < 1e-8);
        assert!(pd.im_min_eigenvalue() > 0.0);
        assert!(pd.normalization_residual() < 1e-8);
        assert!(pd.w_chart_residual < 1e-8, "{}", pd.w_chart_residual);
        let n = cv.n;
        assert!(pd.normalization[n - 1][n - 1] == c(1.0));
        let res = cv.residues_at_infinity(&opts).unwrap();
        assert!((res[n - 1] - c(1.0)).norm() < 1e-8);
        assert!(res[0].norm() < 1e-10);
        let ab = abel_infinities(&cv, &pd, &opts).unwrap();
        let d: Vec<C64> = ab.inf_plus.iter().zip(&ab.inf_plus_ray).map(|(a, b)| a - b).collect();
        assert!(pd.lattice_distance(&d) < 1e-8);
    }

    #[test]
    fn involution_pair_is_lattice_vector() {
        let (x, params) = tame_point();
        let data = reflection_monodromy(&x, &params).unwrap();
        let cv = SpectralCurve::from_data(&data).unwrap();
        let opts = QuadOptions::default();
        let pd = periods(&cv, &homology_basis(&cv).unwrap(), &opts).unwrap();
        let l = C64::new(0.3, 0.7);
        let y = cv.q2n.eval(l).sqrt();
        let a = abel_map(&cv, &pd, &[(l, y), (l, -y)], &opts).unwrap();
        assert!(pd.lattice_distance(&a) < 1e-8);
        let b0 = cv.branch_points[0];
        assert!(abel_map(&cv, &pd, &[(b0, c(0.0))], &opts).unwrap()[0].norm() < 1e-12);
    }

    #[test]
    fn invariants_reproduce_curve() {
        let (x, params) = tame_point();
        let data = reflection_monodromy(&x, &params).unwrap();
        let a = SpectralCurve::from_data(&data).unwrap();
        let b = SpectralCurve::from_invariants(data.hamiltonians.clone(), data.det_numerator.clone(), data.big_p).unwrap();
        let gap = (&a.q2n - &b.q2n).norm() / a.q2n.norm();
        assert!(gap < 1e-12);
    }
}
