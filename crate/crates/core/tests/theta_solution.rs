use xxz_core::curve::*;
use xxz_core::dynamics::{integrate_flow, uniform_times};
use xxz_core::monodromy::reflection_monodromy;
use xxz_core::phasespace::{casimir, ModelParams, OrderingMode, PhasePoint, SiteState};
use xxz_core::quadrature::QuadOptions;
use xxz_core::sov::{sov_chart, TrackOptions};
use xxz_core::theta::*;
use xxz_core::C64;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

struct Setup {
    x: PhasePoint<C64>,
    params: ModelParams,
    curve: SpectralCurve,
    basis: HomologyBasis,
    pd: PeriodData,
    divisor: Vec<(C64, C64)>,
    ctx: ThetaContext,
    opts: QuadOptions,
}

fn setup() -> Setup {
    let x = PhasePoint::new(vec![
        SiteState::new(c(-0.117, -0.504), c(0.116, -0.337), c(0.893, 0.094)),
        SiteState::new(c(-0.047, -0.417), c(0.45, 0.248), c(0.991, 0.038)),
    ]);
    let params = ModelParams::new(c(0.547, 1.627), vec![c(0.813, -0.096), c(0.971, -0.107)], OrderingMode::Reversed).unwrap();
    let data = reflection_monodromy(&x, &params).unwrap();
    let curve = SpectralCurve::from_data(&data).unwrap();
    let opts = QuadOptions::default();
    let basis = homology_basis(&curve).unwrap();
    let pd = periods(&curve, &basis, &opts).unwrap();
    let divisor = divisor_points(&sov_chart(&x, &params).unwrap());
    let ctx = ThetaContext::build(&curve, &basis, &pd, &divisor, &opts).unwrap();
    Setup { x, params, curve, basis, pd, divisor, ctx, opts }
}

fn image(s: &Setup, l: C64, y: C64) -> Vec<C64> {
    s.pd.normalize(&s.curve.abel_from_base(l, y, &s.opts).unwrap())
}

#[test]
fn context_invariants() {
    let s = setup();
    let th = &s.ctx.theta;
    let e = th.eval(&s.ctx.e.point);
    assert!(e.value.norm() < 1e-8 * th.value(&[c(0.0, 0.0)]).norm());
    assert!(e.grad.iter().any(|g| g.norm() > 1e-4));
    assert!(s.ctx.k_validation.on_divisor < 1e-7);
    assert!(s.ctx.k_validation.off_divisor > 1e-2);
    assert!(s.ctx.w_a_residual < 1e-8);
    assert!(s.ctx.w_reciprocity < 1e-8);
    let r4 = th.eval_radius(&s.ctx.k, 4).value;
    let r8 = th.eval_radius(&s.ctx.k, 8).value;
    assert!((r4 - r8).norm() < 1e-12);
}

#[test]
fn riemann_constant_ignores_lattice_shifts() {
    let s = setup();
    let u: Vec<Vec<C64>> = s.divisor.iter().map(|(l, y)| image(&s, *l, *y)).collect();
    let second: Vec<Vec<C64>> = [c(5.0, 3.0)].iter().map(|l| image(&s, *l, s.curve.yplus(*l))).collect();
    let probes: Vec<Vec<C64>> = [c(-7.0, 1.0), c(0.3, 6.0), c(9.0, -4.0)].iter().map(|l| image(&s, *l, s.curve.yplus(*l))).collect();
    let (k0, _) = riemann_constant(&s.ctx.theta, &u, &second, &probes).unwrap();
    let b = s.pd.big_b[0][0];
    let shifted: Vec<Vec<C64>> = u.iter().map(|v| vec![v[0] + b * 2.0 - 1.0]).collect();
    let (k1, _) = riemann_constant(&s.ctx.theta, &shifted, &second, &probes).unwrap();
    assert!(s.pd.lattice_distance(&[k0[0] - k1[0]]) < 1e-9);
}

#[test]
fn rho_normalization_and_rational_form() {
    let s = setup();
    let data = reflection_monodromy(&s.x, &s.params).unwrap();
    let ad = abel_map(&s.curve, &s.pd, &s.divisor, &s.opts).unwrap();
    assert!((s.ctx.rho(&s.ctx.infinities.inf_plus, &ad) - 1.0).norm() < 1e-12);
    assert!(s.ctx.rho(&s.ctx.infinities.inf_minus, &ad).norm() < 1e-6);
    for z in [c(0.7, 0.4), c(1.3, -0.8), c(-0.5, 1.1)] {
        let l = z * z + 1.0 / (z * z);
        for sign in [1.0, -1.0] {
            let y = s.curve.yplus(l) * sign;
            let rat = rho_rational(&data, l, y).unwrap();
            let th = s.ctx.rho(&image(&s, l, y), &ad);
            assert!((rat - th).norm() < 1e-6 * rat.norm(), "{rat} vs {th}");
        }
    }
}

#[test]
fn h_at_minus_two() {
    let s = setup();
    let data = reflection_monodromy(&s.x, &s.params).unwrap();
    let omegas: Vec<C64> = s.x.sites.iter().map(|v| casimir(v).unwrap()).collect();
    let rep = h_minus2_report(&data, &omegas, s.params.xi, &s.params.a).unwrap();
    assert!((rep.h_squared - rep.q2n_at_minus2).norm() < 1e-10 * rep.h_squared.norm());
    assert!(rep.plus_residual < 1e-10);
}

#[test]
fn q_and_monodromy_follow_the_flow() {
    let s = setup();
    let data0 = reflection_monodromy(&s.x, &s.params).unwrap();
    let ad0 = abel_map(&s.curve, &s.pd, &s.divisor, &s.opts).unwrap();
    for k in 1..=2 {
        let times = uniform_times(1.0, 4);
        let traj = integrate_flow(&s.x, &s.params, k, &times, 1e-10).unwrap();
        let u = s.pd.u(k);
        for (t, x) in times.iter().zip(&traj.states) {
            let d = reflection_monodromy(x, &s.params).unwrap();
            let q = s.ctx.q_evolution(data0.big_q, &ad0, &u, s.pd.c(k), *t).unwrap();
            assert!((q - d.big_q).norm() < 1e-6 * d.big_q.norm(), "k={k} t={t}");
            let ad: Vec<C64> = ad0.iter().zip(&u).map(|(a, b)| a + b * *t).collect();
            for z in [c(0.8, 0.3), c(1.1, -0.9)] {
                let tz = d.t_matrix(z).unwrap();
                let rec = reconstruct_monodromy(&s.ctx, &s.curve, &s.pd, d.transfer(z).unwrap(), q, &ad, z, &s.opts).unwrap();
                let scale = tz.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((rec[i][j] - tz[i][j]).norm() < 1e-5 * scale);
                    }
                }
                assert!((rec[0][0] + rec[1][1] - d.transfer(z).unwrap() * 2.0).norm() < 1e-9 * scale);
            }
        }
    }
}

#[test]
fn product_form_and_cross_ratio() {
    let s = setup();
    let data0 = reflection_monodromy(&s.x, &s.params).unwrap();
    let traj = integrate_flow(&s.x, &s.params, 1, &uniform_times(0.5, 5), 1e-10).unwrap();
    let track = TrackOptions { max_jump: 5e-2, max_depth: 30 };
    let states = track_angles(&s.curve, &traj, &s.params, &track, &s.opts).unwrap();
    let p0 = states[0].point_images(&s.pd);
    for (st, x) in states.iter().zip(&traj.states) {
        let q = reflection_monodromy(x, &s.params).unwrap().big_q;
        let qp = s.ctx.q_product(data0.big_q, s.pd.c(1), st.t, &p0, &st.point_images(&s.pd));
        assert!((qp - q).norm() < 1e-6 * q.norm());
    }
    let pt = states.last().unwrap().point_images(&s.pd);
    let ms: Vec<C64> = [c(0.3, 0.2), c(-1.0, 0.5), c(3.0, -1.0), c(0.5, 2.0), c(-4.0, -2.0)]
        .iter()
        .map(|l| s.ctx.m_function(&image(&s, *l, s.curve.yplus(*l)), &p0, &pt))
        .collect();
    for m in &ms {
        assert!((m - ms[0]).norm() < 1e-6 * ms[0].norm());
    }
    let _ = &s.basis;
}
