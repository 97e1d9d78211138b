//! Acceptance checks, one per documented criterion. Runs without the libtest
//! harness so the PASS/FAIL lines always reach the output.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use heatlab::domains::{Bc, Domain, Field, Grid};
use heatlab::kernels::{offdiag_decay_probe, semigroup_check, AxisKernel, ClosedFormKernel};
use heatlab::lp_analysis::{
    boundary_bump, dyadic_range, global_bernstein_check, local_bernstein_check,
    pointwise_multiplier_check, standard_battery, vanishing_diagnostic, vmo_vs_heat_compare,
    Classification,
};
use heatlab::onsager_lab::{
    commutator_via_duhamel, commutator_w, energy_conservation_probe, flux_experiment,
    flux_from_commutator, magnitude_lp, make_field, smooth_step, strip_decay, DuhamelQuadrature,
    FieldSpec, Mollifier, SLOPE_TOLERANCE,
};
use heatlab::parametrix::{
    build_parametrix, model_td_apply, neumann_half_line, solve_td, volterra_compose,
    GaussianPolynomial, ModelOperator, ParametrixConfig, VolterraRule,
};
use heatlab::quadrature::gauss_legendre_on;

/// Outcome of one criterion: pass flag and a one-line summary.
type Outcome = (bool, String);

type ProbeCase = (&'static str, ClosedFormKernel, usize, Vec<f64>, Vec<f64>);

type Criterion = (&'static str, fn() -> Outcome);

fn kernel_exactness() -> Outcome {
    let start = Instant::now();
    let k = AxisKernel::Interval {
        l: 1.0,
        bc: Bc::Neumann,
    };
    let ts: Vec<f64> = (0..=12)
        .map(|i| 1e-3 * 1000f64.powf(i as f64 / 12.0))
        .collect();
    let pts: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let (gx, gw) = gauss_legendre_on(0.0, 1.0, 64);
    let (mut agree, mut flux, mut mass) = (0.0f64, 0.0f64, 0.0f64);
    for &t in &ts {
        for &x in &pts {
            for &y in &pts {
                agree = agree
                    .max((k.eval_images(t, x, y).unwrap() - k.eval_eigen(t, x, y).unwrap()).abs());
            }
            flux = flux
                .max(k.eval_dx(t, 0.0, x).unwrap().abs())
                .max(k.eval_dx(t, 1.0, x).unwrap().abs());
            // Composite 64-point rule on 32 panels resolves sqrt(t) >= 0.03.
            let mut m = 0.0;
            for p in 0..32 {
                let (a, h) = (p as f64 / 32.0, 1.0 / 32.0);
                for (g, w) in gx.iter().zip(&gw) {
                    m += h * w * k.eval(t, x, a + h * g).unwrap();
                }
            }
            mass = mass.max((m - 1.0).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = agree < 1e-10 && flux < 1e-10 && mass < 1e-10 && elapsed < Duration::from_secs(10);
    (
        pass,
        format!("images vs eigen {agree:.1e}, |d_n K| {flux:.1e}, mass {mass:.1e}, {elapsed:.1?}"),
    )
}

fn semigroup_and_symmetry() -> Outcome {
    let mut worst = 0.0f64;
    let interval = Grid::new(Domain::interval(1.0).unwrap(), &[512]).unwrap();
    let circle = Grid::new(Domain::circle(2.0 * PI).unwrap(), &[512]).unwrap();
    let cases: Vec<(Field, f64, f64)> = vec![
        (
            Field::scalar_fn(&interval, |p| (p[0] - 0.5).abs()),
            1e-3,
            2e-3,
        ),
        (
            Field::scalar_fn(&interval, |p| boundary_bump(p[0], 0.1)),
            1e-4,
            5e-2,
        ),
        (
            Field::scalar_fn(&interval, |p| (7.0 * p[0]).sin().signum()),
            0.3,
            0.7,
        ),
        (
            Field::scalar_fn(&circle, |p| (3.0 * p[0]).cos() + p[0].sin().abs()),
            1e-2,
            1e-2,
        ),
        (Field::scalar_fn(&circle, |p| (p[0] - PI).abs()), 0.5, 2.0),
    ];
    for (f, t1, t2) in &cases {
        let k = ClosedFormKernel::for_field(f).unwrap();
        worst = worst.max(semigroup_check(&k, f, *t1, *t2).unwrap());
    }
    let mut sym = 0.0f64;
    let kernels = [
        ClosedFormKernel::scalar(Domain::interval(1.0).unwrap(), Bc::Neumann).unwrap(),
        ClosedFormKernel::scalar(Domain::interval(1.0).unwrap(), Bc::Dirichlet).unwrap(),
        ClosedFormKernel::scalar(Domain::circle(1.0).unwrap(), Bc::Neumann).unwrap(),
        ClosedFormKernel::scalar(Domain::half_line(10.0).unwrap(), Bc::Neumann).unwrap(),
    ];
    for k in &kernels {
        for t in [1e-3, 0.05, 1.0] {
            for (x, y) in [(0.1, 0.4), (0.0, 0.9), (0.33, 0.34)] {
                let a = k.eval_scalar(t, &[x], &[y]).unwrap();
                let b = k.eval_scalar(t, &[y], &[x]).unwrap();
                sym = sym.max((a - b).abs() / a.abs().max(1.0));
            }
        }
    }
    (
        worst < 1e-6 && sym < 1e-14,
        format!("semigroup {worst:.1e} over 5 cases, symmetry {sym:.1e}"),
    )
}

fn off_diagonal_decay() -> Outcome {
    let chan = Domain::channel(2.0 * PI, 1.0).unwrap();
    let cases: Vec<ProbeCase> = vec![
        (
            "interval",
            ClosedFormKernel::scalar(Domain::interval(1.0).unwrap(), Bc::Neumann).unwrap(),
            0,
            vec![0.3],
            vec![0.6],
        ),
        (
            "circle",
            ClosedFormKernel::scalar(Domain::circle(2.0 * PI).unwrap(), Bc::Neumann).unwrap(),
            0,
            vec![0.5],
            vec![2.0],
        ),
        (
            "half_line",
            ClosedFormKernel::scalar(Domain::half_line(40.0).unwrap(), Bc::Neumann).unwrap(),
            0,
            vec![0.2],
            vec![1.0],
        ),
        (
            "channel form",
            ClosedFormKernel::form(chan).unwrap(),
            1,
            vec![1.0, 0.3],
            vec![1.4, 0.6],
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, k, comp, x, y) in cases {
        let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        let ts: Vec<f64> = (0..10)
            .map(|i| d2 * 4f64.powf(-1.0 - i as f64 / 2.0))
            .collect();
        let r = offdiag_decay_probe(&k, comp, &x, &y, &ts).unwrap();
        let gap = r.rel_gap.unwrap_or(f64::INFINITY);
        pass &= gap <= 0.05;
        parts.push(format!("{name} {gap:.1e}"));
    }
    (pass, format!("relative gaps: {}", parts.join(", ")))
}

fn interval_battery() -> (ClosedFormKernel, Vec<heatlab::lp_analysis::BatteryField>) {
    let g = Grid::new(Domain::interval(1.0).unwrap(), &[2049]).unwrap();
    let bat = standard_battery(&g, 10);
    let k = ClosedFormKernel::for_field(&bat[0].field).unwrap();
    (k, bat)
}

fn global_bernstein() -> Outcome {
    let (k, bat) = interval_battery();
    let mut worst = 0.0f64;
    for b in &bat {
        worst = worst.max(
            global_bernstein_check(&k, &b.field, &dyadic_range(1, 7), 3.0)
                .unwrap()
                .max_ratio,
        );
    }
    (
        worst <= 10.0,
        format!("max ratio {worst:.3} over {} fields, N = 2..128", bat.len()),
    )
}

fn localized_bernstein() -> Outcome {
    let g = Grid::new(Domain::interval(1.0).unwrap(), &[2049]).unwrap();
    let k = ClosedFormKernel::scalar(g.domain, Bc::Neumann).unwrap();
    let bump = Field::scalar_fn(&g, |p| boundary_bump(p[0], 0.075));
    let rep = local_bernstein_check(&k, &bump, 0.15, 0, 1, 3.0, &dyadic_range(3, 7)).unwrap();
    let order = rep.decay_order.unwrap_or(f64::INFINITY);
    (
        rep.boundary_supported && order >= 6.0,
        format!("decay order {order:.2} over N = 8..128"),
    )
}

fn tail_equivalence() -> Outcome {
    let (k, bat) = interval_battery();
    let mut pass = bat.len() >= 6;
    let mut parts = Vec::new();
    for b in &bat {
        let v = vanishing_diagnostic(&k, &b.field, 3.0, 0.2, &dyadic_range(3, 8)).unwrap();
        pass &= v.agree;
        let expected = match b.name.as_str() {
            "lacunary" => Some(Classification::Plateau),
            "damped_lacunary" => Some(Classification::Vanishing),
            _ => None,
        };
        pass &= expected.is_none_or(|e| e == v.classification);
        parts.push(format!("{} {:?}", b.name, v.classification));
    }
    (pass, parts.join(", "))
}

fn vmo_containment() -> Outcome {
    let start = Instant::now();
    let g = Grid::new(Domain::channel(2.0 * PI, 1.0).unwrap(), &[256, 257]).unwrap();
    let bat = standard_battery(&g, 7);
    let k = ClosedFormKernel::for_field(&bat[0].field).unwrap();
    let rows = vmo_vs_heat_compare(&k, &bat, 3.0, 0.3, &dyadic_range(2, 6)).unwrap();
    let agree = rows.iter().filter(|r| r.agree).count();
    let elapsed = start.elapsed();
    (
        agree == 6 && rows.len() == 6 && elapsed < Duration::from_secs(120),
        format!("{agree}/{} agree, {elapsed:.1?}", rows.len()),
    )
}

fn pointwise_multiplier() -> Outcome {
    let (k, bat) = interval_battery();
    let g = bat[0].field.grid.clone();
    let r = 0.2;
    let cut = Field::scalar_fn(&g, |p| {
        smooth_step((g.domain.dist_to_boundary(p) - r / 2.0) / (r / 4.0))
    });
    let s_list: Vec<f64> = (1..=8).map(|i| 4f64.powi(-i)).collect();
    let (mut pass, mut c) = (true, 0.0f64);
    for b in &bat {
        let m =
            pointwise_multiplier_check(&k, &cut, &b.field, 3.0, r, &s_list, &dyadic_range(3, 8))
                .unwrap();
        pass &= m.decreasing;
        c = c.max(m.c_max);
    }
    (
        pass && c <= 20.0,
        format!("scaled commutator decreasing on all fields: {pass}, C = {c:.3}"),
    )
}

fn parametrix() -> Outcome {
    let cfg = ParametrixConfig {
        t_list: vec![0.01],
        ..Default::default()
    };
    let flat = build_parametrix(&ModelOperator::flat(), 2, 0, 0, &cfg)
        .unwrap()
        .1
        .rows[0]
        .sup_error;
    let op = ModelOperator::constant(-1.0);
    let e0 = build_parametrix(&op, 0, 0, 0, &cfg).unwrap().1.rows[0].sup_error;
    let e2 = build_parametrix(&op, 2, 0, 0, &cfg).unwrap().1.rows[0].sup_error;
    let mut inverse = 0.0f64;
    for j in 1..=6 {
        for m in 0..=6 {
            let f = GaussianPolynomial::monomial(0.25, m);
            let back = model_td_apply(j, &solve_td(j, &f).unwrap());
            for (i, c) in back.coeffs.iter().enumerate() {
                let want = f.coeffs.get(i).copied().unwrap_or(0.0);
                inverse = inverse.max((c - want).abs());
            }
        }
    }
    let mut volterra = 0.0f64;
    for (t, x, y) in [(0.1, 0.2, 0.35), (0.02, 0.0, 0.1), (0.05, 0.4, 0.4)] {
        let v = volterra_compose(
            &neumann_half_line,
            &neumann_half_line,
            t,
            x,
            y,
            &VolterraRule::default(),
        )
        .unwrap();
        volterra = volterra.max((v.value - t * neumann_half_line(t, x, y)).abs());
    }
    let gain = e0 / e2;
    let pass = flat < 1e-10 && gain >= 5.0 && inverse < 1e-12 && volterra < 1e-6;
    (
        pass,
        format!("flat {flat:.1e}, c=-1 J0 {e0:.2e} -> J2 {e2:.2e} ({gain:.0}x), inverse {inverse:.1e}, Volterra {volterra:.1e}"),
    )
}

fn onsager_flux() -> Outcome {
    // Scaling law: boundary-free pairing on self-similar fields.
    let g = Grid::new(Domain::channel(2.0 * PI, 1.0).unwrap(), &[2048, 1025]).unwrap();
    let k = ClosedFormKernel::form(g.domain).unwrap();
    let s_list: Vec<f64> = (2..=7).map(|i| 4f64.powi(-i)).collect();
    let fields: Vec<_> = [0.4, 0.5, 0.6]
        .iter()
        .map(|&alpha| {
            make_field(
                &g,
                &FieldSpec::Lacunary {
                    alpha,
                    depth: 8,
                    seed: 1,
                    damped: false,
                },
            )
            .unwrap()
        })
        .collect();
    let reps = flux_experiment(&k, &fields, None, &s_list, Mollifier::Heat).unwrap();
    let mut pass = true;
    let mut slopes = Vec::new();
    for r in &reps {
        let target = r.target.unwrap();
        pass &= (r.slope - target).abs() <= SLOPE_TOLERANCE;
        slopes.push(format!("{:.3}/{target:.2}", r.slope));
    }
    pass &= reps.windows(2).all(|w| w[1].slope > w[0].slope);
    drop(fields);

    // Steady shear energy balance.
    let gs = Grid::new(Domain::channel(2.0 * PI, 1.0).unwrap(), &[64, 129]).unwrap();
    let ks = ClosedFormKernel::form(gs.domain).unwrap();
    let shear = make_field(&gs, &FieldSpec::Shear { m: 1 }).unwrap().field;
    let heat = energy_conservation_probe(&ks, &shear, Mollifier::Heat, &[1e-3]).unwrap();
    let conv = energy_conservation_probe(&ks, &shear, Mollifier::Convolution, &[1e-3]).unwrap();
    let residual = heat.residual[0];
    pass &= residual < 1e-6 && heat.classification == conv.classification;

    // Commutator pairing: direct against Duhamel.
    let gd = Grid::new(Domain::channel(2.0 * PI, 1.0).unwrap(), &[256, 129]).unwrap();
    let kd = ClosedFormKernel::form(gd.domain).unwrap();
    let mut specs: Vec<FieldSpec> = [0.4, 0.5, 0.6]
        .iter()
        .map(|&alpha| FieldSpec::Lacunary {
            alpha,
            depth: 5,
            seed: 1,
            damped: false,
        })
        .collect();
    specs.push(FieldSpec::Eigen {
        k: 1,
        m: 1,
        amp: 1.0,
    });
    specs.push(FieldSpec::Stream {
        modes: vec![(1, 1, 1.0), (2, 1, 0.5), (1, 2, 0.7)],
    });
    let mut gap = 0.0f64;
    for spec in &specs {
        let u = make_field(&gd, spec).unwrap().field;
        // Fluxes at roundoff level (single eigenmodes) are compared absolutely.
        let floor = 1e-10 * magnitude_lp(&u, 3.0).powi(3);
        for r in [None, Some(0.2)] {
            for s in [0.02, 0.01, 0.005] {
                let direct =
                    flux_from_commutator(&kd, &u, r, &commutator_w(&kd, &u, r, s).unwrap(), s)
                        .unwrap();
                let w =
                    commutator_via_duhamel(&kd, &u, r, s, &DuhamelQuadrature::default()).unwrap();
                let duh = flux_from_commutator(&kd, &u, r, &w, s).unwrap();
                gap = gap.max((direct - duh).abs() / direct.abs().max(floor));
            }
        }
    }
    pass &= gap < 1e-3;
    (
        pass,
        format!(
            "slopes {}, shear residual {residual:.1e}, Duhamel gap {gap:.1e}",
            slopes.join(" ")
        ),
    )
}

fn strip_decay_check() -> Outcome {
    let g = Grid::new(Domain::channel(2.0 * PI, 1.0).unwrap(), &[64, 257]).unwrap();
    let p = vec![0.5; g.len()];
    let rs = [0.2, 0.1, 0.05, 0.025];
    let shear = make_field(&g, &FieldSpec::Shear { m: 1 }).unwrap().field;
    let zero = strip_decay(&shear, &p, &rs)
        .unwrap()
        .values
        .iter()
        .all(|v| *v == 0.0);
    let cell = make_field(
        &g,
        &FieldSpec::Eigen {
            k: 1,
            m: 1,
            amp: 1.0,
        },
    )
    .unwrap()
    .field;
    let slope = strip_decay(&cell, &p, &rs)
        .unwrap()
        .slope
        .unwrap_or(f64::NAN);
    (
        zero && slope >= 0.8,
        format!("tangent field exactly zero: {zero}, normal-vanishing slope {slope:.3}"),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("kernel exactness", kernel_exactness),
        ("semigroup and self-adjointness", semigroup_and_symmetry),
        ("off-diagonal decay", off_diagonal_decay),
        ("global Bernstein", global_bernstein),
        ("localized Bernstein", localized_bernstein),
        ("tail-condition equivalence", tail_equivalence),
        ("VMO containment", vmo_containment),
        ("pointwise multiplier", pointwise_multiplier),
        ("parametrix", parametrix),
        ("Onsager flux", onsager_flux),
        ("strip decay", strip_decay_check),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(v) => v,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name}: {detail} [{:.1?}]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
