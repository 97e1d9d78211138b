//! Flux scaling of lacunary fields, heat against convolution mollification.
use heatlab::domains::{Domain, Grid};
use heatlab::kernels::ClosedFormKernel;
use heatlab::onsager_lab::{flux_experiment, make_field, FieldSpec, Mollifier};
use std::f64::consts::PI;

fn main() -> heatlab::Result<()> {
    let g = Grid::new(Domain::channel(2.0 * PI, 1.0)?, &[512, 257])?;
    let k = ClosedFormKernel::form(g.domain)?;
    let s: Vec<f64> = (2..=7).map(|i| 4f64.powi(-i)).collect();
    let mut bat: Vec<_> = [0.25, 0.5, 0.6]
        .iter()
        .map(|&alpha| {
            make_field(
                &g,
                &FieldSpec::Lacunary {
                    alpha,
                    depth: 6,
                    seed: 1,
                    damped: false,
                },
            )
        })
        .collect::<heatlab::Result<_>>()?;
    bat.push(make_field(
        &g,
        &FieldSpec::Stream {
            modes: vec![(1, 1, 1.0), (2, 1, 0.5), (1, 2, 0.7)],
        },
    )?);
    for m in [Mollifier::Heat, Mollifier::Convolution] {
        for r in flux_experiment(&k, &bat, None, &s, m)? {
            let target = r.target.map_or("-".into(), |t| format!("{t:.2}"));
            println!(
                "{m:?} {:>32}: slope {:.3} target {target} {:?}",
                r.field, r.slope, r.classification
            );
        }
    }
    Ok(())
}
