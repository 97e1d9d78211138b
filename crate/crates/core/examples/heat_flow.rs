//! Heat flow on a channel 1-form: semigroup law and boundary behaviour.
use heatlab::domains::{Domain, Field, Grid};
use heatlab::kernels::{apply_heat, semigroup_check, ClosedFormKernel};
use std::f64::consts::PI;

fn main() -> heatlab::Result<()> {
    let g = Grid::new(Domain::channel(2.0 * PI, 1.0)?, &[128, 65])?;
    let u = g.sample(|p| (p[1] - 0.3).abs() + p[0].cos());
    let v = g.sample(|p| (PI * p[1]).sin() * (2.0 * p[0]).sin());
    let f = Field::vector(&g, vec![u, v])?;
    let k = ClosedFormKernel::form(g.domain)?;
    for (t1, t2) in [(1e-3, 1e-3), (0.01, 0.05), (0.2, 0.3)] {
        println!(
            "t1={t1} t2={t2}: semigroup deviation {:.2e}",
            semigroup_check(&k, &f, t1, t2)?
        );
    }
    let h = apply_heat(&k, &f, 0.01)?;
    let n1 = g.shape().1;
    let wall = (0..g.shape().0)
        .map(|i| h.comps[1][i * n1].abs())
        .fold(0.0, f64::max);
    println!("normal component on the wall after t=0.01: {wall:.1e}");
    Ok(())
}
