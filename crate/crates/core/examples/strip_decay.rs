//! Boundary-band flux averages: tangent, linearly vanishing and O(1) normal components.
use heatlab::domains::{Domain, Grid};
use heatlab::kernels::ClosedFormKernel;
use heatlab::onsager_lab::{
    energy_conservation_probe, make_field, strip_decay, FieldSpec, Mollifier,
};
use std::f64::consts::PI;

fn main() -> heatlab::Result<()> {
    let g = Grid::new(Domain::channel(2.0 * PI, 1.0)?, &[64, 257])?;
    let p = vec![0.5; g.len()];
    let rs = [0.2, 0.1, 0.05, 0.025];
    let shear = make_field(&g, &FieldSpec::Shear { m: 1 })?.field;
    let cell = make_field(
        &g,
        &FieldSpec::Eigen {
            k: 1,
            m: 1,
            amp: 1.0,
        },
    )?
    .field;
    let mut leak = cell.clone();
    leak.comps[1].iter_mut().for_each(|v| *v += 0.3);
    for (name, v) in [
        ("shear", &shear),
        ("cell", &cell),
        ("cell + 0.3 normal", &leak),
    ] {
        let r = strip_decay(v, &p, &rs)?;
        println!("{name:>18}: {:?} slope {:?}", r.values, r.slope);
    }
    let k = ClosedFormKernel::form(g.domain)?;
    for m in [Mollifier::Heat, Mollifier::Convolution] {
        let e = energy_conservation_probe(&k, &shear, m, &[1e-2, 1e-3])?;
        println!("steady shear energy residual ({m:?}): {:?}", e.residual);
    }
    Ok(())
}
