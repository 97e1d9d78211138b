//! Bernstein ratios on the standard battery and the localized decay of a boundary bump.
use heatlab::domains::{Domain, Field, Grid};
use heatlab::kernels::ClosedFormKernel;
use heatlab::lp_analysis::{
    boundary_bump, dyadic_range, global_bernstein_check, local_bernstein_check, standard_battery,
};

fn main() -> heatlab::Result<()> {
    let g = Grid::new(Domain::interval(1.0)?, &[2049])?;
    let bat = standard_battery(&g, 10);
    let k = ClosedFormKernel::for_field(&bat[0].field)?;
    for b in &bat {
        let t = global_bernstein_check(&k, &b.field, &dyadic_range(1, 7), 3.0)?;
        println!("{:>16}: max ratio {:.3}", b.name, t.max_ratio);
    }
    let bump = Field::scalar_fn(&g, |p| boundary_bump(p[0], 0.075));
    let rep = local_bernstein_check(&k, &bump, 0.15, 0, 1, 3.0, &dyadic_range(3, 7))?;
    for (n, v) in rep.n.iter().zip(&rep.lhs) {
        println!("N = {n:>4}: interior W^1,3 norm {v:.3e}");
    }
    println!("fitted decay order {:?}", rep.decay_order);
    Ok(())
}
